#pragma once

#include <ceres/jet.h>

#include <Eigen/Core>

namespace advface {

// Forward-mode dual number. Running a gradient computation in Dual with the
// parameters seeded by a tangent u yields the Hessian-vector product H u in the
// derivative part of the result.
using Dual = ceres::Jet<double, 1>;

template <class T>
using VectorX = Eigen::Matrix<T, Eigen::Dynamic, 1>;

template <class T>
using ArrayX = Eigen::Array<T, Eigen::Dynamic, 1>;

inline double value_of(double x) { return x; }
inline double value_of(const Dual& x) { return x.a; }

inline double tangent_of(double) { return 0.0; }
inline double tangent_of(const Dual& x) { return x.v[0]; }

template <class T>
Eigen::VectorXd values_of(const VectorX<T>& v) {
  Eigen::VectorXd out(v.size());
  for (Eigen::Index i = 0; i < v.size(); ++i) out[i] = value_of(v[i]);
  return out;
}

inline Eigen::VectorXd tangents_of(const VectorX<Dual>& v) {
  Eigen::VectorXd out(v.size());
  for (Eigen::Index i = 0; i < v.size(); ++i) out[i] = v[i].v[0];
  return out;
}

inline VectorX<Dual> make_dual(const Eigen::VectorXd& value,
                               const Eigen::VectorXd& tangent) {
  VectorX<Dual> out(value.size());
  for (Eigen::Index i = 0; i < value.size(); ++i) {
    out[i] = Dual(value[i], 0);
    out[i].v[0] = tangent[i];
  }
  return out;
}

}  // namespace advface
