#pragma once

#include <Eigen/Core>
#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "advface/dual.hpp"
#include "advface/generator.hpp"
#include "advface/recognition.hpp"
#include "advface/rng.hpp"

namespace advface {

struct TextEmbedding {
  Eigen::VectorXd values;
  std::string prompt;
};

class TextEncoder {
 public:
  virtual ~TextEncoder() = default;
  virtual int dim() const = 0;
  // Must be deterministic in the prompt.
  virtual TextEmbedding encode(const std::string& prompt) const = 0;
};

// Checked entry point: rejects empty prompts and non-finite output.
TextEmbedding encode_text(const TextEncoder& encoder, const std::string& prompt);

// Bag of hashed tokens: each lower-cased alphanumeric token seeds a Gaussian
// vector; the embedding is the normalised sum.
class HashTextEncoder final : public TextEncoder {
 public:
  explicit HashTextEncoder(int dim = 64, std::uint64_t seed = 7);
  int dim() const override { return dim_; }
  TextEmbedding encode(const std::string& prompt) const override;

 private:
  int dim_;
  std::uint64_t seed_;
};

std::vector<std::string> tokenize_prompt(const std::string& prompt);

// The eighteen style prompts, in table order.
const std::array<std::string, 18>& style_prompts();
std::vector<std::string> load_prompt_library(const std::filesystem::path& path);

struct FusionArch {
  int layers = 4;
  int latent_dim = kStyleDim;
  int text_dim = 64;
  int class_count = 16;
  int hidden = 256;

  int input_dim() const { return latent_dim + text_dim + class_count; }
  Eigen::Index layer_size() const;
  Eigen::Index parameter_count() const { return layer_size() * layers; }
  void validate() const;
  bool operator==(const FusionArch&) const = default;
};

// Per-layer residual block over [w_m, E_t, v]:
//   out_m = w_m + W2_m tanh(W1_m [w_m, E_t, v] + b1_m) + b2_m
// Parameters live in one flat vector, layer-major, each layer laid out as
// W1 (row-major), b1, W2 (row-major), b2.
template <class T>
struct FusionParamsT {
  using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  FusionArch arch;
  VectorX<T> values;

  Eigen::Index w1_offset(int m) const { return arch.layer_size() * m; }
  Eigen::Index b1_offset(int m) const { return w1_offset(m) + static_cast<Eigen::Index>(arch.hidden) * arch.input_dim(); }
  Eigen::Index w2_offset(int m) const { return b1_offset(m) + arch.hidden; }
  Eigen::Index b2_offset(int m) const { return w2_offset(m) + static_cast<Eigen::Index>(arch.latent_dim) * arch.hidden; }

  Eigen::Map<const RowMatrix> w1(int m) const { return {values.data() + w1_offset(m), arch.hidden, arch.input_dim()}; }
  Eigen::Map<const VectorX<T>> b1(int m) const { return {values.data() + b1_offset(m), arch.hidden}; }
  Eigen::Map<const RowMatrix> w2(int m) const { return {values.data() + w2_offset(m), arch.latent_dim, arch.hidden}; }
  Eigen::Map<const VectorX<T>> b2(int m) const { return {values.data() + b2_offset(m), arch.latent_dim}; }

  Eigen::Map<RowMatrix> w1(int m) { return {values.data() + w1_offset(m), arch.hidden, arch.input_dim()}; }
  Eigen::Map<VectorX<T>> b1(int m) { return {values.data() + b1_offset(m), arch.hidden}; }
  Eigen::Map<RowMatrix> w2(int m) { return {values.data() + w2_offset(m), arch.latent_dim, arch.hidden}; }
  Eigen::Map<VectorX<T>> b2(int m) { return {values.data() + b2_offset(m), arch.latent_dim}; }
};

using FusionParams = FusionParamsT<double>;

// W1 ~ N(0, 1/input_dim), everything else zero: the residual branch outputs
// exactly zero, so a fresh network maps w to itself.
FusionParams init_fusion(const FusionArch& arch, Rng& rng);

template <class T>
LatentCodes<T> fuse(const FusionParamsT<T>& params, const StyleLatent& latent,
                    const TextEmbedding& text, const SoftmaxVector& guidance);

template <class T>
struct FusionGrad {
  VectorX<T> params;
  LatentCodes<T> latent;
};

// Pullback of d(loss)/d(output) to the parameters and the input latent.
template <class T>
FusionGrad<T> fuse_vjp(const FusionParamsT<T>& params, const StyleLatent& latent,
                       const TextEmbedding& text, const SoftmaxVector& guidance,
                       const LatentCodes<T>& grad_out);

void check_fusion_inputs(const FusionArch& arch, const StyleLatent& latent, const TextEmbedding& text,
                         const SoftmaxVector& guidance);

}  // namespace advface
