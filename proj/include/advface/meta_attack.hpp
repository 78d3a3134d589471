#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "advface/augmentation.hpp"
#include "advface/errors.hpp"
#include "advface/fusion.hpp"
#include "advface/generator.hpp"
#include "advface/objectives.hpp"
#include "advface/recognition.hpp"
#include "advface/rng.hpp"

namespace advface {

struct MetaSplit {
  std::vector<int> train;
  int test = -1;
};

// Uniformly random held-out index; the rest, in index order, form the
// meta-train set.
MetaSplit shuffle_split(Rng& rng, int model_count);

struct AdamConfig {
  double lr = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct OptimizerState {
  Eigen::VectorXd first_moment;
  Eigen::VectorXd second_moment;
  std::int64_t step = 0;
};

OptimizerState make_optimizer_state(const FusionParams& params);
void adam_step(FusionParams& params, const Eigen::VectorXd& grad, OptimizerState& state, const AdamConfig& cfg);

struct AttackRunConfig {
  int epochs = 50;
  double inner_lr = 0.01;
  AdamConfig adam;
  LossWeights weights;
  AugmentationConfig augmentation;
  std::uint64_t seed = 0;
  bool second_order = false;
  SignConvention sign = SignConvention::Impersonation;
  int fusion_hidden = 256;
  // Comparison baseline: plain sum of every model's loss, no meta split.
  bool ensemble_only = false;

  void validate() const;
};

// Components shared by every run. Must outlive the runs; used read-only.
struct AttackStack {
  const GeneratorHandle* generator = nullptr;
  const TextEncoder* text_encoder = nullptr;
  const ImageTextScorer* scorer = nullptr;
  const PerceptualMetric* perceptual = nullptr;
};

// Everything fixed for the duration of one run: inverted source, text
// embedding, cached target embeddings and the deployment guidance vector.
class AttackContext {
 public:
  AttackContext(const AttackStack& stack, const FaceImage& source, const FaceImage& target,
                const std::string& prompt, std::vector<const FrModel*> models, const AttackRunConfig& cfg);

  const AttackStack& stack() const { return stack_; }
  const AttackRunConfig& config() const { return cfg_; }
  const FaceImage& source() const { return source_; }
  const FaceImage& target() const { return target_; }
  const TextEmbedding& text() const { return text_; }
  const StyleLatent& source_latent() const { return inversion_.latent; }
  const NoiseStack& noise() const { return inversion_.noise; }
  const FaceImage& clean_reconstruction() const { return clean_; }
  int model_count() const { return static_cast<int>(models_.size()); }
  const FrModel& model(int i) const { return *models_.at(i); }
  const EmbeddingVector& target_embedding(int i) const { return target_embeddings_.at(i); }
  // Mean of the pool's softmax vectors on the untransformed target.
  const SoftmaxVector& deployment_guidance() const { return deployment_guidance_; }
  FusionArch fusion_arch() const;

  FaceImage render(const FusionParams& params, const SoftmaxVector& guidance) const;

 private:
  AttackStack stack_;
  AttackRunConfig cfg_;
  FaceImage source_;
  FaceImage target_;
  TextEmbedding text_;
  Inversion inversion_;
  FaceImage clean_;
  std::vector<const FrModel*> models_;
  std::vector<EmbeddingVector> target_embeddings_;
  SoftmaxVector deployment_guidance_;
};

template <class T>
struct ValueGrad {
  T value;
  VectorX<T> grad;
};

// Identity loss of model i on G(fuse(params, w_s, E_t, v)) against the target,
// with its gradient in the fusion parameters.
template <class T>
ValueGrad<T> adversarial_value_grad(const AttackContext& ctx, const FusionParamsT<T>& params, int model,
                                    const SoftmaxVector& guidance);

// v drawn through the augmentation branch, then the identity loss.
double meta_train_loss(const AttackContext& ctx, const FusionParams& params, int model, Rng& rng);
double meta_test_loss(const AttackContext& ctx, const FusionParams& adapted, int test_model, Rng& rng);

// params - lr * grad, as a new object.
FusionParams inner_update(const FusionParams& params, const Eigen::VectorXd& grad, double lr);

// H u for the identity loss of one model, H the Hessian in the fusion
// parameters. Exact: forward-mode through the reverse pass.
Eigen::VectorXd hessian_vector_product(const AttackContext& ctx, const FusionParams& params, int model,
                                       const SoftmaxVector& guidance, const Eigen::VectorXd& direction);

// Guidance vectors for one epoch: one per meta-train model, one for the
// held-out model.
struct MetaDraws {
  std::vector<SoftmaxVector> train;
  SoftmaxVector test;
};

MetaDraws draw_guidance(const AttackContext& ctx, const MetaSplit& split, Rng& rng);

struct TextPerceptualTerms {
  double guide = 0.0;
  double perc = 0.0;
  Eigen::VectorXd grad;  // of weights.guide * guide + weights.perc * perc
};

TextPerceptualTerms text_perceptual_terms(const AttackContext& ctx, const FusionParams& params, bool with_grad);

struct MetaObjective {
  double value = 0.0;
  double guide = 0.0;
  double perc = 0.0;
  std::vector<double> train_losses;
  std::vector<double> test_losses;
  Eigen::VectorXd grad;
};

// weights.guide * L_guide + weights.perc * L_perc
//   + sum over train i of (L_i^tr(params) + L^te(params - inner_lr * grad L_i^tr)).
MetaObjective meta_objective(const AttackContext& ctx, const FusionParams& params, const MetaSplit& split,
                             const MetaDraws& draws, bool second_order, bool with_grad = true);

struct EpochRecord {
  int epoch = 0;
  double guide = 0.0;
  double perc = 0.0;
  std::vector<double> adv;  // per pool model, on the deployment rendering
  double meta = 0.0;        // objective the optimiser stepped on
  double total = 0.0;       // weights.guide*guide + weights.perc*perc + mean(adv)
};

class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, std::vector<EpochRecord> trace)
      : Error(what), trace_(std::move(trace)) {}
  const std::vector<EpochRecord>& trace() const { return trace_; }

 private:
  std::vector<EpochRecord> trace_;
};

struct AttackResult {
  FusionParams params;
  OptimizerState optimizer;
  StyleLatent latent;
  FaceImage adversarial;
  FaceImage clean;
  std::vector<std::string> model_names;
  std::vector<EpochRecord> trace;
  EpochRecord final_losses;
  double initial_total = 0.0;
  // Cosine similarity to the target embedding, for the pool and the observers.
  std::map<std::string, double> similarities;
  std::map<std::string, double> baseline_similarities;
};

// Losses of the deployment rendering under the given parameters.
EpochRecord evaluate_deployment(const AttackContext& ctx, const FusionParams& params, int epoch);

// Full attack. `models` is the white-box pool that meta splits are drawn
// from; `observers` are only scored at the end (held-out black boxes).
AttackResult run_attack(const AttackStack& stack, const FaceImage& source, const FaceImage& target,
                        const std::string& prompt, const std::vector<const FrModel*>& models,
                        const AttackRunConfig& cfg, const std::vector<const FrModel*>& observers = {});

}  // namespace advface
