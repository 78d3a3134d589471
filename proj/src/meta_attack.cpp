#include "advface/meta_attack.hpp"

#include <cmath>

namespace advface {

MetaSplit shuffle_split(Rng& rng, int model_count) {
  if (model_count < 2) throw ValidationError("meta split needs at least two models");
  MetaSplit split;
  split.test = rng.uniform_int(0, model_count - 1);
  for (int i = 0; i < model_count; ++i) {
    if (i != split.test) split.train.push_back(i);
  }
  return split;
}

OptimizerState make_optimizer_state(const FusionParams& params) {
  OptimizerState s;
  s.first_moment = Eigen::VectorXd::Zero(params.values.size());
  s.second_moment = Eigen::VectorXd::Zero(params.values.size());
  return s;
}

void adam_step(FusionParams& params, const Eigen::VectorXd& grad, OptimizerState& state, const AdamConfig& cfg) {
  if (grad.size() != params.values.size() || state.first_moment.size() != params.values.size()) {
    throw DimensionError("adam_step: gradient or state does not match the parameters");
  }
  ++state.step;
  state.first_moment = cfg.beta1 * state.first_moment + (1.0 - cfg.beta1) * grad;
  state.second_moment = cfg.beta2 * state.second_moment + (1.0 - cfg.beta2) * grad.cwiseAbs2();
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  params.values.array() -=
      cfg.lr * (state.first_moment.array() / c1) / ((state.second_moment.array() / c2).sqrt() + cfg.eps);
}

void AttackRunConfig::validate() const {
  if (epochs < 0) throw ValidationError("epochs must be non-negative");
  if (!(inner_lr > 0.0)) throw ValidationError("inner learning rate must be positive");
  if (!(adam.lr > 0.0)) throw ValidationError("learning rate must be positive");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0 && adam.beta2 >= 0.0 && adam.beta2 < 1.0)) {
    throw ValidationError("Adam betas must lie in [0, 1)");
  }
  if (!(adam.eps > 0.0)) throw ValidationError("Adam epsilon must be positive");
  if (fusion_hidden < 1) throw ValidationError("fusion hidden width must be positive");
  weights.validate();
  augmentation.validate();
}

namespace {

SoftmaxVector mean_guidance(const std::vector<const FrModel*>& models, const FaceImage& target) {
  Eigen::VectorXd sum;
  for (const FrModel* m : models) {
    const SoftmaxVector v = classify(*m, target);
    if (sum.size() == 0) {
      sum = v.probs();
    } else if (sum.size() != v.size()) {
      throw DimensionError("pool models disagree on the class count");
    } else {
      sum += v.probs();
    }
  }
  return SoftmaxVector(sum / static_cast<double>(models.size()));
}

const std::vector<const FrModel*>& check_pool(const std::vector<const FrModel*>& models) {
  if (models.size() < 2) throw ValidationError("attack needs at least two models");
  for (const FrModel* m : models) {
    if (m == nullptr) throw ValidationError("null model in pool");
  }
  return models;
}

}  // namespace

AttackContext::AttackContext(const AttackStack& stack, const FaceImage& source, const FaceImage& target,
                             const std::string& prompt, std::vector<const FrModel*> models,
                             const AttackRunConfig& cfg)
    : stack_(stack),
      cfg_(cfg),
      source_(source),
      target_(target),
      text_((cfg.validate(), encode_text(*stack.text_encoder, prompt))),
      inversion_(invert(*stack.generator, source)),
      clean_(synthesize(*stack.generator, inversion_.latent, inversion_.noise)),
      models_(check_pool(models)),
      deployment_guidance_(mean_guidance(models_, target)) {
  validate_face_image(target_);
  if (stack.scorer->dim() != text_.values.size()) {
    throw DimensionError("image-text scorer and text encoder dimensions differ");
  }
  for (const FrModel* m : models_) {
    if (m->input_resolution() != stack.generator->output_resolution()) {
      throw DimensionError(m->name() + " input resolution differs from the generator output");
    }
    target_embeddings_.push_back(embed(*m, target_));
  }
}

FusionArch AttackContext::fusion_arch() const {
  FusionArch arch;
  arch.layers = stack_.generator->layer_count();
  arch.text_dim = static_cast<int>(text_.values.size());
  arch.class_count = static_cast<int>(deployment_guidance_.size());
  arch.hidden = cfg_.fusion_hidden;
  return arch;
}

FaceImage AttackContext::render(const FusionParams& params, const SoftmaxVector& guidance) const {
  return stack_.generator->synthesize(fuse(params, source_latent(), text_, guidance), noise());
}

template <class T>
ValueGrad<T> adversarial_value_grad(const AttackContext& ctx, const FusionParamsT<T>& params, int model,
                                    const SoftmaxVector& guidance) {
  const GeneratorHandle& g = *ctx.stack().generator;
  const FrModel& fr = ctx.model(model);
  const Eigen::VectorXd& target = ctx.target_embedding(model).values();
  const SignConvention sign = ctx.config().sign;

  const LatentCodes<T> styled = fuse(params, ctx.source_latent(), ctx.text(), guidance);
  const Image<T> image = g.synthesize(styled, ctx.noise());
  const VectorX<T> e = fr.embed(image);
  const T value = similarity_loss<T>(e, target, sign);
  const Image<T> g_image = fr.embed_vjp(image, similarity_loss_grad<T>(e, target, sign));
  const LatentCodes<T> g_latent = g.synthesize_vjp(styled, ctx.noise(), g_image);
  return {value, fuse_vjp(params, ctx.source_latent(), ctx.text(), guidance, g_latent).params};
}

template ValueGrad<double> adversarial_value_grad(const AttackContext&, const FusionParamsT<double>&, int,
                                                  const SoftmaxVector&);
template ValueGrad<Dual> adversarial_value_grad(const AttackContext&, const FusionParamsT<Dual>&, int,
                                                const SoftmaxVector&);

namespace {

double adversarial_value(const AttackContext& ctx, const FusionParams& params, int model,
                         const SoftmaxVector& guidance) {
  const FaceImage image = ctx.render(params, guidance);
  return similarity_loss<double>(ctx.model(model).embed(image), ctx.target_embedding(model).values(),
                                 ctx.config().sign);
}

}  // namespace

double meta_train_loss(const AttackContext& ctx, const FusionParams& params, int model, Rng& rng) {
  const auto rep = target_representation(ctx.target(), ctx.model(model), ctx.config().augmentation, rng);
  return adversarial_value(ctx, params, model, rep.v);
}

double meta_test_loss(const AttackContext& ctx, const FusionParams& adapted, int test_model, Rng& rng) {
  return meta_train_loss(ctx, adapted, test_model, rng);
}

FusionParams inner_update(const FusionParams& params, const Eigen::VectorXd& grad, double lr) {
  if (grad.size() != params.values.size()) {
    throw DimensionError("inner_update: gradient has " + std::to_string(grad.size()) + " entries, parameters " +
                         std::to_string(params.values.size()));
  }
  FusionParams out = params;
  out.values -= lr * grad;
  return out;
}

Eigen::VectorXd hessian_vector_product(const AttackContext& ctx, const FusionParams& params, int model,
                                       const SoftmaxVector& guidance, const Eigen::VectorXd& direction) {
  if (direction.size() != params.values.size()) throw DimensionError("HVP direction has the wrong size");
  FusionParamsT<Dual> seeded{params.arch, make_dual(params.values, direction)};
  return tangents_of(adversarial_value_grad<Dual>(ctx, seeded, model, guidance).grad);
}

MetaDraws draw_guidance(const AttackContext& ctx, const MetaSplit& split, Rng& rng) {
  const auto& aug = ctx.config().augmentation;
  std::vector<SoftmaxVector> train;
  for (int i : split.train) train.push_back(target_representation(ctx.target(), ctx.model(i), aug, rng).v);
  SoftmaxVector test = target_representation(ctx.target(), ctx.model(split.test), aug, rng).v;
  return {std::move(train), std::move(test)};
}

TextPerceptualTerms text_perceptual_terms(const AttackContext& ctx, const FusionParams& params, bool with_grad) {
  const auto& w = ctx.config().weights;
  const SoftmaxVector& v = ctx.deployment_guidance();
  const LatentCodes<double> styled = fuse(params, ctx.source_latent(), ctx.text(), v);
  const FaceImage image = ctx.stack().generator->synthesize(styled, ctx.noise());
  TextPerceptualTerms out;
  if (!with_grad) {
    out.guide = guide_loss(image, ctx.text(), *ctx.stack().scorer, ctx.config().sign);
    out.perc = perceptual_loss(image, ctx.source(), *ctx.stack().perceptual);
    return out;
  }
  const LossGrad guide = guide_loss_grad(image, ctx.text(), *ctx.stack().scorer, ctx.config().sign);
  const LossGrad perc = perceptual_loss_grad(image, ctx.source(), *ctx.stack().perceptual);
  out.guide = guide.value;
  out.perc = perc.value;
  FaceImage g_image(image.height, image.width, w.guide * guide.grad.pixels + w.perc * perc.grad.pixels);
  const LatentCodes<double> g_latent = ctx.stack().generator->synthesize_vjp(styled, ctx.noise(), g_image);
  out.grad = fuse_vjp(params, ctx.source_latent(), ctx.text(), v, g_latent).params;
  return out;
}

MetaObjective meta_objective(const AttackContext& ctx, const FusionParams& params, const MetaSplit& split,
                             const MetaDraws& draws, bool second_order, bool with_grad) {
  if (split.train.size() != draws.train.size()) throw DimensionError("one guidance vector per train model");
  if (split.test < 0 || split.test >= ctx.model_count()) throw ValidationError("meta split test index out of range");
  const auto& w = ctx.config().weights;
  const double lr = ctx.config().inner_lr;

  const TextPerceptualTerms tp = text_perceptual_terms(ctx, params, with_grad);
  MetaObjective out;
  out.guide = tp.guide;
  out.perc = tp.perc;
  out.value = w.guide * tp.guide + w.perc * tp.perc;
  if (with_grad) out.grad = tp.grad;

  for (std::size_t k = 0; k < split.train.size(); ++k) {
    const int i = split.train[k];
    if (i < 0 || i >= ctx.model_count() || i == split.test) throw ValidationError("invalid meta split");
    // the inner step always needs the train gradient
    const ValueGrad<double> tr = adversarial_value_grad<double>(ctx, params, i, draws.train[k]);
    const FusionParams adapted = inner_update(params, tr.grad, lr);
    out.train_losses.push_back(tr.value);
    if (!with_grad) {
      const double te = adversarial_value(ctx, adapted, split.test, draws.test);
      out.test_losses.push_back(te);
      out.value += tr.value + te;
      continue;
    }
    const ValueGrad<double> te = adversarial_value_grad<double>(ctx, adapted, split.test, draws.test);
    out.test_losses.push_back(te.value);
    out.value += tr.value + te.value;
    out.grad += tr.grad + te.grad;
    if (second_order) {
      // d/dparams of L^te(params - lr * grad L^tr) = (I - lr H_tr) grad L^te
      out.grad -= lr * hessian_vector_product(ctx, params, i, draws.train[k], te.grad);
    }
  }
  return out;
}

EpochRecord evaluate_deployment(const AttackContext& ctx, const FusionParams& params, int epoch) {
  const auto& w = ctx.config().weights;
  const TextPerceptualTerms tp = text_perceptual_terms(ctx, params, false);
  const FaceImage image = ctx.render(params, ctx.deployment_guidance());
  EpochRecord r;
  r.epoch = epoch;
  r.guide = tp.guide;
  r.perc = tp.perc;
  double sum = 0.0;
  for (int j = 0; j < ctx.model_count(); ++j) {
    const double adv = similarity_loss<double>(ctx.model(j).embed(image), ctx.target_embedding(j).values(),
                                               ctx.config().sign);
    r.adv.push_back(adv);
    sum += adv;
  }
  r.total = w.guide * r.guide + w.perc * r.perc + sum / ctx.model_count();
  return r;
}

namespace {

MetaObjective ensemble_objective(const AttackContext& ctx, const FusionParams& params, Rng& rng) {
  const auto& w = ctx.config().weights;
  const TextPerceptualTerms tp = text_perceptual_terms(ctx, params, true);
  MetaObjective out;
  out.guide = tp.guide;
  out.perc = tp.perc;
  out.value = w.guide * tp.guide + w.perc * tp.perc;
  out.grad = tp.grad;
  for (int j = 0; j < ctx.model_count(); ++j) {
    const auto rep = target_representation(ctx.target(), ctx.model(j), ctx.config().augmentation, rng);
    const ValueGrad<double> vg = adversarial_value_grad<double>(ctx, params, j, rep.v);
    out.train_losses.push_back(vg.value);
    out.value += vg.value;
    out.grad += vg.grad;
  }
  return out;
}

double similarity_to_target(const FrModel& model, const FaceImage& image, const FaceImage& target) {
  return cosine_similarity(embed(model, image), embed(model, target));
}

}  // namespace

AttackResult run_attack(const AttackStack& stack, const FaceImage& source, const FaceImage& target,
                        const std::string& prompt, const std::vector<const FrModel*>& models,
                        const AttackRunConfig& cfg, const std::vector<const FrModel*>& observers) {
  if (!stack.generator || !stack.text_encoder || !stack.scorer || !stack.perceptual) {
    throw ValidationError("attack stack is incomplete");
  }
  const AttackContext ctx(stack, source, target, prompt, models, cfg);

  Rng init_rng(derive_seed(cfg.seed, 0));
  Rng rng(derive_seed(cfg.seed, 1));
  AttackResult result;
  result.params = init_fusion(ctx.fusion_arch(), init_rng);
  result.optimizer = make_optimizer_state(result.params);
  for (int j = 0; j < ctx.model_count(); ++j) result.model_names.push_back(ctx.model(j).name());

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    EpochRecord record = evaluate_deployment(ctx, result.params, epoch);
    MetaObjective objective;
    if (cfg.ensemble_only) {
      objective = ensemble_objective(ctx, result.params, rng);
    } else {
      const MetaSplit split = shuffle_split(rng, ctx.model_count());
      const MetaDraws draws = draw_guidance(ctx, split, rng);
      objective = meta_objective(ctx, result.params, split, draws, cfg.second_order);
    }
    record.meta = objective.value;
    result.trace.push_back(record);
    if (!std::isfinite(objective.value) || !objective.grad.allFinite() || !std::isfinite(record.total)) {
      throw DivergenceError("non-finite loss at epoch " + std::to_string(epoch), result.trace);
    }
    adam_step(result.params, objective.grad, result.optimizer, cfg.adam);
  }

  result.final_losses = evaluate_deployment(ctx, result.params, cfg.epochs);
  if (!std::isfinite(result.final_losses.total)) {
    throw DivergenceError("non-finite loss after the final step", result.trace);
  }
  result.initial_total = result.trace.empty() ? result.final_losses.total : result.trace.front().total;
  result.latent = fuse(result.params, ctx.source_latent(), ctx.text(), ctx.deployment_guidance());
  result.adversarial = stack.generator->synthesize(result.latent, ctx.noise());
  result.clean = ctx.clean_reconstruction();

  std::vector<const FrModel*> scored = models;
  scored.insert(scored.end(), observers.begin(), observers.end());
  for (const FrModel* m : scored) {
    result.similarities[m->name()] = similarity_to_target(*m, result.adversarial, target);
    result.baseline_similarities[m->name()] = similarity_to_target(*m, result.clean, target);
  }
  return result;
}

}  // namespace advface
