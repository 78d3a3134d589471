#include "advface/fusion.hpp"

#include <cctype>
#include <fstream>
#include <json.hpp>

#include "advface/errors.hpp"

namespace advface {

std::vector<std::string> tokenize_prompt(const std::string& prompt) {
  std::vector<std::string> tokens;
  std::string current;
  for (char ch : prompt) {
    const auto u = static_cast<unsigned char>(ch);
    if (std::isalnum(u)) {
      current.push_back(static_cast<char>(std::tolower(u)));
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

TextEmbedding encode_text(const TextEncoder& encoder, const std::string& prompt) {
  if (prompt.empty()) throw ValidationError("prompt is empty");
  TextEmbedding e = encoder.encode(prompt);
  if (e.values.size() != encoder.dim()) throw DimensionError("text encoder returned the wrong dimension");
  if (!e.values.allFinite()) throw ValidationError("text embedding is not finite");
  return e;
}

HashTextEncoder::HashTextEncoder(int dim, std::uint64_t seed) : dim_(dim), seed_(seed) {
  if (dim < 1) throw ValidationError("text embedding dimension must be positive");
}

TextEmbedding HashTextEncoder::encode(const std::string& prompt) const {
  const auto tokens = tokenize_prompt(prompt);
  if (tokens.empty()) throw ValidationError("prompt has no tokens: '" + prompt + "'");
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(dim_);
  for (const auto& token : tokens) {
    Rng rng(derive_seed(seed_, fnv1a64(token.data(), token.size())));
    for (int i = 0; i < dim_; ++i) sum[i] += rng.normal();
  }
  const double norm = sum.norm();
  if (norm == 0.0) throw ValidationError("prompt embedding vanished");
  return {sum / norm, prompt};
}

const std::array<std::string, 18>& style_prompts() {
  static const std::array<std::string, 18> prompts = {
      "a face with red lipstick.",
      "a face with blond hair.",
      "a face with wavy hair.",
      "a young face.",
      "a face with eyeglasses.",
      "a face with heavy makeup.",
      "a face with rosy cheeks.",
      "a chubby face.",
      "a face with slightly open mouth.",
      "a face with bushy eyebrows.",
      "a face wearing lipstick.",
      "a smiling face.",
      "a face with arched eyebrows.",
      "a face with bangs.",
      "a face wearing earrings.",
      "a face with bags under eyes.",
      "a face with receding hairline.",
      "a face with pale skin.",
  };
  return prompts;
}

std::vector<std::string> load_prompt_library(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open prompt library " + path.string());
  try {
    nlohmann::json j;
    in >> j;
    std::vector<std::string> prompts;
    for (const auto& entry : j.at("prompts")) prompts.push_back(entry.at("prompt").get<std::string>());
    return prompts;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed prompt library " + path.string() + ": " + e.what());
  }
}

Eigen::Index FusionArch::layer_size() const {
  return static_cast<Eigen::Index>(hidden) * input_dim() + hidden +
         static_cast<Eigen::Index>(latent_dim) * hidden + latent_dim;
}

void FusionArch::validate() const {
  if (layers < 1 || latent_dim < 1 || text_dim < 1 || class_count < 1 || hidden < 1) {
    throw ValidationError("fusion dimensions must be positive");
  }
}

FusionParams init_fusion(const FusionArch& arch, Rng& rng) {
  arch.validate();
  FusionParams p;
  p.arch = arch;
  p.values = Eigen::VectorXd::Zero(arch.parameter_count());
  const double stddev = 1.0 / std::sqrt(static_cast<double>(arch.input_dim()));
  for (int m = 0; m < arch.layers; ++m) {
    auto w1 = p.w1(m);
    for (Eigen::Index i = 0; i < w1.size(); ++i) w1.data()[i] = rng.normal(0.0, stddev);
  }
  return p;
}

void check_fusion_inputs(const FusionArch& arch, const StyleLatent& latent, const TextEmbedding& text,
                         const SoftmaxVector& guidance) {
  if (arch.latent_dim != kStyleDim) throw DimensionError("fusion latent_dim must be " + std::to_string(kStyleDim));
  if (latent.rows() != arch.layers) {
    throw DimensionError("fusion expects " + std::to_string(arch.layers) + " latent rows, got " +
                         std::to_string(latent.rows()));
  }
  if (text.values.size() != arch.text_dim) {
    throw DimensionError("fusion expects text dimension " + std::to_string(arch.text_dim) + ", got " +
                         std::to_string(text.values.size()));
  }
  if (guidance.size() != arch.class_count) {
    throw DimensionError("fusion expects " + std::to_string(arch.class_count) + " classes, got " +
                         std::to_string(guidance.size()));
  }
}

namespace {

Eigen::VectorXd fusion_input(const StyleLatent& latent, int m, const TextEmbedding& text,
                             const SoftmaxVector& guidance) {
  Eigen::VectorXd z(latent.cols() + text.values.size() + guidance.size());
  z << latent.row(m).transpose(), text.values, guidance.probs();
  return z;
}

}  // namespace

template <class T>
LatentCodes<T> fuse(const FusionParamsT<T>& params, const StyleLatent& latent, const TextEmbedding& text,
                    const SoftmaxVector& guidance) {
  check_fusion_inputs(params.arch, latent, text, guidance);
  LatentCodes<T> out(latent.rows(), kStyleDim);
  for (int m = 0; m < params.arch.layers; ++m) {
    const Eigen::VectorXd z = fusion_input(latent, m, text, guidance);
    const VectorX<T> a = ((params.w1(m) * z + params.b1(m)).array().tanh()).matrix();
    const VectorX<T> delta = params.w2(m) * a + params.b2(m);
    for (int j = 0; j < kStyleDim; ++j) out(m, j) = latent(m, j) + delta[j];
  }
  return out;
}

template <class T>
FusionGrad<T> fuse_vjp(const FusionParamsT<T>& params, const StyleLatent& latent, const TextEmbedding& text,
                       const SoftmaxVector& guidance, const LatentCodes<T>& grad_out) {
  check_fusion_inputs(params.arch, latent, text, guidance);
  FusionParamsT<T> grad{params.arch, VectorX<T>::Zero(params.values.size())};
  LatentCodes<T> grad_latent = grad_out;
  for (int m = 0; m < params.arch.layers; ++m) {
    const Eigen::VectorXd z = fusion_input(latent, m, text, guidance);
    const VectorX<T> a = ((params.w1(m) * z + params.b1(m)).array().tanh()).matrix();
    const VectorX<T> g = grad_out.row(m).transpose();
    grad.w2(m) = g * a.transpose();
    grad.b2(m) = g;
    const VectorX<T> ga = params.w2(m).transpose() * g;
    const VectorX<T> gh = (ga.array() * (T(1.0) - a.array() * a.array())).matrix();
    grad.w1(m) = gh * z.transpose();
    grad.b1(m) = gh;
    const VectorX<T> gz = params.w1(m).transpose() * gh;
    grad_latent.row(m) += gz.head(kStyleDim).transpose();
  }
  return {std::move(grad.values), std::move(grad_latent)};
}

template LatentCodes<double> fuse(const FusionParamsT<double>&, const StyleLatent&, const TextEmbedding&,
                                  const SoftmaxVector&);
template LatentCodes<Dual> fuse(const FusionParamsT<Dual>&, const StyleLatent&, const TextEmbedding&,
                                const SoftmaxVector&);
template FusionGrad<double> fuse_vjp(const FusionParamsT<double>&, const StyleLatent&, const TextEmbedding&,
                                     const SoftmaxVector&, const LatentCodes<double>&);
template FusionGrad<Dual> fuse_vjp(const FusionParamsT<Dual>&, const StyleLatent&, const TextEmbedding&,
                                   const SoftmaxVector&, const LatentCodes<Dual>&);

}  // namespace advface
