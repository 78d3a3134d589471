#include "advface/serialization.hpp"

#include <bit>
#include <charconv>
#include <fstream>
#include <ostream>
#include <set>

namespace advface {

using nlohmann::json;

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

namespace {

const char* to_string(SignConvention s) { return s == SignConvention::Impersonation ? "impersonation" : "literal"; }

SignConvention sign_from(const std::string& s) {
  if (s == "impersonation") return SignConvention::Impersonation;
  if (s == "literal") return SignConvention::Literal;
  throw ValidationError("unknown sign convention: " + s);
}

void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& where) {
  if (!j.is_object()) throw ValidationError(where + " must be an object");
  for (const auto& [key, _] : j.items()) {
    if (!known.contains(key)) throw ValidationError("unknown key '" + key + "' in " + where);
  }
}

template <class T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

json to_json(const AttackRunConfig& cfg) {
  const auto& aug = cfg.augmentation;
  return json{
      {"epochs", cfg.epochs},
      {"inner_lr", cfg.inner_lr},
      {"adam", {{"lr", cfg.adam.lr}, {"beta1", cfg.adam.beta1}, {"beta2", cfg.adam.beta2}, {"eps", cfg.adam.eps}}},
      {"weights", {{"guide", cfg.weights.guide}, {"perc", cfg.weights.perc}}},
      {"augmentation",
       {{"apply_probability", aug.apply_probability},
        {"scale_low", aug.scale_low},
        {"scale_high", aug.scale_high},
        {"placement", aug.placement == PadPlacement::Random ? "random" : "center"},
        {"final_height", aug.final_resolution.height},
        {"final_width", aug.final_resolution.width}}},
      {"seed", cfg.seed},
      {"second_order", cfg.second_order},
      {"sign", to_string(cfg.sign)},
      {"fusion_hidden", cfg.fusion_hidden},
      {"ensemble_only", cfg.ensemble_only},
  };
}

AttackRunConfig run_config_from_json(const json& j) {
  AttackRunConfig cfg;
  try {
    reject_unknown(j,
                   {"epochs", "inner_lr", "adam", "weights", "augmentation", "seed", "second_order", "sign",
                    "fusion_hidden", "ensemble_only"},
                   "run config");
    read(j, "epochs", cfg.epochs);
    read(j, "inner_lr", cfg.inner_lr);
    read(j, "seed", cfg.seed);
    read(j, "second_order", cfg.second_order);
    read(j, "fusion_hidden", cfg.fusion_hidden);
    read(j, "ensemble_only", cfg.ensemble_only);
    if (j.contains("sign")) cfg.sign = sign_from(j.at("sign").get<std::string>());
    if (j.contains("adam")) {
      const json& a = j.at("adam");
      reject_unknown(a, {"lr", "beta1", "beta2", "eps"}, "adam");
      read(a, "lr", cfg.adam.lr);
      read(a, "beta1", cfg.adam.beta1);
      read(a, "beta2", cfg.adam.beta2);
      read(a, "eps", cfg.adam.eps);
    }
    if (j.contains("weights")) {
      const json& w = j.at("weights");
      reject_unknown(w, {"guide", "perc"}, "weights");
      read(w, "guide", cfg.weights.guide);
      read(w, "perc", cfg.weights.perc);
    }
    if (j.contains("augmentation")) {
      const json& a = j.at("augmentation");
      reject_unknown(a, {"apply_probability", "scale_low", "scale_high", "placement", "final_height", "final_width"},
                     "augmentation");
      auto& aug = cfg.augmentation;
      read(a, "apply_probability", aug.apply_probability);
      read(a, "scale_low", aug.scale_low);
      read(a, "scale_high", aug.scale_high);
      read(a, "final_height", aug.final_resolution.height);
      read(a, "final_width", aug.final_resolution.width);
      if (a.contains("placement")) {
        const auto p = a.at("placement").get<std::string>();
        if (p == "random") {
          aug.placement = PadPlacement::Random;
        } else if (p == "center") {
          aug.placement = PadPlacement::Center;
        } else {
          throw ValidationError("unknown pad placement: " + p);
        }
      }
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed run config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

AttackRunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open run config " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw IoError("cannot parse run config " + path.string() + ": " + e.what());
  }
  return run_config_from_json(j);
}

void save_run_config(const std::filesystem::path& path, const AttackRunConfig& cfg) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write run config " + path.string());
  out << to_json(cfg).dump(2) << "\n";
}

json to_json(const FusionArch& arch) {
  return json{{"layers", arch.layers},         {"latent_dim", arch.latent_dim}, {"text_dim", arch.text_dim},
              {"class_count", arch.class_count}, {"hidden", arch.hidden}};
}

FusionArch fusion_arch_from_json(const json& j) {
  FusionArch arch;
  arch.layers = j.at("layers").get<int>();
  arch.latent_dim = j.at("latent_dim").get<int>();
  arch.text_dim = j.at("text_dim").get<int>();
  arch.class_count = j.at("class_count").get<int>();
  arch.hidden = j.at("hidden").get<int>();
  arch.validate();
  return arch;
}

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint format assumes a little-endian host");

void write_array(std::ostream& out, const Eigen::VectorXd& v) {
  out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
}

Eigen::VectorXd read_array(std::istream& in, Eigen::Index n, const std::filesystem::path& path) {
  Eigen::VectorXd v(n);
  in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(double)));
  if (in.gcount() != static_cast<std::streamsize>(n * sizeof(double))) {
    throw IoError("truncated checkpoint " + path.string());
  }
  return v;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const FusionParams& params, const OptimizerState& state) {
  const Eigen::Index n = params.values.size();
  if (n != params.arch.parameter_count() || state.first_moment.size() != n || state.second_moment.size() != n) {
    throw DimensionError("checkpoint: parameter and optimizer sizes disagree");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  const json header{{"format", "advface-fusion-checkpoint"},
                    {"version", 1},
                    {"arch", to_json(params.arch)},
                    {"parameter_count", n},
                    {"adam_step", state.step}};
  out << header.dump() << "\n";
  write_array(out, params.values);
  write_array(out, state.first_moment);
  write_array(out, state.second_moment);
  if (!out) throw IoError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  std::string line;
  std::getline(in, line);
  Checkpoint ck;
  Eigen::Index n = 0;
  try {
    const json header = json::parse(line);
    if (header.at("format") != "advface-fusion-checkpoint" || header.at("version") != 1) {
      throw IoError("unsupported checkpoint format in " + path.string());
    }
    ck.params.arch = fusion_arch_from_json(header.at("arch"));
    n = header.at("parameter_count").get<Eigen::Index>();
    ck.optimizer.step = header.at("adam_step").get<std::int64_t>();
  } catch (const json::exception& e) {
    throw IoError("malformed checkpoint header in " + path.string() + ": " + e.what());
  }
  if (n != ck.params.arch.parameter_count()) throw IoError("checkpoint size disagrees with its architecture");
  ck.params.values = read_array(in, n, path);
  ck.optimizer.first_moment = read_array(in, n, path);
  ck.optimizer.second_moment = read_array(in, n, path);
  return ck;
}

void write_trace_csv(std::ostream& out, const std::vector<std::string>& model_names,
                     const std::vector<EpochRecord>& trace) {
  out << "epoch,guide,perc";
  for (const auto& name : model_names) out << ",adv_" << name;
  out << ",meta,total\n";
  for (const auto& r : trace) {
    if (r.adv.size() != model_names.size()) throw DimensionError("trace row has the wrong model count");
    out << r.epoch << ',' << format_double(r.guide) << ',' << format_double(r.perc);
    for (double a : r.adv) out << ',' << format_double(a);
    out << ',' << format_double(r.meta) << ',' << format_double(r.total) << '\n';
  }
}

json to_json(const EvaluationReport& report) {
  json j{{"asr", report.asr},
         {"mean_psnr", report.mean_psnr},
         {"mean_ssim", report.mean_ssim},
         {"samples", report.samples}};
  j["fid"] = report.fid ? json(*report.fid) : json(nullptr);
  return j;
}

}  // namespace advface
