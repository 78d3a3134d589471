#pragma once

#include <filesystem>
#include <iosfwd>
#include <json.hpp>
#include <string>
#include <vector>

#include "advface/meta_attack.hpp"
#include "advface/metrics.hpp"

namespace advface {

// Run config <-> JSON. Missing keys take their defaults; unknown keys are an
// error so typos do not silently fall back.
nlohmann::json to_json(const AttackRunConfig& cfg);
AttackRunConfig run_config_from_json(const nlohmann::json& j);
AttackRunConfig load_run_config(const std::filesystem::path& path);
void save_run_config(const std::filesystem::path& path, const AttackRunConfig& cfg);

nlohmann::json to_json(const FusionArch& arch);
FusionArch fusion_arch_from_json(const nlohmann::json& j);

// Checkpoint: one JSON header line (architecture, sizes, Adam step), then the
// parameters and both Adam moments as little-endian float64 arrays.
struct Checkpoint {
  FusionParams params;
  OptimizerState optimizer;
};

void save_checkpoint(const std::filesystem::path& path, const FusionParams& params, const OptimizerState& state);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// epoch,guide,perc,adv_<model>...,meta,total
void write_trace_csv(std::ostream& out, const std::vector<std::string>& model_names,
                     const std::vector<EpochRecord>& trace);

nlohmann::json to_json(const EvaluationReport& report);

// Shortest round-trip decimal form, used in every CSV and report.
std::string format_double(double v);

}  // namespace advface
