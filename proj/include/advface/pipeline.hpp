#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "advface/meta_attack.hpp"
#include "advface/metrics.hpp"

namespace advface {

struct ManifestEntry {
  std::string identity;
  std::filesystem::path path;

  bool operator==(const ManifestEntry&) const = default;
};

struct DatasetManifest {
  std::string name;
  Resolution resolution;
  std::vector<ManifestEntry> entries;  // sorted by identity, then filename

  std::vector<std::string> identities() const;
  std::vector<ManifestEntry> images_of(const std::string& identity) const;
};

struct IngestOptions {
  std::string name = "dataset";
  // Reject a dataset whose images do not all share one resolution.
  bool strict_resolution = true;
  // If set, every image must have exactly this resolution.
  std::optional<Resolution> expected;
};

// Layout: root/<identity>/<image>.png. Every image is decoded and validated.
DatasetManifest ingest(const std::filesystem::path& root, const IngestOptions& options = {});

// Relative entry paths are stored relative to the manifest file.
void save_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);
// Fails naming the first referenced image that no longer exists.
DatasetManifest load_manifest(const std::filesystem::path& path);

// Owns the desk-scale stack: toy generator, hashed text encoder, projection
// image scorer, feature-pyramid perceptual metric and the four toy
// recognisers under the names of the threshold table.
class ToyEnvironment {
 public:
  ToyEnvironment();
  ~ToyEnvironment();
  ToyEnvironment(const ToyEnvironment&) = delete;
  ToyEnvironment& operator=(const ToyEnvironment&) = delete;

  AttackStack stack() const;
  const GeneratorHandle& generator() const;
  std::vector<std::string> model_names() const;
  const FrModel& model(const std::string& name) const;
  std::vector<const FrModel*> models(const std::vector<std::string>& names) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

struct AttackJob {
  ManifestEntry source;
  ManifestEntry target;
  // Index into the prompt list handed to the runner.
  int prompt_id = 0;
  std::vector<std::string> models;     // white-box pool
  std::vector<std::string> observers;  // held-out black boxes, scored only
  AttackRunConfig config;
  // Row label in the ASR grid, e.g. the method or config name.
  std::string label = "meta";

  void validate(std::size_t prompt_count) const;
};

struct BatchOptions {
  std::filesystem::path output_dir;
  int parallelism = 1;
  std::uint64_t base_seed = 0;
  std::vector<std::string> prompts;  // empty: the built-in style prompts
  std::map<std::string, double> thresholds = ThresholdTable::defaults().values();
  bool save_checkpoints = false;
};

struct JobOutcome {
  int index = 0;
  std::string id;  // job_0000, job_0001, ...
  std::filesystem::path directory;
  std::optional<AttackResult> result;
  std::optional<EvaluationReport> report;
  std::string error;  // non-empty iff the job failed
  std::string checksum;  // FNV-1a over the job's artifacts, in name order

  bool ok() const { return error.empty(); }
};

std::string job_id(int index);

// Runs one job with the given seed and persists its artifacts into
// `directory`: source.png, adversarial.png, clean.png, trace.csv and
// result.json (plus checkpoint.bin when asked).
JobOutcome run_job(const ToyEnvironment& env, const AttackJob& job, int index, std::uint64_t seed,
                   const std::vector<std::string>& prompts, const std::map<std::string, double>& thresholds,
                   const std::filesystem::path& directory, bool with_checkpoint = false);

// Job i runs with seed base_seed + i, independent of scheduling. Job failures
// are reported in their outcome; failing to create the output directory
// aborts the batch.
std::vector<JobOutcome> run_batch(const ToyEnvironment& env, const std::vector<AttackJob>& jobs,
                                  const BatchOptions& options);

// FNV-1a over the regular files of a directory, names and bytes, sorted.
std::string directory_checksum(const std::filesystem::path& dir);

struct JobRecord {
  std::string id;
  std::string label;
  std::string prompt;
  std::filesystem::path directory;
  std::map<std::string, double> similarities;
  std::map<std::string, double> thresholds;
};

// Every job_*/result.json below a results directory, in id order.
std::vector<JobRecord> load_job_records(const std::filesystem::path& results_dir);

// Groups by prompt and recomputes ASR under the given thresholds; PSNR, SSIM
// and FID come from the persisted PNGs.
struct PromptEvaluation {
  std::string prompt;
  EvaluationReport report;
};
std::vector<PromptEvaluation> evaluate_results(const std::filesystem::path& results_dir,
                                               const std::map<std::string, double>& thresholds,
                                               const FeatureExtractor* extractor);

// Human-readable block and one CSV row per (model, prompt).
std::string format_report_text(const std::vector<PromptEvaluation>& evaluations);
std::string format_report_csv(const std::vector<PromptEvaluation>& evaluations);

struct ReportFiles {
  std::filesystem::path asr_grid;
  std::filesystem::path quality;
  std::filesystem::path images;
  std::vector<std::filesystem::path> traces;
  std::optional<std::filesystem::path> remote_summary;
};

// Writes into out_dir: asr_grid.csv (rows: label, columns: model),
// quality.csv, images.csv, traces/<job>.csv and, when remote verification
// outputs exist under results_dir/remote, remote_summary.csv. Throws when
// there is nothing to report.
ReportFiles write_report(const std::filesystem::path& results_dir, const std::filesystem::path& out_dir);

}  // namespace advface
