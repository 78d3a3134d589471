// Command-line front end: attack, batch, calibrate, eval, verify-remote,
// report and ingest.
#include <CLI11.hpp>

#include <advface/image_io.hpp>
#include <advface/pipeline.hpp>
#include <advface/remote.hpp>
#include <advface/serialization.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace advface;

namespace {

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::map<std::string, double> thresholds_from(const std::string& path) {
  return path.empty() ? ThresholdTable::defaults().values() : ThresholdTable::load(path).values();
}

AttackRunConfig config_from(const std::string& path) {
  return path.empty() ? AttackRunConfig{} : load_run_config(path);
}

void print_outcome(const JobOutcome& o) {
  if (!o.ok()) {
    std::cout << o.id << ": FAILED: " << o.error << "\n";
    return;
  }
  const AttackResult& r = *o.result;
  std::cout << o.id << ": total loss " << format_double(r.initial_total) << " -> "
            << format_double(r.final_losses.total) << "\n";
  for (const auto& [model, s] : r.similarities) {
    std::cout << "  " << model << ": cos " << format_double(r.baseline_similarities.at(model)) << " -> "
              << format_double(s) << ", ASR " << format_double(o.report->asr.at(model)) << "%\n";
  }
  std::cout << "  PSNR " << format_double(o.report->mean_psnr) << " dB, SSIM " << format_double(o.report->mean_ssim)
            << "\n  artifacts: " << o.directory.string() << " (checksum " << o.checksum << ")\n";
}

struct AttackArgs {
  std::string source, target, source_id, target_id, prompt, models = "MobileFace,IRSE50,IR152", observers = "FaceNet";
  std::string config, out, thresholds;
  std::uint64_t seed = 0;
  bool seed_set = false, checkpoint = false;
};

int cmd_attack(const AttackArgs& a) {
  const ToyEnvironment env;
  AttackJob job;
  // Without explicit identities, distinct files count as distinct identities.
  auto identity = [](const std::string& given, const std::string& path) {
    return given.empty() ? fs::path(path).replace_extension().generic_string() : given;
  };
  job.source = {identity(a.source_id, a.source), a.source};
  job.target = {identity(a.target_id, a.target), a.target};
  job.prompt_id = 0;
  job.models = split_list(a.models);
  job.observers = split_list(a.observers);
  job.config = config_from(a.config);
  job.label = a.config.empty() ? "default" : fs::path(a.config).stem().string();
  const std::uint64_t seed = a.seed_set ? a.seed : job.config.seed;
  const JobOutcome o = run_job(env, job, 0, seed, {a.prompt}, thresholds_from(a.thresholds), a.out, a.checkpoint);
  print_outcome(o);
  return o.ok() ? 0 : 1;
}

struct BatchArgs {
  std::string manifest, config, out, thresholds, prompt_ids = "0,1,2,3,4", prompts_file;
  std::string models = "MobileFace,IRSE50,IR152", observers = "FaceNet", label;
  int parallelism = 1;
  std::uint64_t seed = 0;
  bool checkpoint = false;
};

// Each identity attacks the next one (in manifest order) with its first
// image, once per selected prompt.
int cmd_batch(const BatchArgs& a) {
  const DatasetManifest manifest = load_manifest(a.manifest);
  const auto ids = manifest.identities();
  if (ids.size() < 2) throw ValidationError("batch needs at least two identities");
  std::vector<AttackJob> jobs;
  const AttackRunConfig cfg = config_from(a.config);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    for (const auto& p : split_list(a.prompt_ids)) {
      AttackJob job;
      job.source = manifest.images_of(ids[i]).front();
      job.target = manifest.images_of(ids[(i + 1) % ids.size()]).front();
      job.prompt_id = std::stoi(p);
      job.models = split_list(a.models);
      job.observers = split_list(a.observers);
      job.config = cfg;
      job.label = !a.label.empty() ? a.label : a.config.empty() ? "default" : fs::path(a.config).stem().string();
      jobs.push_back(std::move(job));
    }
  }
  BatchOptions opts;
  opts.output_dir = a.out;
  opts.parallelism = a.parallelism;
  opts.base_seed = a.seed;
  opts.thresholds = thresholds_from(a.thresholds);
  opts.save_checkpoints = a.checkpoint;
  if (!a.prompts_file.empty()) opts.prompts = load_prompt_library(a.prompts_file);
  const ToyEnvironment env;
  const auto outcomes = run_batch(env, jobs, opts);
  int failed = 0;
  for (const auto& o : outcomes) {
    print_outcome(o);
    failed += !o.ok();
  }
  std::cout << outcomes.size() - failed << "/" << outcomes.size() << " jobs succeeded\n";
  return failed == 0 ? 0 : 3;
}

struct CalibrateArgs {
  std::string pairs, models = "MobileFace,IRSE50,IR152,FaceNet", out;
  double far = 0.01;
};

int cmd_calibrate(const CalibrateArgs& a) {
  const auto pairs = load_pair_list(a.pairs);
  const ToyEnvironment env;
  ThresholdTable table;
  for (const auto& name : split_list(a.models)) {
    const FrModel& m = env.model(name);
    std::vector<double> scores;
    for (const auto& [pa, pb] : pairs) scores.push_back(cosine_similarity(embed(m, load_png(pa)), embed(m, load_png(pb))));
    const double tau = calibrate_threshold(scores, a.far);
    const double achieved = 100.0 * static_cast<double>(std::count_if(scores.begin(), scores.end(),
                                                                       [&](double s) { return s > tau; })) /
                            static_cast<double>(scores.size());
    std::cout << name << ": tau " << format_double(tau) << " (FAR " << format_double(achieved) << "% over "
              << scores.size() << " impostor pairs)\n";
    table.set(name, tau);
  }
  if (!a.out.empty()) {
    table.save(a.out);
    std::cout << "wrote " << a.out << "\n";
  }
  return 0;
}

int cmd_eval(const std::string& results, const std::string& thresholds, const std::string& csv, bool with_fid) {
  const RandomConvFeatureExtractor extractor;
  const auto evals = evaluate_results(results, thresholds_from(thresholds), with_fid ? &extractor : nullptr);
  std::cout << format_report_text(evals);
  if (!csv.empty()) {
    std::ofstream out(csv);
    if (!out) throw IoError("cannot write " + csv);
    out << format_report_csv(evals);
  }
  return 0;
}

struct RemoteArgs {
  std::string provider, pair_list, endpoint, config, out;
  double rate = 0.0;
  int retries = -1;
};

int cmd_verify_remote(const RemoteArgs& a) {
  RemoteVerifierConfig cfg;
  if (!a.config.empty()) {
    std::ifstream in(a.config);
    if (!in) throw IoError("cannot read " + a.config);
    nlohmann::json j;
    in >> j;
    if (!a.provider.empty()) j["provider"] = a.provider;
    if (!a.endpoint.empty()) j["endpoint"] = a.endpoint;
    cfg = remote_config_from_json(j);
  } else {
    cfg = RemoteVerifierConfig::defaults_for(provider_from_string(a.provider));
    if (!a.endpoint.empty()) cfg.endpoint = a.endpoint;
  }
  if (a.rate > 0.0) cfg.requests_per_second = a.rate;
  if (a.retries >= 0) cfg.retry.max_retries = a.retries;
  cfg.validate();

  const auto pairs = load_pair_list(a.pair_list);
  RemoteVerifier verifier(cfg, [](const std::string& line) { std::cerr << line << "\n"; });
  std::vector<RemotePairResult> results;
  double sum = 0.0;
  for (const auto& [pa, pb] : pairs) {
    const RemoteVerdict v = verifier.verify(load_png(pa), load_png(pb));
    results.push_back({pa.generic_string(), pb.generic_string(), v.confidence, v.attempts});
    sum += v.confidence;
    std::cout << pa.string() << " vs " << pb.string() << ": " << format_double(v.confidence) << "\n";
  }
  std::cout << "mean confidence " << format_double(sum / results.size()) << " over " << results.size() << " pairs\n";
  const fs::path out = a.out.empty() ? fs::path("remote") / (to_string(cfg.provider) + ".json") : fs::path(a.out);
  save_remote_results(out, cfg, results);
  return 0;
}

int cmd_report(const std::string& results_dir, const std::string& out) {
  const fs::path dst = out.empty() ? fs::path(results_dir) / "report" : fs::path(out);
  const ReportFiles files = write_report(results_dir, dst);
  std::cout << "wrote " << files.asr_grid.string() << ", " << files.quality.string() << ", "
            << files.images.string() << " and " << files.traces.size() << " trace files";
  if (files.remote_summary) std::cout << ", " << files.remote_summary->string();
  std::cout << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Text-guided adversarial face generation toolkit"};
  app.require_subcommand(1);
  int status = 0;

  AttackArgs attack;
  auto* sc_attack = app.add_subcommand("attack", "Run one impersonation attack");
  sc_attack->add_option("--source", attack.source, "Source face (PNG)")->required()->check(CLI::ExistingFile);
  sc_attack->add_option("--target", attack.target, "Target face (PNG)")->required()->check(CLI::ExistingFile);
  sc_attack->add_option("--source-id", attack.source_id, "Source identity (default: path without extension)");
  sc_attack->add_option("--target-id", attack.target_id, "Target identity (default: path without extension)");
  sc_attack->add_option("--prompt", attack.prompt, "Style text prompt")->required();
  sc_attack->add_option("--models", attack.models, "White-box pool, comma separated")->capture_default_str();
  sc_attack->add_option("--observers", attack.observers, "Held-out models scored at the end")->capture_default_str();
  sc_attack->add_option("--config", attack.config, "Run config (JSON)")->check(CLI::ExistingFile);
  sc_attack->add_option("--thresholds", attack.thresholds, "Threshold table (JSON)")->check(CLI::ExistingFile);
  sc_attack->add_option("--out", attack.out, "Output directory")->required();
  auto* seed_opt = sc_attack->add_option("--seed", attack.seed, "Seed (overrides the config)");
  sc_attack->add_flag("--checkpoint", attack.checkpoint, "Also save fusion parameters and optimizer state");
  sc_attack->callback([&] {
    attack.seed_set = seed_opt->count() > 0;
    status = cmd_attack(attack);
  });

  BatchArgs batch;
  auto* sc_batch = app.add_subcommand("batch", "Run attacks over a dataset manifest");
  sc_batch->add_option("--manifest", batch.manifest, "Dataset manifest (JSON)")->required()->check(CLI::ExistingFile);
  sc_batch->add_option("--config", batch.config, "Run config (JSON)")->check(CLI::ExistingFile);
  sc_batch->add_option("--out", batch.out, "Results directory")->required();
  sc_batch->add_option("--seed", batch.seed, "Base seed; job i uses seed + i");
  sc_batch->add_option("--parallelism", batch.parallelism, "Worker threads")->check(CLI::PositiveNumber);
  sc_batch->add_option("--prompt-ids", batch.prompt_ids, "Prompt indices, comma separated")->capture_default_str();
  sc_batch->add_option("--prompts", batch.prompts_file, "Prompt library (JSON)")->check(CLI::ExistingFile);
  sc_batch->add_option("--models", batch.models, "White-box pool")->capture_default_str();
  sc_batch->add_option("--observers", batch.observers, "Held-out models")->capture_default_str();
  sc_batch->add_option("--thresholds", batch.thresholds, "Threshold table (JSON)")->check(CLI::ExistingFile);
  sc_batch->add_option("--label", batch.label, "Row label in the ASR grid");
  sc_batch->add_flag("--checkpoint", batch.checkpoint, "Save checkpoints per job");
  sc_batch->callback([&] { status = cmd_batch(batch); });

  CalibrateArgs cal;
  auto* sc_cal = app.add_subcommand("calibrate", "Calibrate verification thresholds at a target FAR");
  sc_cal->add_option("--impostor-pairs", cal.pairs, "Pair list of impostor images")->required()->check(CLI::ExistingFile);
  sc_cal->add_option("--far", cal.far, "False acceptance rate")->capture_default_str()->check(CLI::Range(0.0, 1.0));
  sc_cal->add_option("--models", cal.models, "Models to calibrate")->capture_default_str();
  sc_cal->add_option("--out", cal.out, "Write the threshold table here");
  sc_cal->callback([&] { status = cmd_calibrate(cal); });

  std::string eval_results, eval_thresholds, eval_csv;
  bool eval_fid = false;
  auto* sc_eval = app.add_subcommand("eval", "Evaluate persisted attack results");
  sc_eval->add_option("--results", eval_results, "Results directory")->required()->check(CLI::ExistingDirectory);
  sc_eval->add_option("--thresholds", eval_thresholds, "Threshold table (JSON)")->check(CLI::ExistingFile);
  sc_eval->add_option("--csv", eval_csv, "Also write one CSV row per (model, prompt)");
  sc_eval->add_flag("--fid", eval_fid, "Compute FID with the random-convolution extractor");
  sc_eval->callback([&] { status = cmd_eval(eval_results, eval_thresholds, eval_csv, eval_fid); });

  RemoteArgs remote;
  auto* sc_remote = app.add_subcommand("verify-remote", "Score image pairs with a remote verification API");
  sc_remote->add_option("--provider", remote.provider, "facepp, aliyun or generic");
  sc_remote->add_option("--pair-list", remote.pair_list, "Pair list")->required()->check(CLI::ExistingFile);
  sc_remote->add_option("--endpoint", remote.endpoint, "Override the endpoint URL");
  sc_remote->add_option("--config", remote.config, "Verifier config (JSON)")->check(CLI::ExistingFile);
  sc_remote->add_option("--rate", remote.rate, "Requests per second");
  sc_remote->add_option("--retries", remote.retries, "Maximum retries per pair");
  sc_remote->add_option("--out", remote.out, "Results file (default remote/<provider>.json)");
  sc_remote->callback([&] {
    if (remote.provider.empty() && remote.config.empty()) throw CLI::ValidationError("--provider or --config is required");
    status = cmd_verify_remote(remote);
  });

  std::string report_dir, report_out;
  auto* sc_report = app.add_subcommand("report", "Write ASR grids, traces and summaries");
  sc_report->add_option("--results-dir", report_dir, "Results directory")->required()->check(CLI::ExistingDirectory);
  sc_report->add_option("--out", report_out, "Report directory (default <results-dir>/report)");
  sc_report->callback([&] { status = cmd_report(report_dir, report_out); });

  std::string ingest_root, ingest_out, ingest_name = "dataset";
  bool ingest_lenient = false;
  auto* sc_ingest = app.add_subcommand("ingest", "Build a manifest from root/<identity>/*.png");
  sc_ingest->add_option("--root", ingest_root, "Dataset root")->required();
  sc_ingest->add_option("--out", ingest_out, "Manifest path")->required();
  sc_ingest->add_option("--name", ingest_name, "Dataset name")->capture_default_str();
  sc_ingest->add_flag("--lenient", ingest_lenient, "Allow mixed resolutions");
  sc_ingest->callback([&] {
    IngestOptions opts;
    opts.name = ingest_name;
    opts.strict_resolution = !ingest_lenient;
    const DatasetManifest m = ingest(ingest_root, opts);
    save_manifest(ingest_out, m);
    std::cout << m.entries.size() << " images of " << m.identities().size() << " identities at "
              << to_string(m.resolution) << "\n";
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return status;
}
