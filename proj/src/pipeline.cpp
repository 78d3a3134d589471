#include "advface/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <set>
#include <sstream>
#include <thread>

#include "advface/image_io.hpp"
#include "advface/serialization.hpp"

namespace advface {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << bytes;
  if (!out) throw IoError("failed writing " + path.string());
}

json read_json(const fs::path& path) {
  try {
    return json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw IoError("cannot parse " + path.string() + ": " + e.what());
  }
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace

std::vector<std::string> DatasetManifest::identities() const {
  std::vector<std::string> ids;
  for (const auto& e : entries) {
    if (ids.empty() || ids.back() != e.identity) ids.push_back(e.identity);
  }
  return ids;
}

std::vector<ManifestEntry> DatasetManifest::images_of(const std::string& identity) const {
  std::vector<ManifestEntry> out;
  for (const auto& e : entries) {
    if (e.identity == identity) out.push_back(e);
  }
  return out;
}

DatasetManifest ingest(const fs::path& root, const IngestOptions& options) {
  std::error_code ec;
  if (!fs::is_directory(root, ec)) throw IoError("not a readable directory: " + root.string());
  DatasetManifest manifest;
  manifest.name = options.name;
  try {
    for (const auto& id_dir : fs::directory_iterator(root)) {
      if (!id_dir.is_directory()) continue;
      for (const auto& file : fs::directory_iterator(id_dir.path())) {
        if (!file.is_regular_file()) continue;
        std::string ext = file.path().extension().string();
        std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
        if (ext != ".png") continue;
        manifest.entries.push_back({id_dir.path().filename().string(), file.path()});
      }
    }
  } catch (const fs::filesystem_error& e) {
    throw IoError(std::string("cannot read dataset: ") + e.what());
  }
  if (manifest.entries.empty()) throw ValidationError("empty dataset: no PNG images under " + root.string());
  std::sort(manifest.entries.begin(), manifest.entries.end(), [](const ManifestEntry& a, const ManifestEntry& b) {
    if (a.identity != b.identity) return a.identity < b.identity;
    return a.path.filename().string() < b.path.filename().string();
  });

  // Decoding validates every file; resolutions are then checked together so
  // the error can list all offenders.
  std::vector<Resolution> sizes;
  for (const auto& e : manifest.entries) {
    const FaceImage img = load_png(e.path);
    sizes.push_back({img.height, img.width});
  }
  const Resolution reference = options.expected.value_or(sizes.front());
  std::vector<std::string> offenders;
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    if (!(sizes[i] == reference)) offenders.push_back(manifest.entries[i].path.string() + " (" + to_string(sizes[i]) + ")");
  }
  if (!offenders.empty() && (options.strict_resolution || options.expected)) {
    std::string msg = "images differ from resolution " + to_string(reference) + ":";
    for (const auto& o : offenders) msg += "\n  " + o;
    throw ValidationError(msg);
  }
  manifest.resolution = reference;
  return manifest;
}

void save_manifest(const fs::path& path, const DatasetManifest& manifest) {
  const fs::path base = path.parent_path();
  json entries = json::array();
  for (const auto& e : manifest.entries) {
    const fs::path rel = base.empty() ? e.path : fs::relative(fs::absolute(e.path), fs::absolute(base));
    entries.push_back({{"identity", e.identity}, {"path", rel.generic_string()}});
  }
  const json j{{"name", manifest.name},
               {"resolution", {{"height", manifest.resolution.height}, {"width", manifest.resolution.width}}},
               {"entries", entries}};
  write_file(path, j.dump(2) + "\n");
}

DatasetManifest load_manifest(const fs::path& path) {
  const json j = read_json(path);
  DatasetManifest manifest;
  try {
    manifest.name = j.at("name").get<std::string>();
    manifest.resolution = {j.at("resolution").at("height").get<int>(), j.at("resolution").at("width").get<int>()};
    for (const auto& e : j.at("entries")) {
      fs::path p = e.at("path").get<std::string>();
      if (p.is_relative()) p = path.parent_path() / p;
      manifest.entries.push_back({e.at("identity").get<std::string>(), p});
    }
  } catch (const json::exception& e) {
    throw IoError("malformed manifest " + path.string() + ": " + e.what());
  }
  if (manifest.entries.empty()) throw ValidationError("manifest lists no images: " + path.string());
  for (const auto& e : manifest.entries) {
    if (!fs::exists(e.path)) throw IoError("manifest references a missing image: " + e.path.string());
  }
  return manifest;
}

struct ToyEnvironment::Impl {
  ToyGenerator generator;
  HashTextEncoder encoder;
  ProjectionImageScorer scorer;
  FeaturePyramidMetric perceptual;
  std::vector<std::unique_ptr<ToyFrModel>> models;
};

ToyEnvironment::ToyEnvironment() : impl_(std::make_unique<Impl>()) {
  for (const auto& c : default_toy_fr_configs()) impl_->models.push_back(std::make_unique<ToyFrModel>(c));
}

ToyEnvironment::~ToyEnvironment() = default;

AttackStack ToyEnvironment::stack() const {
  return {&impl_->generator, &impl_->encoder, &impl_->scorer, &impl_->perceptual};
}

const GeneratorHandle& ToyEnvironment::generator() const { return impl_->generator; }

std::vector<std::string> ToyEnvironment::model_names() const {
  std::vector<std::string> names;
  for (const auto& m : impl_->models) names.push_back(m->name());
  return names;
}

const FrModel& ToyEnvironment::model(const std::string& name) const {
  for (const auto& m : impl_->models) {
    if (m->name() == name) return *m;
  }
  throw ValidationError("unknown recognition model: " + name);
}

std::vector<const FrModel*> ToyEnvironment::models(const std::vector<std::string>& names) const {
  std::vector<const FrModel*> out;
  for (const auto& n : names) out.push_back(&model(n));
  return out;
}

void AttackJob::validate(std::size_t prompt_count) const {
  if (source.identity == target.identity) {
    throw ValidationError("source and target share identity " + source.identity);
  }
  if (prompt_id < 0 || static_cast<std::size_t>(prompt_id) >= prompt_count) {
    throw ValidationError("prompt id out of range: " + std::to_string(prompt_id));
  }
  if (models.size() < 2) throw ValidationError("an attack needs at least two white-box models");
  std::set<std::string> seen;
  for (const auto& m : models) {
    if (!seen.insert(m).second) throw ValidationError("model listed twice: " + m);
  }
  for (const auto& m : observers) {
    if (!seen.insert(m).second) throw ValidationError("observer is also in the pool or repeated: " + m);
  }
  if (label.empty()) throw ValidationError("job label must not be empty");
  config.validate();
}

std::string job_id(int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "job_%04d", index);
  return buf;
}

std::string directory_checksum(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& f : fs::recursive_directory_iterator(dir)) {
    if (f.is_regular_file()) files.push_back(f.path());
  }
  std::sort(files.begin(), files.end());
  std::uint64_t h = fnv1a64(nullptr, 0);
  for (const auto& f : files) {
    const std::string name = fs::relative(f, dir).generic_string();
    h = fnv1a64(name.data(), name.size(), h);
    const std::string bytes = read_file(f);
    h = fnv1a64(bytes.data(), bytes.size(), h);
  }
  return hex64(h);
}

namespace {

json losses_json(const EpochRecord& r, const std::vector<std::string>& names) {
  json adv = json::object();
  for (std::size_t i = 0; i < names.size(); ++i) adv[names[i]] = r.adv.at(i);
  return {{"guide", r.guide}, {"perc", r.perc}, {"adv", adv}, {"meta", r.meta}, {"total", r.total}};
}

}  // namespace

JobOutcome run_job(const ToyEnvironment& env, const AttackJob& job, int index, std::uint64_t seed,
                   const std::vector<std::string>& prompts, const std::map<std::string, double>& thresholds,
                   const fs::path& directory, bool with_checkpoint) {
  JobOutcome outcome;
  outcome.index = index;
  outcome.id = job_id(index);
  outcome.directory = directory;
  try {
    job.validate(prompts.size());
    AttackRunConfig cfg = job.config;
    cfg.seed = seed;
    const FaceImage source = load_png(job.source.path);
    const FaceImage target = load_png(job.target.path);
    const std::string& prompt = prompts.at(job.prompt_id);
    AttackResult result = run_attack(env.stack(), source, target, prompt, env.models(job.models), cfg,
                                     env.models(job.observers));

    // Scores and quality are taken on the 8-bit images actually written.
    const FaceImage adversarial = quantize8(result.adversarial);
    std::map<std::string, std::vector<double>> sims;
    std::map<std::string, double> used_thresholds;
    json sim_json = json::object(), base_json = json::object(), tau_json = json::object();
    for (const auto& name : job.models) sims[name];
    for (const auto& name : job.observers) sims[name];
    for (auto& [name, list] : sims) {
      const FrModel& m = env.model(name);
      const double s = cosine_similarity(embed(m, adversarial), embed(m, target));
      list.push_back(s);
      sim_json[name] = s;
      base_json[name] = result.baseline_similarities.at(name);
      const auto it = thresholds.find(name);
      if (it == thresholds.end()) throw ValidationError("no threshold for model " + name);
      used_thresholds[name] = it->second;
      tau_json[name] = it->second;
    }
    const std::vector<FaceImage> advs{adversarial}, srcs{source};
    EvaluationReport report = evaluate(sims, used_thresholds, advs, srcs, nullptr);

    fs::create_directories(directory);
    save_png(directory / "source.png", source);
    save_png(directory / "adversarial.png", adversarial);
    save_png(directory / "clean.png", result.clean);
    {
      std::ostringstream trace;
      write_trace_csv(trace, result.model_names, result.trace);
      write_file(directory / "trace.csv", trace.str());
    }
    if (with_checkpoint) save_checkpoint(directory / "checkpoint.bin", result.params, result.optimizer);
    const json record{
        {"id", outcome.id},
        {"label", job.label},
        {"seed", seed},
        {"source", {{"identity", job.source.identity}, {"path", job.source.path.generic_string()}}},
        {"target", {{"identity", job.target.identity}, {"path", job.target.path.generic_string()}}},
        {"prompt_id", job.prompt_id},
        {"prompt", prompt},
        {"models", job.models},
        {"observers", job.observers},
        {"config", to_json(cfg)},
        {"initial_total", result.initial_total},
        {"final", losses_json(result.final_losses, result.model_names)},
        {"similarities", sim_json},
        {"baseline_similarities", base_json},
        {"thresholds", tau_json},
        {"evaluation", to_json(report)},
    };
    write_file(directory / "result.json", record.dump(2) + "\n");
    outcome.result = std::move(result);
    outcome.report = std::move(report);
    outcome.checksum = directory_checksum(directory);
  } catch (const std::exception& e) {
    outcome.result.reset();
    outcome.report.reset();
    outcome.error = e.what();
  }
  return outcome;
}

std::vector<JobOutcome> run_batch(const ToyEnvironment& env, const std::vector<AttackJob>& jobs,
                                  const BatchOptions& options) {
  if (options.parallelism < 1) throw ValidationError("parallelism must be at least 1");
  std::error_code ec;
  fs::create_directories(options.output_dir, ec);
  if (ec || !fs::is_directory(options.output_dir)) {
    throw IoError("cannot create output directory " + options.output_dir.string());
  }
  std::vector<std::string> prompts = options.prompts;
  if (prompts.empty()) prompts.assign(style_prompts().begin(), style_prompts().end());

  std::vector<JobOutcome> outcomes(jobs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      const int index = static_cast<int>(i);
      outcomes[i] = run_job(env, jobs[i], index, options.base_seed + i, prompts, options.thresholds,
                            options.output_dir / job_id(index), options.save_checkpoints);
    }
  };
  const int threads = std::min<int>(options.parallelism, static_cast<int>(std::max<std::size_t>(jobs.size(), 1)));
  {
    std::vector<std::jthread> pool;
    for (int t = 1; t < threads; ++t) pool.emplace_back(worker);
    worker();
  }
  return outcomes;
}

std::vector<JobRecord> load_job_records(const fs::path& results_dir) {
  if (!fs::is_directory(results_dir)) throw IoError("not a results directory: " + results_dir.string());
  std::vector<fs::path> files;
  for (const auto& d : fs::directory_iterator(results_dir)) {
    if (d.is_directory() && fs::exists(d.path() / "result.json")) files.push_back(d.path() / "result.json");
  }
  std::sort(files.begin(), files.end());
  std::vector<JobRecord> records;
  for (const auto& f : files) {
    const json j = read_json(f);
    JobRecord r;
    try {
      r.id = j.at("id").get<std::string>();
      r.label = j.at("label").get<std::string>();
      r.prompt = j.at("prompt").get<std::string>();
      r.similarities = j.at("similarities").get<std::map<std::string, double>>();
      r.thresholds = j.at("thresholds").get<std::map<std::string, double>>();
    } catch (const json::exception& e) {
      throw IoError("malformed result " + f.string() + ": " + e.what());
    }
    r.directory = f.parent_path();
    records.push_back(std::move(r));
  }
  return records;
}

std::vector<PromptEvaluation> evaluate_results(const fs::path& results_dir,
                                               const std::map<std::string, double>& thresholds,
                                               const FeatureExtractor* extractor) {
  const auto records = load_job_records(results_dir);
  if (records.empty()) throw ValidationError("nothing to report: no job results under " + results_dir.string());
  std::map<std::string, std::vector<const JobRecord*>> by_prompt;
  for (const auto& r : records) by_prompt[r.prompt].push_back(&r);
  std::vector<PromptEvaluation> out;
  for (const auto& [prompt, group] : by_prompt) {
    std::map<std::string, std::vector<double>> sims;
    std::vector<FaceImage> advs, srcs;
    for (const JobRecord* r : group) {
      for (const auto& [model, s] : r->similarities) sims[model].push_back(s);
      advs.push_back(load_png(r->directory / "adversarial.png"));
      srcs.push_back(load_png(r->directory / "source.png"));
    }
    out.push_back({prompt, evaluate(sims, thresholds, advs, srcs, extractor)});
  }
  return out;
}

std::string format_report_text(const std::vector<PromptEvaluation>& evaluations) {
  std::ostringstream out;
  for (const auto& e : evaluations) {
    out << "prompt: " << e.prompt << "\n";
    out << "  samples: " << e.report.samples << "\n";
    for (const auto& [model, value] : e.report.asr) out << "  asr[" << model << "]: " << format_double(value) << "%\n";
    out << "  mean_psnr_db: " << format_double(e.report.mean_psnr) << "\n";
    out << "  mean_ssim: " << format_double(e.report.mean_ssim) << "\n";
    out << "  fid: " << (e.report.fid ? format_double(*e.report.fid) : std::string("n/a")) << "\n";
  }
  return out.str();
}

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') q += '"';
    q += c;
  }
  return q + "\"";
}

}  // namespace

std::string format_report_csv(const std::vector<PromptEvaluation>& evaluations) {
  std::ostringstream out;
  out << "model,prompt,asr_percent,samples,mean_psnr_db,mean_ssim,fid\n";
  for (const auto& e : evaluations) {
    for (const auto& [model, value] : e.report.asr) {
      out << csv_field(model) << ',' << csv_field(e.prompt) << ',' << format_double(value) << ','
          << e.report.samples << ',' << format_double(e.report.mean_psnr) << ',' << format_double(e.report.mean_ssim)
          << ',' << (e.report.fid ? format_double(*e.report.fid) : std::string()) << '\n';
    }
  }
  return out.str();
}

ReportFiles write_report(const fs::path& results_dir, const fs::path& out_dir) {
  const auto records = load_job_records(results_dir);
  if (records.empty()) throw ValidationError("nothing to report: no job results under " + results_dir.string());
  std::error_code ec;
  fs::create_directories(out_dir / "traces", ec);
  if (ec) throw IoError("cannot create report directory " + out_dir.string());
  ReportFiles files;

  // ASR grid: one row per label, one column per model seen anywhere.
  std::set<std::string> models;
  std::map<std::string, std::vector<const JobRecord*>> by_label;
  for (const auto& r : records) {
    for (const auto& [m, _] : r.similarities) models.insert(m);
    by_label[r.label].push_back(&r);
  }
  {
    std::ostringstream grid;
    grid << "config";
    for (const auto& m : models) grid << ',' << csv_field(m);
    grid << '\n';
    for (const auto& [label, group] : by_label) {
      grid << csv_field(label);
      for (const auto& m : models) {
        int hits = 0, total = 0;
        for (const JobRecord* r : group) {
          const auto it = r->similarities.find(m);
          if (it == r->similarities.end()) continue;
          ++total;
          if (it->second > r->thresholds.at(m)) ++hits;
        }
        grid << ',';
        if (total > 0) grid << format_double(100.0 * hits / total);
      }
      grid << '\n';
    }
    files.asr_grid = out_dir / "asr_grid.csv";
    write_file(files.asr_grid, grid.str());
  }

  {
    RandomConvFeatureExtractor extractor;
    std::ostringstream quality;
    quality << "config,samples,mean_psnr_db,mean_ssim,fid\n";
    for (const auto& [label, group] : by_label) {
      std::vector<FaceImage> advs, srcs;
      for (const JobRecord* r : group) {
        advs.push_back(load_png(r->directory / "adversarial.png"));
        srcs.push_back(load_png(r->directory / "source.png"));
      }
      const EvaluationReport rep = evaluate({}, {}, advs, srcs, &extractor);
      quality << csv_field(label) << ',' << rep.samples << ',' << format_double(rep.mean_psnr) << ','
              << format_double(rep.mean_ssim) << ',' << (rep.fid ? format_double(*rep.fid) : std::string()) << '\n';
    }
    files.quality = out_dir / "quality.csv";
    write_file(files.quality, quality.str());
  }

  {
    std::ostringstream images;
    images << "job,config,source,adversarial\n";
    for (const auto& r : records) {
      const fs::path rel = fs::relative(r.directory, results_dir);
      images << r.id << ',' << csv_field(r.label) << ',' << csv_field((rel / "source.png").generic_string()) << ','
             << csv_field((rel / "adversarial.png").generic_string()) << '\n';
    }
    files.images = out_dir / "images.csv";
    write_file(files.images, images.str());
  }

  for (const auto& r : records) {
    const fs::path dst = out_dir / "traces" / (r.id + ".csv");
    write_file(dst, read_file(r.directory / "trace.csv"));
    files.traces.push_back(dst);
  }

  const fs::path remote_dir = results_dir / "remote";
  if (fs::is_directory(remote_dir)) {
    std::vector<fs::path> remote_files;
    for (const auto& f : fs::directory_iterator(remote_dir)) {
      if (f.is_regular_file() && f.path().extension() == ".json") remote_files.push_back(f.path());
    }
    std::sort(remote_files.begin(), remote_files.end());
    if (!remote_files.empty()) {
      std::ostringstream summary;
      summary << "provider,source_file,pairs,mean_confidence\n";
      for (const auto& f : remote_files) {
        const json j = read_json(f);
        double sum = 0.0;
        int n = 0;
        try {
          for (const auto& p : j.at("results")) {
            sum += p.at("confidence").get<double>();
            ++n;
          }
          summary << csv_field(j.at("provider").get<std::string>()) << ',' << csv_field(f.filename().string()) << ','
                  << n << ',' << (n > 0 ? format_double(sum / n) : std::string()) << '\n';
        } catch (const json::exception& e) {
          throw IoError("malformed remote results " + f.string() + ": " + e.what());
        }
      }
      files.remote_summary = out_dir / "remote_summary.csv";
      write_file(*files.remote_summary, summary.str());
    }
  }
  return files;
}

}  // namespace advface
