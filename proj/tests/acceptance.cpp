// Acceptance checks: one PASS/FAIL line per criterion, non-zero exit if any
// criterion fails or overruns its time budget.
#include <advface/augmentation.hpp>
#include <advface/meta_attack.hpp>
#include <advface/metrics.hpp>
#include <advface/pipeline.hpp>
#include <advface/remote.hpp>
#include <advface/image_io.hpp>
#include <advface/serialization.hpp>

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

#include "mock_server.hpp"
#include "support.hpp"

using namespace advface;
using namespace std::chrono_literals;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;
  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

int failures = 0;

void criterion(int n, const std::string& title, double budget_s, const std::function<void(Outcome&)>& body) {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    body(o);
  } catch (const std::exception& e) {
    o.pass = false;
    o.detail << " [exception: " << e.what() << "]";
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (secs > budget_s) {
    o.pass = false;
    o.detail << " [over budget]";
  }
  failures += !o.pass;
  std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << n << ": " << title << " (" << secs << " s of "
            << budget_s << " s)" << o.detail.str() << std::endl;
}

// Central difference along d, relative to the analytic directional derivative.
double fd_rel_error(const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& x,
                    const Eigen::VectorXd& grad, std::uint64_t seed, double h = 1e-5) {
  const Eigen::VectorXd d = testing::random_direction(x.size(), seed);
  return testing::relative_error(testing::directional_fd(f, x, d, h), grad.dot(d));
}

void identity_at_init(Outcome& o) {
  const auto& env = testing::shared_env();
  Rng rng(1);
  const StyleLatent w = testing::random_latent(env.generator().layer_count(), rng);
  FusionArch arch;
  arch.layers = static_cast<int>(w.rows());
  const FusionParams p = init_fusion(arch, rng);
  const HashTextEncoder enc;
  const SoftmaxVector v(Eigen::VectorXd::Constant(arch.class_count, 1.0 / arch.class_count));
  const StyleLatent out = fuse(p, w, enc.encode("a smiling face."), v);
  o.require(std::memcmp(out.data(), w.data(), sizeof(double) * w.size()) == 0, "fuse at init is not the identity");

  const FaceImage src = testing::toy_face(env.generator(), 11), tgt = testing::toy_face(env.generator(), 12);
  AttackRunConfig cfg;
  cfg.epochs = 0;
  cfg.fusion_hidden = 16;
  const AttackResult r = run_attack(env.stack(), src, tgt, "a smiling face.",
                                    env.models({"MobileFace", "IRSE50", "IR152"}), cfg);
  o.require((r.adversarial.pixels == r.clean.pixels).all(), "K=0 output differs from the clean reconstruction");
  o.detail << " fuse(theta0) == w bitwise; K=0 output == clean";
}

void gradient_suite(Outcome& o) {
  const auto& env = testing::shared_env();
  const FaceImage src = testing::toy_face(env.generator(), 21), tgt = testing::toy_face(env.generator(), 22);
  const auto models = env.models({"MobileFace", "IRSE50", "IR152"});
  AttackRunConfig cfg;
  cfg.fusion_hidden = 8;
  const AttackContext ctx(env.stack(), src, tgt, "a face with blond hair.", models, cfg);
  Rng rng(5);
  FusionParams p = init_fusion(ctx.fusion_arch(), rng);
  for (Eigen::Index i = 0; i < p.values.size(); ++i) p.values[i] += 0.02 * rng.normal();
  auto with = [&](const Eigen::VectorXd& x) { return FusionParams{p.arch, x}; };
  double worst = 0.0, worst_meta = 0.0;

  for (const auto& [wg, wp, name] : {std::tuple{1.0, 0.0, "guide"}, std::tuple{0.0, 1.0, "perc"}}) {
    AttackRunConfig c = cfg;
    c.weights = {wg, wp};
    const AttackContext cx(env.stack(), src, tgt, "a face with blond hair.", models, c);
    const TextPerceptualTerms t = text_perceptual_terms(cx, p, true);
    auto f = [&](const Eigen::VectorXd& x) {
      const TextPerceptualTerms u = text_perceptual_terms(cx, with(x), false);
      return wg * u.guide + wp * u.perc;
    };
    for (int k = 0; k < 2; ++k) {
      const double e = fd_rel_error(f, p.values, t.grad, 10 + k);
      worst = std::max(worst, e);
      o.require(e <= 1e-4, std::string("L_") + name + " gradient");
    }
  }

  const SoftmaxVector& v = ctx.deployment_guidance();
  for (int m = 0; m < 3; ++m) {
    const ValueGrad<double> vg = adversarial_value_grad<double>(ctx, p, m, v);
    const double e = fd_rel_error(
        [&](const Eigen::VectorXd& x) { return adversarial_value_grad<double>(ctx, with(x), m, v).value; }, p.values,
        vg.grad, 20 + m);
    worst = std::max(worst, e);
    o.require(e <= 1e-4, "L_adv gradient");
  }

  {
    Rng probe(31);
    const SoftmaxVector drawn = target_representation(tgt, ctx.model(1), cfg.augmentation, probe).v;
    const Eigen::VectorXd g = adversarial_value_grad<double>(ctx, p, 1, drawn).grad;
    const double e = fd_rel_error(
        [&](const Eigen::VectorXd& x) {
          Rng r(31);
          return meta_train_loss(ctx, with(x), 1, r);
        },
        p.values, g, 30);
    worst = std::max(worst, e);
    o.require(e <= 1e-4, "meta_train_loss gradient");
  }

  Rng split_rng(41);
  const MetaSplit split = shuffle_split(split_rng, 3);
  const MetaDraws draws = draw_guidance(ctx, split, split_rng);
  const MetaObjective obj = meta_objective(ctx, p, split, draws, true);
  for (int k = 0; k < 2; ++k) {
    const double e = fd_rel_error(
        [&](const Eigen::VectorXd& x) { return meta_objective(ctx, with(x), split, draws, true, false).value; },
        p.values, obj.grad, 40 + k);
    worst_meta = std::max(worst_meta, e);
    o.require(e <= 1e-3, "second-order meta_objective gradient");
  }
  o.detail << " max rel err " << worst << " (<= 1e-4), unrolled meta " << worst_meta << " (<= 1e-3)";
}

void inner_update_oracle(Outcome& o) {
  double worst = 0.0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    FusionParams p;
    p.values = testing::random_direction(1000, s);
    const Eigen::VectorXd star = testing::random_direction(1000, 100 + s);
    const double lr = 0.01 * (1 + s);
    const FusionParams q = inner_update(p, p.values - star, lr);
    const Eigen::VectorXd analytic = (1.0 - lr) * p.values + lr * star;
    for (Eigen::Index i = 0; i < analytic.size(); ++i) {
      const double scale = std::max({std::abs(p.values[i]), std::abs(star[i]), 1e-300});
      worst = std::max(worst, std::abs(q.values[i] - analytic[i]) / scale);
    }
  }
  o.require(worst <= 4 * std::numeric_limits<double>::epsilon(), "step differs beyond machine epsilon");
  o.detail << " max relative deviation " << worst;
}

void toy_attack(Outcome& o) {
  const auto& env = testing::shared_env();
  const auto pool = env.models({"MobileFace", "IRSE50", "IR152"});
  const auto observers = env.models({"FaceNet"});
  int loss_ok = 0, transfer_ok = 0;
  for (int s = 0; s < 20; ++s) {
    Rng rng(1000 + s);
    auto face = [&] {
      const StyleLatent w = testing::random_latent(env.generator().layer_count(), rng);
      return synthesize(env.generator(), w, env.generator().zero_noise());
    };
    const FaceImage src = face(), tgt = face();
    AttackRunConfig cfg;
    cfg.seed = static_cast<std::uint64_t>(s);
    const AttackResult r = run_attack(env.stack(), src, tgt, style_prompts()[s % 5], pool, cfg, observers);
    loss_ok += r.final_losses.total < r.initial_total;
    transfer_ok += r.similarities.at("FaceNet") > r.baseline_similarities.at("FaceNet");
  }
  o.require(loss_ok >= 18, "loss decreased in fewer than 18 runs");
  o.require(transfer_ok >= 16, "held-out similarity improved in fewer than 16 runs");
  o.detail << " loss decreased " << loss_ok << "/20, held-out similarity above baseline " << transfer_ok << "/20";
}

void asr_threshold(Outcome& o) {
  Rng rng(7);
  int asr_bad = 0, tau_bad = 0;
  for (int t = 0; t < 1000; ++t) {
    std::vector<double> sims(1 + rng.uniform_int(0, 199));
    for (double& s : sims) s = rng.uniform(-1.0, 1.0);
    const double tau = rng.uniform(-1.0, 1.0);
    std::size_t hits = 0;
    for (double s : sims) hits += s > tau;
    asr_bad += asr(sims, tau) != 100.0 * static_cast<double>(hits) / static_cast<double>(sims.size());
  }
  for (int t = 0; t < 200; ++t) {
    std::vector<double> scores(100 + rng.uniform_int(0, 900));
    for (double& s : scores) s = rng.uniform(-0.3, 0.6);
    // Occasional ties exercise the strict comparison.
    if (t % 3 == 0) std::fill(scores.begin(), scores.begin() + 20, scores[20]);
    const double n = static_cast<double>(scores.size());
    double best = std::numeric_limits<double>::infinity();
    for (double c : scores) {
      const auto above = std::count_if(scores.begin(), scores.end(), [&](double s) { return s > c; });
      if (static_cast<double>(above) / n <= 0.01) best = std::min(best, c);
    }
    const double tau = calibrate_threshold(scores, 0.01);
    const auto above = std::count_if(scores.begin(), scores.end(), [&](double s) { return s > tau; });
    tau_bad += tau != best || static_cast<double>(above) / n > 0.01;
  }
  const auto& d = ThresholdTable::defaults();
  const bool table = d.values().size() == 4 && d.at("MobileFace") == 0.302 && d.at("IRSE50") == 0.241 &&
                     d.at("IR152") == 0.167 && d.at("FaceNet") == 0.409;
  o.require(asr_bad == 0, "asr differs from brute force");
  o.require(tau_bad == 0, "calibrate_threshold differs from exhaustive scan or exceeds FAR");
  o.require(table, "default threshold table");
  o.detail << " asr mismatches " << asr_bad << "/1000, threshold mismatches " << tau_bad << "/200, default table "
           << (table ? "ok" : "wrong");
}

void metric_closed_forms(Outcome& o) {
  const FaceImage x = testing::random_image(32, 32, 3, 0.0, 0.9);
  FaceImage y = x;
  y.pixels += 0.1;
  const double db = psnr(x, y).db;
  const double s = ssim(constant_image({16, 16}, 0.2), constant_image({16, 16}, 0.4));
  const int d = 4, n = 10000;
  Eigen::VectorXd mu_a(d), mu_b(d);
  mu_a << 0.0, 0.5, -0.2, 0.1;
  mu_b << 1.0, -0.5, 0.8, 0.2;
  Eigen::MatrixXd la(d, d), lb(d, d);
  la << 1, 0, 0, 0, 0.3, 0.8, 0, 0, 0.1, 0.2, 1.1, 0, 0, 0.1, 0.3, 0.7;
  lb << 1.4, 0, 0, 0, -0.2, 0.6, 0, 0, 0.3, 0.1, 0.9, 0, 0.2, 0, 0.1, 1.2;
  Rng rng(99);
  Eigen::MatrixXd a(n, d), b(n, d);
  for (int i = 0; i < n; ++i) {
    Eigen::VectorXd za(d), zb(d);
    for (int j = 0; j < d; ++j) za[j] = rng.normal(), zb[j] = rng.normal();
    a.row(i) = (mu_a + la * za).transpose();
    b.row(i) = (mu_b + lb * zb).transpose();
  }
  const double exact = frechet_distance(mu_a, la * la.transpose(), mu_b, lb * lb.transpose());
  const double sampled = fid(a, b);
  const double self = fid(a, a);
  o.require(std::abs(db - 20.0) <= 1e-6, "psnr");
  o.require(std::abs(s - 0.8001) <= 1e-3, "ssim constant case");
  o.require(std::abs(sampled - exact) / exact <= 0.05, "fid vs closed form");
  o.require(self <= 1e-6, "fid(A, A)");
  o.detail << " psnr " << db << " dB, ssim " << s << ", fid " << sampled << " vs closed form " << exact
           << ", fid(A,A) " << self;
}

void augmentation_stats(Outcome& o) {
  const auto& env = testing::shared_env();
  const FaceImage tgt = testing::toy_face(env.generator(), 5);
  const AugmentationConfig cfg;
  Rng rng(2024);
  int transformed = 0;
  double worst = 0.0;
  const FrModel& m = env.model("IRSE50");
  for (int i = 0; i < 10000; ++i) {
    const TargetRepresentation r = target_representation(tgt, m, cfg, rng);
    transformed += r.transformed;
    const Eigen::VectorXd& p = r.v.probs();
    worst = std::max({worst, std::abs(p.sum() - 1.0), std::max(0.0, -p.minCoeff())});
  }
  const double freq = transformed / 10000.0;
  o.require(std::abs(freq - 0.5) <= 0.015, "transformed-branch frequency");
  o.require(worst <= 1e-6, "simplex violation");
  o.detail << " transformed frequency " << freq << ", max simplex violation " << worst;
}

void determinism(Outcome& o) {
  testing::TempDir dir("accept8");
  const auto& env = testing::shared_env();
  std::vector<ManifestEntry> faces;
  for (int i = 0; i < 4; ++i) {
    const fs::path p = dir / ("face" + std::to_string(i) + ".png");
    save_png(p, testing::toy_face(env.generator(), 700 + i));
    faces.push_back({"id" + std::to_string(i), p});
  }
  std::vector<AttackJob> jobs;
  for (int i = 0; i < 4; ++i) {
    AttackJob job;
    job.source = faces[i];
    job.target = faces[(i + 1) % 4];
    job.prompt_id = i;
    job.models = {"MobileFace", "IRSE50", "IR152"};
    job.observers = {"FaceNet"};
    job.config.epochs = 5;
    job.config.fusion_hidden = 32;
    jobs.push_back(job);
  }
  auto run = [&](int par, const std::string& sub) {
    BatchOptions opt;
    opt.output_dir = dir / sub;
    opt.parallelism = par;
    opt.base_seed = 77;
    std::vector<std::string> sums;
    for (const auto& oc : run_batch(env, jobs, opt)) sums.push_back(oc.ok() ? oc.checksum : "error: " + oc.error);
    return sums;
  };
  const auto first = run(1, "a"), again = run(1, "b"), parallel = run(4, "c");
  o.require(first == again, "repeated runs differ");
  o.require(first == parallel, "parallelism 4 differs from 1");
  o.detail << " " << first.size() << " jobs, repeated and 4-way parallel checksums identical to serial";
}

void config_fidelity(Outcome& o) {
  for (const AttackRunConfig& cfg : {AttackRunConfig{}, load_run_config(ADVFACE_SOURCE_DIR "/configs/default_run.json")}) {
    o.require(cfg.weights.guide == 0.5 && cfg.weights.perc == 0.05, "loss weights");
    o.require(cfg.adam.beta1 == 0.9 && cfg.adam.beta2 == 0.999 && cfg.adam.lr == 0.01, "Adam settings");
    o.require(cfg.epochs == 50, "epoch count");
  }
  o.detail << " weights 0.5/0.05, Adam (0.9, 0.999, lr 0.01), K=50 in code and shipped config";
}

void remote_contract(Outcome& o) {
  const char* key = "acceptance-key-5b1e";
  ::setenv("ADVFACE_ACCEPT_KEY", key, 1);
  auto config = [](const testing::MockServer& s) {
    RemoteVerifierConfig cfg = RemoteVerifierConfig::defaults_for(Provider::Generic);
    cfg.endpoint = s.endpoint();
    cfg.key_env = "ADVFACE_ACCEPT_KEY";
    cfg.requests_per_second = 1000.0;
    cfg.retry.initial_backoff = 2ms;
    cfg.retry.max_backoff = 8ms;
    return cfg;
  };
  const FaceImage a = testing::random_image(16, 16, 1), b = testing::random_image(16, 16, 2);
  std::vector<std::string> log;
  auto logger = [&](const std::string& l) { log.push_back(l); };

  testing::MockServer flaky({{500, std::string("echo ") + key}, {500, "x"}, {200, R"({"confidence": 87.3})"}});
  RemoteVerifier v(config(flaky), logger);
  const RemoteVerdict r = v.verify(a, b);
  const auto h = v.backoff_history();
  o.require(r.confidence == 87.3 && r.attempts == 3, "retry then success");
  o.require(h.size() == 2 && h[0] == 2ms && h[1] == 4ms, "exponential backoff");

  testing::MockServer limited({{429, "slow"}});
  bool exhausted = false;
  try {
    RemoteVerifier(config(limited), logger).verify(a, b);
  } catch (const RateLimitExhaustedError&) {
    exhausted = true;
  }
  o.require(exhausted && limited.requests().size() == 4, "rate-limit exhaustion");

  testing::MockServer steady({{200, R"({"confidence": 10})"}});
  RemoteVerifierConfig slow = config(steady);
  slow.requests_per_second = 10.0;
  RemoteVerifier pacer(slow, logger);
  const auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < 5; ++i) pacer.verify(a, b);
  const auto spacing = std::chrono::steady_clock::now() - t0;
  o.require(spacing >= 390ms, "client-side rate limit");

  testing::MockServer wild({{200, R"({"confidence": 120})"}});
  std::string error;
  try {
    RemoteVerifier(config(wild), logger).verify(a, b);
  } catch (const MalformedResponseError& e) {
    error = e.raw_body();
  }
  o.require(error == R"({"confidence": 120})", "out-of-range confidence rejected with raw body");

  testing::TempDir dir("accept10");
  save_remote_results(dir / "generic.json", v.config(), {{"a.png", "b.png", r.confidence, r.attempts}});
  std::ifstream in(dir / "generic.json");
  std::stringstream saved;
  saved << in.rdbuf();
  bool leaked = saved.str().find(key) != std::string::npos;
  for (const auto& l : log) leaked |= l.find(key) != std::string::npos;
  o.require(!leaked, "credential leaked into logs or saved results");
  o.detail << " retry/backoff, 429 exhaustion, rate spacing "
           << std::chrono::duration_cast<std::chrono::milliseconds>(spacing).count()
           << " ms for 5 requests at 10/s, range check, no credential in " << log.size() << " log lines or saved file";
}

}  // namespace

int main() {
  // Build the shared toy stack and its cached inverter outside the timed criteria.
  const auto& env = testing::shared_env();
  invert(env.generator(), testing::toy_face(env.generator(), 1));
  criterion(1, "identity at initialisation", 1, identity_at_init);
  criterion(2, "gradient suite", 60, gradient_suite);
  criterion(3, "inner-update oracle", 1, inner_update_oracle);
  criterion(4, "toy end-to-end attack", 300, toy_attack);
  criterion(5, "ASR and threshold oracles", 10, asr_threshold);
  criterion(6, "metric closed forms", 60, metric_closed_forms);
  criterion(7, "augmentation statistics", 10, augmentation_stats);
  criterion(8, "determinism and parallel equivalence", 120, determinism);
  criterion(9, "config fidelity", 1, config_fidelity);
  criterion(10, "remote client contract", 30, remote_contract);
  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
  return failures == 0 ? 0 : 1;
}
