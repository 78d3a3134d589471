#include <doctest.h>

#include <advface/image_io.hpp>

#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "mock_server.hpp"
#include "support.hpp"

namespace fs = std::filesystem;

namespace {

struct Run {
  int status;
  std::string output;
};

Run cli(const std::string& args, const std::string& env = "") {
  const std::string cmd = env + " '" ADVFACE_CLI_PATH "' " + args + " 2>&1";
  FILE* pipe = ::popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  std::string out;
  std::array<char, 4096> buf;
  while (std::size_t n = std::fread(buf.data(), 1, buf.size(), pipe)) out.append(buf.data(), n);
  const int raw = ::pclose(pipe);
  return {WIFEXITED(raw) ? WEXITSTATUS(raw) : -1, out};
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

// Two identities with one toy face each, plus a fast run config.
struct Workspace {
  testing::TempDir dir{"cli"};
  Workspace() {
    const auto& g = testing::shared_env().generator();
    for (int i = 0; i < 3; ++i) {
      const std::string id = "id" + std::to_string(i);
      fs::create_directories(dir / "data" / id);
      advface::save_png(dir / "data" / id / "0.png", testing::toy_face(g, 500 + i));
    }
    std::ofstream(dir / "fast.json") << R"({"epochs": 2, "fusion_hidden": 8})";
  }
  fs::path operator/(const std::string& s) const { return dir / s; }
};

}  // namespace

TEST_CASE("usage errors exit non-zero with a message") {
  CHECK(cli("").status != 0);
  const Run bad = cli("frobnicate");
  CHECK(bad.status != 0);
  const Run missing = cli("attack --source /nonexistent.png --target /x.png --prompt p --out /tmp/x");
  CHECK(missing.status != 0);
  CHECK(cli("--help").status == 0);
  CHECK(cli("calibrate --help").output.find("--far") != std::string::npos);
}

TEST_CASE("ingest, attack, batch, eval and report from the command line") {
  Workspace ws;
  const Run ing = cli("ingest --root " + q(ws / "data") + " --out " + q(ws / "manifest.json"));
  REQUIRE_MESSAGE(ing.status == 0, ing.output);
  CHECK(ing.output.find("3 images of 3 identities") != std::string::npos);

  const Run atk = cli("attack --source " + q(ws / "data/id0/0.png") + " --target " + q(ws / "data/id1/0.png") +
                      " --prompt 'a face with red lipstick.' --config " + q(ws / "fast.json") + " --out " +
                      q(ws / "results/job_0000") + " --seed 3");
  REQUIRE_MESSAGE(atk.status == 0, atk.output);
  CHECK(fs::exists(ws / "results/job_0000/adversarial.png"));
  const auto record = nlohmann::json::parse(slurp(ws / "results/job_0000/result.json"));
  CHECK(record["seed"] == 3);
  CHECK(record["prompt"] == "a face with red lipstick.");
  CHECK(record["config"]["epochs"] == 2);

  const Run bat = cli("batch --manifest " + q(ws / "manifest.json") + " --config " + q(ws / "fast.json") +
                      " --prompt-ids 0 --out " + q(ws / "batch") + " --parallelism 2");
  REQUIRE_MESSAGE(bat.status == 0, bat.output);
  CHECK(bat.output.find("3/3 jobs succeeded") != std::string::npos);

  const Run ev = cli("eval --results " + q(ws / "batch") + " --csv " + q(ws / "eval.csv") + " --fid");
  REQUIRE_MESSAGE(ev.status == 0, ev.output);
  CHECK(slurp(ws / "eval.csv").rfind("model,prompt,asr_percent", 0) == 0);

  const Run rep = cli("report --results-dir " + q(ws / "batch") + " --out " + q(ws / "report"));
  REQUIRE_MESSAGE(rep.status == 0, rep.output);
  CHECK(fs::exists(ws / "report/asr_grid.csv"));
  CHECK(fs::exists(ws / "report/traces/job_0002.csv"));

  fs::create_directories(ws / "empty");
  const Run none = cli("report --results-dir " + q(ws / "empty"));
  CHECK(none.status == 1);
  CHECK(none.output.find("nothing to report") != std::string::npos);
}

TEST_CASE("calibrate writes a threshold table") {
  Workspace ws;
  std::ofstream(ws / "pairs.txt") << "data/id0/0.png,data/id1/0.png\ndata/id1/0.png,data/id2/0.png\n"
                                     "data/id0/0.png,data/id2/0.png\n";
  const Run r = cli("calibrate --impostor-pairs " + q(ws / "pairs.txt") + " --far 0.34 --models IR152,FaceNet --out " +
                    q(ws / "tau.json"));
  REQUIRE_MESSAGE(r.status == 0, r.output);
  CHECK(r.output.find("IR152: tau") != std::string::npos);
  const auto j = nlohmann::json::parse(slurp(ws / "tau.json"));
  CHECK(j.dump().find("FaceNet") != std::string::npos);
  CHECK(cli("calibrate --impostor-pairs " + q(ws / "pairs.txt") + " --far 2").status != 0);
}

TEST_CASE("verify-remote against a local server keeps the key out of output and files") {
  Workspace ws;
  std::ofstream(ws / "pairs.txt") << "data/id0/0.png,data/id1/0.png\n";
  testing::MockServer server({{500, "busy"}, {200, R"({"confidence": 87.3})"}});
  const std::string key = "cli-secret-value-123";
  const Run r = cli("verify-remote --provider generic --endpoint " + server.endpoint() + " --pair-list " +
                        q(ws / "pairs.txt") + " --rate 100 --out " + q(ws / "remote/generic.json"),
                    "ADVFACE_REMOTE_KEY=" + key);
  REQUIRE_MESSAGE(r.status == 0, r.output);
  CHECK(r.output.find("87.3") != std::string::npos);
  CHECK(r.output.find(key) == std::string::npos);
  CHECK(slurp(ws / "remote/generic.json").find(key) == std::string::npos);
  CHECK(server.requests().size() == 2);

  const Run unset = cli("verify-remote --provider generic --endpoint " + server.endpoint() + " --pair-list " +
                            q(ws / "pairs.txt"),
                        "env -u ADVFACE_REMOTE_KEY");
  CHECK(unset.status == 1);
  CHECK(unset.output.find("ADVFACE_REMOTE_KEY") != std::string::npos);
}
