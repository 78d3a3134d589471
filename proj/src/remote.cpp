#include "advface/remote.hpp"

#include <openssl/evp.h>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <httplib.h>
#include <regex>
#include <thread>

#include "advface/image_io.hpp"

namespace advface {

using nlohmann::json;

Provider provider_from_string(const std::string& name) {
  if (name == "facepp") return Provider::FacePP;
  if (name == "aliyun") return Provider::Aliyun;
  if (name == "generic") return Provider::Generic;
  throw ValidationError("unknown provider '" + name + "' (expected facepp, aliyun or generic)");
}

std::string to_string(Provider p) {
  switch (p) {
    case Provider::FacePP: return "facepp";
    case Provider::Aliyun: return "aliyun";
    case Provider::Generic: return "generic";
  }
  return "generic";
}

RemoteVerifierConfig RemoteVerifierConfig::defaults_for(Provider p) {
  RemoteVerifierConfig cfg;
  cfg.provider = p;
  switch (p) {
    case Provider::FacePP:
      cfg.endpoint = "https://api-us.faceplusplus.com/facepp/v3/compare";
      cfg.key_env = "FACEPP_API_KEY";
      cfg.secret_env = "FACEPP_API_SECRET";
      break;
    case Provider::Aliyun:
      cfg.key_env = "ALIYUN_APPCODE";
      break;
    case Provider::Generic:
      cfg.key_env = "ADVFACE_REMOTE_KEY";
      break;
  }
  return cfg;
}

namespace {

struct Endpoint {
  std::string origin;  // scheme://host[:port]
  std::string path;
};

Endpoint parse_endpoint(const std::string& url) {
  static const std::regex re(R"(^(https?://[^/\s]+)(/\S*)?$)");
  std::smatch m;
  if (!std::regex_match(url, m, re)) throw ValidationError("malformed endpoint URL: " + url);
  return {m[1].str(), m[2].matched ? m[2].str() : std::string("/")};
}

}  // namespace

void RemoteVerifierConfig::validate() const {
  if (endpoint.empty()) throw ValidationError("remote verifier needs an endpoint URL");
  parse_endpoint(endpoint);
  if (key_env.empty()) throw ValidationError("remote verifier needs a credential variable name");
  if (provider == Provider::FacePP && secret_env.empty()) {
    throw ValidationError("facepp needs both a key and a secret variable name");
  }
  if (!(requests_per_second > 0.0) || !std::isfinite(requests_per_second)) {
    throw ValidationError("rate limit must be positive");
  }
  if (max_in_flight < 1) throw ValidationError("max_in_flight must be at least 1");
  if (retry.max_retries < 0) throw ValidationError("max_retries must be non-negative");
  if (retry.initial_backoff.count() < 0 || retry.max_backoff < retry.initial_backoff) {
    throw ValidationError("backoff bounds are inconsistent");
  }
  if (!(retry.multiplier >= 1.0)) throw ValidationError("backoff multiplier must be at least 1");
  if (timeout.count() <= 0) throw ValidationError("timeout must be positive");
}

json to_json(const RemoteVerifierConfig& cfg) {
  return json{{"provider", to_string(cfg.provider)},
              {"endpoint", cfg.endpoint},
              {"key_env", cfg.key_env},
              {"secret_env", cfg.secret_env},
              {"requests_per_second", cfg.requests_per_second},
              {"max_in_flight", cfg.max_in_flight},
              {"retry",
               {{"max_retries", cfg.retry.max_retries},
                {"initial_backoff_ms", cfg.retry.initial_backoff.count()},
                {"multiplier", cfg.retry.multiplier},
                {"max_backoff_ms", cfg.retry.max_backoff.count()}}},
              {"timeout_ms", cfg.timeout.count()}};
}

RemoteVerifierConfig remote_config_from_json(const json& j) {
  try {
    RemoteVerifierConfig cfg = RemoteVerifierConfig::defaults_for(provider_from_string(j.value("provider", "generic")));
    cfg.endpoint = j.value("endpoint", cfg.endpoint);
    cfg.key_env = j.value("key_env", cfg.key_env);
    cfg.secret_env = j.value("secret_env", cfg.secret_env);
    cfg.requests_per_second = j.value("requests_per_second", cfg.requests_per_second);
    cfg.max_in_flight = j.value("max_in_flight", cfg.max_in_flight);
    if (j.contains("retry")) {
      const json& r = j.at("retry");
      cfg.retry.max_retries = r.value("max_retries", cfg.retry.max_retries);
      cfg.retry.initial_backoff = std::chrono::milliseconds(r.value("initial_backoff_ms", cfg.retry.initial_backoff.count()));
      cfg.retry.multiplier = r.value("multiplier", cfg.retry.multiplier);
      cfg.retry.max_backoff = std::chrono::milliseconds(r.value("max_backoff_ms", cfg.retry.max_backoff.count()));
    }
    cfg.timeout = std::chrono::milliseconds(j.value("timeout_ms", cfg.timeout.count()));
    for (const char* k : {"api_key", "api_secret", "key", "secret", "password", "token"}) {
      if (j.contains(k)) throw ValidationError(std::string("credentials belong in the environment, not in config key '") + k + "'");
    }
    cfg.validate();
    return cfg;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed remote verifier config: ") + e.what());
  }
}

std::chrono::nanoseconds backoff_delay(const RetryPolicy& policy, int retry) {
  const double ms = static_cast<double>(policy.initial_backoff.count()) * std::pow(policy.multiplier, retry - 1);
  const double capped = std::min(ms, static_cast<double>(policy.max_backoff.count()));
  return std::chrono::duration_cast<std::chrono::nanoseconds>(std::chrono::duration<double, std::milli>(capped));
}

namespace {

std::string base64(const std::string& bytes) {
  std::string out(4 * ((bytes.size() + 2) / 3), '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                reinterpret_cast<const unsigned char*>(bytes.data()), static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

struct Credentials {
  std::string key;
  std::string secret;
};

Credentials read_credentials(const RemoteVerifierConfig& cfg) {
  Credentials c;
  const char* key = std::getenv(cfg.key_env.c_str());
  if (!key || !*key) throw AuthError("credential variable " + cfg.key_env + " is not set");
  c.key = key;
  if (!cfg.secret_env.empty()) {
    const char* secret = std::getenv(cfg.secret_env.c_str());
    if (!secret || !*secret) throw AuthError("credential variable " + cfg.secret_env + " is not set");
    c.secret = secret;
  }
  return c;
}

std::string redact(std::string text, const Credentials& c) {
  for (const std::string* s : {&c.key, &c.secret}) {
    if (s->empty()) continue;
    for (std::size_t pos = text.find(*s); pos != std::string::npos; pos = text.find(*s, pos)) {
      text.replace(pos, s->size(), "[redacted]");
      pos += 10;
    }
  }
  return text;
}

struct Request {
  httplib::Headers headers;
  std::string body;
  std::string content_type;
};

Request build_request(Provider p, const Credentials& c, const std::string& a64, const std::string& b64) {
  Request r;
  switch (p) {
    case Provider::FacePP: {
      const httplib::Params params{{"api_key", c.key}, {"api_secret", c.secret}, {"image_base64_1", a64},
                                   {"image_base64_2", b64}};
      r.body = httplib::detail::params_to_query_str(params);
      r.content_type = "application/x-www-form-urlencoded";
      break;
    }
    case Provider::Aliyun:
      r.headers.emplace("Authorization", "APPCODE " + c.key);
      r.body = json{{"ImageDataA", a64}, {"ImageDataB", b64}}.dump();
      r.content_type = "application/json";
      break;
    case Provider::Generic:
      r.headers.emplace("X-API-Key", c.key);
      if (!c.secret.empty()) r.headers.emplace("X-API-Secret", c.secret);
      r.body = json{{"image_a", a64}, {"image_b", b64}}.dump();
      r.content_type = "application/json";
      break;
  }
  return r;
}

// Confidence as the provider reports it, on a 0..100 scale.
double parse_confidence(Provider p, const std::string& body) {
  json j;
  try {
    j = json::parse(body);
  } catch (const json::exception&) {
    throw MalformedResponseError("response is not JSON", body);
  }
  const json* v = nullptr;
  if (p == Provider::Aliyun) {
    if (j.is_object() && j.contains("Data") && j["Data"].is_object() && j["Data"].contains("Confidence")) {
      v = &j["Data"]["Confidence"];
    }
  } else if (j.is_object() && j.contains("confidence")) {
    v = &j["confidence"];
  }
  if (!v || !v->is_number()) throw MalformedResponseError("response has no numeric confidence", body);
  const double c = v->get<double>();
  if (!std::isfinite(c) || c < 0.0 || c > 100.0) {
    throw MalformedResponseError("confidence outside [0, 100]", body);
  }
  return c;
}

// Face++ signals throttling with 403 CONCURRENCY_LIMIT_EXCEEDED.
bool is_throttled(Provider p, int status, const std::string& body) {
  if (status == 429) return true;
  return p == Provider::FacePP && status == 403 && body.find("CONCURRENCY_LIMIT_EXCEEDED") != std::string::npos;
}

}  // namespace

RemoteVerifier::RemoteVerifier(RemoteVerifierConfig cfg, Logger logger, Sleeper sleeper)
    : cfg_(std::move(cfg)), logger_(std::move(logger)), sleeper_(std::move(sleeper)) {
  cfg_.validate();
  if (!sleeper_) sleeper_ = [](std::chrono::nanoseconds d) { std::this_thread::sleep_for(d); };
}

std::vector<std::chrono::nanoseconds> RemoteVerifier::backoff_history() const {
  std::lock_guard lock(mutex_);
  return backoffs_;
}

void RemoteVerifier::acquire_slot() {
  std::unique_lock lock(mutex_);
  slot_cv_.wait(lock, [&] { return in_flight_ < cfg_.max_in_flight; });
  ++in_flight_;
}

void RemoteVerifier::release_slot() {
  {
    std::lock_guard lock(mutex_);
    --in_flight_;
  }
  slot_cv_.notify_one();
}

void RemoteVerifier::wait_for_rate() {
  using clock = std::chrono::steady_clock;
  const auto interval = std::chrono::duration_cast<clock::duration>(
      std::chrono::duration<double>(1.0 / cfg_.requests_per_second));
  clock::time_point slot;
  {
    std::lock_guard lock(mutex_);
    slot = std::max(clock::now(), next_request_);
    next_request_ = slot + interval;
  }
  const auto wait = slot - clock::now();
  if (wait > clock::duration::zero()) sleeper_(wait);
}

RemoteVerdict RemoteVerifier::verify(const FaceImage& a, const FaceImage& b) {
  validate_face_image(a);
  validate_face_image(b);
  const Credentials creds = read_credentials(cfg_);
  const Endpoint ep = parse_endpoint(cfg_.endpoint);
  const std::string a64 = base64(encode_png(a));
  const std::string b64 = base64(encode_png(b));
  const Request req = build_request(cfg_.provider, creds, a64, b64);
  const std::string provider = to_string(cfg_.provider);

  httplib::Client client(ep.origin);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(cfg_.timeout);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(cfg_.timeout - secs);
  client.set_connection_timeout(secs.count(), usecs.count());
  client.set_read_timeout(secs.count(), usecs.count());
  client.set_write_timeout(secs.count(), usecs.count());

  RemoteVerdict verdict;
  std::string last_problem;
  bool last_was_throttle = false;
  for (int attempt = 1; attempt <= cfg_.retry.max_retries + 1; ++attempt) {
    if (attempt > 1) {
      auto delay = backoff_delay(cfg_.retry, attempt - 1);
      {
        std::lock_guard lock(mutex_);
        backoffs_.push_back(delay);
      }
      if (logger_) logger_(provider + ": backing off " + std::to_string(delay.count() / 1000000) + " ms");
      sleeper_(delay);
    }
    wait_for_rate();
    acquire_slot();
    auto res = client.Post(ep.path, req.headers, req.body, req.content_type);
    release_slot();
    verdict.attempts = attempt;

    if (!res) {
      last_problem = "transport error: " + httplib::to_string(res.error());
      last_was_throttle = false;
      if (logger_) logger_(provider + ": attempt " + std::to_string(attempt) + " " + last_problem);
      continue;
    }
    const int status = res->status;
    const std::string body = redact(res->body, creds);
    if (logger_) logger_(provider + ": attempt " + std::to_string(attempt) + " status " + std::to_string(status));
    if (status == 200) {
      verdict.confidence = parse_confidence(cfg_.provider, body);
      return verdict;
    }
    if (is_throttled(cfg_.provider, status, body)) {
      last_problem = "throttled (status " + std::to_string(status) + ")";
      last_was_throttle = true;
      continue;
    }
    if (status == 401 || status == 403) {
      throw AuthError(provider + " rejected the credentials (status " + std::to_string(status) + "): " + body);
    }
    if (status >= 500) {
      last_problem = "server error (status " + std::to_string(status) + ")";
      last_was_throttle = false;
      continue;
    }
    throw RemoteError(provider + " request failed with status " + std::to_string(status) + ": " + body);
  }
  const std::string msg = provider + ": giving up after " + std::to_string(verdict.attempts) + " attempts, last " +
                          last_problem;
  if (last_was_throttle) throw RateLimitExhaustedError(msg);
  throw TransientExhaustedError(msg);
}

double remote_verify(const RemoteVerifierConfig& cfg, const FaceImage& a, const FaceImage& b) {
  RemoteVerifier verifier(cfg);
  return verifier.verify(a, b).confidence;
}

void save_remote_results(const std::filesystem::path& path, const RemoteVerifierConfig& cfg,
                         const std::vector<RemotePairResult>& results) {
  json list = json::array();
  for (const auto& r : results) {
    list.push_back({{"image_a", r.image_a}, {"image_b", r.image_b}, {"confidence", r.confidence}, {"attempts", r.attempts}});
  }
  const json j{{"provider", to_string(cfg.provider)}, {"config", to_json(cfg)}, {"results", list}};
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << "\n";
}

std::vector<std::pair<std::filesystem::path, std::filesystem::path>> load_pair_list(
    const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read pair list " + path.string());
  std::vector<std::pair<std::filesystem::path, std::filesystem::path>> pairs;
  std::string line;
  int lineno = 0;
  auto resolve = [&](std::string s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.pop_back();
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.erase(s.begin());
    std::filesystem::path p = s;
    return p.is_relative() ? path.parent_path() / p : p;
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#' || line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) {
      throw ValidationError(path.string() + ":" + std::to_string(lineno) + ": expected 'image_a,image_b'");
    }
    pairs.emplace_back(resolve(line.substr(0, comma)), resolve(line.substr(comma + 1)));
  }
  if (pairs.empty()) throw ValidationError("pair list is empty: " + path.string());
  return pairs;
}

}  // namespace advface
