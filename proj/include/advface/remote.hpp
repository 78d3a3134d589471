#pragma once

#include <chrono>
#include <condition_variable>
#include <filesystem>
#include <functional>
#include <json.hpp>
#include <mutex>
#include <string>
#include <vector>

#include "advface/errors.hpp"
#include "advface/image.hpp"

namespace advface {

enum class Provider { FacePP, Aliyun, Generic };

Provider provider_from_string(const std::string& name);
std::string to_string(Provider p);

struct RetryPolicy {
  int max_retries = 3;  // attempts = 1 + max_retries
  std::chrono::milliseconds initial_backoff{500};
  double multiplier = 2.0;
  std::chrono::milliseconds max_backoff{8000};
};

// Holds the names of the environment variables carrying credentials, never
// the credentials themselves.
struct RemoteVerifierConfig {
  Provider provider = Provider::Generic;
  std::string endpoint;  // http[s]://host[:port]/path
  std::string key_env;
  std::string secret_env;  // may be empty when the provider needs one secret only
  double requests_per_second = 1.0;
  int max_in_flight = 1;
  RetryPolicy retry;
  std::chrono::milliseconds timeout{10000};

  // Endpoint and variable names for a provider; the endpoint stays empty when
  // there is no well-known public one.
  static RemoteVerifierConfig defaults_for(Provider p);
  void validate() const;
};

nlohmann::json to_json(const RemoteVerifierConfig& cfg);
RemoteVerifierConfig remote_config_from_json(const nlohmann::json& j);

class RemoteError : public Error {
 public:
  using Error::Error;
};
class AuthError : public RemoteError {
 public:
  using RemoteError::RemoteError;
};
class RateLimitExhaustedError : public RemoteError {
 public:
  using RemoteError::RemoteError;
};
// Retries ran out on server errors or transport failures.
class TransientExhaustedError : public RemoteError {
 public:
  using RemoteError::RemoteError;
};
class MalformedResponseError : public RemoteError {
 public:
  MalformedResponseError(const std::string& what, std::string raw_body)
      : RemoteError(what + "; raw body: " + raw_body), raw_body_(std::move(raw_body)) {}
  const std::string& raw_body() const { return raw_body_; }

 private:
  std::string raw_body_;
};

struct RemoteVerdict {
  double confidence = 0.0;  // [0, 100]
  int attempts = 0;
  int retries() const { return attempts - 1; }
};

// Provider-agnostic client. Credentials are read from the environment for
// each request and kept out of every log line, error and persisted file.
class RemoteVerifier {
 public:
  using Sleeper = std::function<void(std::chrono::nanoseconds)>;
  using Logger = std::function<void(const std::string&)>;

  explicit RemoteVerifier(RemoteVerifierConfig cfg, Logger logger = {}, Sleeper sleeper = {});

  RemoteVerdict verify(const FaceImage& a, const FaceImage& b);

  const RemoteVerifierConfig& config() const { return cfg_; }
  // Backoff delays requested so far, in order.
  std::vector<std::chrono::nanoseconds> backoff_history() const;

 private:
  void acquire_slot();
  void release_slot();
  void wait_for_rate();

  RemoteVerifierConfig cfg_;
  Logger logger_;
  Sleeper sleeper_;
  mutable std::mutex mutex_;
  std::condition_variable slot_cv_;
  int in_flight_ = 0;
  std::chrono::steady_clock::time_point next_request_{};
  std::vector<std::chrono::nanoseconds> backoffs_;
};

// Checked entry point: one verification with a fresh client.
double remote_verify(const RemoteVerifierConfig& cfg, const FaceImage& a, const FaceImage& b);

// Delay before retry number `retry` (1-based).
std::chrono::nanoseconds backoff_delay(const RetryPolicy& policy, int retry);

struct RemotePairResult {
  std::string image_a;
  std::string image_b;
  double confidence = 0.0;
  int attempts = 0;
};

// results_dir/remote/<provider>.json, picked up by the report writer.
void save_remote_results(const std::filesystem::path& path, const RemoteVerifierConfig& cfg,
                         const std::vector<RemotePairResult>& results);

// One "image_a,image_b" pair per line; relative paths resolve against the
// list's directory. Blank lines and lines starting with '#' are skipped.
std::vector<std::pair<std::filesystem::path, std::filesystem::path>> load_pair_list(
    const std::filesystem::path& path);

}  // namespace advface
