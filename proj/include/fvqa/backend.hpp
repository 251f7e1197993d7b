#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace fvqa::backend {

inline constexpr int kMaxTokensCeiling = 32768;

enum class FinishReason { complete, length, error };

std::string_view to_string(FinishReason reason);

struct ChatRequest {
  std::string model_name;
  std::string system_text;
  std::string user_text;
  std::string image_ref;  // empty means no image
  double temperature = 0.0;
  int max_tokens = 512;
};

struct ChatResponse {
  std::string text;
  FinishReason finish_reason = FinishReason::complete;
  double latency_ms = 0.0;
};

// Per-request result; batch errors are reported positionally instead of
// aborting the whole batch.
struct ChatOutcome {
  bool ok = false;
  ChatResponse response;
  std::string error;
};

struct BackendProfile {
  std::string endpoint;  // "http(s)://host[:port][/base]" or "scripted://<script file>"
  std::string auth_ref;  // name of the environment variable holding the credential
  int max_in_flight = 4;
  int retry_limit = 2;
  int backoff_ms = 100;  // base delay for exponential backoff
};

// Stable 64-bit FNV-1a hash (hex) of (model_name, system_text, user_text,
// image_ref). Sampling knobs are excluded so scripts are insensitive to
// temperature and token limits.
std::string fingerprint(const ChatRequest& request);

class Backend {
 public:
  virtual ~Backend() = default;

  // Validates the request, then dispatches. Transport-level failures are
  // reported in the outcome; precondition violations throw
  // std::invalid_argument.
  ChatOutcome complete(const ChatRequest& request);

  // Outcome i corresponds to request i regardless of completion order; at
  // most max_in_flight requests are outstanding at once.
  std::vector<ChatOutcome> complete_batch(const std::vector<ChatRequest>& requests);

  const BackendProfile& profile() const { return profile_; }

 protected:
  explicit Backend(BackendProfile profile) : profile_(std::move(profile)) {}

  // occurrence = how many requests with the same fingerprint came before
  // this one. For batches it is assigned in input order, which keeps
  // scripted multi-response entries deterministic under any completion
  // interleaving.
  virtual ChatOutcome do_complete(const ChatRequest& request, int occurrence) = 0;

 private:
  std::vector<int> assign_occurrences(const std::vector<ChatRequest>& requests);

  BackendProfile profile_;
  std::mutex seq_mutex_;
  std::unordered_map<std::string, int> seq_;
};

// Script entry: a fingerprint mapped to one or more response texts. Repeated
// requests with the same fingerprint consume the texts in order, wrapping
// around.
using Script = std::vector<std::pair<std::string, std::vector<std::string>>>;

class ScriptedBackend : public Backend {
 public:
  ScriptedBackend(BackendProfile profile, Script script);

  // JSONL: {"fingerprint": "...", "text": "..."} or
  //        {"fingerprint": "...", "texts": ["...", ...]}
  static Script load_script(const std::filesystem::path& path);

  // Instrumentation for the concurrency contract.
  int max_observed_in_flight() const { return max_in_flight_seen_.load(); }
  void set_simulated_latency(std::chrono::milliseconds latency) {
    simulated_latency_ = latency;
  }

 protected:
  ChatOutcome do_complete(const ChatRequest& request, int occurrence) override;

 private:
  std::unordered_map<std::string, std::vector<std::string>> script_;
  std::chrono::milliseconds simulated_latency_{0};
  std::atomic<int> in_flight_{0};
  std::atomic<int> max_in_flight_seen_{0};
};

// Throws std::invalid_argument on duplicate fingerprints.
std::unique_ptr<ScriptedBackend> script_register(Script script,
                                                 BackendProfile profile = {});

class HttpBackend : public Backend {
 public:
  explicit HttpBackend(BackendProfile profile);

 protected:
  ChatOutcome do_complete(const ChatRequest& request, int occurrence) override;

 private:
  std::string base_url_;
  std::string base_path_;
};

// "scripted://<path>" loads a script file; "http://"/"https://" builds the
// live client.
std::unique_ptr<Backend> make_backend(const BackendProfile& profile);

}  // namespace fvqa::backend
