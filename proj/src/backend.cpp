#include "fvqa/backend.hpp"

#include <cstdint>
#include <cstdlib>
#include <stdexcept>
#include <thread>

#include "fvqa/jsonl.hpp"
#include "httplib.h"
#include "json.hpp"

namespace fvqa::backend {

namespace {

constexpr std::uint64_t kFnvOffset = 1469598103934665603ULL;
constexpr std::uint64_t kFnvPrime = 1099511628211ULL;

void fnv_mix(std::uint64_t& h, std::string_view bytes) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= kFnvPrime;
  }
  // Field separator; keeps ("ab","c") distinct from ("a","bc").
  h ^= 0x1f;
  h *= kFnvPrime;
}

std::string hex64(std::uint64_t value) {
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[i] = digits[value & 0xf];
    value >>= 4;
  }
  return out;
}

void check_request(const ChatRequest& request) {
  if (request.user_text.empty()) {
    throw std::invalid_argument("user_text must be non-empty");
  }
  if (request.temperature < 0.0 || request.temperature > 2.0) {
    throw std::invalid_argument("temperature must lie in [0, 2]");
  }
  if (request.max_tokens < 1 || request.max_tokens > kMaxTokensCeiling) {
    throw std::invalid_argument("max_tokens must lie in [1, " +
                                std::to_string(kMaxTokensCeiling) + "]");
  }
}

}  // namespace

std::string_view to_string(FinishReason reason) {
  switch (reason) {
    case FinishReason::complete: return "complete";
    case FinishReason::length: return "length";
    case FinishReason::error: return "error";
  }
  return "error";
}

std::string fingerprint(const ChatRequest& request) {
  std::uint64_t h = kFnvOffset;
  fnv_mix(h, request.model_name);
  fnv_mix(h, request.system_text);
  fnv_mix(h, request.user_text);
  fnv_mix(h, request.image_ref);
  return hex64(h);
}

ChatOutcome Backend::complete(const ChatRequest& request) {
  check_request(request);
  int occurrence = 0;
  {
    std::lock_guard lock(seq_mutex_);
    occurrence = seq_[fingerprint(request)]++;
  }
  return do_complete(request, occurrence);
}

std::vector<int> Backend::assign_occurrences(
    const std::vector<ChatRequest>& requests) {
  std::vector<int> occurrences(requests.size());
  std::lock_guard lock(seq_mutex_);
  for (std::size_t i = 0; i < requests.size(); ++i) {
    occurrences[i] = seq_[fingerprint(requests[i])]++;
  }
  return occurrences;
}

std::vector<ChatOutcome> Backend::complete_batch(
    const std::vector<ChatRequest>& requests) {
  if (requests.empty()) {
    throw std::invalid_argument("complete_batch requires a non-empty list");
  }
  for (const auto& request : requests) {
    check_request(request);
  }
  // Occurrences are fixed in input order up front so the result is
  // independent of worker interleaving.
  const std::vector<int> occurrences = assign_occurrences(requests);

  std::vector<ChatOutcome> outcomes(requests.size());
  const int workers = static_cast<int>(
      std::min<std::size_t>(std::max(1, profile_.max_in_flight),
                            requests.size()));
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      while (true) {
        const std::size_t i = next.fetch_add(1);
        if (i >= requests.size()) {
          break;
        }
        try {
          outcomes[i] = do_complete(requests[i], occurrences[i]);
        } catch (const std::exception& e) {
          outcomes[i] = ChatOutcome{
              .ok = false,
              .response = {.text = {}, .finish_reason = FinishReason::error},
              .error = e.what()};
        }
      }
    });
  }
  for (auto& t : pool) {
    t.join();
  }
  return outcomes;
}

ScriptedBackend::ScriptedBackend(BackendProfile profile, Script script)
    : Backend(std::move(profile)) {
  for (auto& [fp, texts] : script) {
    if (texts.empty()) {
      throw std::invalid_argument("script entry for " + fp + " has no texts");
    }
    if (!script_.emplace(fp, std::move(texts)).second) {
      throw std::invalid_argument("duplicate fingerprint " + fp);
    }
  }
}

Script ScriptedBackend::load_script(const std::filesystem::path& path) {
  Script script;
  const auto rows = jsonl::read_file(path);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& row = rows[i];
    try {
      std::vector<std::string> texts;
      if (row.contains("texts")) {
        texts = row.at("texts").get<std::vector<std::string>>();
      } else {
        texts.push_back(row.at("text").get<std::string>());
      }
      script.emplace_back(row.at("fingerprint").get<std::string>(),
                          std::move(texts));
    } catch (const std::exception& e) {
      throw std::runtime_error(path.string() + ":" + std::to_string(i + 1) +
                               ": " + e.what());
    }
  }
  return script;
}

ChatOutcome ScriptedBackend::do_complete(const ChatRequest& request,
                                         int occurrence) {
  const int now = in_flight_.fetch_add(1) + 1;
  int seen = max_in_flight_seen_.load();
  while (now > seen && !max_in_flight_seen_.compare_exchange_weak(seen, now)) {
  }
  if (simulated_latency_.count() > 0) {
    std::this_thread::sleep_for(simulated_latency_);
  }

  ChatOutcome outcome;
  const std::string fp = fingerprint(request);
  const auto it = script_.find(fp);
  if (it == script_.end()) {
    outcome.ok = false;
    outcome.error = "unknown fingerprint " + fp;
    outcome.response.finish_reason = FinishReason::error;
  } else {
    const auto& texts = it->second;
    const auto& text = texts[static_cast<std::size_t>(occurrence) % texts.size()];
    outcome.ok = true;
    outcome.response.text = text;
    outcome.response.finish_reason =
        text.empty() ? FinishReason::length : FinishReason::complete;
    outcome.response.latency_ms = 0.0;
  }
  in_flight_.fetch_sub(1);
  return outcome;
}

std::unique_ptr<ScriptedBackend> script_register(Script script,
                                                 BackendProfile profile) {
  if (profile.endpoint.empty()) {
    profile.endpoint = "scripted://memory";
  }
  return std::make_unique<ScriptedBackend>(std::move(profile),
                                           std::move(script));
}

HttpBackend::HttpBackend(BackendProfile profile)
    : Backend(std::move(profile)) {
  const std::string& endpoint = this->profile().endpoint;
  const auto scheme_end = endpoint.find("://");
  if (scheme_end == std::string::npos) {
    throw std::invalid_argument("endpoint must carry a scheme: " + endpoint);
  }
  const auto path_start = endpoint.find('/', scheme_end + 3);
  if (path_start == std::string::npos) {
    base_url_ = endpoint;
  } else {
    base_url_ = endpoint.substr(0, path_start);
    base_path_ = endpoint.substr(path_start);
    while (!base_path_.empty() && base_path_.back() == '/') {
      base_path_.pop_back();
    }
  }
}

ChatOutcome HttpBackend::do_complete(const ChatRequest& request,
                                     int /*occurrence*/) {
  nlohmann::json user_content;
  if (request.image_ref.empty()) {
    user_content = request.user_text;
  } else {
    // Image by reference inside the user message; pixels are never decoded.
    user_content = nlohmann::json::array(
        {{{"type", "text"}, {"text", request.user_text}},
         {{"type", "image_url"},
          {"image_url", {{"url", request.image_ref}}}}});
  }
  const nlohmann::json body{
      {"model", request.model_name},
      {"messages",
       nlohmann::json::array(
           {{{"role", "system"}, {"content", request.system_text}},
            {{"role", "user"}, {"content", std::move(user_content)}}})},
      {"temperature", request.temperature},
      {"max_tokens", request.max_tokens},
  };
  const std::string payload = body.dump();

  std::string bearer;
  if (!profile().auth_ref.empty()) {
    const char* token = std::getenv(profile().auth_ref.c_str());
    if (token == nullptr) {
      return ChatOutcome{.ok = false,
                         .response = {.finish_reason = FinishReason::error},
                         .error = "authentication failure: environment "
                                  "variable " + profile().auth_ref +
                                  " is not set"};
    }
    bearer = token;
  }

  const int attempts = std::max(0, profile().retry_limit) + 1;
  std::string last_error;
  for (int attempt = 0; attempt < attempts; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(std::chrono::milliseconds(
          static_cast<long long>(profile().backoff_ms) << (attempt - 1)));
    }
    const auto started = std::chrono::steady_clock::now();

    httplib::Client client(base_url_);
    client.set_connection_timeout(30, 0);
    client.set_read_timeout(120, 0);
    httplib::Headers headers;
    if (!bearer.empty()) {
      headers.emplace("Authorization", "Bearer " + bearer);
    }
    auto result = client.Post(base_path_ + "/chat/completions", headers,
                              payload, "application/json");
    const double latency_ms =
        std::chrono::duration<double, std::milli>(
            std::chrono::steady_clock::now() - started)
            .count();

    if (!result) {
      last_error = "transport error: " + httplib::to_string(result.error());
      continue;  // transient; retry
    }
    if (result->status == 401 || result->status == 403) {
      return ChatOutcome{.ok = false,
                         .response = {.finish_reason = FinishReason::error},
                         .error = "authentication failure (status " +
                                  std::to_string(result->status) + ")"};
    }
    if (result->status == 429 || result->status >= 500) {
      last_error = "transient status " + std::to_string(result->status);
      continue;
    }
    if (result->status != 200) {
      return ChatOutcome{.ok = false,
                         .response = {.finish_reason = FinishReason::error},
                         .error = "unexpected status " +
                                  std::to_string(result->status)};
    }

    try {
      const auto reply = nlohmann::json::parse(result->body);
      const auto& message = reply.at("choices").at(0).at("message");
      ChatResponse response;
      response.text = message.at("content").get<std::string>();
      response.latency_ms = latency_ms;
      const std::string finish =
          reply.at("choices").at(0).value("finish_reason", "stop");
      if (finish == "length") {
        response.finish_reason = FinishReason::length;
      } else if (response.text.empty()) {
        response.finish_reason = FinishReason::length;
      } else {
        response.finish_reason = FinishReason::complete;
      }
      return ChatOutcome{.ok = true, .response = std::move(response)};
    } catch (const std::exception& e) {
      return ChatOutcome{.ok = false,
                         .response = {.finish_reason = FinishReason::error},
                         .error = std::string("response schema mismatch: ") +
                                  e.what()};
    }
  }
  return ChatOutcome{.ok = false,
                     .response = {.finish_reason = FinishReason::error},
                     .error = last_error + " (after " +
                              std::to_string(attempts) + " attempts)"};
}

std::unique_ptr<Backend> make_backend(const BackendProfile& profile) {
  if (profile.max_in_flight < 1) {
    throw std::invalid_argument("max_in_flight must be >= 1");
  }
  constexpr std::string_view kScripted = "scripted://";
  if (profile.endpoint.rfind(kScripted, 0) == 0) {
    const std::filesystem::path script_path(
        profile.endpoint.substr(kScripted.size()));
    return std::make_unique<ScriptedBackend>(
        profile, ScriptedBackend::load_script(script_path));
  }
  if (profile.endpoint.rfind("http://", 0) == 0 ||
      profile.endpoint.rfind("https://", 0) == 0) {
    return std::make_unique<HttpBackend>(profile);
  }
  throw std::invalid_argument("unsupported endpoint scheme: " +
                              profile.endpoint);
}

}  // namespace fvqa::backend
