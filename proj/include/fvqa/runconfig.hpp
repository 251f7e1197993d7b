#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>

#include "fvqa/annotate.hpp"
#include "fvqa/backend.hpp"

namespace fvqa::runconfig {

// Configuration problems exit with status 2; stage failures with 1.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Flat "key = value" file with '#' comments and blank lines.
class KvConfig {
 public:
  KvConfig() = default;

  static KvConfig parse_file(const std::filesystem::path& path);
  static KvConfig parse_string(const std::string& text,
                               const std::string& origin = "<config>");

  std::optional<std::string> get(const std::string& key) const;
  std::string get_or(const std::string& key, std::string fallback) const;

  // Typed getters throw ConfigError naming the key on bad values.
  int get_int(const std::string& key, int fallback) const;
  double get_double(const std::string& key, double fallback) const;

  bool has(const std::string& key) const;
  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

// A backend profile plus the request defaults tied to it. Resolved from the
// "<section>." key prefix (endpoint, model_name, auth_ref, max_in_flight,
// retry_limit, temperature, max_tokens).
struct BackendSettings {
  backend::BackendProfile profile;
  annotate::GenParams params;
};

BackendSettings resolve_backend(const KvConfig& config,
                                const std::string& section);

}  // namespace fvqa::runconfig
