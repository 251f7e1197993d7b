#include "fvqa/runconfig.hpp"

#include <cctype>
#include <fstream>
#include <sstream>

namespace fvqa::runconfig {

namespace {

std::string trim(std::string_view s) {
  std::size_t begin = 0;
  std::size_t end = s.size();
  while (begin < end && std::isspace(static_cast<unsigned char>(s[begin]))) {
    ++begin;
  }
  while (end > begin && std::isspace(static_cast<unsigned char>(s[end - 1]))) {
    --end;
  }
  return std::string(s.substr(begin, end - begin));
}

}  // namespace

KvConfig KvConfig::parse_string(const std::string& text,
                                const std::string& origin) {
  KvConfig config;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string stripped = trim(line);
    if (stripped.empty() || stripped[0] == '#') {
      continue;
    }
    const std::size_t eq = stripped.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(line_no) +
                        ": expected 'key = value'");
    }
    const std::string key = trim(std::string_view(stripped).substr(0, eq));
    const std::string value = trim(std::string_view(stripped).substr(eq + 1));
    if (key.empty()) {
      throw ConfigError(origin + ":" + std::to_string(line_no) +
                        ": empty key");
    }
    config.values_[key] = value;
  }
  return config;
}

KvConfig KvConfig::parse_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw ConfigError("cannot open config file " + path.string());
  }
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_string(buffer.str(), path.string());
}

std::optional<std::string> KvConfig::get(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) {
    return std::nullopt;
  }
  return it->second;
}

std::string KvConfig::get_or(const std::string& key,
                             std::string fallback) const {
  const auto value = get(key);
  return value ? *value : std::move(fallback);
}

int KvConfig::get_int(const std::string& key, int fallback) const {
  const auto value = get(key);
  if (!value) {
    return fallback;
  }
  try {
    std::size_t used = 0;
    const int parsed = std::stoi(*value, &used);
    if (used != value->size()) {
      throw std::invalid_argument("trailing characters");
    }
    return parsed;
  } catch (const std::exception&) {
    throw ConfigError("config error at '" + key + "': expected integer, got '" +
                      *value + "'");
  }
}

double KvConfig::get_double(const std::string& key, double fallback) const {
  const auto value = get(key);
  if (!value) {
    return fallback;
  }
  try {
    std::size_t used = 0;
    const double parsed = std::stod(*value, &used);
    if (used != value->size()) {
      throw std::invalid_argument("trailing characters");
    }
    return parsed;
  } catch (const std::exception&) {
    throw ConfigError("config error at '" + key + "': expected number, got '" +
                      *value + "'");
  }
}

bool KvConfig::has(const std::string& key) const {
  return values_.find(key) != values_.end();
}

BackendSettings resolve_backend(const KvConfig& config,
                                const std::string& section) {
  BackendSettings settings;
  const std::string prefix = section + ".";
  const auto endpoint = config.get(prefix + "endpoint");
  if (!endpoint || endpoint->empty()) {
    throw ConfigError("config error at '" + prefix +
                      "endpoint': endpoint is required");
  }
  settings.profile.endpoint = *endpoint;
  settings.profile.auth_ref = config.get_or(prefix + "auth_ref", "");
  settings.profile.max_in_flight = config.get_int(prefix + "max_in_flight", 4);
  settings.profile.retry_limit = config.get_int(prefix + "retry_limit", 2);
  settings.profile.backoff_ms = config.get_int(prefix + "backoff_ms", 100);
  if (settings.profile.max_in_flight < 1) {
    throw ConfigError("config error at '" + prefix +
                      "max_in_flight': must be >= 1");
  }
  if (settings.profile.retry_limit < 0) {
    throw ConfigError("config error at '" + prefix +
                      "retry_limit': must be >= 0");
  }
  settings.params.model_name = config.get_or(prefix + "model_name", "");
  settings.params.temperature = config.get_double(prefix + "temperature", 0.1);
  settings.params.max_tokens = config.get_int(prefix + "max_tokens", 512);
  if (settings.params.temperature < 0.0 ||
      settings.params.temperature > 2.0) {
    throw ConfigError("config error at '" + prefix +
                      "temperature': must lie in [0, 2]");
  }
  if (settings.params.max_tokens < 1) {
    throw ConfigError("config error at '" + prefix +
                      "max_tokens': must be >= 1");
  }
  return settings;
}

}  // namespace fvqa::runconfig
