#include "fvqa/manifest.hpp"

#include <cstdint>
#include <fstream>

#include "fvqa/version.hpp"
#include "json.hpp"

namespace fvqa::manifest {

namespace {

std::string hex64(std::uint64_t h) {
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = digits[h & 0xf];
    h >>= 4;
  }
  return out;
}

std::uint64_t fnv64_bytes(std::uint64_t h, const char* data,
                          std::size_t size) {
  for (std::size_t i = 0; i < size; ++i) {
    h ^= static_cast<unsigned char>(data[i]);
    h *= 1099511628211ULL;
  }
  return h;
}

constexpr std::uint64_t kFnvOffset = 1469598103934665603ULL;

}  // namespace

std::string fnv64_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw std::runtime_error("cannot open " + path.string());
  }
  std::uint64_t h = kFnvOffset;
  char buffer[4096];
  while (in.read(buffer, sizeof(buffer)) || in.gcount() > 0) {
    const std::streamsize got = in.gcount();
    h = fnv64_bytes(h, buffer, static_cast<std::size_t>(got));
    if (got < static_cast<std::streamsize>(sizeof(buffer))) {
      break;
    }
  }
  return hex64(h);
}

void write_manifest(
    const std::filesystem::path& output, const std::string& stage,
    const std::vector<std::pair<std::string, std::filesystem::path>>& inputs,
    const std::vector<std::pair<std::string, std::string>>& params) {
  nlohmann::json input_json = nlohmann::json::object();
  for (const auto& [name, path] : inputs) {
    input_json[name] = {{"path", path.string()}, {"fnv64", fnv64_file(path)}};
  }
  nlohmann::json param_json = nlohmann::json::object();
  for (const auto& [key, value] : params) {
    param_json[key] = value;
  }
  const std::string param_dump = param_json.dump();
  const nlohmann::json manifest{
      {"stage", stage},
      {"version", kVersion},
      {"inputs", std::move(input_json)},
      {"params", std::move(param_json)},
      {"config_fnv64",
       hex64(fnv64_bytes(kFnvOffset, param_dump.data(), param_dump.size()))},
  };
  const std::filesystem::path manifest_path(output.string() +
                                            ".manifest.json");
  std::ofstream out(manifest_path, std::ios::binary);
  if (!out) {
    throw std::runtime_error("unwritable path " + manifest_path.string());
  }
  out << manifest.dump(2) << '\n';
}

}  // namespace fvqa::manifest
