#pragma once

// Run artifacts: content hashes and the provenance header every output file
// carries (tool version, resolved config, seed, input hashes).

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include <json.hpp>

namespace gpm::artifact {

std::string sha256_hex(std::string_view bytes);
/// ConfigError when the file cannot be read.
std::string file_sha256(const std::filesystem::path& path);
std::string read_file(const std::filesystem::path& path);

std::string tool_version();

/// {"tool", "version", "command", "seed", "config", "inputs"}. `inputs` maps
/// input names to content hashes.
nlohmann::json header(const std::string& command, std::uint64_t seed, const nlohmann::json& config,
                      const nlohmann::json& inputs = nlohmann::json::object());

/// Writes `content`, creating parent directories. ConfigError on failure.
void write_file(const std::filesystem::path& path, std::string_view content);

/// `header` as the first line, then one compact record per line.
std::string jsonl(const nlohmann::json& header, const nlohmann::json& records);

}  // namespace gpm::artifact
