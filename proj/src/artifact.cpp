#include "gpm/artifact.hpp"

#include <openssl/evp.h>

#include <fstream>
#include <sstream>

#include "gpm/error.hpp"

namespace gpm::artifact {

std::string sha256_hex(std::string_view bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr);
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[digest[i] >> 4];
        out += hex[digest[i] & 15];
    }
    return out;
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string file_sha256(const std::filesystem::path& path) { return sha256_hex(read_file(path)); }

std::string tool_version() { return GPM_VERSION; }

nlohmann::json header(const std::string& command, std::uint64_t seed, const nlohmann::json& config,
                      const nlohmann::json& inputs) {
    return {{"tool", "gpm"},
            {"version", tool_version()},
            {"command", command},
            {"seed", seed},
            {"config", config},
            {"inputs", inputs}};
}

void write_file(const std::filesystem::path& path, std::string_view content) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write " + path.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw ConfigError("write failed: " + path.string());
}

std::string jsonl(const nlohmann::json& header, const nlohmann::json& records) {
    std::string out = nlohmann::json{{"artifact", header}}.dump() + '\n';
    for (const auto& r : records) out += r.dump() + '\n';
    return out;
}

}  // namespace gpm::artifact
