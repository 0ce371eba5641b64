#include "manifest.hpp"

#include <openssl/evp.h>

#include <array>
#include <fstream>
#include <memory>
#include <sstream>
#include <stdexcept>

namespace blv::cli {

namespace {

class Sha256 {
public:
    Sha256() : ctx_(EVP_MD_CTX_new(), EVP_MD_CTX_free) {
        if (!ctx_ || EVP_DigestInit_ex(ctx_.get(), EVP_sha256(), nullptr) != 1) {
            throw std::runtime_error("sha256 init failed");
        }
    }
    void update(const char* data, std::size_t size) {
        if (EVP_DigestUpdate(ctx_.get(), data, size) != 1) {
            throw std::runtime_error("sha256 update failed");
        }
    }
    std::string hex() {
        std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
        unsigned int len = 0;
        if (EVP_DigestFinal_ex(ctx_.get(), md.data(), &len) != 1) {
            throw std::runtime_error("sha256 final failed");
        }
        static constexpr char digits[] = "0123456789abcdef";
        std::string out;
        for (unsigned int i = 0; i < len; ++i) {
            out += digits[md[i] >> 4];
            out += digits[md[i] & 15];
        }
        return out;
    }

private:
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx_;
};

}  // namespace

std::string sha256_hex(std::string_view bytes) {
    Sha256 h;
    h.update(bytes.data(), bytes.size());
    return h.hex();
}

std::string sha256_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    Sha256 h;
    std::array<char, 1 << 16> buf{};
    while (in) {
        in.read(buf.data(), buf.size());
        h.update(buf.data(), static_cast<std::size_t>(in.gcount()));
    }
    return h.hex();
}

nlohmann::json RunManifest::to_json(const std::filesystem::path& out_dir) const {
    nlohmann::json j;
    j["command"] = command;
    j["software_version"] = BLV_VERSION;
    j["config"] = config;
    j["config_sha256"] = sha256_hex(config.dump());
    j["seeds"] = seeds;
    nlohmann::json in = nlohmann::json::array();
    for (const auto& p : inputs) in.push_back({{"path", p.string()}, {"sha256", sha256_file(p)}});
    j["inputs"] = in;
    nlohmann::json out = nlohmann::json::array();
    for (const auto& p : outputs) {
        out.push_back({{"path", std::filesystem::relative(p, out_dir).generic_string()},
                       {"sha256", sha256_file(p)},
                       {"bytes", std::filesystem::file_size(p)}});
    }
    j["outputs"] = out;
    j["wall_clock_seconds"] = wall_clock_seconds;
    return j;
}

void RunManifest::write(const std::filesystem::path& out_dir) const {
    std::ofstream out(out_dir / "manifest.json");
    out << to_json(out_dir).dump(2) << '\n';
    if (!out) throw std::runtime_error("cannot write manifest.json");
}

}  // namespace blv::cli
