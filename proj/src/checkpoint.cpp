#include "sage/checkpoint.hpp"

#include <stdexcept>

namespace sage {

namespace {
constexpr char kMagic[8] = {'S', 'A', 'G', 'E', 'C', 'K', 'P', '1'};

std::string read_sized_string(std::istream& in) {
    uint32_t len = 0;
    in.read(reinterpret_cast<char*>(&len), sizeof(len));
    if (!in || len > (1u << 24)) throw std::runtime_error("checkpoint: corrupt length field");
    std::string s(len, '\0');
    in.read(s.data(), len);
    if (!in) throw std::runtime_error("checkpoint: truncated string field");
    return s;
}

void write_sized_string(std::ostream& out, const std::string& s) {
    const uint32_t len = static_cast<uint32_t>(s.size());
    out.write(reinterpret_cast<const char*>(&len), sizeof(len));
    out.write(s.data(), len);
}
}  // namespace

void save_checkpoint(const std::filesystem::path& path, const std::string& kind,
                     const nlohmann::json& header,
                     const std::function<void(std::ostream&)>& write_body) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("checkpoint: cannot open for writing: " + path.string());
    out.write(kMagic, sizeof(kMagic));
    write_sized_string(out, kind);
    write_sized_string(out, header.dump());
    write_body(out);
    if (!out) throw std::runtime_error("checkpoint: write failed: " + path.string());
}

nlohmann::json open_checkpoint(std::ifstream& in, const std::filesystem::path& path,
                               const std::string& expected_kind) {
    in.open(path, std::ios::binary);
    if (!in) throw std::runtime_error("checkpoint: cannot open: " + path.string());
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw std::runtime_error("checkpoint: bad magic in " + path.string());
    const std::string kind = read_sized_string(in);
    if (kind != expected_kind)
        throw std::runtime_error("checkpoint: expected kind '" + expected_kind + "' but found '" +
                                 kind + "' in " + path.string());
    return nlohmann::json::parse(read_sized_string(in));
}

std::string checkpoint_kind(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("checkpoint: cannot open: " + path.string());
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw std::runtime_error("checkpoint: bad magic in " + path.string());
    return read_sized_string(in);
}

}  // namespace sage
