#include "cinetab/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace cinetab {

static_assert(std::endian::native == std::endian::little,
              "checkpoint blobs are little-endian; big-endian hosts are not supported");

namespace {
constexpr char kMagic[4] = {'C', 'T', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ofstream& f, T v) {
    f.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::ifstream& f, const char* what) {
    T v{};
    f.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!f) throw IoError(std::string("checkpoint truncated while reading ") + what);
    return v;
}

void put_string(std::ofstream& f, const std::string& s) {
    put<std::uint64_t>(f, s.size());
    f.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::ifstream& f, const char* what, std::uint64_t max_len = 1ull << 32) {
    const auto len = get<std::uint64_t>(f, what);
    if (len > max_len) throw IoError(std::string("checkpoint field too large: ") + what);
    std::string s(len, '\0');
    f.read(s.data(), static_cast<std::streamsize>(len));
    if (!f) throw IoError(std::string("checkpoint truncated while reading ") + what);
    return s;
}
}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open checkpoint for writing: " + path.string());
    f.write(kMagic, 4);
    put<std::uint32_t>(f, kVersion);
    put_string(f, ck.stage_tag);
    put_string(f, ck.config.dump());
    put<std::uint64_t>(f, ck.tensors.size());
    for (const auto& [name, payload] : ck.tensors) {
        const auto& [shape, data] = payload;
        put_string(f, name);
        put<std::uint32_t>(f, static_cast<std::uint32_t>(shape.size()));
        for (std::size_t d : shape) put<std::uint64_t>(f, d);
        put<std::uint64_t>(f, data.size());
        f.write(reinterpret_cast<const char*>(data.data()),
                static_cast<std::streamsize>(data.size() * sizeof(float)));
    }
    if (!f) throw IoError("checkpoint write failed: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open checkpoint: " + path.string());
    char magic[4];
    f.read(magic, 4);
    if (!f || std::memcmp(magic, kMagic, 4) != 0)
        throw IoError("not a checkpoint file: " + path.string());
    const auto version = get<std::uint32_t>(f, "version");
    if (version != kVersion)
        throw IoError("unsupported checkpoint version " + std::to_string(version) + " in " +
                      path.string());
    Checkpoint ck;
    ck.stage_tag = get_string(f, "stage tag", 1024);
    const std::string cfg = get_string(f, "config snapshot");
    try {
        ck.config = nlohmann::json::parse(cfg);
    } catch (const nlohmann::json::parse_error& e) {
        throw IoError("checkpoint config snapshot is malformed: " + std::string(e.what()));
    }
    const auto count = get<std::uint64_t>(f, "tensor count");
    for (std::uint64_t i = 0; i < count; ++i) {
        const std::string name = get_string(f, "tensor name", 4096);
        const auto ndims = get<std::uint32_t>(f, name.c_str());
        Shape shape(ndims);
        for (auto& d : shape) d = get<std::uint64_t>(f, name.c_str());
        const auto n = get<std::uint64_t>(f, name.c_str());
        if (n != numel(shape))
            throw IoError("corrupt parameter '" + name + "': " + std::to_string(n) +
                          " values for shape " + shape_str(shape));
        std::vector<float> data(n);
        f.read(reinterpret_cast<char*>(data.data()),
               static_cast<std::streamsize>(n * sizeof(float)));
        if (!f) throw IoError("corrupt parameter '" + name + "': blob truncated");
        ck.tensors.push_back({name, {std::move(shape), std::move(data)}});
    }
    return ck;
}

}  // namespace cinetab
