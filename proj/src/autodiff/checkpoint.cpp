#include "melsynth/autodiff/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace melsynth::autodiff {

namespace {

constexpr char kMagic[8] = {'M', 'S', 'Y', 'N', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

template <class T>
void write_pod(std::ostream& os, const T& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_pod(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw std::runtime_error("checkpoint: truncated file");
    return v;
}

}  // namespace

void Checkpoint::save(const std::string& path) const {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("checkpoint: cannot open " + path + " for writing");
    os.write(kMagic, sizeof(kMagic));
    write_pod(os, kVersion);
    write_pod(os, static_cast<std::uint64_t>(records_.size()));
    for (const auto& r : records_) {
        write_pod(os, static_cast<std::uint32_t>(r.name.size()));
        os.write(r.name.data(), static_cast<std::streamsize>(r.name.size()));
        write_pod(os, static_cast<std::uint8_t>(r.dtype));
        write_pod(os, static_cast<std::uint32_t>(r.dims.size()));
        for (auto d : r.dims) write_pod(os, d);
        write_pod(os, static_cast<std::uint64_t>(r.bytes.size()));
        os.write(reinterpret_cast<const char*>(r.bytes.data()),
                 static_cast<std::streamsize>(r.bytes.size()));
    }
    if (!os) throw std::runtime_error("checkpoint: write failed for " + path);
}

Checkpoint Checkpoint::load(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("checkpoint: cannot open " + path);
    char magic[8];
    is.read(magic, sizeof(magic));
    if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw std::runtime_error("checkpoint: bad magic in " + path);
    const auto version = read_pod<std::uint32_t>(is);
    if (version != kVersion)
        throw std::runtime_error("checkpoint: unsupported format version " +
                                 std::to_string(version));
    const auto count = read_pod<std::uint64_t>(is);
    Checkpoint ckpt;
    ckpt.records_.reserve(count);
    for (std::uint64_t i = 0; i < count; ++i) {
        CkptRecord r;
        const auto name_len = read_pod<std::uint32_t>(is);
        r.name.resize(name_len);
        is.read(r.name.data(), name_len);
        r.dtype = static_cast<Dtype>(read_pod<std::uint8_t>(is));
        const auto rank = read_pod<std::uint32_t>(is);
        r.dims.resize(rank);
        for (auto& d : r.dims) d = read_pod<std::uint64_t>(is);
        const auto nbytes = read_pod<std::uint64_t>(is);
        r.bytes.resize(nbytes);
        is.read(reinterpret_cast<char*>(r.bytes.data()), static_cast<std::streamsize>(nbytes));
        if (!is) throw std::runtime_error("checkpoint: truncated record in " + path);
        ckpt.records_.push_back(std::move(r));
    }
    return ckpt;
}

}  // namespace melsynth::autodiff
