#include "melsynth/pipeline/feature_file.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace melsynth::pipeline {

namespace {
constexpr char kMagic[4] = {'T', 'F', 'T', '1'};
constexpr std::uint32_t kDtypeF32 = 0;
}  // namespace

void write_feature_file(const std::string& path, const FeatureTensor& t) {
    if (t.numel() != t.data.size())
        throw std::invalid_argument("feature file: dims do not match payload length");
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("feature file: cannot open " + path + " for writing");
    os.write(kMagic, 4);
    const std::uint32_t dtype = kDtypeF32;
    os.write(reinterpret_cast<const char*>(&dtype), 4);
    const std::uint32_t rank = static_cast<std::uint32_t>(t.dims.size());
    os.write(reinterpret_cast<const char*>(&rank), 4);
    for (auto d : t.dims) os.write(reinterpret_cast<const char*>(&d), 8);
    os.write(reinterpret_cast<const char*>(t.data.data()),
             static_cast<std::streamsize>(t.data.size() * 4));
    if (!os) throw std::runtime_error("feature file: write failed for " + path);
}

FeatureTensor read_feature_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("feature file: cannot open " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0)
        throw std::runtime_error("feature file: bad magic in " + path);
    std::uint32_t dtype = 0, rank = 0;
    is.read(reinterpret_cast<char*>(&dtype), 4);
    is.read(reinterpret_cast<char*>(&rank), 4);
    if (!is || dtype != kDtypeF32)
        throw std::runtime_error("feature file: unsupported dtype in " + path);
    FeatureTensor t;
    t.dims.resize(rank);
    for (auto& d : t.dims) is.read(reinterpret_cast<char*>(&d), 8);
    if (!is) throw std::runtime_error("feature file: truncated header in " + path);
    t.data.resize(t.numel());
    is.read(reinterpret_cast<char*>(t.data.data()), static_cast<std::streamsize>(t.data.size() * 4));
    if (!is) throw std::runtime_error("feature file: truncated payload in " + path);
    return t;
}

}  // namespace melsynth::pipeline
