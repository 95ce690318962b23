#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace melsynth::pipeline {

// Binary tensor container: magic "TFT1", u32 dtype code (0 = f32), u32 rank,
// u64 dims, then the little-endian f32 payload. Round trips are bit-exact.
struct FeatureTensor {
    std::vector<std::uint64_t> dims;
    std::vector<float> data;

    std::uint64_t numel() const {
        std::uint64_t n = 1;
        for (auto d : dims) n *= d;
        return n;
    }
};

void write_feature_file(const std::string& path, const FeatureTensor& t);
FeatureTensor read_feature_file(const std::string& path);

}  // namespace melsynth::pipeline
