#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace melsynth::pipeline {

// One line per utterance: id | transcript | wav_path
struct ManifestEntry {
    std::string id;
    std::string transcript;
    std::string wav_path;
};

std::vector<ManifestEntry> read_manifest(const std::string& path);
void write_manifest(const std::string& path, const std::vector<ManifestEntry>& entries);

// Output listing written by preprocess; paths are relative to the index file.
struct IndexEntry {
    std::string id;
    std::uint64_t frames = 0;
    std::uint64_t chars = 0;
    std::string mel_path;     // "-" when absent
    std::string linear_path;  // "-" when absent
    std::string wav_path;
    std::string normalized_text;
};

std::vector<IndexEntry> read_index(const std::string& path);
void write_index(const std::string& path, const std::vector<IndexEntry>& entries);

}  // namespace melsynth::pipeline
