#include "melsynth/pipeline/manifest.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace melsynth::pipeline {

namespace {

std::vector<std::string> split_pipe(const std::string& line, std::size_t expect,
                                    const std::string& what, int line_no) {
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (fields.size() + 1 < expect) {
        const std::size_t p = line.find('|', start);
        if (p == std::string::npos) break;
        fields.push_back(line.substr(start, p - start));
        start = p + 1;
    }
    fields.push_back(line.substr(start));
    if (fields.size() != expect)
        throw std::invalid_argument(what + ": expected " + std::to_string(expect) +
                                    " pipe-separated fields at line " + std::to_string(line_no));
    return fields;
}

}  // namespace

std::vector<ManifestEntry> read_manifest(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::invalid_argument("manifest: cannot open " + path);
    std::vector<ManifestEntry> entries;
    std::set<std::string> seen;
    std::string line;
    int line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        auto f = split_pipe(line, 3, "manifest", line_no);
        ManifestEntry e{f[0], f[1], f[2]};
        if (e.id.empty())
            throw std::invalid_argument("manifest: empty id at line " + std::to_string(line_no));
        if (e.transcript.empty())
            throw std::invalid_argument("manifest: empty transcript for id " + e.id);
        if (!seen.insert(e.id).second)
            throw std::invalid_argument("manifest: duplicate id " + e.id);
        entries.push_back(std::move(e));
    }
    if (entries.empty()) throw std::invalid_argument("manifest: no entries in " + path);
    return entries;
}

void write_manifest(const std::string& path, const std::vector<ManifestEntry>& entries) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw std::runtime_error("manifest: cannot open " + path + " for writing");
    for (const auto& e : entries) os << e.id << '|' << e.transcript << '|' << e.wav_path << '\n';
    if (!os) throw std::runtime_error("manifest: write failed for " + path);
}

std::vector<IndexEntry> read_index(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::invalid_argument("index: cannot open " + path);
    std::vector<IndexEntry> entries;
    std::string line;
    int line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        auto f = split_pipe(line, 7, "index", line_no);
        IndexEntry e;
        e.id = f[0];
        e.frames = std::stoull(f[1]);
        e.chars = std::stoull(f[2]);
        e.mel_path = f[3];
        e.linear_path = f[4];
        e.wav_path = f[5];
        e.normalized_text = f[6];
        entries.push_back(std::move(e));
    }
    if (entries.empty()) throw std::invalid_argument("index: no entries in " + path);
    return entries;
}

void write_index(const std::string& path, const std::vector<IndexEntry>& entries) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw std::runtime_error("index: cannot open " + path + " for writing");
    for (const auto& e : entries)
        os << e.id << '|' << e.frames << '|' << e.chars << '|' << e.mel_path << '|'
           << e.linear_path << '|' << e.wav_path << '|' << e.normalized_text << '\n';
    if (!os) throw std::runtime_error("index: write failed for " + path);
}

}  // namespace melsynth::pipeline
