#include "melsynth/pipeline/text.hpp"

#include <cctype>
#include <stdexcept>

namespace melsynth::pipeline {

namespace {
constexpr char kPunct[] = {'.', ',', '?', '!', '\'', '-'};
}

int char_to_id(char c) {
    if (c == ' ') return kSpaceId;
    if (c >= 'a' && c <= 'z') return 3 + (c - 'a');
    for (int i = 0; i < 6; ++i)
        if (c == kPunct[i]) return 29 + i;
    return -1;
}

char id_to_char(int id) {
    if (id == kSpaceId) return ' ';
    if (id >= 3 && id <= 28) return static_cast<char>('a' + id - 3);
    if (id >= 29 && id < 35) return kPunct[id - 29];
    return '\x01';
}

CharSequence normalize_text(const std::string& raw) {
    CharSequence seq;
    seq.original_text = raw;
    std::string norm;
    bool pending_space = false;
    for (std::size_t i = 0; i < raw.size(); ++i) {
        const unsigned char b = static_cast<unsigned char>(raw[i]);
        if ((b & 0xC0) == 0x80) continue;  // UTF-8 continuation byte
        if (std::isdigit(b))
            throw std::invalid_argument("unnormalized text: digits must be spelled out");
        if (std::isspace(b)) {
            pending_space = !norm.empty();
            continue;
        }
        if (pending_space) {
            norm.push_back(' ');
            pending_space = false;
        }
        const char c = b < 0x80 ? static_cast<char>(std::tolower(b)) : '\x01';
        norm.push_back(char_to_id(c) >= 0 ? c : '\x01');
    }
    if (norm.empty()) throw std::invalid_argument("normalize_text: no usable characters");
    seq.normalized_text.reserve(norm.size());
    for (char c : norm) {
        const int id = char_to_id(c);
        seq.ids.push_back(id >= 0 ? id : kUnknownId);
        seq.normalized_text.push_back(id >= 0 ? c : '\x01');
    }
    return seq;
}

}  // namespace melsynth::pipeline
