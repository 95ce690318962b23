#pragma once

#include <string>
#include <vector>

namespace melsynth::pipeline {

// id 0 = padding, 1 = unknown, 2 = space, 3..28 = a-z, then . , ? ! ' -
inline constexpr int kPadId = 0;
inline constexpr int kUnknownId = 1;
inline constexpr int kSpaceId = 2;
inline constexpr int kVocabSize = 35;

struct CharSequence {
    std::vector<int> ids;
    std::string original_text;
    std::string normalized_text;
};

int char_to_id(char c);     // -1 when outside the charset
char id_to_char(int id);    // '?'-style placeholder for pad/unknown

// Lowercases, collapses whitespace runs, maps out-of-charset codepoints to the
// unknown id. Digits are rejected: verbalization happens upstream.
CharSequence normalize_text(const std::string& raw);

}  // namespace melsynth::pipeline
