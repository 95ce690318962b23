#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

// Error convention used across the library:
//   std::invalid_argument  -- bad inputs, bad configs, contract violations (CLI exit 1)
//   std::runtime_error     -- failures at run time: I/O, non-finite values (CLI exit 2)

namespace melsynth {

inline std::string format_thousands(long long v) {
    std::string digits = std::to_string(v < 0 ? -v : v);
    std::string out;
    int count = 0;
    for (auto it = digits.rbegin(); it != digits.rend(); ++it) {
        if (count != 0 && count % 3 == 0) out.push_back(',');
        out.push_back(*it);
        ++count;
    }
    if (v < 0) out.push_back('-');
    return std::string(out.rbegin(), out.rend());
}

}  // namespace melsynth
