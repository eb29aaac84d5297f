#pragma once

#include <cstdint>
#include <string_view>

namespace fewmatch {

// FNV-1a, used for config hashes and episode-list checksums in run headers.
struct Fnv1a {
    std::uint64_t value = 14695981039346656037ull;

    void add_byte(unsigned char b) {
        value ^= b;
        value *= 1099511628211ull;
    }
    void add(std::string_view s) {
        for (unsigned char c : s) add_byte(c);
        add_byte(0);  // separator so ("ab","c") != ("a","bc")
    }
    void add(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) add_byte(static_cast<unsigned char>(v >> (8 * i)));
    }
    void add(std::int64_t v) { add(static_cast<std::uint64_t>(v)); }
    void add(int v) { add(static_cast<std::uint64_t>(static_cast<std::int64_t>(v))); }
};

}  // namespace fewmatch
