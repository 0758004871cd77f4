#pragma once

// Shared plumbing: error types, deterministic RNG seeding, UTF-8 validation,
// small hashing helpers used by manifests and per-shard seed derivation.

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace bytelm {

inline constexpr const char* kVersion = "0.1.0";

// Exit-code contract used by the CLI: 2 config, 3 data, 4 numerical.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// splitmix64: used to whiten seeds and derive independent per-item streams.
inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

// Derived stream seed: hash(seed, index). Shards generated from these are
// independent of processing order.
inline uint64_t derive_seed(uint64_t seed, uint64_t index) {
    return splitmix64(splitmix64(seed) ^ splitmix64(index + 0x51ed2701a93bull));
}

inline std::mt19937_64 make_rng(uint64_t seed) {
    return std::mt19937_64(splitmix64(seed));
}

// Uniform double in [0,1) from the top 53 bits of one engine draw. Pinned
// explicitly (instead of std::uniform_real_distribution) so generated corpora
// are reproducible byte-for-byte independent of the standard library.
inline double uniform01(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Uniform integer in [0, n). Modulo bias is below 2^-40 for the vocabulary
// sizes used here.
inline uint64_t uniform_below(std::mt19937_64& rng, uint64_t n) {
    return rng() % n;
}

// FNV-1a 64-bit, used for input hashes in run manifests.
inline uint64_t fnv1a64(std::string_view bytes) {
    uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

// Strict UTF-8 validation (rejects overlongs, surrogates, > U+10FFFF).
inline bool is_valid_utf8(std::string_view s) {
    size_t i = 0;
    const size_t n = s.size();
    while (i < n) {
        const unsigned char b0 = static_cast<unsigned char>(s[i]);
        if (b0 < 0x80) {
            ++i;
            continue;
        }
        int len;
        uint32_t cp;
        if ((b0 & 0xE0) == 0xC0) {
            len = 2;
            cp = b0 & 0x1F;
        } else if ((b0 & 0xF0) == 0xE0) {
            len = 3;
            cp = b0 & 0x0F;
        } else if ((b0 & 0xF8) == 0xF0) {
            len = 4;
            cp = b0 & 0x07;
        } else {
            return false;
        }
        if (i + len > n) return false;
        for (int k = 1; k < len; ++k) {
            const unsigned char bk = static_cast<unsigned char>(s[i + k]);
            if ((bk & 0xC0) != 0x80) return false;
            cp = (cp << 6) | (bk & 0x3F);
        }
        if (len == 2 && cp < 0x80) return false;
        if (len == 3 && cp < 0x800) return false;
        if (len == 4 && cp < 0x10000) return false;
        if (cp >= 0xD800 && cp <= 0xDFFF) return false;
        if (cp > 0x10FFFF) return false;
        i += len;
    }
    return true;
}

}  // namespace bytelm
