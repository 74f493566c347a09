#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace bookrec {

// Raised when loaded data breaks a structural contract (exit code 2 in the CLI).
struct ValidationError : std::runtime_error {
    explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

// Raised when a recommender emits an item that was masked out (exit code 3 in the CLI).
struct LeakageError : std::runtime_error {
    explicit LeakageError(const std::string& msg) : std::runtime_error(msg) {}
};

// Deterministic PRNG. std:: distributions are implementation-defined, so all
// sampling in the project goes through this class to keep seeded runs
// reproducible across compilers.
class Rng {
public:
    explicit Rng(uint64_t seed) : state_(seed ? seed : 0x9e3779b97f4a7c15ULL) {}

    uint64_t next_u64() {
        // splitmix64
        uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0, n). Rejection-free modulo bias is negligible for n << 2^64
    // but we reject anyway to keep splits exactly uniform.
    uint64_t next_below(uint64_t n) {
        if (n == 0) throw std::invalid_argument("Rng::next_below: n must be > 0");
        uint64_t threshold = (0 - n) % n;
        for (;;) {
            uint64_t r = next_u64();
            if (r >= threshold) return r % n;
        }
    }

    double next_double() {  // [0, 1)
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // Box-Muller; deterministic replacement for std::normal_distribution.
    double next_gaussian() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u, v, s;
        do {
            u = 2.0 * next_double() - 1.0;
            v = 2.0 * next_double() - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        s = std::sqrt(-2.0 * std::log(s) / s);
        spare_ = v * s;
        have_spare_ = true;
        return u * s;
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        // Fisher-Yates with our own uniform draws.
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(next_below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    uint64_t state_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

inline uint64_t fnv1a64(std::string_view s) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

// --- minimal UTF-8 handling ----------------------------------------------

// Decodes one codepoint starting at `pos`; advances `pos`. Returns nullopt on
// malformed input (overlong forms and bad continuation bytes included).
std::optional<uint32_t> utf8_decode(std::string_view s, size_t& pos);

// Decodes a whole string; nullopt if any byte sequence is invalid.
std::optional<std::vector<uint32_t>> utf8_decode_all(std::string_view s);

void utf8_encode(uint32_t cp, std::string& out);

// --- misc ------------------------------------------------------------------

// Days since 1970-01-01 for a proleptic Gregorian date.
int64_t days_from_civil(int y, unsigned m, unsigned d);

// Parses "YYYY-MM-DD" into days since epoch; nullopt otherwise.
std::optional<int64_t> parse_iso_date(std::string_view s);

std::string format_civil_date(int64_t days);

}  // namespace bookrec
