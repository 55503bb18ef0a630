#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace idm {

// Input that fails a documented contract (bad file, bad config, bad shape).
class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed input text; carries the 1-based line number.
class ParseError : public ValidationError {
public:
    ParseError(std::size_t line, const std::string& what)
        : ValidationError("line " + std::to_string(line) + ": " + what), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

// NaN/Inf in a loss, gradient or metric.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Seeded generator with distribution code of our own so draws are identical
// across standard libraries (std:: distributions are implementation-defined).
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }

    // Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    // Uniform integer in [0, bound).
    std::uint64_t below(std::uint64_t bound);

    // Uniform integer in [lo, hi].
    std::int64_t between(std::int64_t lo, std::int64_t hi) {
        return lo + static_cast<std::int64_t>(below(static_cast<std::uint64_t>(hi - lo) + 1));
    }

    double normal();

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::swap(v[i - 1], v[below(i)]);
        }
    }

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

// Derive an independent stream seed from a base seed and a salt.
std::uint64_t mix_seed(std::uint64_t base, std::uint64_t salt);
std::uint64_t mix_seed(std::uint64_t base, std::string_view salt);

// 64-bit FNV-1a, hex encoded. Used for content hashes of corpora and splits.
std::string fnv1a_hex(std::string_view bytes);
std::string file_hash(const std::string& path);

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view contents);

// Shortest round-trip decimal representation.
std::string format_real(double x);
std::string format_fixed(double x, int decimals);

}  // namespace idm
