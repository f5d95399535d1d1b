#ifndef MWEATTN_UTIL_HPP_
#define MWEATTN_UTIL_HPP_

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace mweattn::util {

// --- UTF-8 ---------------------------------------------------------------
// Character spans throughout the toolkit are Unicode code point indices
// (Python string slicing semantics), not byte indices.

// Byte offset of each code point start, plus a trailing entry equal to
// text.size(). Invalid continuation bytes are treated as single-byte units.
std::vector<std::size_t> utf8_code_point_starts(std::string_view text);

std::size_t utf8_length(std::string_view text);

// Substring by code point range [start, end).
std::string utf8_substr(std::string_view text, std::size_t start, std::size_t end);

// --- Whitespace / casing -------------------------------------------------

bool is_ascii_space(char c);

// Trims, and collapses internal whitespace runs to a single space.
std::string collapse_whitespace(std::string_view s);

// ASCII-only lowering; non-ASCII bytes pass through unchanged.
std::string ascii_lower(std::string_view s);

// --- Hashing -------------------------------------------------------------

std::uint64_t fnv1a64(const void* data, std::size_t len);
std::uint64_t fnv1a64(std::string_view s);
std::string to_hex(std::uint64_t v);

// --- Deterministic RNG ---------------------------------------------------
// mt19937 output is standardized; the derived draws below avoid the
// implementation-defined std::*_distribution classes so that seeds give
// identical streams on every platform.
class Rng {
public:
    explicit Rng(std::uint32_t seed) : gen_(seed) {}

    std::uint32_t next_u32() { return gen_(); }

    // Unbiased integer in [0, n) via rejection sampling.
    std::uint32_t bounded(std::uint32_t n);

    // 53-bit uniform double in [0, 1).
    double uniform01();

    // Box-Muller standard normal.
    double gaussian();

    // In-place Fisher-Yates shuffle of [0, n) indices.
    void shuffle(std::vector<std::size_t>& v);

    // k distinct indices sampled from [0, n), in draw order.
    std::vector<std::size_t> sample_indices(std::size_t n, std::size_t k);

private:
    std::mt19937 gen_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

// --- Number formatting ---------------------------------------------------

// Shortest decimal representation that round-trips (std::to_chars).
std::string format_double(double v);

// Fixed-precision, for figure coordinates.
std::string format_fixed(double v, int precision);

double parse_double(std::string_view s);

// --- CSV -----------------------------------------------------------------

std::string csv_escape(std::string_view field);
std::string csv_join(const std::vector<std::string>& fields);
std::vector<std::string> csv_split(std::string_view line);

// --- Files ---------------------------------------------------------------

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view contents);
std::vector<std::string> read_lines(const std::string& path);

// Filesystem-safe version of an id: [A-Za-z0-9._-], others replaced by '_'.
std::string sanitize_filename(std::string_view id);

std::vector<std::string> split(std::string_view s, char sep);
std::string trim(std::string_view s);
bool starts_with(std::string_view s, std::string_view prefix);

}  // namespace mweattn::util

#endif  // MWEATTN_UTIL_HPP_
