#include "mweattn/util.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "mweattn/types.hpp"

namespace mweattn {

std::string to_string(MweType t) {
    return t == MweType::idiom ? "idiom" : "msu";
}

std::string to_string(TaskTag t) {
    switch (t) {
        case TaskTag::pretrained: return "pretrained";
        case TaskTag::deprel: return "deprel";
        case TaskTag::pos: return "pos";
        case TaskTag::ner: return "ner";
        case TaskTag::topic: return "topic";
    }
    return "pretrained";
}

std::string to_string(MetricKind k) {
    return k == MetricKind::context_to_mwe ? "context_to_mwe" : "within_mwe";
}

std::string to_string(Zone z) {
    switch (z) {
        case Zone::lower: return "lower";
        case Zone::middle: return "middle";
        case Zone::upper: return "upper";
    }
    return "lower";
}

std::string to_string(CorpusFormat f) {
    switch (f) {
        case CorpusFormat::canonical_jsonl: return "canonical_jsonl";
        case CorpusFormat::bio_tagged: return "bio_tagged";
        case CorpusFormat::parallel_tsv: return "parallel_tsv";
    }
    return "canonical_jsonl";
}

MweType mwe_type_from_string(std::string_view s) {
    if (s == "idiom") return MweType::idiom;
    if (s == "msu") return MweType::msu;
    throw ConfigError("unknown mwe_type: " + std::string(s));
}

TaskTag task_tag_from_string(std::string_view s) {
    if (s == "pretrained") return TaskTag::pretrained;
    if (s == "deprel") return TaskTag::deprel;
    if (s == "pos") return TaskTag::pos;
    if (s == "ner") return TaskTag::ner;
    if (s == "topic") return TaskTag::topic;
    throw ConfigError("unknown task tag: " + std::string(s));
}

MetricKind metric_kind_from_string(std::string_view s) {
    if (s == "context_to_mwe") return MetricKind::context_to_mwe;
    if (s == "within_mwe") return MetricKind::within_mwe;
    throw ConfigError("unknown metric kind: " + std::string(s));
}

Zone zone_from_string(std::string_view s) {
    if (s == "lower") return Zone::lower;
    if (s == "middle") return Zone::middle;
    if (s == "upper") return Zone::upper;
    throw ConfigError("unknown zone: " + std::string(s));
}

CorpusFormat corpus_format_from_string(std::string_view s) {
    if (s == "canonical_jsonl" || s == "jsonl") return CorpusFormat::canonical_jsonl;
    if (s == "bio_tagged" || s == "bio") return CorpusFormat::bio_tagged;
    if (s == "parallel_tsv" || s == "tsv") return CorpusFormat::parallel_tsv;
    throw ConfigError("unknown corpus format: " + std::string(s));
}

}  // namespace mweattn

namespace mweattn::util {

std::vector<std::size_t> utf8_code_point_starts(std::string_view text) {
    std::vector<std::size_t> starts;
    starts.reserve(text.size() + 1);
    std::size_t i = 0;
    while (i < text.size()) {
        starts.push_back(i);
        unsigned char c = static_cast<unsigned char>(text[i]);
        std::size_t len = 1;
        if ((c & 0x80u) == 0x00u) len = 1;
        else if ((c & 0xE0u) == 0xC0u) len = 2;
        else if ((c & 0xF0u) == 0xE0u) len = 3;
        else if ((c & 0xF8u) == 0xF0u) len = 4;
        // Clamp to buffer and to actual continuation bytes.
        std::size_t j = i + 1;
        while (j < text.size() && j < i + len &&
               (static_cast<unsigned char>(text[j]) & 0xC0u) == 0x80u) {
            ++j;
        }
        i = j;
    }
    starts.push_back(text.size());
    return starts;
}

std::size_t utf8_length(std::string_view text) {
    return utf8_code_point_starts(text).size() - 1;
}

std::string utf8_substr(std::string_view text, std::size_t start, std::size_t end) {
    auto starts = utf8_code_point_starts(text);
    std::size_t n = starts.size() - 1;
    if (start > end || end > n) {
        throw Error("utf8_substr: range [" + std::to_string(start) + ", " +
                    std::to_string(end) + ") out of bounds for length " + std::to_string(n));
    }
    return std::string(text.substr(starts[start], starts[end] - starts[start]));
}

bool is_ascii_space(char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

std::string collapse_whitespace(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    bool in_space = true;  // swallow leading whitespace
    for (char c : s) {
        if (is_ascii_space(c)) {
            in_space = true;
        } else {
            if (in_space && !out.empty()) out.push_back(' ');
            out.push_back(c);
            in_space = false;
        }
    }
    return out;
}

std::string ascii_lower(std::string_view s) {
    std::string out(s);
    for (char& c : out) {
        if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    }
    return out;
}

std::uint64_t fnv1a64(const void* data, std::size_t len) {
    const auto* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t fnv1a64(std::string_view s) {
    return fnv1a64(s.data(), s.size());
}

std::string to_hex(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return std::string(buf);
}

std::uint32_t Rng::bounded(std::uint32_t n) {
    if (n == 0) throw Error("Rng::bounded: n must be positive");
    const std::uint32_t limit = UINT32_MAX - UINT32_MAX % n;
    std::uint32_t x;
    do {
        x = gen_();
    } while (x >= limit);
    return x % n;
}

double Rng::uniform01() {
    const std::uint64_t hi = gen_() >> 5;   // 27 bits
    const std::uint64_t lo = gen_() >> 6;   // 26 bits
    return static_cast<double>((hi << 26) | lo) / 9007199254740992.0;  // 2^53
}

double Rng::gaussian() {
    if (have_spare_) {
        have_spare_ = false;
        return spare_;
    }
    double u1 = 0.0;
    do {
        u1 = uniform01();
    } while (u1 <= 0.0);
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
}

void Rng::shuffle(std::vector<std::size_t>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
        std::size_t j = bounded(static_cast<std::uint32_t>(i));
        std::swap(v[i - 1], v[j]);
    }
}

std::vector<std::size_t> Rng::sample_indices(std::size_t n, std::size_t k) {
    if (k > n) throw Error("Rng::sample_indices: k > n");
    std::vector<std::size_t> pool(n);
    for (std::size_t i = 0; i < n; ++i) pool[i] = i;
    std::vector<std::size_t> out;
    out.reserve(k);
    for (std::size_t i = 0; i < k; ++i) {
        std::size_t j = i + bounded(static_cast<std::uint32_t>(n - i));
        std::swap(pool[i], pool[j]);
        out.push_back(pool[i]);
    }
    return out;
}

std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    if (res.ec != std::errc()) throw Error("format_double failed");
    return std::string(buf, res.ptr);
}

std::string format_fixed(double v, int precision) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", precision, v);
    return std::string(buf);
}

double parse_double(std::string_view s) {
    double v = 0.0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
        throw Error("cannot parse number: '" + std::string(s) + "'");
    }
    return v;
}

std::string csv_escape(std::string_view field) {
    bool needs_quotes = field.find_first_of(",\"\n\r") != std::string_view::npos;
    if (!needs_quotes) return std::string(field);
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out += "\"\"";
        else out.push_back(c);
    }
    out.push_back('"');
    return out;
}

std::string csv_join(const std::vector<std::string>& fields) {
    std::string out;
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i) out.push_back(',');
        out += csv_escape(fields[i]);
    }
    return out;
}

std::vector<std::string> csv_split(std::string_view line) {
    std::vector<std::string> out;
    std::string cur;
    bool in_quotes = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        char c = line[i];
        if (in_quotes) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur.push_back('"');
                    ++i;
                } else {
                    in_quotes = false;
                }
            } else {
                cur.push_back(c);
            }
        } else if (c == '"') {
            in_quotes = true;
        } else if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, std::string_view contents) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write file: " + path);
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw Error("write failed: " + path);
}

std::vector<std::string> read_lines(const std::string& path) {
    std::string data = read_file(path);
    std::vector<std::string> lines;
    std::string cur;
    for (char c : data) {
        if (c == '\n') {
            if (!cur.empty() && cur.back() == '\r') cur.pop_back();
            lines.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    if (!cur.empty()) lines.push_back(cur);
    return lines;
}

std::string sanitize_filename(std::string_view id) {
    std::string out(id);
    for (char& c : out) {
        bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
                  (c >= '0' && c <= '9') || c == '.' || c == '_' || c == '-';
        if (!ok) c = '_';
    }
    if (out.empty()) out = "_";
    return out;
}

std::vector<std::string> split(std::string_view s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == sep) {
            out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

std::string trim(std::string_view s) {
    std::size_t b = 0;
    std::size_t e = s.size();
    while (b < e && is_ascii_space(s[b])) ++b;
    while (e > b && is_ascii_space(s[e - 1])) --e;
    return std::string(s.substr(b, e - b));
}

bool starts_with(std::string_view s, std::string_view prefix) {
    return s.size() >= prefix.size() && s.substr(0, prefix.size()) == prefix;
}

}  // namespace mweattn::util
