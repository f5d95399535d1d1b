#ifndef MWEATTN_CORPUS_HPP_
#define MWEATTN_CORPUS_HPP_

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mweattn/types.hpp"

namespace mweattn::corpus {

// Character span, code point indices, start inclusive / end exclusive.
using CharSpan = std::pair<std::size_t, std::size_t>;

// One annotated sentence: a single MWE, possibly discontiguous.
struct MweInstance {
    std::string id;
    std::string language;  // ISO 639-1
    std::string text;
    MweType mwe_type = MweType::idiom;
    std::vector<CharSpan> spans;
    std::string surface;
    std::string source;
};

struct CorpusMetadata {
    std::string name;
    std::string language;
    std::map<std::string, std::size_t> mwe_type_counts;
};

struct Corpus {
    std::vector<MweInstance> instances;
    CorpusMetadata metadata;

    // Recomputes metadata counts from instances.
    void refresh_metadata();
};

// Validation / load problems attached to a specific input record.
struct RecordError {
    std::string record_id;   // instance id if known, else "line N"
    std::string message;
};

struct LoadOptions {
    std::vector<std::string> allowed_languages = {"en", "de", "nl", "pl", "ru", "uk"};
    bool case_sensitive_surface = true;  // exact match first; fallback lowers with a warning
    // Defaults applied when the format does not carry the field itself.
    std::optional<std::string> default_language;
    std::optional<MweType> default_mwe_type;
    std::string default_source;
};

struct LoadResult {
    Corpus corpus;
    std::vector<RecordError> errors;    // rejected records
    std::vector<std::string> warnings;  // accepted with caveats
};

struct ConvertResult {
    std::string bytes;
    std::vector<std::string> warnings;
};

// Checks all MweInstance invariants; returns human-readable violations
// (empty means valid). `case_insensitive_ok` is set when the surface check
// only passes after lowercasing.
std::vector<std::string> validate_instance(const MweInstance& inst,
                                           const LoadOptions& opts,
                                           bool* case_insensitive_ok = nullptr);

// Loads and validates a corpus file. Invalid records land in
// LoadResult::errors; an unparseable file or an empty result is fatal
// (throws ConfigError / Error).
LoadResult load_corpus(const std::string& path, CorpusFormat format,
                       const LoadOptions& opts = {});

// Same, from an in-memory buffer. `name` is used for messages and metadata.
LoadResult load_corpus_bytes(const std::string& data, CorpusFormat format,
                             const std::string& name, const LoadOptions& opts = {});

// Serializes a validated corpus. Round trip through any format preserves
// id, text, spans and mwe_type. Throws on an empty corpus.
ConvertResult convert_corpus(const Corpus& c, CorpusFormat target);

// Seeded uniform subsample of n instances (without replacement, original
// order kept). Clamps to the corpus size with a warning.
Corpus balance_corpus(const Corpus& c, std::size_t n, std::uint32_t seed,
                      std::vector<std::string>* warnings = nullptr);

// Joined span text, used by the surface invariant and detokenization.
std::string span_text(const MweInstance& inst);

}  // namespace mweattn::corpus

#endif  // MWEATTN_CORPUS_HPP_
