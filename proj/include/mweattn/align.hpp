#ifndef MWEATTN_ALIGN_HPP_
#define MWEATTN_ALIGN_HPP_

#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mweattn/corpus.hpp"
#include "mweattn/types.hpp"

namespace mweattn::align {

// Subword tokenization of one sentence. Offsets are code point ranges into
// the original text; special tokens ([CLS]-like) carry no offsets.
struct TokenizedSentence {
    std::vector<std::string> tokens;
    std::vector<std::optional<corpus::CharSpan>> offsets;
    std::vector<bool> is_special;

    std::size_t size() const { return tokens.size(); }

    // Throws Error on any structural violation.
    void validate() const;
};

// Subword token indices realizing one MWE in one tokenization.
struct MweAlignment {
    std::string instance_id;
    std::vector<int> token_indices;  // sorted, non-special
    bool contiguous = false;
    bool fully_covered = false;  // every non-whitespace MWE char covered
};

struct OverlapPolicy {
    std::size_t min_overlap_chars = 1;
};

class AlignmentError : public Error {
public:
    AlignmentError(std::string instance_id, const std::string& msg)
        : Error(msg), instance_id_(std::move(instance_id)) {}
    const std::string& instance_id() const { return instance_id_; }

private:
    std::string instance_id_;
};

class ContextEmptyError : public Error {
public:
    using Error::Error;
};

// Selects every non-special token whose offsets overlap any MWE span by at
// least policy.min_overlap_chars characters. Throws AlignmentError when no
// token qualifies ("span truncated" when the spans lie beyond the tokenized
// range) and ConfigError when the tokenization carries no offsets at all.
MweAlignment align(const corpus::MweInstance& instance, const TokenizedSentence& tok,
                   const OverlapPolicy& policy = {});

// Non-special token indices outside the alignment. Throws ContextEmptyError
// when the MWE covers every non-special token.
std::vector<int> context_indices(const TokenizedSentence& tok, const MweAlignment& alignment);

// True when the instance's spans extend past the last character covered by
// any non-special token (the usual cause is max-length truncation).
bool span_truncated(const corpus::MweInstance& instance, const TokenizedSentence& tok);

}  // namespace mweattn::align

#endif  // MWEATTN_ALIGN_HPP_
