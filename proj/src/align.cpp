#include "mweattn/align.hpp"

#include <algorithm>

#include "mweattn/util.hpp"

namespace mweattn::align {

namespace util = mweattn::util;

void TokenizedSentence::validate() const {
    if (tokens.size() != offsets.size() || tokens.size() != is_special.size()) {
        throw Error("TokenizedSentence: parallel arrays differ in length");
    }
    std::size_t last_start = 0;
    bool any_regular = false;
    bool first_regular = true;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (is_special[i]) continue;
        any_regular = true;
        if (!offsets[i]) continue;
        const auto [s, e] = *offsets[i];
        if (e < s) throw Error("TokenizedSentence: inverted offset at token " + std::to_string(i));
        if (!first_regular && s < last_start) {
            throw Error("TokenizedSentence: offsets not non-decreasing at token " + std::to_string(i));
        }
        last_start = s;
        first_regular = false;
    }
    if (!any_regular) throw Error("TokenizedSentence: no non-special tokens");
}

namespace {

std::size_t overlap_len(const corpus::CharSpan& a, const corpus::CharSpan& b) {
    const std::size_t lo = std::max(a.first, b.first);
    const std::size_t hi = std::min(a.second, b.second);
    return hi > lo ? hi - lo : 0;
}

}  // namespace

bool span_truncated(const corpus::MweInstance& instance, const TokenizedSentence& tok) {
    std::size_t covered_end = 0;
    bool any_offsets = false;
    for (std::size_t i = 0; i < tok.size(); ++i) {
        if (tok.is_special[i] || !tok.offsets[i]) continue;
        any_offsets = true;
        covered_end = std::max(covered_end, tok.offsets[i]->second);
    }
    if (!any_offsets) return false;
    for (const auto& [s, e] : instance.spans) {
        (void)s;
        if (e > covered_end) return true;
    }
    return false;
}

MweAlignment align(const corpus::MweInstance& instance, const TokenizedSentence& tok,
                   const OverlapPolicy& policy) {
    tok.validate();

    bool any_offsets = false;
    for (std::size_t i = 0; i < tok.size(); ++i) {
        if (!tok.is_special[i] && tok.offsets[i]) any_offsets = true;
    }
    if (!any_offsets) {
        throw ConfigError("tokenizer provides no character offsets; alignment impossible");
    }

    MweAlignment out;
    out.instance_id = instance.id;
    for (std::size_t i = 0; i < tok.size(); ++i) {
        if (tok.is_special[i] || !tok.offsets[i]) continue;
        std::size_t best = 0;
        for (const auto& span : instance.spans) {
            best = std::max(best, overlap_len(*tok.offsets[i], span));
        }
        if (best >= policy.min_overlap_chars) {
            out.token_indices.push_back(static_cast<int>(i));
        }
    }

    if (out.token_indices.empty()) {
        if (span_truncated(instance, tok)) {
            throw AlignmentError(instance.id, "span truncated: MWE lies beyond the tokenized range");
        }
        throw AlignmentError(instance.id, "no token overlaps any MWE span");
    }

    out.contiguous =
        static_cast<std::size_t>(out.token_indices.back() - out.token_indices.front() + 1) ==
        out.token_indices.size();

    // Coverage over non-whitespace span characters (tokenizers drop spaces).
    const auto cp_starts = util::utf8_code_point_starts(instance.text);
    const std::size_t n_cp = cp_starts.size() - 1;
    out.fully_covered = true;
    for (const auto& [ss, se] : instance.spans) {
        for (std::size_t c = ss; c < se && c < n_cp; ++c) {
            if (util::is_ascii_space(instance.text[cp_starts[c]])) continue;
            bool covered = false;
            for (int ti : out.token_indices) {
                const auto& off = tok.offsets[static_cast<std::size_t>(ti)];
                if (off && c >= off->first && c < off->second) {
                    covered = true;
                    break;
                }
            }
            if (!covered) {
                out.fully_covered = false;
                break;
            }
        }
        if (!out.fully_covered) break;
    }
    return out;
}

std::vector<int> context_indices(const TokenizedSentence& tok, const MweAlignment& alignment) {
    std::vector<int> out;
    for (std::size_t i = 0; i < tok.size(); ++i) {
        if (tok.is_special[i]) continue;
        if (std::binary_search(alignment.token_indices.begin(), alignment.token_indices.end(),
                               static_cast<int>(i))) {
            continue;
        }
        out.push_back(static_cast<int>(i));
    }
    if (out.empty()) {
        throw ContextEmptyError("MWE covers all non-special tokens; context is empty");
    }
    return out;
}

}  // namespace mweattn::align
