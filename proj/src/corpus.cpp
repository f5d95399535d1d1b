#include "mweattn/corpus.hpp"

#include <algorithm>
#include <set>
#include <sstream>

#include <json.hpp>

#include "mweattn/util.hpp"

namespace mweattn::corpus {

using json = nlohmann::json;
namespace util = mweattn::util;

void Corpus::refresh_metadata() {
    metadata.mwe_type_counts.clear();
    std::set<std::string> langs;
    for (const auto& inst : instances) {
        metadata.mwe_type_counts[to_string(inst.mwe_type)] += 1;
        langs.insert(inst.language);
    }
    if (langs.size() == 1) {
        metadata.language = *langs.begin();
    } else if (langs.size() > 1) {
        metadata.language = "multi";
    }
}

std::string span_text(const MweInstance& inst) {
    std::string joined;
    for (const auto& [start, end] : inst.spans) {
        if (!joined.empty()) joined.push_back(' ');
        joined += util::utf8_substr(inst.text, start, end);
    }
    return joined;
}

std::vector<std::string> validate_instance(const MweInstance& inst,
                                           const LoadOptions& opts,
                                           bool* case_insensitive_ok) {
    std::vector<std::string> problems;
    if (case_insensitive_ok) *case_insensitive_ok = false;

    if (inst.id.empty()) problems.push_back("missing id");
    if (inst.text.empty()) problems.push_back("empty text");

    if (!opts.allowed_languages.empty() &&
        std::find(opts.allowed_languages.begin(), opts.allowed_languages.end(),
                  inst.language) == opts.allowed_languages.end()) {
        problems.push_back("language '" + inst.language + "' not in configured corpus languages");
    }

    const std::size_t text_len = util::utf8_length(inst.text);
    if (inst.spans.empty()) {
        problems.push_back("no spans");
        return problems;
    }
    for (const auto& [start, end] : inst.spans) {
        if (end < start) {
            problems.push_back("inverted span [" + std::to_string(start) + ", " +
                               std::to_string(end) + ")");
        } else if (start == end) {
            problems.push_back("empty span at " + std::to_string(start));
        } else if (end > text_len) {
            problems.push_back("span [" + std::to_string(start) + ", " + std::to_string(end) +
                               ") out of bounds for text length " + std::to_string(text_len));
        }
    }
    if (!problems.empty()) return problems;

    for (std::size_t i = 1; i < inst.spans.size(); ++i) {
        if (inst.spans[i].first < inst.spans[i - 1].first) {
            problems.push_back("spans not sorted by start");
            return problems;
        }
        if (inst.spans[i].first < inst.spans[i - 1].second) {
            problems.push_back("overlapping spans");
            return problems;
        }
    }

    const std::string joined = util::collapse_whitespace(span_text(inst));
    const std::string want = util::collapse_whitespace(inst.surface);
    if (joined != want) {
        if (util::ascii_lower(joined) == util::ascii_lower(want)) {
            // Fallback match; warn only when the exact policy asked for it.
            if (opts.case_sensitive_surface && case_insensitive_ok) {
                *case_insensitive_ok = true;
            }
        } else {
            problems.push_back("span text '" + joined + "' does not match surface '" + want + "'");
        }
    }
    return problems;
}

namespace {

struct Builder {
    LoadOptions opts;
    LoadResult result;
    std::set<std::string> seen_ids;

    void add(MweInstance inst, const std::string& where) {
        bool ci = false;
        auto problems = validate_instance(inst, opts, &ci);
        const std::string rid = inst.id.empty() ? where : inst.id;
        if (!problems.empty()) {
            std::string msg;
            for (std::size_t i = 0; i < problems.size(); ++i) {
                if (i) msg += "; ";
                msg += problems[i];
            }
            result.errors.push_back({rid, msg});
            return;
        }
        if (!seen_ids.insert(inst.id).second) {
            result.errors.push_back({rid, "duplicate id"});
            return;
        }
        if (ci) {
            result.warnings.push_back(rid + ": surface matched only case-insensitively");
        }
        result.corpus.instances.push_back(std::move(inst));
    }
};

// ---- canonical JSONL ------------------------------------------------------

void load_jsonl(const std::string& data, Builder& b) {
    std::istringstream in(data);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string where = "line " + std::to_string(lineno);
        if (util::trim(line).empty()) continue;
        json rec;
        try {
            rec = json::parse(line);
        } catch (const json::exception& e) {
            b.result.errors.push_back({where, std::string("bad JSON: ") + e.what()});
            continue;
        }
        try {
            MweInstance inst;
            inst.id = rec.at("id").get<std::string>();
            inst.language = rec.at("language").get<std::string>();
            inst.text = rec.at("text").get<std::string>();
            inst.mwe_type = mwe_type_from_string(rec.at("mwe_type").get<std::string>());
            inst.surface = rec.at("surface").get<std::string>();
            if (rec.contains("source")) inst.source = rec["source"].get<std::string>();
            for (const auto& sp : rec.at("spans")) {
                if (!sp.is_array() || sp.size() != 2 || !sp[0].is_number_integer() ||
                    !sp[1].is_number_integer()) {
                    throw Error("spans must be pairs of integers");
                }
                long long s = sp[0].get<long long>();
                long long e = sp[1].get<long long>();
                if (s < 0 || e < 0) throw Error("negative span bound");
                inst.spans.emplace_back(static_cast<std::size_t>(s), static_cast<std::size_t>(e));
            }
            b.add(std::move(inst), where);
        } catch (const std::exception& e) {
            b.result.errors.push_back({where, std::string("bad record: ") + e.what()});
        }
    }
}

json instance_to_json(const MweInstance& inst) {
    json rec;
    rec["id"] = inst.id;
    rec["language"] = inst.language;
    rec["text"] = inst.text;
    rec["mwe_type"] = to_string(inst.mwe_type);
    json spans = json::array();
    for (const auto& [s, e] : inst.spans) spans.push_back({s, e});
    rec["spans"] = spans;
    rec["surface"] = inst.surface;
    if (!inst.source.empty()) rec["source"] = inst.source;
    return rec;
}

// ---- BIO -------------------------------------------------------------------

struct BioToken {
    std::string text;
    char tag = 'O';             // 'B', 'I' or 'O'
    std::string tag_suffix;     // e.g. "MWE", "IDIOM"
};

struct BioBlock {
    std::map<std::string, std::string> headers;
    std::vector<BioToken> tokens;
    std::size_t first_line = 0;
};

// Aligns tokens against `text` left to right; returns per-token code point
// ranges. Tokens must appear in order, separated only by whitespace.
std::vector<CharSpan> align_tokens_to_text(const std::vector<BioToken>& tokens,
                                           const std::string& text) {
    const auto starts = util::utf8_code_point_starts(text);
    const std::size_t n_cp = starts.size() - 1;
    std::vector<CharSpan> out;
    std::size_t cp = 0;
    for (const auto& tok : tokens) {
        while (cp < n_cp && util::is_ascii_space(text[starts[cp]])) ++cp;
        const std::size_t tok_len = util::utf8_length(tok.text);
        if (cp + tok_len > n_cp ||
            text.compare(starts[cp], starts[cp + tok_len] - starts[cp], tok.text) != 0) {
            throw Error("token '" + tok.text + "' does not align with text");
        }
        out.emplace_back(cp, cp + tok_len);
        cp += tok_len;
    }
    return out;
}

void load_bio_block(const BioBlock& block, Builder& b, std::size_t block_index) {
    const std::string where = "block at line " + std::to_string(block.first_line);
    if (block.tokens.empty()) return;

    MweInstance inst;
    auto hdr = [&](const char* key) -> std::optional<std::string> {
        auto it = block.headers.find(key);
        if (it == block.headers.end()) return std::nullopt;
        return it->second;
    };

    inst.id = hdr("id").value_or("bio-" + std::to_string(block_index));
    if (auto lang = hdr("language")) {
        inst.language = *lang;
    } else if (b.opts.default_language) {
        inst.language = *b.opts.default_language;
    } else {
        b.result.errors.push_back({where, "no language header and no default language"});
        return;
    }
    inst.source = hdr("source").value_or(b.opts.default_source);

    std::optional<MweType> type;
    if (auto t = hdr("mwe_type")) {
        try {
            type = mwe_type_from_string(*t);
        } catch (const std::exception&) {
            b.result.errors.push_back({where, "bad mwe_type header: " + *t});
            return;
        }
    } else {
        for (const auto& tok : block.tokens) {
            const std::string sfx = util::ascii_lower(tok.tag_suffix);
            if (sfx == "idiom") type = MweType::idiom;
            if (sfx == "msu") type = MweType::msu;
        }
        if (!type) type = b.opts.default_mwe_type;
    }
    if (!type) {
        b.result.errors.push_back({where, "cannot determine mwe_type (no header, tag suffix or default)"});
        return;
    }
    inst.mwe_type = *type;

    if (auto text = hdr("text")) {
        inst.text = *text;
    } else {
        // Detokenize with single spaces.
        std::string joined;
        for (const auto& tok : block.tokens) {
            if (!joined.empty()) joined.push_back(' ');
            joined += tok.text;
        }
        inst.text = joined;
    }

    std::vector<CharSpan> token_spans;
    try {
        token_spans = align_tokens_to_text(block.tokens, inst.text);
    } catch (const std::exception& e) {
        b.result.errors.push_back({where, e.what()});
        return;
    }

    // Consecutive B/I runs become spans; a B always opens a new span.
    for (std::size_t i = 0; i < block.tokens.size(); ++i) {
        const char tag = block.tokens[i].tag;
        if (tag == 'O') continue;
        const bool continues = tag == 'I' && !inst.spans.empty() && i > 0 &&
                               block.tokens[i - 1].tag != 'O';
        if (continues) {
            inst.spans.back().second = token_spans[i].second;
        } else {
            inst.spans.push_back(token_spans[i]);
        }
    }
    if (inst.spans.empty()) {
        b.result.errors.push_back({where, "no B/I tagged tokens in block"});
        return;
    }
    if (!hdr("surface")) {
        std::string surf;
        for (const auto& [s, e] : inst.spans) {
            if (!surf.empty()) surf.push_back(' ');
            surf += util::utf8_substr(inst.text, s, e);
        }
        inst.surface = util::collapse_whitespace(surf);
    } else {
        inst.surface = *hdr("surface");
    }
    b.add(std::move(inst), where);
}

void load_bio(const std::string& data, Builder& b) {
    std::istringstream in(data);
    std::string line;
    std::size_t lineno = 0;
    std::size_t block_index = 0;
    BioBlock block;
    auto flush = [&]() {
        if (!block.tokens.empty() || !block.headers.empty()) {
            load_bio_block(block, b, block_index++);
        }
        block = BioBlock{};
    };
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (util::trim(line).empty()) {
            flush();
            continue;
        }
        if (block.tokens.empty() && block.headers.empty()) block.first_line = lineno;
        if (line[0] == '#') {
            const auto eq = line.find('=');
            if (eq != std::string::npos) {
                std::string key = util::trim(line.substr(1, eq - 1));
                std::string val = line.substr(eq + 1);
                if (!val.empty() && val.front() == ' ') val.erase(0, 1);
                block.headers[key] = val;
            }
            continue;
        }
        const auto tab = line.find('\t');
        if (tab == std::string::npos) {
            b.result.errors.push_back({"line " + std::to_string(lineno),
                                       "expected 'token<TAB>tag'"});
            continue;
        }
        BioToken tok;
        tok.text = line.substr(0, tab);
        std::string tag = util::trim(line.substr(tab + 1));
        if (tag.empty()) {
            b.result.errors.push_back({"line " + std::to_string(lineno), "empty tag"});
            continue;
        }
        char head = tag[0];
        if (head == 'b') head = 'B';
        if (head == 'i') head = 'I';
        if (head == 'o') head = 'O';
        if (head != 'B' && head != 'I' && head != 'O') {
            b.result.errors.push_back({"line " + std::to_string(lineno),
                                       "unknown tag '" + tag + "'"});
            continue;
        }
        tok.tag = head;
        if (tag.size() > 2 && tag[1] == '-') tok.tag_suffix = tag.substr(2);
        block.tokens.push_back(std::move(tok));
    }
    flush();
}

// Whitespace-delimited word ranges (code points), with extra cuts at span
// boundaries so every emitted token lies entirely in or out of the MWE.
std::vector<CharSpan> bio_tokenize(const MweInstance& inst) {
    const auto starts = util::utf8_code_point_starts(inst.text);
    const std::size_t n_cp = starts.size() - 1;

    std::set<std::size_t> cuts;
    for (const auto& [s, e] : inst.spans) {
        cuts.insert(s);
        cuts.insert(e);
    }

    std::vector<CharSpan> tokens;
    std::size_t cp = 0;
    while (cp < n_cp) {
        while (cp < n_cp && util::is_ascii_space(inst.text[starts[cp]])) ++cp;
        if (cp >= n_cp) break;
        std::size_t we = cp;
        while (we < n_cp && !util::is_ascii_space(inst.text[starts[we]])) ++we;
        std::size_t piece_start = cp;
        for (auto it = cuts.upper_bound(cp); it != cuts.end() && *it < we; ++it) {
            tokens.emplace_back(piece_start, *it);
            piece_start = *it;
        }
        tokens.emplace_back(piece_start, we);
        cp = we;
    }
    return tokens;
}

void emit_bio_instance(const MweInstance& inst, std::string& out,
                       std::vector<std::string>* warnings) {
    if (inst.spans.size() > 1 && warnings) {
        warnings->push_back(inst.id +
                            ": discontiguous spans emitted as multiple BIO groups");
    }
    out += "# id = " + inst.id + "\n";
    out += "# language = " + inst.language + "\n";
    out += "# mwe_type = " + to_string(inst.mwe_type) + "\n";
    out += "# text = " + inst.text + "\n";
    if (!inst.source.empty()) out += "# source = " + inst.source + "\n";

    auto tokens = bio_tokenize(inst);
    for (const auto& [ts, te] : tokens) {
        std::string tag = "O";
        for (const auto& [ss, se] : inst.spans) {
            if (ts >= ss && te <= se) {
                tag = (ts == ss) ? "B-MWE" : "I-MWE";
                break;
            }
        }
        out += util::utf8_substr(inst.text, ts, te) + "\t" + tag + "\n";
    }
    out += "\n";
}

// ---- parallel TSV -----------------------------------------------------------

// Locates `surface` in `text`. Strategy: first exact substring match, then
// case-insensitive substring, then an in-order word subsequence (handles
// discontiguous MWEs). Returns empty on failure.
std::vector<CharSpan> locate_surface(const std::string& text, const std::string& surface,
                                     bool* used_case_fold, bool* used_subsequence) {
    *used_case_fold = false;
    *used_subsequence = false;
    const auto starts = util::utf8_code_point_starts(text);
    const std::size_t n_cp = starts.size() - 1;

    auto byte_to_cp = [&](std::size_t byte_pos) {
        const auto it = std::lower_bound(starts.begin(), starts.end(), byte_pos);
        return static_cast<std::size_t>(it - starts.begin());
    };

    const std::string want = util::collapse_whitespace(surface);
    auto pos = text.find(want);
    if (pos != std::string::npos) {
        return {{byte_to_cp(pos), byte_to_cp(pos) + util::utf8_length(want)}};
    }
    const std::string text_low = util::ascii_lower(text);
    const std::string want_low = util::ascii_lower(want);
    pos = text_low.find(want_low);
    if (pos != std::string::npos) {
        *used_case_fold = true;
        return {{byte_to_cp(pos), byte_to_cp(pos) + util::utf8_length(want)}};
    }

    // Word subsequence with gaps; adjacent hits merge into one span.
    static const std::string kTrailingPunct = ".,;:!?\"')([]";
    std::vector<CharSpan> words;
    {
        std::size_t cp = 0;
        while (cp < n_cp) {
            while (cp < n_cp && util::is_ascii_space(text[starts[cp]])) ++cp;
            if (cp >= n_cp) break;
            std::size_t we = cp;
            while (we < n_cp && !util::is_ascii_space(text[starts[we]])) ++we;
            words.emplace_back(cp, we);
            cp = we;
        }
    }
    std::vector<CharSpan> spans;
    std::size_t wi = 0;
    for (const auto& target : util::split(want, ' ')) {
        bool found = false;
        for (; wi < words.size(); ++wi) {
            std::string w = util::utf8_substr(text, words[wi].first, words[wi].second);
            std::size_t match_len = 0;
            if (w == target || util::ascii_lower(w) == util::ascii_lower(target)) {
                match_len = words[wi].second - words[wi].first;
            } else if (util::starts_with(util::ascii_lower(w), util::ascii_lower(target))) {
                const std::string rest = w.substr(target.size());
                bool only_punct = !rest.empty();
                for (char c : rest) {
                    if (kTrailingPunct.find(c) == std::string::npos) only_punct = false;
                }
                if (only_punct) match_len = util::utf8_length(target);
            }
            if (match_len > 0) {
                CharSpan s{words[wi].first, words[wi].first + match_len};
                if (!spans.empty() && spans.back().second + 1 == s.first) {
                    spans.back().second = s.second;  // contiguous across one space
                } else if (!spans.empty() && spans.back().second == s.first) {
                    spans.back().second = s.second;
                } else {
                    spans.push_back(s);
                }
                ++wi;
                found = true;
                break;
            }
        }
        if (!found) return {};
    }
    *used_subsequence = spans.size() > 1;
    return spans;
}

void load_tsv(const std::string& data, Builder& b) {
    std::istringstream in(data);
    std::string line;
    std::size_t lineno = 0;
    std::map<std::string, std::string> headers;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const std::string where = "line " + std::to_string(lineno);
        if (util::trim(line).empty()) continue;
        if (line[0] == '#') {
            const auto eq = line.find('=');
            if (eq != std::string::npos) {
                std::string key = util::trim(line.substr(1, eq - 1));
                std::string val = line.substr(eq + 1);
                if (!val.empty() && val.front() == ' ') val.erase(0, 1);
                headers[key] = val;
            }
            continue;
        }
        auto cols = util::split(line, '\t');
        if (cols.size() < 3) {
            b.result.errors.push_back({where, "expected id<TAB>sentence<TAB>surface<TAB>translation"});
            continue;
        }
        MweInstance inst;
        inst.id = cols[0];
        inst.text = cols[1];
        inst.surface = cols[2];

        if (headers.count("language")) inst.language = headers.at("language");
        else if (b.opts.default_language) inst.language = *b.opts.default_language;
        else {
            b.result.errors.push_back({where, "no language header and no default language"});
            continue;
        }
        if (headers.count("mwe_type")) {
            try {
                inst.mwe_type = mwe_type_from_string(headers.at("mwe_type"));
            } catch (const std::exception&) {
                b.result.errors.push_back({where, "bad mwe_type header"});
                continue;
            }
        } else {
            inst.mwe_type = b.opts.default_mwe_type.value_or(MweType::msu);
        }
        inst.source = headers.count("source") ? headers.at("source") : b.opts.default_source;

        bool ci = false, subseq = false;
        inst.spans = locate_surface(inst.text, inst.surface, &ci, &subseq);
        if (inst.spans.empty()) {
            b.result.errors.push_back({where, "surface '" + inst.surface +
                                                  "' not found in sentence"});
            continue;
        }
        if (ci) b.result.warnings.push_back(inst.id + ": surface located case-insensitively");
        if (subseq) b.result.warnings.push_back(inst.id + ": surface located as discontiguous word sequence");
        b.add(std::move(inst), where);
    }
}

void emit_tsv(const Corpus& c, std::string& out, std::vector<std::string>* warnings) {
    std::set<std::string> langs;
    std::set<std::string> types;
    for (const auto& inst : c.instances) {
        langs.insert(inst.language);
        types.insert(to_string(inst.mwe_type));
    }
    if (langs.size() == 1) out += "# language = " + *langs.begin() + "\n";
    else if (warnings) warnings->push_back("mixed languages: TSV emitted without language header");
    if (types.size() == 1) out += "# mwe_type = " + *types.begin() + "\n";
    else if (warnings) warnings->push_back("mixed mwe types: TSV emitted without mwe_type header");

    for (const auto& inst : c.instances) {
        bool ci = false, subseq = false;
        auto located = locate_surface(inst.text, inst.surface, &ci, &subseq);
        if (located != inst.spans && warnings) {
            warnings->push_back(inst.id +
                                ": TSV is lossy here (surface relocation differs from stored spans)");
        }
        out += inst.id + "\t" + inst.text + "\t" + util::collapse_whitespace(inst.surface) +
               "\t-\n";
    }
}

}  // namespace

LoadResult load_corpus_bytes(const std::string& data, CorpusFormat format,
                             const std::string& name, const LoadOptions& opts) {
    Builder b;
    b.opts = opts;
    b.result.corpus.metadata.name = name;
    switch (format) {
        case CorpusFormat::canonical_jsonl: load_jsonl(data, b); break;
        case CorpusFormat::bio_tagged: load_bio(data, b); break;
        case CorpusFormat::parallel_tsv: load_tsv(data, b); break;
    }
    if (b.result.corpus.instances.empty()) {
        std::string msg = "empty corpus: " + name;
        for (std::size_t i = 0; i < b.result.errors.size() && i < 3; ++i) {
            msg += "\n  " + b.result.errors[i].record_id + ": " + b.result.errors[i].message;
        }
        throw Error(msg);
    }
    b.result.corpus.refresh_metadata();
    return b.result;
}

LoadResult load_corpus(const std::string& path, CorpusFormat format, const LoadOptions& opts) {
    return load_corpus_bytes(util::read_file(path), format, path, opts);
}

ConvertResult convert_corpus(const Corpus& c, CorpusFormat target) {
    if (c.instances.empty()) throw Error("empty corpus");
    ConvertResult res;
    switch (target) {
        case CorpusFormat::canonical_jsonl: {
            for (const auto& inst : c.instances) {
                res.bytes += instance_to_json(inst).dump() + "\n";
            }
            break;
        }
        case CorpusFormat::bio_tagged: {
            for (const auto& inst : c.instances) {
                emit_bio_instance(inst, res.bytes, &res.warnings);
            }
            break;
        }
        case CorpusFormat::parallel_tsv: {
            emit_tsv(c, res.bytes, &res.warnings);
            break;
        }
    }
    return res;
}

Corpus balance_corpus(const Corpus& c, std::size_t n, std::uint32_t seed,
                      std::vector<std::string>* warnings) {
    std::size_t k = n;
    if (k > c.instances.size()) {
        if (warnings) {
            warnings->push_back("balance " + std::to_string(n) + " clamped to corpus size " +
                                std::to_string(c.instances.size()));
        }
        k = c.instances.size();
    }
    util::Rng rng(seed);
    auto picked = rng.sample_indices(c.instances.size(), k);
    std::sort(picked.begin(), picked.end());
    Corpus out;
    out.metadata.name = c.metadata.name;
    for (auto i : picked) out.instances.push_back(c.instances[i]);
    out.refresh_metadata();
    return out;
}

}  // namespace mweattn::corpus
