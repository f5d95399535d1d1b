#include "mweattn/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "mweattn/util.hpp"

namespace mweattn::metrics {

using json = nlohmann::json;
namespace util = mweattn::util;

namespace {

void check_index_set(const std::vector<int>& s, int T, const char* name) {
    if (s.empty()) throw Error(std::string(name) + " index set is empty");
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] < 0 || s[i] >= T) {
            throw Error(std::string(name) + " index " + std::to_string(s[i]) +
                        " out of range [0, " + std::to_string(T) + ")");
        }
        if (i > 0 && s[i] <= s[i - 1]) {
            throw Error(std::string(name) + " indices must be strictly increasing");
        }
    }
}

void check_disjoint(const std::vector<int>& a, const std::vector<int>& b) {
    std::vector<int> inter;
    std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(inter));
    if (!inter.empty()) throw Error("mwe and context index sets overlap");
}

double row_mass(const float* row, const std::vector<int>& cols) {
    double s = 0.0;
    for (int k : cols) s += row[k];
    return s;
}

}  // namespace

double context_to_mwe(const float* layer, int T, const std::vector<int>& mwe,
                      const std::vector<int>& context, const MetricPolicy& policy) {
    check_index_set(mwe, T, "mwe");
    if (context.empty()) throw align::ContextEmptyError("context index set is empty");
    check_index_set(context, T, "context");
    check_disjoint(mwe, context);

    double acc = 0.0;
    for (int q : context) {
        const float* row = layer + static_cast<std::size_t>(q) * T;
        double mass = row_mass(row, mwe);
        if (policy.renormalize_over_nonspecial) {
            const double denom = mass + row_mass(row, context);
            mass = denom > 0.0 ? mass / denom : 0.0;
        }
        acc += mass;
    }
    return 100.0 * acc / static_cast<double>(context.size());
}

double within_mwe(const float* layer, int T, const std::vector<int>& mwe,
                  const std::vector<int>& context, const MetricPolicy& policy) {
    check_index_set(mwe, T, "mwe");
    if (mwe.size() < 2) {
        throw SingleTokenMweError("MWE maps to a single token; within-MWE attention undefined");
    }
    double acc = 0.0;
    for (int q : mwe) {
        const float* row = layer + static_cast<std::size_t>(q) * T;
        double mass = 0.0;
        for (int k : mwe) {
            if (k != q || policy.include_diagonal) mass += row[k];
        }
        if (policy.renormalize_over_nonspecial) {
            const double denom = row_mass(row, mwe) + row_mass(row, context);
            mass = denom > 0.0 ? mass / denom : 0.0;
        }
        acc += mass;
    }
    return 100.0 * acc / static_cast<double>(mwe.size());
}

std::vector<double> curve_for_instance(const attnio::AttentionStack& stack,
                                       const std::vector<int>& mwe,
                                       const std::vector<int>& context, MetricKind kind,
                                       const MetricPolicy& policy) {
    std::vector<double> out;
    out.reserve(stack.L);
    for (int l = 0; l < stack.L; ++l) {
        const float* layer = stack.layer(l);
        if (kind == MetricKind::context_to_mwe) {
            out.push_back(context_to_mwe(layer, stack.T, mwe, context, policy));
        } else {
            out.push_back(within_mwe(layer, stack.T, mwe, context, policy));
        }
    }
    return out;
}

std::vector<double> special_mass_curve(const attnio::AttentionStack& stack,
                                       const align::TokenizedSentence& tok) {
    if (static_cast<int>(tok.size()) != stack.T) {
        throw Error("special_mass_curve: tokenization length does not match stack T");
    }
    std::vector<int> specials;
    std::vector<int> regular;
    for (int i = 0; i < stack.T; ++i) {
        (tok.is_special[static_cast<std::size_t>(i)] ? specials : regular).push_back(i);
    }
    std::vector<double> out(static_cast<std::size_t>(stack.L), 0.0);
    if (regular.empty()) return out;
    for (int l = 0; l < stack.L; ++l) {
        const float* layer = stack.layer(l);
        double acc = 0.0;
        for (int q : regular) {
            acc += row_mass(layer + static_cast<std::size_t>(q) * stack.T, specials);
        }
        out[static_cast<std::size_t>(l)] = 100.0 * acc / static_cast<double>(regular.size());
    }
    return out;
}

LayerCurve aggregate(const std::vector<std::vector<double>>& curves, const std::string& model_id,
                     TaskTag task_tag, MweType mwe_type, MetricKind metric_kind, int n_skipped) {
    if (curves.empty()) throw Error("aggregate: no instance curves");
    const std::size_t L = curves.front().size();
    for (const auto& c : curves) {
        if (c.size() != L) throw Error("aggregate: curves differ in layer count");
    }
    LayerCurve out;
    out.model_id = model_id;
    out.task_tag = task_tag;
    out.mwe_type = mwe_type;
    out.metric_kind = metric_kind;
    out.n_instances = static_cast<int>(curves.size());
    out.n_skipped = n_skipped;
    out.values.assign(L, 0.0);
    for (const auto& c : curves) {
        for (std::size_t l = 0; l < L; ++l) out.values[l] += c[l];
    }
    for (std::size_t l = 0; l < L; ++l) out.values[l] /= static_cast<double>(curves.size());
    return out;
}

ComparisonResult compare(const LayerCurve& tuned, const LayerCurve& baseline) {
    if (tuned.values.size() != baseline.values.size()) {
        throw Error("compare: layer counts differ");
    }
    if (tuned.metric_kind != baseline.metric_kind) {
        throw Error("compare: metric kinds differ");
    }
    if (tuned.mwe_type != baseline.mwe_type) {
        throw Error("compare: MWE types differ");
    }
    ComparisonResult out;
    out.baseline = baseline;
    out.tuned = tuned;
    out.deltas.resize(tuned.values.size());
    for (std::size_t l = 0; l < tuned.values.size(); ++l) {
        out.deltas[l] = tuned.values[l] - baseline.values[l];
    }
    return out;
}

TopKTable top_k(const LayerCurve& curve, int k) {
    const int L = static_cast<int>(curve.values.size());
    if (k < 1) throw Error("top_k: k must be positive");
    if (k > L) throw Error("top_k: k exceeds layer count");

    std::vector<int> order(static_cast<std::size_t>(L));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        if (curve.values[static_cast<std::size_t>(a)] != curve.values[static_cast<std::size_t>(b)]) {
            return curve.values[static_cast<std::size_t>(a)] >
                   curve.values[static_cast<std::size_t>(b)];
        }
        return a < b;  // ties: lower layer first
    });

    TopKTable out;
    out.k = k;
    for (int i = 0; i < k; ++i) {
        TopKEntry e;
        e.label = "T" + std::to_string(i + 1);
        e.layer = order[static_cast<std::size_t>(i)] + 1;
        e.zone = zone(e.layer, L);
        e.value = curve.values[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])];
        out.entries.push_back(std::move(e));
    }
    return out;
}

Zone zone(int layer_1based, int L) {
    if (L < 1 || layer_1based < 1 || layer_1based > L) {
        throw Error("zone: layer " + std::to_string(layer_1based) + " out of range [1, " +
                    std::to_string(L) + "]");
    }
    const int lower_end = (L + 2) / 3;       // ceil(L/3); 8 for L=24
    const int middle_end = (2 * L + 2) / 3;  // ceil(2L/3); 16 for L=24
    if (layer_1based <= lower_end) return Zone::lower;
    if (layer_1based <= middle_end) return Zone::middle;
    return Zone::upper;
}

// ---- serialization ----------------------------------------------------------

namespace {

json curve_json(const LayerCurve& c) {
    json j;
    j["model_id"] = c.model_id;
    j["task_tag"] = to_string(c.task_tag);
    j["mwe_type"] = to_string(c.mwe_type);
    j["metric_kind"] = to_string(c.metric_kind);
    j["values"] = c.values;
    j["n_instances"] = c.n_instances;
    j["n_skipped"] = c.n_skipped;
    return j;
}

LayerCurve curve_from(const json& j) {
    LayerCurve c;
    c.model_id = j.at("model_id").get<std::string>();
    c.task_tag = task_tag_from_string(j.at("task_tag").get<std::string>());
    c.mwe_type = mwe_type_from_string(j.at("mwe_type").get<std::string>());
    c.metric_kind = metric_kind_from_string(j.at("metric_kind").get<std::string>());
    c.values = j.at("values").get<std::vector<double>>();
    c.n_instances = j.at("n_instances").get<int>();
    c.n_skipped = j.at("n_skipped").get<int>();
    return c;
}

std::string curve_header(const LayerCurve& c) {
    std::string out;
    out += "# model_id = " + c.model_id + "\n";
    out += "# task_tag = " + to_string(c.task_tag) + "\n";
    out += "# mwe_type = " + to_string(c.mwe_type) + "\n";
    out += "# metric_kind = " + to_string(c.metric_kind) + "\n";
    return out;
}

std::map<std::string, std::string> parse_comment_headers(const std::vector<std::string>& lines) {
    std::map<std::string, std::string> headers;
    for (const auto& line : lines) {
        if (line.empty() || line[0] != '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        std::string key = util::trim(line.substr(1, eq - 1));
        std::string val = util::trim(line.substr(eq + 1));
        headers[key] = val;
    }
    return headers;
}

std::vector<std::string> split_lines(const std::string& text) {
    std::vector<std::string> lines;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        lines.push_back(line);
    }
    return lines;
}

}  // namespace

std::string curve_to_json(const LayerCurve& c) {
    return curve_json(c).dump(2) + "\n";
}

LayerCurve curve_from_json(const std::string& text) {
    return curve_from(json::parse(text));
}

std::string curve_to_csv(const LayerCurve& c) {
    std::string out = curve_header(c);
    out += "layer,value,n,skipped\n";
    for (std::size_t l = 0; l < c.values.size(); ++l) {
        out += util::csv_join({std::to_string(l + 1), util::format_double(c.values[l]),
                               std::to_string(c.n_instances), std::to_string(c.n_skipped)}) +
               "\n";
    }
    return out;
}

LayerCurve curve_from_csv(const std::string& text) {
    const auto lines = split_lines(text);
    const auto headers = parse_comment_headers(lines);
    LayerCurve c;
    c.model_id = headers.count("model_id") ? headers.at("model_id") : "";
    c.task_tag = task_tag_from_string(headers.count("task_tag") ? headers.at("task_tag")
                                                                : "pretrained");
    c.mwe_type = mwe_type_from_string(headers.count("mwe_type") ? headers.at("mwe_type")
                                                                : "idiom");
    c.metric_kind = metric_kind_from_string(
        headers.count("metric_kind") ? headers.at("metric_kind") : "context_to_mwe");
    bool saw_header_row = false;
    for (const auto& line : lines) {
        if (line.empty() || line[0] == '#') continue;
        if (!saw_header_row) {
            saw_header_row = true;  // column names
            continue;
        }
        const auto cols = util::csv_split(line);
        if (cols.size() != 4) throw Error("curve CSV: expected 4 columns");
        c.values.push_back(util::parse_double(cols[1]));
        c.n_instances = std::stoi(cols[2]);
        c.n_skipped = std::stoi(cols[3]);
    }
    if (c.values.empty()) throw Error("curve CSV: no data rows");
    return c;
}

std::string comparison_to_json(const ComparisonResult& r) {
    json j;
    j["baseline"] = curve_json(r.baseline);
    j["tuned"] = curve_json(r.tuned);
    j["deltas"] = r.deltas;
    return j.dump(2) + "\n";
}

ComparisonResult comparison_from_json(const std::string& text) {
    const json j = json::parse(text);
    ComparisonResult r;
    r.baseline = curve_from(j.at("baseline"));
    r.tuned = curve_from(j.at("tuned"));
    r.deltas = j.at("deltas").get<std::vector<double>>();
    return r;
}

std::string comparison_to_csv(const ComparisonResult& r) {
    std::string out;
    out += "# baseline_model = " + r.baseline.model_id + "\n";
    out += "# tuned_model = " + r.tuned.model_id + "\n";
    out += "# task_tag = " + to_string(r.tuned.task_tag) + "\n";
    out += "# mwe_type = " + to_string(r.tuned.mwe_type) + "\n";
    out += "# metric_kind = " + to_string(r.tuned.metric_kind) + "\n";
    out += "layer,baseline,tuned,delta\n";
    for (std::size_t l = 0; l < r.deltas.size(); ++l) {
        out += util::csv_join({std::to_string(l + 1), util::format_double(r.baseline.values[l]),
                               util::format_double(r.tuned.values[l]),
                               util::format_double(r.deltas[l])}) +
               "\n";
    }
    return out;
}

std::string topk_to_csv(const TopKTable& t) {
    std::string out = "# k = " + std::to_string(t.k) + "\n";
    out += "label,layer,zone,value\n";
    for (const auto& e : t.entries) {
        out += util::csv_join({e.label, std::to_string(e.layer), to_string(e.zone),
                               util::format_double(e.value)}) +
               "\n";
    }
    return out;
}

TopKTable topk_from_csv(const std::string& text) {
    const auto lines = split_lines(text);
    const auto headers = parse_comment_headers(lines);
    TopKTable t;
    if (headers.count("k")) t.k = std::stoi(headers.at("k"));
    bool saw_header_row = false;
    for (const auto& line : lines) {
        if (line.empty() || line[0] == '#') continue;
        if (!saw_header_row) {
            saw_header_row = true;
            continue;
        }
        const auto cols = util::csv_split(line);
        if (cols.size() != 4) throw Error("topk CSV: expected 4 columns");
        TopKEntry e;
        e.label = cols[0];
        e.layer = std::stoi(cols[1]);
        e.zone = zone_from_string(cols[2]);
        e.value = util::parse_double(cols[3]);
        t.entries.push_back(std::move(e));
    }
    return t;
}

}  // namespace mweattn::metrics
