#ifndef MWEATTN_METRICS_HPP_
#define MWEATTN_METRICS_HPP_

#include <string>
#include <vector>

#include "mweattn/align.hpp"
#include "mweattn/attnio.hpp"
#include "mweattn/types.hpp"

namespace mweattn::metrics {

class SingleTokenMweError : public Error {
public:
    using Error::Error;
};

// Special tokens are excluded from both query and key sets upstream (the
// index sets passed in never contain them). By default no renormalization
// is applied after that exclusion; the excluded mass stays visible as a
// diagnostic (special_mass_curve). The alternative reading rescales each
// query row by its mass over non-special keys. within_mwe drops the
// diagonal unless include_diagonal is set.
struct MetricPolicy {
    bool renormalize_over_nonspecial = false;
    bool include_diagonal = false;
};

// Mean over context queries of the attention mass landing on MWE keys,
// as a percentage. `layer` is a row-major T x T matrix.
double context_to_mwe(const float* layer, int T, const std::vector<int>& mwe,
                      const std::vector<int>& context, const MetricPolicy& policy = {});

// Mean over MWE queries of the attention mass on *other* MWE tokens
// (diagonal excluded), as a percentage. Throws SingleTokenMweError when
// the MWE maps to fewer than two tokens. `context` is only used for the
// renormalization denominator.
double within_mwe(const float* layer, int T, const std::vector<int>& mwe,
                  const std::vector<int>& context, const MetricPolicy& policy = {});

// Applies the per-layer metric to every layer slice, in layer order.
std::vector<double> curve_for_instance(const attnio::AttentionStack& stack,
                                       const std::vector<int>& mwe,
                                       const std::vector<int>& context, MetricKind kind,
                                       const MetricPolicy& policy = {});

// Per-layer mean attention mass that non-special queries direct at special
// tokens; reported alongside curves as the mass the exclusion removed.
std::vector<double> special_mass_curve(const attnio::AttentionStack& stack,
                                       const align::TokenizedSentence& tok);

struct LayerCurve {
    std::string model_id;
    TaskTag task_tag = TaskTag::pretrained;
    MweType mwe_type = MweType::idiom;
    MetricKind metric_kind = MetricKind::context_to_mwe;
    std::vector<double> values;  // one percentage per layer
    int n_instances = 0;
    int n_skipped = 0;
};

struct ComparisonResult {
    LayerCurve baseline;
    LayerCurve tuned;
    std::vector<double> deltas;  // tuned - baseline, percentage points
};

struct TopKEntry {
    std::string label;  // "T1", "T2", ...
    int layer = 0;      // 1-based
    Zone zone = Zone::lower;
    double value = 0.0;
};

struct TopKTable {
    int k = 3;
    std::vector<TopKEntry> entries;
};

// Unweighted per-layer arithmetic mean over instance curves.
LayerCurve aggregate(const std::vector<std::vector<double>>& curves, const std::string& model_id,
                     TaskTag task_tag, MweType mwe_type, MetricKind metric_kind, int n_skipped);

// Deltas tuned - baseline; curves must share L, metric kind and MWE type.
ComparisonResult compare(const LayerCurve& tuned, const LayerCurve& baseline);

// Top k layers by value, ties broken by the lower layer index. 1-based labels.
TopKTable top_k(const LayerCurve& curve, int k = 3);

// Layer zone: for L=24, 1-8 lower / 9-16 middle / 17-24 upper; otherwise
// proportional thirds with boundaries ceil(L/3) and ceil(2L/3).
Zone zone(int layer_1based, int L);

// ---- serialization ----------------------------------------------------------

std::string curve_to_json(const LayerCurve& c);
LayerCurve curve_from_json(const std::string& text);
std::string curve_to_csv(const LayerCurve& c);
LayerCurve curve_from_csv(const std::string& text);

std::string comparison_to_json(const ComparisonResult& r);
ComparisonResult comparison_from_json(const std::string& text);
std::string comparison_to_csv(const ComparisonResult& r);

std::string topk_to_csv(const TopKTable& t);
TopKTable topk_from_csv(const std::string& text);

}  // namespace mweattn::metrics

#endif  // MWEATTN_METRICS_HPP_
