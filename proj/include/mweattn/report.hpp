#ifndef MWEATTN_REPORT_HPP_
#define MWEATTN_REPORT_HPP_

#include <string>
#include <utility>
#include <vector>

#include "mweattn/metrics.hpp"
#include "mweattn/types.hpp"

namespace mweattn::report {

struct Provenance {
    std::string corpus_hash;
    std::vector<std::string> model_ids;
    std::string config_hash;
    std::string timestamp;  // the only field allowed to differ between reruns
};

struct NamedTopK {
    std::string name;  // e.g. "toy-pos idiom context_to_mwe"
    metrics::TopKTable table;
};

struct ReportBundle {
    std::vector<metrics::LayerCurve> curves;
    std::vector<metrics::ComparisonResult> comparisons;
    std::vector<NamedTopK> topk;
    Provenance provenance;
};

struct StyleConfig {
    int width = 640;
    int height = 400;
    int margin_left = 60;
    int margin_right = 150;  // legend space
    int margin_top = 40;
    int margin_bottom = 50;
};

// Layer-by-percentage line figure, one line per curve, legend labeled by
// task tag. Curves must agree on layer count and metric kind; an empty
// selection throws. Output is deterministic for a fixed input and style.
std::string render_curves_svg(const std::vector<metrics::LayerCurve>& curves,
                              const StyleConfig& style = {});

// Signed per-layer delta bars around a zero line; zero deltas render as
// empty bars.
std::string render_deltas_svg(const metrics::ComparisonResult& comparison,
                              const StyleConfig& style = {});

// Rank-label columns T1..Tk with zone tags per cell.
std::string render_topk_markdown(const std::vector<NamedTopK>& tables);

// Emits the full tree: curves/{*.csv,*.svg}, deltas/{*.csv,*.json,*.svg},
// topk/{*.csv}, report.md and provenance.json under out_dir. Validates that
// every referenced model id appears in the provenance and that hashes are
// present.
void write_report(const ReportBundle& bundle, const std::string& out_dir,
                  const StyleConfig& style = {});

std::string provenance_to_json(const Provenance& p);

}  // namespace mweattn::report

#endif  // MWEATTN_REPORT_HPP_
