#include "mweattn/report.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <set>

#include <json.hpp>

#include "mweattn/util.hpp"

namespace mweattn::report {

using json = nlohmann::json;
namespace fs = std::filesystem;
namespace util = mweattn::util;

namespace {

const char* task_color(TaskTag t) {
    switch (t) {
        case TaskTag::pretrained: return "#555555";
        case TaskTag::deprel: return "#1f77b4";
        case TaskTag::pos: return "#2ca02c";
        case TaskTag::ner: return "#d62728";
        case TaskTag::topic: return "#9467bd";
    }
    return "#000000";
}

std::string fx(double v) { return util::format_fixed(v, 2); }

std::string svg_open(const StyleConfig& s) {
    return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(s.width) +
           "\" height=\"" + std::to_string(s.height) + "\" viewBox=\"0 0 " +
           std::to_string(s.width) + " " + std::to_string(s.height) +
           "\" font-family=\"sans-serif\" font-size=\"12\">\n";
}

std::string svg_text(double x, double y, const std::string& text, const std::string& extra = "") {
    return "<text x=\"" + fx(x) + "\" y=\"" + fx(y) + "\"" + (extra.empty() ? "" : " " + extra) +
           ">" + text + "</text>\n";
}

std::string svg_line(double x1, double y1, double x2, double y2, const std::string& stroke) {
    return "<line x1=\"" + fx(x1) + "\" y1=\"" + fx(y1) + "\" x2=\"" + fx(x2) + "\" y2=\"" +
           fx(y2) + "\" stroke=\"" + stroke + "\"/>\n";
}

struct Frame {
    double x0, y0, x1, y1;  // plot area, y0 = top
    double ymin, ymax;

    double px(double frac) const { return x0 + frac * (x1 - x0); }
    double py(double v) const {
        const double f = (v - ymin) / (ymax - ymin);
        return y1 - f * (y1 - y0);
    }
};

std::string axes(const Frame& f, int L, const std::string& y_label) {
    std::string out;
    out += svg_line(f.x0, f.y1, f.x1, f.y1, "#000000");
    out += svg_line(f.x0, f.y0, f.x0, f.y1, "#000000");
    // x ticks on each layer, labels thinned for dense axes
    const int label_step = L > 16 ? 4 : (L > 8 ? 2 : 1);
    for (int l = 1; l <= L; ++l) {
        const double x = f.px(L == 1 ? 0.5 : static_cast<double>(l - 1) / (L - 1));
        out += svg_line(x, f.y1, x, f.y1 + 4, "#000000");
        if (l == 1 || l == L || l % label_step == 0) {
            out += svg_text(x - 4, f.y1 + 18, std::to_string(l));
        }
    }
    for (int i = 0; i <= 5; ++i) {
        const double v = f.ymin + (f.ymax - f.ymin) * i / 5.0;
        const double y = f.py(v);
        out += svg_line(f.x0 - 4, y, f.x0, y, "#000000");
        out += svg_line(f.x0, y, f.x1, y, "#e0e0e0");
        out += svg_text(f.x0 - 44, y + 4, util::format_fixed(v, 1));
    }
    out += svg_text((f.x0 + f.x1) / 2 - 15, f.y1 + 36, "layer");
    out += svg_text(8, (f.y0 + f.y1) / 2, y_label,
                    "transform=\"rotate(-90 12 " + fx((f.y0 + f.y1) / 2) + ")\"");
    return out;
}

}  // namespace

std::string render_curves_svg(const std::vector<metrics::LayerCurve>& curves,
                              const StyleConfig& style) {
    if (curves.empty()) throw Error("render_curves: empty selection");
    const std::size_t L = curves.front().values.size();
    const MetricKind kind = curves.front().metric_kind;
    for (const auto& c : curves) {
        if (c.values.size() != L) throw Error("render_curves: curves differ in layer count");
        if (c.metric_kind != kind) throw Error("render_curves: curves differ in metric kind");
    }

    double ymax = 0.0;
    for (const auto& c : curves) {
        for (double v : c.values) ymax = std::max(ymax, v);
    }
    if (ymax <= 0.0) ymax = 1.0;
    ymax *= 1.1;

    Frame f{static_cast<double>(style.margin_left), static_cast<double>(style.margin_top),
            static_cast<double>(style.width - style.margin_right),
            static_cast<double>(style.height - style.margin_bottom), 0.0, ymax};

    std::string out = svg_open(style);
    out += svg_text(style.margin_left, 20,
                    to_string(kind) + " / " + to_string(curves.front().mwe_type),
                    "font-size=\"14\"");
    out += axes(f, static_cast<int>(L), "attention %");

    double legend_y = f.y0 + 10;
    for (const auto& c : curves) {
        const char* color = task_color(c.task_tag);
        std::string points;
        for (std::size_t l = 0; l < L; ++l) {
            const double x = f.px(L == 1 ? 0.5 : static_cast<double>(l) / (L - 1));
            const double y = f.py(c.values[l]);
            if (!points.empty()) points += " ";
            points += fx(x) + "," + fx(y);
        }
        out += "<polyline fill=\"none\" stroke=\"" + std::string(color) +
               "\" stroke-width=\"1.5\" points=\"" + points + "\"/>\n";
        out += svg_line(f.x1 + 8, legend_y, f.x1 + 28, legend_y, color);
        out += svg_text(f.x1 + 32, legend_y + 4, to_string(c.task_tag));
        legend_y += 18;
    }
    out += "</svg>\n";
    return out;
}

std::string render_deltas_svg(const metrics::ComparisonResult& comparison,
                              const StyleConfig& style) {
    const std::size_t L = comparison.deltas.size();
    if (L == 0) throw Error("render_deltas: empty comparison");

    double amax = 0.0;
    for (double d : comparison.deltas) amax = std::max(amax, std::abs(d));
    if (amax <= 0.0) amax = 1.0;
    amax *= 1.1;

    Frame f{static_cast<double>(style.margin_left), static_cast<double>(style.margin_top),
            static_cast<double>(style.width - style.margin_right),
            static_cast<double>(style.height - style.margin_bottom), -amax, amax};

    std::string out = svg_open(style);
    out += svg_text(style.margin_left, 20,
                    to_string(comparison.tuned.task_tag) + " vs " +
                        to_string(comparison.baseline.task_tag) + " / " +
                        to_string(comparison.tuned.mwe_type) + " / " +
                        to_string(comparison.tuned.metric_kind),
                    "font-size=\"14\"");
    out += axes(f, static_cast<int>(L), "delta (pp)");
    out += svg_line(f.x0, f.py(0.0), f.x1, f.py(0.0), "#000000");

    const double slot = (f.x1 - f.x0) / static_cast<double>(L);
    const double bar_w = slot * 0.6;
    for (std::size_t l = 0; l < L; ++l) {
        const double d = comparison.deltas[l];
        const double xc = f.x0 + slot * (static_cast<double>(l) + 0.5);
        const double y_zero = f.py(0.0);
        const double y_val = f.py(d);
        const double top = std::min(y_zero, y_val);
        const double h = std::abs(y_zero - y_val);
        const char* color = d >= 0.0 ? "#2ca02c" : "#d62728";
        out += "<rect x=\"" + fx(xc - bar_w / 2) + "\" y=\"" + fx(top) + "\" width=\"" +
               fx(bar_w) + "\" height=\"" + fx(h) + "\" fill=\"" + color + "\"/>\n";
    }
    out += "</svg>\n";
    return out;
}

std::string render_topk_markdown(const std::vector<NamedTopK>& tables) {
    if (tables.empty()) return "";
    int kmax = 0;
    for (const auto& t : tables) kmax = std::max(kmax, t.table.k);

    std::string out = "| selection |";
    for (int i = 1; i <= kmax; ++i) out += " T" + std::to_string(i) + " |";
    out += "\n|---|";
    for (int i = 0; i < kmax; ++i) out += "---|";
    out += "\n";
    for (const auto& t : tables) {
        out += "| " + t.name + " |";
        for (int i = 0; i < kmax; ++i) {
            if (i < static_cast<int>(t.table.entries.size())) {
                const auto& e = t.table.entries[static_cast<std::size_t>(i)];
                out += " " + std::to_string(e.layer) + " [" + to_string(e.zone) + "] |";
            } else {
                out += " |";
            }
        }
        out += "\n";
    }
    return out;
}

std::string provenance_to_json(const Provenance& p) {
    json j;
    j["corpus_hash"] = p.corpus_hash;
    j["model_ids"] = p.model_ids;
    j["config_hash"] = p.config_hash;
    j["timestamp"] = p.timestamp;
    return j.dump(2) + "\n";
}

namespace {

std::string curve_stem(const metrics::LayerCurve& c) {
    return util::sanitize_filename(c.model_id + "_" + to_string(c.task_tag) + "_" +
                                   to_string(c.mwe_type) + "_" + to_string(c.metric_kind));
}

}  // namespace

void write_report(const ReportBundle& bundle, const std::string& out_dir,
                  const StyleConfig& style) {
    if (bundle.provenance.corpus_hash.empty() || bundle.provenance.config_hash.empty()) {
        throw Error("report bundle: provenance hashes missing");
    }
    std::set<std::string> known(bundle.provenance.model_ids.begin(),
                                bundle.provenance.model_ids.end());
    auto check_model = [&](const std::string& id) {
        if (!known.count(id)) {
            throw Error("report bundle: model id '" + id + "' not in provenance");
        }
    };
    for (const auto& c : bundle.curves) check_model(c.model_id);
    for (const auto& r : bundle.comparisons) {
        check_model(r.baseline.model_id);
        check_model(r.tuned.model_id);
    }

    fs::create_directories(fs::path(out_dir) / "curves");
    fs::create_directories(fs::path(out_dir) / "deltas");
    fs::create_directories(fs::path(out_dir) / "topk");

    std::string md = "# Attention analysis report\n\n";

    // Per-curve CSV plus one figure per (metric, mwe type) group.
    md += "## Curves\n\n";
    md += "| model | task | mwe type | metric | layers | n | skipped | csv |\n";
    md += "|---|---|---|---|---|---|---|---|\n";
    std::map<std::string, std::vector<const metrics::LayerCurve*>> groups;
    for (const auto& c : bundle.curves) {
        const std::string stem = curve_stem(c);
        util::write_file((fs::path(out_dir) / "curves" / (stem + ".csv")).string(),
                         metrics::curve_to_csv(c));
        md += "| " + c.model_id + " | " + to_string(c.task_tag) + " | " + to_string(c.mwe_type) +
              " | " + to_string(c.metric_kind) + " | " + std::to_string(c.values.size()) + " | " +
              std::to_string(c.n_instances) + " | " + std::to_string(c.n_skipped) +
              " | curves/" + stem + ".csv |\n";
        groups[to_string(c.metric_kind) + "_" + to_string(c.mwe_type) + "_L" +
               std::to_string(c.values.size())]
            .push_back(&c);
    }
    md += "\n";
    for (const auto& [key, members] : groups) {
        std::vector<metrics::LayerCurve> selection;
        for (const auto* c : members) selection.push_back(*c);
        const std::string fname = "curves_" + util::sanitize_filename(key) + ".svg";
        util::write_file((fs::path(out_dir) / "curves" / fname).string(),
                         render_curves_svg(selection, style));
        md += "![" + key + "](curves/" + fname + ")\n\n";
    }

    if (!bundle.comparisons.empty()) {
        md += "## Fine-tuning deltas\n\n";
        for (const auto& r : bundle.comparisons) {
            const std::string stem = util::sanitize_filename(
                r.tuned.model_id + "_vs_" + r.baseline.model_id + "_" +
                to_string(r.tuned.mwe_type) + "_" + to_string(r.tuned.metric_kind));
            util::write_file((fs::path(out_dir) / "deltas" / (stem + ".csv")).string(),
                             metrics::comparison_to_csv(r));
            util::write_file((fs::path(out_dir) / "deltas" / (stem + ".json")).string(),
                             metrics::comparison_to_json(r));
            util::write_file((fs::path(out_dir) / "deltas" / (stem + ".svg")).string(),
                             render_deltas_svg(r, style));
            md += "![" + stem + "](deltas/" + stem + ".svg)\n\n";
        }
    }

    if (!bundle.topk.empty()) {
        md += "## Top layers\n\n";
        md += render_topk_markdown(bundle.topk);
        md += "\n";
        for (const auto& t : bundle.topk) {
            util::write_file((fs::path(out_dir) / "topk" /
                              (util::sanitize_filename(t.name) + ".csv"))
                                 .string(),
                             metrics::topk_to_csv(t.table));
        }
    }

    md += "## Provenance\n\n";
    md += "- corpus hash: `" + bundle.provenance.corpus_hash + "`\n";
    md += "- config hash: `" + bundle.provenance.config_hash + "`\n";
    md += "- models:";
    for (const auto& id : bundle.provenance.model_ids) md += " `" + id + "`";
    md += "\n- timestamp: see provenance.json\n";

    util::write_file((fs::path(out_dir) / "report.md").string(), md);
    util::write_file((fs::path(out_dir) / "provenance.json").string(),
                     provenance_to_json(bundle.provenance));
}

}  // namespace mweattn::report
