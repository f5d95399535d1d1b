#include <doctest.h>

#include <unistd.h>

#include <filesystem>
#include <string>
#include <vector>

#include "mweattn/report.hpp"
#include "mweattn/util.hpp"

using namespace mweattn;
using metrics::LayerCurve;

namespace {

namespace fs = std::filesystem;

LayerCurve curve_of(std::vector<double> values, TaskTag tag, const std::string& model) {
    LayerCurve c;
    c.model_id = model;
    c.task_tag = tag;
    c.values = std::move(values);
    c.n_instances = 4;
    return c;
}

// Attribute value of the n-th occurrence of `<tag ... attr="..."`.
std::string nth_attr(const std::string& svg, const std::string& tag, const std::string& attr,
                     int n) {
    std::size_t pos = 0;
    for (int i = 0; i <= n; ++i) {
        pos = svg.find("<" + tag + " ", pos);
        REQUIRE(pos != std::string::npos);
        if (i < n) ++pos;
    }
    const auto a = svg.find(attr + "=\"", pos);
    REQUIRE(a != std::string::npos);
    const auto start = a + attr.size() + 2;
    const auto end = svg.find('"', start);
    return svg.substr(start, end - start);
}

int count_of(const std::string& hay, const std::string& needle) {
    int n = 0;
    std::size_t pos = 0;
    while ((pos = hay.find(needle, pos)) != std::string::npos) {
        ++n;
        ++pos;
    }
    return n;
}

}  // namespace

TEST_CASE("render_curves: flat curve is a horizontal polyline") {
    const auto svg = report::render_curves_svg({curve_of({20, 20, 20, 20}, TaskTag::pretrained,
                                                         "m")});
    const std::string points = nth_attr(svg, "polyline", "points", 0);
    // All y coordinates identical.
    std::vector<std::string> ys;
    for (const auto& pair : util::split(points, ' ')) {
        ys.push_back(util::split(pair, ',')[1]);
    }
    REQUIRE(ys.size() == 4);
    for (const auto& y : ys) CHECK(y == ys[0]);
}

TEST_CASE("render_curves: one legend entry per task tag") {
    const auto svg = report::render_curves_svg({
        curve_of({10, 20}, TaskTag::pretrained, "m0"),
        curve_of({15, 25}, TaskTag::pos, "m1"),
    });
    CHECK(count_of(svg, "<polyline") == 2);
    CHECK(svg.find(">pretrained</text>") != std::string::npos);
    CHECK(svg.find(">pos</text>") != std::string::npos);
}

TEST_CASE("render_curves: empty or mismatched selections are fatal") {
    CHECK_THROWS_AS(report::render_curves_svg({}), Error);
    auto a = curve_of({1, 2}, TaskTag::pos, "m");
    auto b = curve_of({1, 2, 3}, TaskTag::ner, "m");
    CHECK_THROWS_AS(report::render_curves_svg({a, b}), Error);
}

TEST_CASE("render_curves is deterministic") {
    const auto c = curve_of({3.25, 9.5, 4.75}, TaskTag::topic, "m");
    CHECK(report::render_curves_svg({c}) == report::render_curves_svg({c}));
}

TEST_CASE("render_deltas: self-comparison draws empty bars") {
    const auto c = curve_of({10, 20, 30}, TaskTag::pos, "m");
    const auto r = metrics::compare(c, c);
    const auto svg = report::render_deltas_svg(r);
    CHECK(count_of(svg, "<rect") == 3);
    CHECK(count_of(svg, "height=\"0.00\"") == 3);
}

TEST_CASE("render_deltas: signed bars sit on opposite sides of the zero line") {
    auto baseline = curve_of({10, 10}, TaskTag::pretrained, "base");
    auto tuned = curve_of({12, 7}, TaskTag::pos, "tuned");
    const auto svg = report::render_deltas_svg(metrics::compare(tuned, baseline));
    REQUIRE(count_of(svg, "<rect") == 2);
    const double y0 = util::parse_double(nth_attr(svg, "rect", "y", 0));
    const double h0 = util::parse_double(nth_attr(svg, "rect", "height", 0));
    const double y1 = util::parse_double(nth_attr(svg, "rect", "y", 1));
    const double h1 = util::parse_double(nth_attr(svg, "rect", "height", 1));
    // Bar 0 (+2) hangs above the zero line, bar 1 (-3) below it.
    CHECK(y0 + h0 == doctest::Approx(y1).epsilon(0.01));
    CHECK(h1 / h0 == doctest::Approx(1.5).epsilon(0.01));
    CHECK(svg.find("#2ca02c") != std::string::npos);
    CHECK(svg.find("#d62728") != std::string::npos);
}

TEST_CASE("render_topk_markdown: labels and zone tags") {
    std::vector<double> rising(24);
    for (int i = 0; i < 24; ++i) rising[static_cast<std::size_t>(i)] = i;
    rising[7] = 100.0;  // layer 8 -> lower zone
    rising[8] = 99.0;   // layer 9 -> middle zone
    const auto table = metrics::top_k(curve_of(rising, TaskTag::pos, "m"), 3);
    const auto md = report::render_topk_markdown({{"pos idiom", table}});
    CHECK(md.find("| T1 | T2 | T3 |") != std::string::npos);
    CHECK(md.find("8 [lower]") != std::string::npos);
    CHECK(md.find("9 [middle]") != std::string::npos);
    CHECK(md.find("24 [upper]") != std::string::npos);
}

TEST_CASE("write_report emits the documented tree and validates provenance") {
    const auto dir = (fs::temp_directory_path() /
                      ("mweattn_report_" + std::to_string(::getpid())))
                         .string();
    fs::remove_all(dir);

    report::ReportBundle bundle;
    bundle.curves.push_back(curve_of({5, 10, 15, 10}, TaskTag::pretrained, "toy-base"));
    bundle.curves.push_back(curve_of({6, 12, 18, 12}, TaskTag::pos, "toy-pos"));
    bundle.comparisons.push_back(metrics::compare(bundle.curves[1], bundle.curves[0]));
    bundle.topk.push_back({"toy-pos idiom", metrics::top_k(bundle.curves[1], 3)});
    bundle.provenance.corpus_hash = "abc";
    bundle.provenance.config_hash = "def";
    bundle.provenance.model_ids = {"toy-base", "toy-pos"};
    bundle.provenance.timestamp = "2000-01-01T00:00:00Z";

    report::write_report(bundle, dir);
    CHECK(fs::exists(fs::path(dir) / "report.md"));
    CHECK(fs::exists(fs::path(dir) / "provenance.json"));
    CHECK(fs::exists(fs::path(dir) / "curves"));
    CHECK(fs::exists(fs::path(dir) / "deltas"));
    CHECK(fs::exists(fs::path(dir) / "topk"));

    int csvs = 0, svgs = 0;
    for (const auto& e : fs::recursive_directory_iterator(dir)) {
        if (e.path().extension() == ".csv") ++csvs;
        if (e.path().extension() == ".svg") ++svgs;
    }
    CHECK(csvs >= 4);  // two curves, one comparison, one topk
    CHECK(svgs >= 2);  // grouped curve figure + delta bars

    // Emitted curve CSVs parse back to the same values.
    const auto csv = util::read_file(
        (fs::path(dir) / "curves" / "toy-base_pretrained_idiom_context_to_mwe.csv").string());
    const auto back = metrics::curve_from_csv(csv);
    CHECK(back.values == bundle.curves[0].values);

    // Rerun is byte-identical apart from provenance.json's timestamp field.
    const auto report_md = util::read_file((fs::path(dir) / "report.md").string());
    report::write_report(bundle, dir);
    CHECK(util::read_file((fs::path(dir) / "report.md").string()) == report_md);

    // Unknown model ids or missing hashes are rejected.
    auto bad = bundle;
    bad.provenance.model_ids = {"toy-base"};
    CHECK_THROWS_AS(report::write_report(bad, dir), Error);
    auto no_hash = bundle;
    no_hash.provenance.corpus_hash.clear();
    CHECK_THROWS_AS(report::write_report(no_hash, dir), Error);

    fs::remove_all(dir);
}
