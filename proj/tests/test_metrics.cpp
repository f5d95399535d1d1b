#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <vector>

#include "mweattn/metrics.hpp"
#include "mweattn/util.hpp"

using namespace mweattn;
using metrics::LayerCurve;
using metrics::MetricPolicy;

namespace {

// Brute-force double-loop oracles over membership sets; the implementation
// under test iterates index vectors instead.
double oracle_context_to_mwe(const std::vector<float>& a, int T, const std::set<int>& mwe,
                             const std::set<int>& context) {
    double acc = 0.0;
    int n = 0;
    for (int q = 0; q < T; ++q) {
        if (!context.count(q)) continue;
        ++n;
        for (int k = 0; k < T; ++k) {
            if (mwe.count(k)) acc += a[static_cast<std::size_t>(q) * T + k];
        }
    }
    return 100.0 * acc / n;
}

double oracle_within_mwe(const std::vector<float>& a, int T, const std::set<int>& mwe) {
    double acc = 0.0;
    for (int q = 0; q < T; ++q) {
        if (!mwe.count(q)) continue;
        for (int k = 0; k < T; ++k) {
            if (k != q && mwe.count(k)) acc += a[static_cast<std::size_t>(q) * T + k];
        }
    }
    return 100.0 * acc / static_cast<double>(mwe.size());
}

std::vector<float> random_row_stochastic(util::Rng& rng, int T) {
    std::vector<float> a(static_cast<std::size_t>(T) * T);
    for (int q = 0; q < T; ++q) {
        double sum = 0.0;
        std::vector<double> row(static_cast<std::size_t>(T));
        for (int k = 0; k < T; ++k) {
            row[static_cast<std::size_t>(k)] = rng.uniform01() + 1e-3;
            sum += row[static_cast<std::size_t>(k)];
        }
        for (int k = 0; k < T; ++k) {
            a[static_cast<std::size_t>(q) * T + k] = static_cast<float>(row[static_cast<std::size_t>(k)] / sum);
        }
    }
    return a;
}

std::vector<float> uniform_matrix(int T) {
    return std::vector<float>(static_cast<std::size_t>(T) * T, 1.0f / static_cast<float>(T));
}

LayerCurve make_curve(std::vector<double> values) {
    LayerCurve c;
    c.model_id = "m";
    c.values = std::move(values);
    c.n_instances = 1;
    return c;
}

}  // namespace

TEST_CASE("context_to_mwe: uniform attention gives 100*m/T") {
    const int T = 10;
    const auto a = uniform_matrix(T);
    std::vector<int> mwe = {3, 4};
    std::vector<int> context;
    for (int i = 0; i < T; ++i) {
        if (i != 3 && i != 4) context.push_back(i);
    }
    CHECK(metrics::context_to_mwe(a.data(), T, mwe, context) == doctest::Approx(20.0).epsilon(1e-6));
}

TEST_CASE("context_to_mwe: identity attention gives 0") {
    const int T = 6;
    std::vector<float> a(static_cast<std::size_t>(T) * T, 0.0f);
    for (int q = 0; q < T; ++q) a[static_cast<std::size_t>(q) * T + q] = 1.0f;
    const std::vector<int> mwe = {1, 2};
    const std::vector<int> context = {0, 3, 4, 5};
    CHECK(metrics::context_to_mwe(a.data(), T, mwe, context) == 0.0);
}

TEST_CASE("context_to_mwe matches the double-loop oracle") {
    util::Rng rng(42);
    const int T = 6;
    const auto a = random_row_stochastic(rng, T);
    const std::vector<int> mwe = {1, 2};
    const std::vector<int> context = {0, 3, 4, 5};
    const double got = metrics::context_to_mwe(a.data(), T, mwe, context);
    const double want = oracle_context_to_mwe(a, T, {1, 2}, {0, 3, 4, 5});
    CHECK(std::abs(got - want) < 1e-9);
}

TEST_CASE("context_to_mwe: degenerate index sets throw") {
    const auto a = uniform_matrix(4);
    CHECK_THROWS_AS(metrics::context_to_mwe(a.data(), 4, {}, {0, 1}), Error);
    CHECK_THROWS_AS(metrics::context_to_mwe(a.data(), 4, {2, 3}, {}), align::ContextEmptyError);
    CHECK_THROWS_AS(metrics::context_to_mwe(a.data(), 4, {1, 2}, {2, 3}), Error);  // overlap
    CHECK_THROWS_AS(metrics::context_to_mwe(a.data(), 4, {1, 9}, {0}), Error);     // range
}

TEST_CASE("within_mwe: uniform attention gives 100*(m-1)/T") {
    const int T = 10;
    const auto a = uniform_matrix(T);
    CHECK(metrics::within_mwe(a.data(), T, {3, 4}, {}) == doctest::Approx(10.0).epsilon(1e-6));
}

TEST_CASE("within_mwe: saturated pair gives 100") {
    const int T = 6;
    std::vector<float> a(static_cast<std::size_t>(T) * T, 0.0f);
    for (int q = 0; q < T; ++q) a[static_cast<std::size_t>(q) * T] = 1.0f;
    std::fill(a.begin() + 3 * T, a.begin() + 3 * T + T, 0.0f);
    std::fill(a.begin() + 4 * T, a.begin() + 4 * T + T, 0.0f);
    a[3 * T + 4] = 1.0f;
    a[4 * T + 3] = 1.0f;
    CHECK(metrics::within_mwe(a.data(), T, {3, 4}, {}) == doctest::Approx(100.0));
}

TEST_CASE("within_mwe matches the loop oracle") {
    util::Rng rng(43);
    const int T = 8;
    const auto a = random_row_stochastic(rng, T);
    const double got = metrics::within_mwe(a.data(), T, {2, 5, 6}, {});
    const double want = oracle_within_mwe(a, T, {2, 5, 6});
    CHECK(std::abs(got - want) < 1e-9);
}

TEST_CASE("within_mwe: single-token MWE raises the dedicated error") {
    const auto a = uniform_matrix(4);
    CHECK_THROWS_AS(metrics::within_mwe(a.data(), 4, {2}, {}), metrics::SingleTokenMweError);
}

TEST_CASE("within_mwe: diagonal flag brings self-attention back in") {
    const int T = 4;
    std::vector<float> a(static_cast<std::size_t>(T) * T, 0.0f);
    for (int q = 0; q < T; ++q) a[static_cast<std::size_t>(q) * T + q] = 1.0f;
    CHECK(metrics::within_mwe(a.data(), T, {1, 2}, {}) == 0.0);
    MetricPolicy with_diag;
    with_diag.include_diagonal = true;
    CHECK(metrics::within_mwe(a.data(), T, {1, 2}, {}, with_diag) == doctest::Approx(100.0));
}

TEST_CASE("renormalization rescales rows over non-special mass") {
    // Two non-special tokens carry half the mass; renormalizing doubles the
    // reading. mwe={1}, context={2}; token 0 is special with mass 0.5.
    const int T = 3;
    std::vector<float> a = {1.0f / 3, 1.0f / 3, 1.0f / 3,
                            0.5f, 0.25f, 0.25f,
                            0.5f, 0.25f, 0.25f};
    const std::vector<int> mwe = {1};
    const std::vector<int> context = {2};
    CHECK(metrics::context_to_mwe(a.data(), T, mwe, context) == doctest::Approx(25.0));
    MetricPolicy renorm;
    renorm.renormalize_over_nonspecial = true;
    CHECK(metrics::context_to_mwe(a.data(), T, mwe, context, renorm) == doctest::Approx(50.0));
}

TEST_CASE("property: metrics stay in [0,100] and are relabeling-invariant") {
    util::Rng rng(2025);
    for (int iter = 0; iter < 200; ++iter) {
        const int T = 3 + static_cast<int>(rng.bounded(14));
        const auto a = random_row_stochastic(rng, T);

        std::vector<int> perm(static_cast<std::size_t>(T));
        std::iota(perm.begin(), perm.end(), 0);
        std::vector<std::size_t> p(perm.begin(), perm.end());
        rng.shuffle(p);

        // Random disjoint sets: mwe of size >= 2, context from the rest.
        std::vector<std::size_t> idx(static_cast<std::size_t>(T));
        std::iota(idx.begin(), idx.end(), 0);
        rng.shuffle(idx);
        const std::size_t m = 2 + rng.bounded(static_cast<std::uint32_t>(T - 2));
        std::vector<int> mwe(idx.begin(), idx.begin() + static_cast<long>(m));
        std::vector<int> context(idx.begin() + static_cast<long>(m), idx.end());
        std::sort(mwe.begin(), mwe.end());
        std::sort(context.begin(), context.end());
        if (context.empty()) continue;

        const double c2m = metrics::context_to_mwe(a.data(), T, mwe, context);
        const double wm = metrics::within_mwe(a.data(), T, mwe, context);
        CHECK(c2m >= 0.0);
        CHECK(c2m <= 100.0 + 1e-9);
        CHECK(wm >= 0.0);
        CHECK(wm <= 100.0 + 1e-9);

        // Apply the permutation to the matrix and both index sets.
        std::vector<float> b(a.size());
        for (int q = 0; q < T; ++q) {
            for (int k = 0; k < T; ++k) {
                b[p[static_cast<std::size_t>(q)] * static_cast<std::size_t>(T) + p[static_cast<std::size_t>(k)]] =
                    a[static_cast<std::size_t>(q) * T + k];
            }
        }
        auto map_set = [&](const std::vector<int>& s) {
            std::vector<int> out;
            for (int i : s) out.push_back(static_cast<int>(p[static_cast<std::size_t>(i)]));
            std::sort(out.begin(), out.end());
            return out;
        };
        const double c2m_p = metrics::context_to_mwe(b.data(), T, map_set(mwe), map_set(context));
        const double wm_p = metrics::within_mwe(b.data(), T, map_set(mwe), map_set(context));
        CHECK(std::abs(c2m - c2m_p) < 1e-9);
        CHECK(std::abs(wm - wm_p) < 1e-9);
    }
}

TEST_CASE("saturation: context mass entirely on MWE columns reads 100") {
    const int T = 5;
    const std::vector<int> mwe = {1, 3};
    const std::vector<int> context = {0, 2, 4};
    std::vector<float> a(static_cast<std::size_t>(T) * T, 0.0f);
    for (int q : context) {
        a[static_cast<std::size_t>(q) * T + 1] = 0.7f;
        a[static_cast<std::size_t>(q) * T + 3] = 0.3f;
    }
    for (int q : mwe) a[static_cast<std::size_t>(q) * T + 0] = 1.0f;
    CHECK(metrics::context_to_mwe(a.data(), T, mwe, context) == doctest::Approx(100.0));
}

TEST_CASE("curve_for_instance applies the metric per layer") {
    const int T = 10;
    auto stack = attnio::AttentionStack::zeros(2, T);
    for (int q = 0; q < T; ++q) {
        for (int k = 0; k < T; ++k) stack.at(0, q, k) = 0.1f;
        stack.at(1, q, q) = 1.0f;
    }
    std::vector<int> mwe = {3, 4};
    std::vector<int> context;
    for (int i = 0; i < T; ++i) {
        if (i != 3 && i != 4) context.push_back(i);
    }
    const auto curve =
        metrics::curve_for_instance(stack, mwe, context, MetricKind::context_to_mwe, {});
    REQUIRE(curve.size() == 2);
    CHECK(curve[0] == doctest::Approx(20.0));
    CHECK(curve[1] == 0.0);
}

TEST_CASE("aggregate: idempotent on identical curves, mean otherwise") {
    const std::vector<double> base = {5.0, 10.0, 15.0};
    const auto same = metrics::aggregate({base, base, base}, "m", TaskTag::pretrained,
                                         MweType::idiom, MetricKind::context_to_mwe, 0);
    CHECK(same.values == base);
    CHECK(same.n_instances == 3);

    const auto mean = metrics::aggregate({{0.0, 0.0}, {100.0, 100.0}}, "m", TaskTag::pretrained,
                                         MweType::idiom, MetricKind::context_to_mwe, 2);
    CHECK(mean.values == std::vector<double>{50.0, 50.0});
    CHECK(mean.n_skipped == 2);

    CHECK_THROWS_AS(metrics::aggregate({}, "m", TaskTag::pretrained, MweType::idiom,
                                       MetricKind::context_to_mwe, 0),
                    Error);
}

TEST_CASE("aggregate matches a loop oracle on fuzzed curves") {
    util::Rng rng(9);
    const int L = 6;
    std::vector<std::vector<double>> curves;
    for (int i = 0; i < 50; ++i) {
        std::vector<double> c(L);
        for (auto& v : c) v = rng.uniform01() * 100.0;
        curves.push_back(std::move(c));
    }
    const auto agg = metrics::aggregate(curves, "m", TaskTag::pos, MweType::msu,
                                        MetricKind::within_mwe, 0);
    for (int l = 0; l < L; ++l) {
        double acc = 0.0;
        for (const auto& c : curves) acc += c[static_cast<std::size_t>(l)];
        CHECK(agg.values[static_cast<std::size_t>(l)] ==
              doctest::Approx(acc / curves.size()).epsilon(1e-12));
    }
}

TEST_CASE("compare: self-comparison is exactly zero, deltas antisymmetric") {
    auto c = make_curve({10.0, 20.0, 30.0});
    const auto self = metrics::compare(c, c);
    for (double d : self.deltas) CHECK(d == 0.0);

    auto baseline = make_curve({10.0, 10.0});
    auto tuned = make_curve({12.0, 7.0});
    const auto r = metrics::compare(tuned, baseline);
    CHECK(r.deltas == std::vector<double>{2.0, -3.0});
    const auto swapped = metrics::compare(baseline, tuned);
    for (std::size_t l = 0; l < r.deltas.size(); ++l) {
        CHECK(swapped.deltas[l] == -r.deltas[l]);
    }

    auto other = make_curve({1.0, 2.0, 3.0});
    CHECK_THROWS_AS(metrics::compare(tuned, other), Error);
    auto wrong_kind = make_curve({1.0, 2.0});
    wrong_kind.metric_kind = MetricKind::within_mwe;
    CHECK_THROWS_AS(metrics::compare(tuned, wrong_kind), Error);
}

TEST_CASE("top_k: descending order with lower-layer tie break") {
    std::vector<double> rising(24);
    std::iota(rising.begin(), rising.end(), 1.0);
    const auto t = metrics::top_k(make_curve(rising), 3);
    REQUIRE(t.entries.size() == 3);
    CHECK(t.entries[0].label == "T1");
    CHECK(t.entries[0].layer == 24);
    CHECK(t.entries[1].layer == 23);
    CHECK(t.entries[2].layer == 22);
    CHECK(t.entries[0].zone == Zone::upper);

    // Equal maxima at layers 2 and 5: the lower layer wins T1.
    const auto tie = metrics::top_k(make_curve({1.0, 9.0, 2.0, 3.0, 9.0, 0.0}), 3);
    CHECK(tie.entries[0].layer == 2);
    CHECK(tie.entries[1].layer == 5);
    CHECK(tie.entries[2].layer == 4);

    CHECK_THROWS_AS(metrics::top_k(make_curve({1.0, 2.0}), 0), Error);
    CHECK_THROWS_AS(metrics::top_k(make_curve({1.0, 2.0}), 3), Error);
}

TEST_CASE("top_k agrees with a sort-based oracle on fuzzed curves") {
    util::Rng rng(13);
    for (int iter = 0; iter < 100; ++iter) {
        const int L = 3 + static_cast<int>(rng.bounded(22));
        std::vector<double> values(static_cast<std::size_t>(L));
        for (auto& v : values) v = std::floor(rng.uniform01() * 10.0);  // force ties
        const int k = 1 + static_cast<int>(rng.bounded(static_cast<std::uint32_t>(L)));
        const auto t = metrics::top_k(make_curve(values), k);

        std::vector<int> order(static_cast<std::size_t>(L));
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](int a, int b) {
            if (values[static_cast<std::size_t>(a)] != values[static_cast<std::size_t>(b)]) {
                return values[static_cast<std::size_t>(a)] > values[static_cast<std::size_t>(b)];
            }
            return a < b;
        });
        REQUIRE(t.entries.size() == static_cast<std::size_t>(k));
        for (int i = 0; i < k; ++i) {
            CHECK(t.entries[static_cast<std::size_t>(i)].layer ==
                  order[static_cast<std::size_t>(i)] + 1);
        }
        // Values non-increasing along ranks.
        for (int i = 1; i < k; ++i) {
            CHECK(t.entries[static_cast<std::size_t>(i - 1)].value >=
                  t.entries[static_cast<std::size_t>(i)].value);
        }
    }
}

TEST_CASE("zone: 24-layer boundaries and proportional thirds") {
    CHECK(metrics::zone(1, 24) == Zone::lower);
    CHECK(metrics::zone(8, 24) == Zone::lower);
    CHECK(metrics::zone(9, 24) == Zone::middle);
    CHECK(metrics::zone(16, 24) == Zone::middle);
    CHECK(metrics::zone(17, 24) == Zone::upper);
    CHECK(metrics::zone(24, 24) == Zone::upper);

    // Proportional rule, boundaries ceil(L/3) and ceil(2L/3).
    CHECK(metrics::zone(1, 6) == Zone::lower);
    CHECK(metrics::zone(2, 6) == Zone::lower);
    CHECK(metrics::zone(3, 6) == Zone::middle);
    CHECK(metrics::zone(4, 6) == Zone::middle);
    CHECK(metrics::zone(5, 6) == Zone::upper);
    CHECK(metrics::zone(6, 6) == Zone::upper);

    // zone() partitions [1, L] for any L.
    for (int L : {1, 2, 3, 5, 6, 12, 24, 25}) {
        int last = 0;  // lower=0, middle=1, upper=2 must be non-decreasing
        for (int l = 1; l <= L; ++l) {
            const int z = static_cast<int>(metrics::zone(l, L));
            CHECK(z >= last);
            last = z;
        }
    }
    CHECK_THROWS_AS(metrics::zone(0, 4), Error);
    CHECK_THROWS_AS(metrics::zone(5, 4), Error);
}

TEST_CASE("curve CSV and JSON round-trip") {
    LayerCurve c;
    c.model_id = "toy-base";
    c.task_tag = TaskTag::pos;
    c.mwe_type = MweType::msu;
    c.metric_kind = MetricKind::within_mwe;
    c.values = {1.25, 33.333333333333336, 0.0, 99.0};
    c.n_instances = 18;
    c.n_skipped = 2;

    const auto from_json = metrics::curve_from_json(metrics::curve_to_json(c));
    CHECK(from_json.model_id == c.model_id);
    CHECK(from_json.values == c.values);
    CHECK(from_json.n_skipped == c.n_skipped);

    const auto from_csv = metrics::curve_from_csv(metrics::curve_to_csv(c));
    CHECK(from_csv.model_id == c.model_id);
    CHECK(from_csv.task_tag == c.task_tag);
    CHECK(from_csv.mwe_type == c.mwe_type);
    CHECK(from_csv.metric_kind == c.metric_kind);
    CHECK(from_csv.values == c.values);  // exact via shortest round-trip formatting
    CHECK(from_csv.n_instances == c.n_instances);
    CHECK(from_csv.n_skipped == c.n_skipped);
}

TEST_CASE("topk CSV round-trips, comparison JSON round-trips") {
    auto curve = make_curve({4.0, 8.0, 1.0, 8.0, 2.0});
    const auto t = metrics::top_k(curve, 3);
    const auto back = metrics::topk_from_csv(metrics::topk_to_csv(t));
    CHECK(back.k == t.k);
    REQUIRE(back.entries.size() == t.entries.size());
    for (std::size_t i = 0; i < t.entries.size(); ++i) {
        CHECK(back.entries[i].label == t.entries[i].label);
        CHECK(back.entries[i].layer == t.entries[i].layer);
        CHECK(back.entries[i].zone == t.entries[i].zone);
        CHECK(back.entries[i].value == t.entries[i].value);
    }

    auto baseline = make_curve({10.0, 10.0});
    auto tuned = make_curve({12.0, 7.0});
    const auto cmp = metrics::compare(tuned, baseline);
    const auto cmp_back = metrics::comparison_from_json(metrics::comparison_to_json(cmp));
    CHECK(cmp_back.deltas == cmp.deltas);
    CHECK(cmp_back.baseline.values == cmp.baseline.values);
}
