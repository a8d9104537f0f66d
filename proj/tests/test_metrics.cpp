#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "support/oracles.hpp"
#include "xtrace/metrics.hpp"
#include "xtrace/rng.hpp"
#include "xtrace/simulator.hpp"

using namespace xtrace;
using metrics::RatingsMatrix;

namespace {

std::vector<double> random_vec(Rng& rng, std::size_t n, double lo = -1.0, double hi = 1.0) {
    std::vector<double> v(n);
    for (auto& x : v) x = rng.uniform(lo, hi);
    return v;
}

RatingsMatrix to_matrix(const std::vector<std::vector<double>>& rows) {
    RatingsMatrix m;
    m.n = static_cast<int>(rows.size());
    m.k = static_cast<int>(rows[0].size());
    for (const auto& r : rows) m.values.insert(m.values.end(), r.begin(), r.end());
    return m;
}

} // namespace

TEST_CASE("ccc basics") {
    CHECK(metrics::ccc(std::vector<double>{0.1, 0.5, 0.9}, std::vector<double>{0.1, 0.5, 0.9}) ==
          doctest::Approx(1.0));
    CHECK(metrics::ccc(std::vector<double>{0.2, 0.2, 0.2}, std::vector<double>{-0.4, 0.0, 0.4}) ==
          doctest::Approx(0.0));
    CHECK(metrics::ccc(std::vector<double>{1, 2, 3, 4}, std::vector<double>{2, 3, 4, 5}) ==
          doctest::Approx(2.5 / 3.5));
    CHECK(metrics::ccc(std::vector<double>{0.3, 0.3}, std::vector<double>{0.3, 0.3}) == 0.0);
    CHECK_THROWS_AS(metrics::ccc(std::vector<double>{1.0}, std::vector<double>{1.0}),
                    metrics::TooShort);
    CHECK_THROWS_AS(metrics::ccc(std::vector<double>{1, 2}, std::vector<double>{1, 2, 3}),
                    metrics::LengthMismatch);
}

TEST_CASE("ccc properties: symmetry and bounds") {
    Rng rng(31);
    for (int trial = 0; trial < 300; ++trial) {
        const std::size_t n = 2 + rng.next_u64() % 40;
        const auto x = random_vec(rng, n);
        const auto y = random_vec(rng, n);
        const double a = metrics::ccc(x, y);
        const double b = metrics::ccc(y, x);
        CHECK(a == doctest::Approx(b).epsilon(1e-12));
        CHECK(std::abs(a) <= 1.0 + 1e-12);
        CHECK(metrics::ccc(x, x) == doctest::Approx(1.0));
    }
}

TEST_CASE("mae basics and pooling") {
    CHECK(metrics::mae(std::vector<double>{1, 2}, std::vector<double>{1, 2}) == 0.0);
    CHECK(metrics::mae(std::vector<double>{0, 0}, std::vector<double>{0.5, -0.5}) ==
          doctest::Approx(0.5));
    CHECK(metrics::mae_pooled({{0.1, 0.3}, {0.2}}) == doctest::Approx(0.2));
    CHECK_THROWS_AS(metrics::mae(std::vector<double>{}, std::vector<double>{}),
                    metrics::TooShort);
}

TEST_CASE("icc31 agreement cases") {
    CHECK(metrics::icc31(to_matrix({{1, 1}, {2, 2}, {3, 3}})) == doctest::Approx(1.0));
    // consistency is invariant to a constant rater offset
    CHECK(metrics::icc31(to_matrix({{1, 1.5}, {2, 2.5}, {3, 3.5}})) == doctest::Approx(1.0));
    CHECK(metrics::icc31(to_matrix({{1, 2}, {3, 3}, {5, 4}, {2, 2}})) ==
          doctest::Approx(19.0 / 23.0));
    CHECK_THROWS_AS(metrics::icc31(to_matrix({{1, 2}, {1, 2}})), metrics::DegenerateAnova);
}

TEST_CASE("icc31 column-offset invariance") {
    Rng rng(32);
    for (int trial = 0; trial < 100; ++trial) {
        const int n = 3 + static_cast<int>(rng.next_u64() % 10);
        const int k = 2 + static_cast<int>(rng.next_u64() % 4);
        std::vector<std::vector<double>> rows(n, std::vector<double>(k));
        for (auto& r : rows)
            for (auto& v : r) v = rng.uniform(0.0, 5.0);
        const double base = metrics::icc31(to_matrix(rows));
        auto shifted = rows;
        const int col = static_cast<int>(rng.next_u64() % k);
        for (auto& r : shifted) r[col] += 0.7;
        CHECK(metrics::icc31(to_matrix(shifted)) == doctest::Approx(base).epsilon(1e-9));
    }
}

TEST_CASE("nme definition and scale invariance") {
    const Landmarks68 base = sim::canonical_base_shape();
    CHECK(metrics::nme(base, base) == 0.0);

    // every point displaced by exactly the inter-ocular distance
    const double d_io = std::hypot(base[36].x - base[45].x, base[36].y - base[45].y);
    Landmarks68 displaced = base;
    for (auto& p : displaced) p.y += d_io;
    CHECK(metrics::nme(displaced, base) == doctest::Approx(1.0));

    Rng rng(33);
    for (int trial = 0; trial < 50; ++trial) {
        Landmarks68 pred = base, gt = base;
        for (auto& p : pred) {
            p.x += rng.normal();
            p.y += rng.normal();
        }
        const double e = metrics::nme(pred, gt);
        Landmarks68 preds = pred, gts = gt;
        for (auto& p : preds) {
            p.x *= 3.0;
            p.y *= 3.0;
        }
        for (auto& p : gts) {
            p.x *= 3.0;
            p.y *= 3.0;
        }
        CHECK(metrics::nme(preds, gts) == doctest::Approx(e).epsilon(1e-12));
    }

    Landmarks68 flat{};
    CHECK_THROWS_AS(metrics::nme(base, flat), metrics::ZeroInterOcular);
}

TEST_CASE("ced_auc boundary cases") {
    CHECK(metrics::ced_auc(std::vector<double>(10, 0.0), 0.08, 50) == doctest::Approx(100.0));
    CHECK(metrics::ced_auc(std::vector<double>(10, 0.2), 0.08, 50) == doctest::Approx(0.0));
    std::vector<double> half(10, 0.0);
    for (int i = 5; i < 10; ++i) half[i] = 0.5;
    CHECK(metrics::ced_auc(half, 0.08, 50) == doctest::Approx(50.0));
}

TEST_CASE("ced_auc never decreases when errors improve") {
    Rng rng(34);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> errs = random_vec(rng, 40, 0.0, 0.2);
        std::vector<double> better = errs;
        for (auto& e : better) e *= rng.uniform();  // pointwise smaller
        const double auc0 = metrics::ced_auc(errs, 0.08, 64);
        const double auc1 = metrics::ced_auc(better, 0.08, 64);
        CHECK(auc1 >= auc0 - 1e-12);
    }
}

TEST_CASE("annotator reliability weighting") {
    SUBCASE("identical raters all get weight 1") {
        std::vector<io::ClipAnnotation> anns;
        Rng rng(35);
        for (int c = 0; c < 8; ++c) {
            const VAPoint p{rng.uniform(-0.8, 0.8), rng.uniform(-0.8, 0.8)};
            for (const char* r : {"r1", "r2", "r3"})
                anns.push_back({"c" + std::to_string(c), r, p});
        }
        const auto w = metrics::annotator_reliability(anns);
        for (const auto& [r, v] : w) CHECK(v == doctest::Approx(1.0));
    }
    SUBCASE("a constant rater lands at the floor") {
        std::vector<io::ClipAnnotation> anns;
        Rng rng(36);
        for (int c = 0; c < 12; ++c) {
            const VAPoint p{rng.uniform(-0.8, 0.8), rng.uniform(-0.8, 0.8)};
            anns.push_back({"c" + std::to_string(c), "good1", p});
            anns.push_back({"c" + std::to_string(c), "good2", p});
            anns.push_back({"c" + std::to_string(c), "flat", VAPoint{0.0, 0.0}});
        }
        const auto w = metrics::annotator_reliability(anns, 0.01);
        // good raters see a half-scale consensus (mean with the flat rater),
        // which costs consistency symmetrically: per-dim ICC 0.8, then both
        // normalize to 1. The flat rater floors at 0.01 before normalization.
        CHECK(w.at("good1") == doctest::Approx(1.0));
        CHECK(w.at("good2") == doctest::Approx(1.0));
        CHECK(w.at("flat") == doctest::Approx(0.01 / 0.8));
    }
    SUBCASE("insufficient overlap") {
        std::vector<io::ClipAnnotation> anns = {{"c1", "r1", {0.1, 0.1}},
                                                {"c1", "r2", {0.2, 0.2}},
                                                {"c2", "r1", {0.1, 0.1}},
                                                {"c2", "r2", {0.3, 0.3}},
                                                {"c3", "r3", {0.0, 0.0}}};
        CHECK_THROWS_AS(metrics::annotator_reliability(anns), metrics::InsufficientOverlap);
    }
}

TEST_CASE("wmae basics") {
    std::map<std::string, double> w = {{"r1", 1.0}, {"r2", 1.0}};
    SUBCASE("identical annotations give zero") {
        std::vector<io::ClipAnnotation> anns = {{"c1", "r1", {0.3, 0.1}},
                                                {"c1", "r2", {0.3, 0.1}}};
        const auto r = metrics::wmae(anns, w);
        CHECK(r.valence == 0.0);
        CHECK(r.arousal == 0.0);
    }
    SUBCASE("two raters, equal weights") {
        std::vector<io::ClipAnnotation> anns = {{"c1", "r1", {0.3, 0.5}},
                                                {"c1", "r2", {0.5, 0.3}}};
        const auto r = metrics::wmae(anns, w);
        CHECK(r.valence == doctest::Approx(0.2));
        CHECK(r.arousal == doctest::Approx(0.2));
    }
    SUBCASE("single-rater clip") {
        std::vector<io::ClipAnnotation> anns = {{"c1", "r1", {0.3, 0.5}}};
        CHECK_THROWS_AS(metrics::wmae(anns, w), metrics::SingleRaterClip);
    }
    SUBCASE("inverse-distance variant runs") {
        std::vector<io::ClipAnnotation> anns = {{"c1", "r1", {0.3, 0.5}},
                                                {"c1", "r2", {0.5, 0.3}},
                                                {"c1", "r3", {0.4, 0.4}}};
        const auto r = metrics::wmae(anns, {}, metrics::WmaeWeighting::inverse_distance);
        CHECK(r.valence > 0.0);
        CHECK(r.arousal > 0.0);
    }
}

TEST_CASE("metrics match their brute-force oracles on random inputs") {
    Rng rng(37);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 2 + rng.next_u64() % 50;
        const auto x = random_vec(rng, n);
        const auto y = random_vec(rng, n);
        CHECK(std::abs(metrics::ccc(x, y) - oracles::ccc(x, y)) <= 1e-9);
        CHECK(std::abs(metrics::mae(x, y) - oracles::mae(x, y)) <= 1e-9);

        const int rows_n = 2 + static_cast<int>(rng.next_u64() % 12);
        const int cols_k = 2 + static_cast<int>(rng.next_u64() % 5);
        std::vector<std::vector<double>> ratings(rows_n, std::vector<double>(cols_k));
        for (auto& r : ratings)
            for (auto& v : r) v = rng.uniform(0.0, 5.0);
        CHECK(std::abs(metrics::icc31(to_matrix(ratings)) - oracles::icc31(ratings)) <= 1e-9);

        const auto nmes = random_vec(rng, 1 + rng.next_u64() % 60, 0.0, 0.15);
        const double thr = rng.uniform(0.02, 0.12);
        const int steps = 2 + static_cast<int>(rng.next_u64() % 80);
        CHECK(std::abs(metrics::ced_auc(nmes, thr, steps) - oracles::ced_auc(nmes, thr, steps)) <=
              1e-9);
    }
}
