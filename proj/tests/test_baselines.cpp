#include <doctest.h>

#include <cmath>

#include "gradleak/baselines.hpp"
#include "gradleak/defense.hpp"
#include "gradleak/errors.hpp"
#include "gradleak/metrics.hpp"
#include "gradleak/rng.hpp"
#include "gradleak/simulator.hpp"

using namespace gradleak;

namespace {

sim::GradientCase make_case(sim::Mode mode, std::size_t n, sim::LatentDist latent, std::uint64_t seed,
                            std::size_t d = 64, std::size_t classes = 100) {
    sim::Scenario sc;
    sc.d = d;
    sc.classes = classes;
    sc.mode = mode;
    sc.n = n;
    sc.latent = latent;
    sc.seed = seed;
    return sim::simulate_case(sc);
}

std::size_t zeros(const Matrix& m) {
    std::size_t z = 0;
    for (double x : m.data()) z += x == 0.0;
    return z;
}

}  // namespace

TEST_CASE("idlg recovers every single-sample label") {
    for (std::uint64_t seed = 0; seed < 1000; ++seed) {
        const auto latent = seed % 2 ? sim::LatentDist::ReluLike : sim::LatentDist::TanhLike;
        const auto gc = make_case(sim::Mode::SingleSample, 1, latent, 20000 + seed, 16, 30);
        const auto r = baseline::idlg_single(gc.delta_w);
        CHECK(r.label == gc.true_labels.front());
        CHECK(r.rank_one);
    }
}

TEST_CASE("idlg refuses a two-sample update") {
    std::size_t refused = 0;
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        const auto gc = make_case(sim::Mode::MiniBatch, 2, sim::LatentDist::TanhLike, 300 + seed);
        if (gc.label_set().size() < 2) continue;
        try {
            const auto r = baseline::idlg_single(gc.delta_w);
            CHECK_FALSE(r.rank_one);
        } catch (const NotSingleSample&) {
            ++refused;
        }
    }
    CHECK(refused > 0);
    CHECK_THROWS_AS(baseline::idlg_single(Matrix{}), InvalidArgument);
}

TEST_CASE("min-column attack is exact for non-negative latents only") {
    double p_relu = 0.0, r_relu = 0.0, p_tanh = 0.0;
    const int runs = 50;
    for (int i = 0; i < runs; ++i) {
        const auto relu = make_case(sim::Mode::MiniBatch, 8, sim::LatentDist::ReluLike, 700 + i);
        const auto tanh = make_case(sim::Mode::MiniBatch, 8, sim::LatentDist::TanhLike, 800 + i);
        const auto sr = metrics::set_score(baseline::min_column_attack(relu.delta_w).labels, relu.label_set());
        const auto st = metrics::set_score(baseline::min_column_attack(tanh.delta_w).labels, tanh.label_set());
        p_relu += sr.precision;
        r_relu += sr.recall;
        p_tanh += st.precision;
    }
    CHECK(p_relu / runs == doctest::Approx(1.0));
    CHECK(r_relu / runs >= 0.95);
    CHECK(p_tanh / runs < 0.5);
}

TEST_CASE("sign defense examples and idempotence") {
    const Matrix m{{-2.0, 0.0, 3.5}, {1e-300, -0.0, -7.0}};
    const Matrix s = defense::sign_sgd(m);
    CHECK(s == Matrix{{-1.0, 0.0, 1.0}, {1.0, 0.0, -1.0}});
    CHECK(defense::sign_sgd(s) == s);
}

TEST_CASE("gradient dropping zeroes the smallest magnitudes") {
    const Matrix m{{4.0, -1.0}, {0.5, -3.0}};
    CHECK(defense::grad_drop(m, 0.5) == Matrix{{4.0, 0.0}, {0.0, -3.0}});
    CHECK(defense::grad_drop(m, 0.0) == m);
    CHECK(defense::grad_drop(m, 0.2) == m);
    CHECK_THROWS_AS(defense::grad_drop(m, 1.0), InvalidArgument);
    CHECK_THROWS_AS(defense::grad_drop(m, -0.1), InvalidArgument);

    const auto gc = make_case(sim::Mode::MiniBatch, 6, sim::LatentDist::TanhLike, 9);
    std::size_t prev = 0;
    for (double rate : {0.1, 0.3, 0.5, 0.9}) {
        const Matrix dropped = defense::grad_drop(gc.delta_w, rate);
        const auto expected = static_cast<std::size_t>(std::floor(rate * static_cast<double>(gc.delta_w.size())));
        CHECK(zeros(dropped) >= expected);
        CHECK(zeros(dropped) >= prev);
        prev = zeros(dropped);
        CHECK(defense::grad_drop(dropped, rate) == dropped);
        for (std::size_t i = 0; i < dropped.size(); ++i) {
            const double x = dropped.data()[i];
            CHECK((x == 0.0 || x == gc.delta_w.data()[i]));
        }
    }
}

TEST_CASE("defense specs describe themselves and dispatch") {
    const defense::DefenseSpec sign{defense::DefenseKind::SignSgd, 0.0};
    const defense::DefenseSpec drop{defense::DefenseKind::GradDrop, 0.5};
    CHECK(sign.describe() == "sign");
    CHECK(drop.describe() == "drop(0.5)");
    const Matrix m{{1.0, -2.0}};
    CHECK(defense::apply(sign, m) == defense::sign_sgd(m));
    CHECK(defense::apply(drop, m) == defense::grad_drop(m, 0.5));
}

TEST_CASE("set score examples") {
    const std::vector<std::size_t> truth{1, 2, 3};
    const std::vector<std::size_t> pred{2, 3, 4, 5};
    const auto s = metrics::set_score(pred, truth);
    CHECK(s.precision == doctest::Approx(0.5));
    CHECK(s.recall == doctest::Approx(2.0 / 3));
    CHECK(s.f1 == doctest::Approx(4.0 / 7));
    CHECK_FALSE(s.exact_match);

    const std::vector<std::size_t> dup{3, 1, 2, 2};
    CHECK(metrics::set_score(dup, truth).exact_match);
    const auto none = metrics::set_score(std::vector<std::size_t>{}, truth);
    CHECK(none.precision == 0.0);
    CHECK(none.f1 == 0.0);
    CHECK(metrics::length_error(3, 7) == 4);
    CHECK(metrics::length_error(7, 3) == 4);
}

TEST_CASE("set scores stay in the unit interval") {
    CounterRng rng(1);
    for (int t = 0; t < 500; ++t) {
        std::vector<std::size_t> a(rng.below(6)), b(1 + rng.below(6));
        for (auto& x : a) x = rng.below(8);
        for (auto& x : b) x = rng.below(8);
        const auto s = metrics::set_score(a, b);
        for (double v : {s.precision, s.recall, s.f1}) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
        CHECK(s.f1 <= std::max(s.precision, s.recall) + 1e-15);
        CHECK(s.f1 >= std::min(s.precision, s.recall) - 1e-15);
    }
}

TEST_CASE("word error rate examples") {
    const std::vector<std::size_t> ref{1, 2, 3, 4};
    CHECK(metrics::wer(ref, ref) == 0.0);
    CHECK(metrics::wer(ref, std::vector<std::size_t>{1, 3, 4}) == doctest::Approx(0.25));
    CHECK(metrics::wer(ref, std::vector<std::size_t>{}) == doctest::Approx(1.0));
    CHECK(metrics::wer(ref, std::vector<std::size_t>{4, 3, 2, 1}) == doctest::Approx(1.0));
    CHECK_THROWS_AS(metrics::wer(std::vector<std::size_t>{}, ref), InvalidArgument);
}

TEST_CASE("accumulator averages per-case scores") {
    metrics::Accumulator acc;
    CHECK(acc.result().cases == 0);
    acc.add({1.0, 1.0, 1.0, true}, 0);
    acc.add({0.5, 0.0, 0.0, false}, 3);
    const auto a = acc.result();
    CHECK(a.cases == 2);
    CHECK(a.precision == doctest::Approx(0.75));
    CHECK(a.exact_match == doctest::Approx(0.5));
    CHECK(a.length_error == doctest::Approx(1.5));
}
