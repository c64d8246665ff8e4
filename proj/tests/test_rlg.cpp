#include <doctest.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "gradleak/errors.hpp"
#include "gradleak/lp.hpp"
#include "gradleak/rlg.hpp"
#include "gradleak/rng.hpp"
#include "gradleak/simulator.hpp"

using namespace gradleak;

namespace {

sim::GradientCase batch_case(std::size_t d, std::size_t classes, std::size_t n, std::uint64_t seed,
                             sim::LatentDist latent = sim::LatentDist::TanhLike) {
    sim::Scenario sc;
    sc.d = d;
    sc.classes = classes;
    sc.n = n;
    sc.latent = latent;
    sc.seed = seed;
    return sim::simulate_case(sc);
}

// Exact planar check: the feasible directions form a cone bounded by rays
// orthogonal to some point, so those rays and -p_c cover every optimum.
bool planar_separable(const Matrix& pts, std::size_t c, std::size_t grid) {
    std::vector<std::array<double, 2>> dirs;
    const double pcx = pts(c, 0), pcy = pts(c, 1);
    dirs.push_back({-pcx, -pcy});
    for (std::size_t j = 0; j < pts.rows(); ++j) {
        dirs.push_back({-pts(j, 1), pts(j, 0)});
        dirs.push_back({pts(j, 1), -pts(j, 0)});
    }
    for (std::size_t t = 0; t < grid; ++t) {
        const double a = 2.0 * std::numbers::pi * static_cast<double>(t) / static_cast<double>(grid);
        dirs.push_back({std::cos(a), std::sin(a)});
    }
    for (auto r : dirs) {
        const double len = std::hypot(r[0], r[1]);
        if (len == 0.0) continue;
        r[0] /= len;
        r[1] /= len;
        if (r[0] * pcx + r[1] * pcy >= -1e-9) continue;
        bool ok = true;
        for (std::size_t j = 0; j < pts.rows() && ok; ++j)
            if (j != c && r[0] * pts(j, 0) + r[1] * pts(j, 1) < -1e-12) ok = false;
        if (ok) return true;
    }
    return false;
}

}  // namespace

TEST_CASE("l1 cone distance examples") {
    const Matrix outside{{1, 0}, {0, 1}, {1, 1}};
    const std::vector<std::size_t> cols{1, 2};
    const auto far = lp::l1_cone_distance(outside, 0, cols);
    CHECK(far.distance == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(far.separator.size() == 2);

    const Matrix inside{{1, 0}, {2, -1}, {0, 1}};
    const auto near = lp::l1_cone_distance(inside, 0, cols);
    CHECK(near.distance == doctest::Approx(0.0).scale(1.0));
    CHECK(near.distance <= 1e-12);
}

TEST_CASE("lp feasibility of hand-built point sets") {
    rlg::RlgConfig cfg;
    // A lone negative direction is separable; a positive combination is not.
    const Matrix pts{{1, 0}, {0, 1}, {-1, 1}};
    CHECK(rlg::lp_feasible(pts, 0, cfg));
    const Matrix mixed{{1, 1}, {1, 0}, {0, 1}};
    CHECK_FALSE(rlg::lp_feasible(mixed, 0, cfg));
    CHECK(rlg::lp_feasible(mixed, 1, cfg));
    CHECK_THROWS_AS(rlg::lp_feasible(mixed, 3, cfg), InvalidArgument);
}

TEST_CASE("lp feasibility agrees with an exact planar oracle") {
    rlg::RlgConfig cfg;
    std::size_t feasible = 0, total = 0;
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        CounterRng rng(seed + 300);
        Matrix pts(12, 2);
        for (double& x : pts.data()) x = rng.normal();
        for (std::size_t c = 0; c < 12; ++c) {
            const bool oracle = planar_separable(pts, c, 10000);
            CHECK(rlg::lp_feasible(pts, c, cfg) == oracle);
            feasible += oracle;
            ++total;
        }
    }
    CHECK(feasible > 0);
    CHECK(feasible < total);
}

TEST_CASE("extract_q returns orthonormal rows and rejects bad inputs") {
    const auto gc = batch_case(40, 60, 5, 12);
    rlg::RlgConfig cfg;
    const auto q = rlg::extract_q(gc.delta_w, cfg);
    CHECK(q.S == 5);
    CHECK(q.Q.rows() == 5);
    CHECK(q.Q.cols() == 60);
    for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t k = 0; k < 5; ++k)
            CHECK(dot(q.Q.row(i), q.Q.row(k)) == doctest::Approx(i == k ? 1.0 : 0.0).scale(1.0).epsilon(1e-12));

    CHECK_THROWS_AS(rlg::extract_q(Matrix(4, 6), cfg), DegenerateUpdate);
    cfg.assume_S = 40;
    CHECK_THROWS_AS(rlg::extract_q(gc.delta_w, cfg), InvalidArgument);
    cfg.assume_S = 0;
    CHECK_THROWS_AS(rlg::extract_q(gc.delta_w, cfg), InvalidArgument);

    const auto full = batch_case(6, 8, 20, 3);
    CHECK_THROWS_AS(rlg::extract_q(full.delta_w, rlg::RlgConfig{}), AssumptionViolated);
}

TEST_CASE("rlg recovers batch labels exactly") {
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        const auto gc = batch_case(64, 100, 1 + seed % 12, 400 + seed);
        const auto pred = rlg::rlg_attack(gc.delta_w, rlg::RlgConfig{});
        CHECK(pred.inferred_S == gc.true_S);
        CHECK(pred.labels == gc.label_set());
    }
}

TEST_CASE("screening never changes the answer") {
    for (std::uint64_t seed = 0; seed < 8; ++seed) {
        const auto gc = batch_case(48, 300, 4 + seed, 600 + seed);
        rlg::RlgConfig exhaustive;
        exhaustive.screening = false;
        rlg::RlgConfig screened;
        screened.screen_top_m = 10 + seed;
        const auto a = rlg::rlg_attack(gc.delta_w, exhaustive);
        const auto b = rlg::rlg_attack(gc.delta_w, screened);
        CHECK(a.labels == b.labels);
        CHECK(b.labels == gc.label_set());
    }
}

TEST_CASE("screening certificates agree with the full lp on a wide vocabulary") {
    const auto gc = batch_case(64, 4000, 10, 16000);
    rlg::RlgConfig cfg;
    const auto q = rlg::extract_q(gc.delta_w, cfg);
    const Matrix points = q.Q.transposed();
    const auto sr = rlg::screen(points, cfg);
    CHECK(sr.candidates.size() + sr.proven_feasible.size() + sr.rejected.size() == 4000);
    CHECK(sr.rejected.size() > 3000);
    for (std::size_t c : sr.proven_feasible) CHECK(rlg::lp_feasible(points, c, cfg));
    // A sample of rejections, checked against the unrestricted program.
    for (std::size_t i = 0; i < sr.rejected.size(); i += 97) CHECK_FALSE(rlg::lp_feasible(points, sr.rejected[i], cfg));
    CHECK(rlg::rlg_attack(gc.delta_w, cfg).labels == gc.label_set());
}

TEST_CASE("prediction is invariant to scaling and independent of worker count") {
    const auto gc = batch_case(32, 700, 7, 21);
    rlg::RlgConfig one;
    rlg::RlgConfig many;
    many.jobs = 4;
    const auto base = rlg::rlg_attack(gc.delta_w, one);
    CHECK(rlg::rlg_attack(gc.delta_w, many).labels == base.labels);
    CHECK(rlg::rlg_attack(gc.delta_w * 1e-6, one).labels == base.labels);
    CHECK(rlg::rlg_attack(gc.delta_w * 1e6, one).labels == base.labels);
    CHECK(rlg::rlg_attack(gc.delta_w * 0.5, many).labels == base.labels);
}

TEST_CASE("lp iteration cap raises unless failures count as infeasible") {
    const auto gc = batch_case(32, 60, 6, 5);
    rlg::RlgConfig cfg;
    cfg.screening = false;
    cfg.simplex.max_iterations = 1;
    CHECK_THROWS_AS(rlg::rlg_attack(gc.delta_w, cfg), ConvergenceError);
    cfg.lp_failure_as_infeasible = true;
    const auto pred = rlg::rlg_attack(gc.delta_w, cfg);
    CHECK(pred.labels.size() <= gc.label_set().size());
}

TEST_CASE("config validation") {
    rlg::RlgConfig cfg;
    cfg.lp_margin = 0.0;
    CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
    cfg = {};
    cfg.rank_tol_rel = -1.0;
    CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
    cfg = {};
    cfg.screen_top_m = 0;
    CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
}
