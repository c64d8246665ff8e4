#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "gradleak/errors.hpp"
#include "gradleak/linalg.hpp"
#include "gradleak/matrix.hpp"
#include "gradleak/rng.hpp"

using namespace gradleak;

namespace {

Matrix gaussian(std::size_t r, std::size_t c, std::uint64_t seed) {
    CounterRng rng(seed);
    Matrix m(r, c);
    for (double& x : m.data()) x = rng.normal();
    return m;
}

void check_svd(const Matrix& m, const linalg::SvdResult& s) {
    CHECK(relative_frobenius_error(s.reconstruct(), m) <= 1e-8);
    CHECK(linalg::column_orthonormality_error(s.left) <= 1e-10);
    CHECK(linalg::row_orthonormality_error(s.right) <= 1e-10);
    for (std::size_t i = 0; i + 1 < s.singular.size(); ++i) CHECK(s.singular[i] >= s.singular[i + 1]);
    for (double x : s.singular) CHECK(x >= 0.0);
}

}  // namespace

TEST_CASE("matrix rejects non-finite data and bad shapes") {
    CHECK_THROWS_AS(Matrix(1, 2, std::vector<double>{1.0, NAN}), InvalidArgument);
    CHECK_THROWS_AS(Matrix(1, 1, std::numeric_limits<double>::infinity()), InvalidArgument);
    CHECK_THROWS_AS(Matrix(2, 2, std::vector<double>{1.0}), DimensionError);
    CHECK_THROWS_AS((Matrix{{1.0, 2.0}, {3.0}}), DimensionError);
    const Matrix m{{1, 2}, {3, 4}};
    CHECK_THROWS_AS(m.at(2, 0), DimensionError);
    CHECK(m.at(1, 0) == 3.0);
}

TEST_CASE("matmul and matmul_tn agree with naive triple loops") {
    const Matrix a = gaussian(5, 7, 1);
    const Matrix b = gaussian(7, 3, 2);
    const Matrix c = matmul(a, b);
    const Matrix at = a.transposed();
    const Matrix d = matmul_tn(at, b);
    for (std::size_t i = 0; i < 5; ++i) {
        for (std::size_t j = 0; j < 3; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < 7; ++k) s += a(i, k) * b(k, j);
            CHECK(c(i, j) == doctest::Approx(s).epsilon(1e-14));
            CHECK(d(i, j) == doctest::Approx(s).epsilon(1e-14));
        }
    }
    CHECK_THROWS_AS(matmul(a, a), DimensionError);
}

TEST_CASE("frobenius norm survives tiny and huge magnitudes") {
    Matrix tiny(2, 2, 1e-170);
    CHECK(tiny.frobenius_norm() == doctest::Approx(2e-170));
    Matrix huge(2, 2, 1e170);
    CHECK(huge.frobenius_norm() == doctest::Approx(2e170));
}

TEST_CASE("svd of diag(3, 1)") {
    const auto s = linalg::svd(Matrix{{3, 0}, {0, 1}});
    REQUIRE(s.singular.size() == 2);
    CHECK(s.singular[0] == doctest::Approx(3.0).epsilon(1e-15));
    CHECK(s.singular[1] == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("svd of a rank-one outer product has one nonzero singular value") {
    const Matrix m{{1.0 / 3, -2.0 / 3, 1.0 / 3}, {0, 0, 0}};
    const auto s = linalg::svd(m);
    check_svd(m, s);
    CHECK(s.singular[0] > 0.5);
    CHECK(s.singular[1] <= 1e-15);
    CHECK(linalg::numeric_rank(s) == 1);
}

TEST_CASE("svd of a random 8x12 matrix, seed 7") {
    const Matrix m = gaussian(8, 12, 7);
    check_svd(m, linalg::svd(m));
}

TEST_CASE("svd quality on tall, wide, square and rank-deficient inputs") {
    for (std::uint64_t seed = 0; seed < 40; ++seed) {
        CounterRng rng(seed + 500);
        const std::size_t r = 1 + rng.below(40);
        const std::size_t c = 1 + rng.below(40);
        Matrix m = gaussian(r, c, seed);
        if (seed % 3 == 0) {
            const std::size_t k = 1 + rng.below(std::min(r, c));
            m = matmul(gaussian(r, k, seed + 1), gaussian(k, c, seed + 2));
        }
        check_svd(m, linalg::svd(m));
    }
}

TEST_CASE("svd of the zero matrix") {
    const Matrix z(3, 5);
    const auto s = linalg::svd(z);
    check_svd(z, s);
    for (double x : s.singular) CHECK(x == 0.0);
    CHECK(linalg::numeric_rank(s) == 0);
}

TEST_CASE("singular values match the Frobenius identity and transpose symmetry") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const Matrix m = gaussian(9, 14, 100 + seed);
        const auto s = linalg::svd(m);
        const auto t = linalg::svd(m.transposed());
        double sum = 0.0;
        for (std::size_t i = 0; i < s.singular.size(); ++i) {
            sum += s.singular[i] * s.singular[i];
            CHECK(s.singular[i] == doctest::Approx(t.singular[i]).epsilon(1e-12));
        }
        const double fro = m.frobenius_norm();
        CHECK(sum == doctest::Approx(fro * fro).epsilon(1e-12));
    }
}

TEST_CASE("right singular rows are sign canonical") {
    const Matrix m = gaussian(6, 9, 3);
    const auto a = linalg::svd(m);
    const auto b = linalg::svd(m * -2.0);
    for (std::size_t k = 0; k < a.right.rows(); ++k) {
        auto row = a.right.row(k);
        double biggest = 0.0;
        for (double x : row) biggest = std::max(biggest, std::abs(x));
        auto first = std::find_if(row.begin(), row.end(), [&](double x) { return std::abs(x) > 1e-12 * biggest; });
        REQUIRE(first != row.end());
        CHECK(*first > 0.0);
        for (std::size_t j = 0; j < row.size(); ++j) CHECK(b.right(k, j) == doctest::Approx(row[j]).epsilon(1e-9));
    }
}

TEST_CASE("svd reports the sweep count when it cannot converge") {
    linalg::SvdOptions opts;
    opts.max_sweeps = 1;
    try {
        linalg::svd(gaussian(10, 10, 1), opts);
        FAIL("expected ConvergenceError");
    } catch (const ConvergenceError& e) {
        CHECK(e.iterations() == 1);
    }
    CHECK_THROWS_AS(linalg::svd(Matrix{}), InvalidArgument);
}

TEST_CASE("numeric_rank examples") {
    const std::vector<double> a{3, 1, 0};
    CHECK(linalg::numeric_rank(a, linalg::default_rank_tolerance(3, 3)) == 2);
    const std::vector<double> z{0, 0};
    CHECK(linalg::numeric_rank(z, 1e-12) == 0);
    CHECK(linalg::numeric_rank(std::vector<double>{}, 1e-12) == 0);
}

TEST_CASE("numeric_rank is non-increasing in the tolerance") {
    const auto s = linalg::svd(gaussian(12, 20, 9)).singular;
    std::size_t prev = s.size();
    for (double tol : {1e-16, 1e-8, 1e-3, 0.1, 0.5, 0.9, 1.0}) {
        const std::size_t r = linalg::numeric_rank(s, tol);
        CHECK(r <= prev);
        prev = r;
    }
}

TEST_CASE("rank of H^T G equals S over 100 seeds") {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        const std::size_t S = 1 + seed % 20;
        const Matrix h = gaussian(S, 64, 1000 + seed);
        const Matrix g = gaussian(S, 100, 2000 + seed);
        const auto s = linalg::svd(matmul_tn(h, g));
        CHECK(linalg::numeric_rank(s.singular, linalg::default_rank_tolerance(64, 100)) == S);
    }
}
