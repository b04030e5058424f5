#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "prunesim/numerics.hpp"
#include "prunesim/rng.hpp"

using namespace prunesim;

namespace {

Matrix random_matrix(std::size_t rows, std::size_t cols, Rng& rng) {
    Matrix m(rows, cols);
    for (double& v : m.data()) v = 2.0 * rng.next_real() - 1.0;
    return m;
}

std::vector<double> random_vector(std::size_t n, Rng& rng) {
    std::vector<double> v(n);
    for (double& x : v) x = 2.0 * rng.next_real() - 1.0;
    return v;
}

// Independent oracle: plain triple loop, no shared code with matmul.
Matrix matmul_oracle(const Matrix& a, const Matrix& b) {
    Matrix c(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t k = 0; k < a.cols(); ++k)
            for (std::size_t j = 0; j < b.cols(); ++j) c(i, j) += a(i, k) * b(k, j);
    return c;
}

}  // namespace

TEST_CASE("matmul identity") {
    const Matrix a = Matrix::from_rows({{1.5, -2.0}, {0.25, 4.0}});
    const Matrix eye = Matrix::from_rows({{1.0, 0.0}, {0.0, 1.0}});
    CHECK(matmul(eye, a) == a);
    CHECK(matmul(a, eye) == a);
}

TEST_CASE("matmul hand example") {
    const Matrix a = Matrix::from_rows({{1, 2}, {3, 4}});
    const Matrix b = Matrix::from_rows({{5}, {6}});
    const Matrix c = matmul(a, b);
    CHECK(c(0, 0) == 17.0);
    CHECK(c(1, 0) == 39.0);
}

TEST_CASE("matmul matches triple-loop oracle on seeded 8x8") {
    Rng rng(42);
    const Matrix a = random_matrix(8, 8, rng);
    const Matrix b = random_matrix(8, 8, rng);
    const Matrix got = matmul(a, b);
    const Matrix want = matmul_oracle(a, b);
    for (std::size_t i = 0; i < 8; ++i)
        for (std::size_t j = 0; j < 8; ++j)
            CHECK(got(i, j) == doctest::Approx(want(i, j)).epsilon(1e-12));
}

TEST_CASE("matmul dimension mismatch throws") {
    CHECK_THROWS_AS(matmul(Matrix(2, 3), Matrix(2, 3)), std::invalid_argument);
}

TEST_CASE("matmul-vector associativity within 1e-9 relative") {
    Rng rng(7);
    const Matrix a = random_matrix(16, 16, rng);
    const Matrix b = random_matrix(16, 16, rng);
    const std::vector<double> x = random_vector(16, rng);
    const std::vector<double> lhs = matvec(matmul(a, b), x);
    const std::vector<double> rhs = matvec(a, matvec(b, x));
    for (std::size_t i = 0; i < lhs.size(); ++i) {
        const double scale = std::max({std::abs(lhs[i]), std::abs(rhs[i]), 1.0});
        CHECK(std::abs(lhs[i] - rhs[i]) / scale < 1e-9);
    }
}

TEST_CASE("masked_matvec empty set gives zero vector") {
    Rng rng(3);
    const Matrix w = random_matrix(4, 6, rng);
    const std::vector<double> x = random_vector(6, rng);
    const std::vector<int> none;
    for (double y : masked_matvec(w, x, none)) CHECK(y == 0.0);
}

TEST_CASE("masked_matvec with all columns is bit-identical to dense") {
    Rng rng(4);
    const Matrix w = random_matrix(5, 9, rng);
    const std::vector<double> x = random_vector(9, rng);
    std::vector<int> all(9);
    std::iota(all.begin(), all.end(), 0);
    const std::vector<double> masked = masked_matvec(w, x, all);
    const std::vector<double> dense = matvec(w, x);
    for (std::size_t i = 0; i < masked.size(); ++i) CHECK(masked[i] == dense[i]);
}

TEST_CASE("masked_matvec equals zero-fill oracle") {
    Rng rng(5);
    const Matrix w = random_matrix(4, 6, rng);
    const std::vector<double> x = random_vector(6, rng);
    const std::vector<int> cols = {1, 4};
    Matrix zeroed = w;
    for (std::size_t c : {0u, 2u, 3u, 5u})
        for (std::size_t r = 0; r < 4; ++r) zeroed(r, c) = 0.0;
    const std::vector<double> got = masked_matvec(w, x, cols);
    const std::vector<double> want = matvec(zeroed, x);
    for (std::size_t i = 0; i < got.size(); ++i) CHECK(got[i] == want[i]);
}

TEST_CASE("masked_matvec out-of-range column throws") {
    const Matrix w(2, 3);
    const std::vector<double> x = {1, 2, 3};
    const std::vector<int> bad = {0, 3};
    CHECK_THROWS_AS(masked_matvec(w, x, bad), std::out_of_range);
}

TEST_CASE("rank_descending basics") {
    const std::vector<double> s1 = {0.5, 0.9, 0.1};
    CHECK(rank_descending(s1) == std::vector<int>{1, 0, 2});
    const std::vector<double> ties = {0.3, 0.3, 0.3};
    CHECK(rank_descending(ties) == std::vector<int>{0, 1, 2});
    const std::vector<double> with_nan = {0.1, std::nan("")};
    CHECK_THROWS_AS(rank_descending(with_nan), std::invalid_argument);
}

TEST_CASE("rank_descending matches stable-sort oracle on random 32-vector") {
    Rng rng(11);
    std::vector<double> scores = random_vector(32, rng);
    scores[5] = scores[17];  // force a tie
    std::vector<int> oracle(32);
    std::iota(oracle.begin(), oracle.end(), 0);
    std::stable_sort(oracle.begin(), oracle.end(),
                     [&](int a, int b) { return scores[(std::size_t)a] > scores[(std::size_t)b]; });
    CHECK(rank_descending(scores) == oracle);
}

TEST_CASE("rank_descending is a sorted bijection") {
    Rng rng(13);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t n = 1 + rng.next_below(64);
        std::vector<double> scores(n);
        for (double& s : scores) s = rng.next_below(8) * 0.125;  // plenty of ties
        const std::vector<int> perm = rank_descending(scores);
        std::vector<bool> seen(n, false);
        for (int p : perm) {
            CHECK(!seen[(std::size_t)p]);
            seen[(std::size_t)p] = true;
        }
        for (std::size_t i = 0; i + 1 < n; ++i)
            CHECK(scores[(std::size_t)perm[i]] >= scores[(std::size_t)perm[i + 1]]);
    }
}

TEST_CASE("splitmix64 reference value and stream determinism") {
    Rng a(0);
    CHECK(a.next_u64() == 0xE220A8397B1DCDAFull);
    Rng b(987654321), c(987654321);
    for (int i = 0; i < 1000; ++i) CHECK(b.next_u64() == c.next_u64());
}

TEST_CASE("splitmix64 reals stay in [0,1)") {
    Rng rng(1);
    for (int i = 0; i < 1000000; ++i) {
        const double u = rng.next_real();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
    }
}

TEST_CASE("softmax normalizes and is shift-stable") {
    const std::vector<double> v = {1000.0, 1001.0, 999.0};
    const std::vector<double> p = softmax(v);
    double sum = 0.0;
    for (double x : p) {
        CHECK(x > 0.0);
        sum += x;
    }
    CHECK(sum == doctest::Approx(1.0));
    CHECK(p[1] > p[0]);
    CHECK(p[0] > p[2]);
}

TEST_CASE("rms_norm and silu sanity") {
    const std::vector<double> x = {3.0, -4.0};
    const std::vector<double> gain = {1.0, 2.0};
    const std::vector<double> y = rms_norm(x, gain);
    const double rms = std::sqrt((9.0 + 16.0) / 2.0 + 1e-6);
    CHECK(y[0] == doctest::Approx(3.0 / rms));
    CHECK(y[1] == doctest::Approx(-8.0 / rms));
    CHECK(silu(0.0) == 0.0);
    CHECK(silu(10.0) == doctest::Approx(10.0).epsilon(1e-3));
}
