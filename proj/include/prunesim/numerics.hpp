#pragma once

#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

#include "prunesim/matrix.hpp"

namespace prunesim {

// Raised when a computation produces or encounters NaN/Inf. Mapped to its own
// process exit code by the CLI.
class NonFiniteError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Standard product with double accumulation and a fixed row-major inner loop.
// No blocking or parallel reduction: results are bit-reproducible across runs.
Matrix matmul(const Matrix& a, const Matrix& b);

// y = W x over all columns, fixed ascending-k summation order.
std::vector<double> matvec(const Matrix& w, std::span<const double> x);

// y_i = sum over k in cols of W(i,k) * x[k]. Excluded columns contribute
// exactly zero. cols must be sorted ascending; with cols = all columns the
// summation order matches matvec and the result is bit-identical.
std::vector<double> masked_matvec(const Matrix& w, std::span<const double> x,
                                  std::span<const int> cols);

// Indices ordered by score descending, ties broken by ascending index.
// NaN scores are a hard error.
std::vector<int> rank_descending(std::span<const double> scores);

// inverse[p[i]] = i for a permutation p of {0..n-1}.
std::vector<int> invert_permutation(std::span<const int> perm);

// Max-subtracted softmax.
std::vector<double> softmax(std::span<const double> v);

// y_i = x_i / sqrt(mean(x^2) + eps) * gain_i with eps = 1e-6.
std::vector<double> rms_norm(std::span<const double> x, std::span<const double> gain);

inline double silu(double x) { return x / (1.0 + std::exp(-x)); }

double l2_norm(std::span<const double> v);

bool all_finite(std::span<const double> v);

// Throws NonFiniteError when v contains NaN/Inf.
void require_finite(std::span<const double> v, const char* what);

}  // namespace prunesim
