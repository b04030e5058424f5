#include "prunesim/numerics.hpp"

#include <algorithm>
#include <numeric>

namespace prunesim {

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    Matrix m(rows.size(), rows.size() ? rows.begin()->size() : 0);
    std::size_t r = 0;
    for (const auto& row : rows) {
        if (row.size() != m.cols()) throw std::invalid_argument("ragged initializer rows");
        std::size_t c = 0;
        for (double v : row) m(r, c++) = v;
        ++r;
    }
    return m;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) throw std::invalid_argument("matmul: inner dimensions differ");
    Matrix c(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < b.cols(); ++j) {
            double acc = 0.0;
            for (std::size_t k = 0; k < a.cols(); ++k) acc += a(i, k) * b(k, j);
            c(i, j) = acc;
        }
    }
    return c;
}

std::vector<double> matvec(const Matrix& w, std::span<const double> x) {
    if (w.cols() != x.size()) throw std::invalid_argument("matvec: dimension mismatch");
    std::vector<double> y(w.rows());
    for (std::size_t i = 0; i < w.rows(); ++i) {
        double acc = 0.0;
        const auto row = w.row(i);
        for (std::size_t k = 0; k < row.size(); ++k) acc += row[k] * x[k];
        y[i] = acc;
    }
    return y;
}

std::vector<double> masked_matvec(const Matrix& w, std::span<const double> x,
                                  std::span<const int> cols) {
    if (w.cols() != x.size()) throw std::invalid_argument("masked_matvec: dimension mismatch");
    for (int c : cols) {
        if (c < 0 || static_cast<std::size_t>(c) >= w.cols())
            throw std::out_of_range("masked_matvec: column index out of range");
    }
    std::vector<double> y(w.rows());
    for (std::size_t i = 0; i < w.rows(); ++i) {
        double acc = 0.0;
        const auto row = w.row(i);
        for (int k : cols) acc += row[static_cast<std::size_t>(k)] * x[static_cast<std::size_t>(k)];
        y[i] = acc;
    }
    return y;
}

std::vector<int> rank_descending(std::span<const double> scores) {
    for (double s : scores) {
        if (std::isnan(s)) throw std::invalid_argument("rank_descending: NaN score");
    }
    std::vector<int> idx(scores.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](int a, int b) {
        if (scores[static_cast<std::size_t>(a)] != scores[static_cast<std::size_t>(b)])
            return scores[static_cast<std::size_t>(a)] > scores[static_cast<std::size_t>(b)];
        return a < b;
    });
    return idx;
}

std::vector<int> invert_permutation(std::span<const int> perm) {
    std::vector<int> inv(perm.size());
    for (std::size_t i = 0; i < perm.size(); ++i) inv[static_cast<std::size_t>(perm[i])] = static_cast<int>(i);
    return inv;
}

std::vector<double> softmax(std::span<const double> v) {
    if (v.empty()) throw std::invalid_argument("softmax: empty input");
    double mx = v[0];
    for (double x : v) mx = std::max(mx, x);
    std::vector<double> out(v.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        out[i] = std::exp(v[i] - mx);
        sum += out[i];
    }
    for (double& x : out) x /= sum;
    return out;
}

std::vector<double> rms_norm(std::span<const double> x, std::span<const double> gain) {
    if (x.size() != gain.size()) throw std::invalid_argument("rms_norm: gain size mismatch");
    double ms = 0.0;
    for (double v : x) ms += v * v;
    ms /= static_cast<double>(x.size());
    const double inv = 1.0 / std::sqrt(ms + 1e-6);
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * inv * gain[i];
    return out;
}

double l2_norm(std::span<const double> v) {
    double acc = 0.0;
    for (double x : v) acc += x * x;
    return std::sqrt(acc);
}

bool all_finite(std::span<const double> v) {
    for (double x : v) {
        if (!std::isfinite(x)) return false;
    }
    return true;
}

void require_finite(std::span<const double> v, const char* what) {
    if (!all_finite(v)) throw NonFiniteError(std::string("non-finite values in ") + what);
}

}  // namespace prunesim
