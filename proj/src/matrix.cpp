#include "lssa/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <string>

#include "lssa/error.hpp"

namespace lssa {

namespace {

std::string shape_str(std::size_t r, std::size_t c) {
    return std::to_string(r) + "x" + std::to_string(c);
}

}  // namespace

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> init) {
    rows_ = init.size();
    cols_ = rows_ ? init.begin()->size() : 0;
    data_.reserve(rows_ * cols_);
    for (const auto& r : init) {
        if (r.size() != cols_) throw ShapeError("ragged matrix initializer");
        data_.insert(data_.end(), r.begin(), r.end());
    }
}

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

void Matrix::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Matrix::all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double x) { return std::isfinite(x); });
}

Matrix transpose(const Matrix& a) {
    Matrix t(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
    return t;
}

namespace {

// Packed, cache-blocked GEMM. Every c[i][j] receives its k products one at a
// time in ascending k (blocks over k are visited in order and each tile
// loads c before and stores it after), so the result is bit-identical to a
// naive triple loop with an inner k loop.
using v4d = double __attribute__((vector_size(32)));

constexpr std::size_t kMr = 4;
constexpr std::size_t kNr = 8;
constexpr std::size_t kKc = 256;
constexpr std::size_t kMc = 64;
constexpr std::size_t kNc = 1024;

inline v4d load4(const double* p) {
    v4d v;
    std::memcpy(&v, p, sizeof v);
    return v;
}

inline void store4(double* p, v4d v) { std::memcpy(p, &v, sizeof v); }

void micro_kernel(const double* ap, const double* bp, double* c, std::size_t ldc, std::size_t kc,
                  std::size_t mr, std::size_t nr) {
    alignas(32) double tile[kMr][kNr] = {};
    const bool full = mr == kMr && nr == kNr;
    v4d acc[kMr][2];
    for (std::size_t r = 0; r < kMr; ++r) {
        if (full) {
            acc[r][0] = load4(c + r * ldc);
            acc[r][1] = load4(c + r * ldc + 4);
        } else {
            for (std::size_t j = 0; r < mr && j < nr; ++j) tile[r][j] = c[r * ldc + j];
            acc[r][0] = load4(&tile[r][0]);
            acc[r][1] = load4(&tile[r][4]);
        }
    }
    for (std::size_t p = 0; p < kc; ++p) {
        const v4d b0 = load4(bp + p * kNr);
        const v4d b1 = load4(bp + p * kNr + 4);
        for (std::size_t r = 0; r < kMr; ++r) {
            const double s = ap[p * kMr + r];
            const v4d sv = {s, s, s, s};
            acc[r][0] += sv * b0;
            acc[r][1] += sv * b1;
        }
    }
    for (std::size_t r = 0; r < kMr; ++r) {
        if (full) {
            store4(c + r * ldc, acc[r][0]);
            store4(c + r * ldc + 4, acc[r][1]);
        } else if (r < mr) {
            store4(&tile[r][0], acc[r][0]);
            store4(&tile[r][4], acc[r][1]);
            for (std::size_t j = 0; j < nr; ++j) c[r * ldc + j] = tile[r][j];
        }
    }
}

// Left operand element (i, p) lives at a[i * row_stride + p * k_stride].
void gemm_packed(const double* a, std::size_t row_stride, std::size_t k_stride, const double* b, double* c,
                 std::size_t m, std::size_t k, std::size_t n) {
    if (m == 0 || n == 0 || k == 0) return;
    thread_local std::vector<double> bpack, apack;
    bpack.resize(kKc * kNc);
    apack.resize(kKc * kMc);
    for (std::size_t jc = 0; jc < n; jc += kNc) {
        const std::size_t nc = std::min(kNc, n - jc);
        for (std::size_t pc = 0; pc < k; pc += kKc) {
            const std::size_t kc = std::min(kKc, k - pc);
            for (std::size_t jp = 0; jp < nc; jp += kNr) {
                const std::size_t nr = std::min(kNr, nc - jp);
                double* dst = bpack.data() + jp * kc;
                for (std::size_t p = 0; p < kc; ++p) {
                    const double* src = b + (pc + p) * n + jc + jp;
                    for (std::size_t q = 0; q < kNr; ++q) dst[p * kNr + q] = q < nr ? src[q] : 0.0;
                }
            }
            for (std::size_t ic = 0; ic < m; ic += kMc) {
                const std::size_t mc = std::min(kMc, m - ic);
                for (std::size_t ip = 0; ip < mc; ip += kMr) {
                    const std::size_t mr = std::min(kMr, mc - ip);
                    double* dst = apack.data() + ip * kc;
                    for (std::size_t p = 0; p < kc; ++p)
                        for (std::size_t r = 0; r < kMr; ++r)
                            dst[p * kMr + r] = r < mr ? a[(ic + ip + r) * row_stride + (pc + p) * k_stride] : 0.0;
                }
                for (std::size_t jp = 0; jp < nc; jp += kNr)
                    for (std::size_t ip = 0; ip < mc; ip += kMr)
                        micro_kernel(apack.data() + ip * kc, bpack.data() + jp * kc, c + (ic + ip) * n + jc + jp,
                                     n, kc, std::min(kMr, mc - ip), std::min(kNr, nc - jp));
            }
        }
    }
}

}  // namespace

void gemm_nn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
    if (!accumulate) std::fill(c.begin(), c.begin() + static_cast<std::ptrdiff_t>(m * n), 0.0);
    gemm_packed(a.data(), k, 1, b.data(), c.data(), m, k, n);
}

void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
    if (!accumulate) std::fill(c.begin(), c.begin() + static_cast<std::ptrdiff_t>(m * n), 0.0);
    gemm_packed(a.data(), 1, m, b.data(), c.data(), m, k, n);
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows())
        throw ShapeError("matmul: " + shape_str(a.rows(), a.cols()) + " by " +
                         shape_str(b.rows(), b.cols()));
    Matrix c(a.rows(), b.cols());
    gemm_nn(a.data(), b.data(), c.data(), a.rows(), a.cols(), b.cols(), false);
    return c;
}

Matrix matmul_at(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows())
        throw ShapeError("matmul_at: " + shape_str(a.rows(), a.cols()) + "^T by " +
                         shape_str(b.rows(), b.cols()));
    Matrix c(a.cols(), b.cols());
    gemm_tn(a.data(), b.data(), c.data(), a.cols(), a.rows(), b.cols(), false);
    return c;
}

Matrix matmul_bt(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.cols())
        throw ShapeError("matmul_bt: " + shape_str(a.rows(), a.cols()) + " by " +
                         shape_str(b.rows(), b.cols()) + "^T");
    return matmul(a, transpose(b));
}

void softmax_inplace(std::span<double> row) {
    if (row.empty()) throw ShapeError("softmax of empty vector");
    const double mx = *std::max_element(row.begin(), row.end());
    double sum = 0.0;
    for (double& x : row) {
        x = std::exp(x - mx);
        sum += x;
    }
    const double inv = 1.0 / sum;
    for (double& x : row) x *= inv;
}

std::vector<double> softmax_row(std::span<const double> logits) {
    std::vector<double> out(logits.begin(), logits.end());
    softmax_inplace(out);
    return out;
}

double cross_entropy(std::span<const double> probs, std::size_t target) {
    if (target >= probs.size())
        throw IndexError("cross_entropy: target " + std::to_string(target) + " out of range " +
                         std::to_string(probs.size()));
    return -std::log(std::max(probs[target], kProbFloor));
}

double logistic(double x) noexcept {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

}  // namespace lssa
