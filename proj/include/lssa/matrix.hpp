#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace lssa {

/// Floor applied to every probability before taking a logarithm.
inline constexpr double kProbFloor = 1e-12;

/// Dense row-major matrix of doubles.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    Matrix(std::initializer_list<std::initializer_list<double>> init);

    static Matrix identity(std::size_t n);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const noexcept {
        return {data_.data() + r * cols_, cols_};
    }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }

    void fill(double v);
    bool same_shape(const Matrix& o) const noexcept { return rows_ == o.rows_ && cols_ == o.cols_; }
    bool all_finite() const noexcept;

    bool operator==(const Matrix&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

Matrix transpose(const Matrix& a);

/// a[m×k] · b[k×n]. Every output entry sums over k in ascending order, so the
/// result is bit-identical to a naive triple loop.
Matrix matmul(const Matrix& a, const Matrix& b);

/// aᵀ · b for a[k×m], b[k×n]; same summation order guarantee.
Matrix matmul_at(const Matrix& a, const Matrix& b);

/// a · bᵀ for a[m×k], b[n×k]; same summation order guarantee.
Matrix matmul_bt(const Matrix& a, const Matrix& b);

/// Raw kernels on row-major buffers: c[m×n] (+)= a[m×k] · b[k×n].
void gemm_nn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n, bool accumulate);

/// c[m×n] (+)= a[k×m]ᵀ · b[k×n].
void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n, bool accumulate);

/// Numerically stable softmax (max subtraction).
std::vector<double> softmax_row(std::span<const double> logits);

/// In-place variant used by the training loops.
void softmax_inplace(std::span<double> row);

/// −ln max(probs[target], 1e-12).
double cross_entropy(std::span<const double> probs, std::size_t target);

double logistic(double x) noexcept;

}  // namespace lssa
