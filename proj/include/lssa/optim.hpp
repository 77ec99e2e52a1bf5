#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "lssa/matrix.hpp"

namespace lssa {

/// A trainable tensor with its gradient and Adam moment buffers.
struct ParamBlock {
    Matrix value;
    Matrix grad;
    Matrix adam_m;
    Matrix adam_v;
    std::uint64_t step = 0;

    ParamBlock() = default;
    ParamBlock(std::size_t rows, std::size_t cols)
        : value(rows, cols), grad(rows, cols), adam_m(rows, cols), adam_v(rows, cols) {}

    std::size_t rows() const noexcept { return value.rows(); }
    std::size_t cols() const noexcept { return value.cols(); }

    void zero_grad() { grad.fill(0.0); }
    /// Clears gradient, moments and step counter; keeps the value.
    void reset_optimizer();
};

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// One bias-corrected Adam update. Zeroes the gradient and increments step.
void adam_step(ParamBlock& block, const AdamConfig& cfg = {});

/// A named, non-owning reference to a parameter; models expose their
/// parameters as a list of these in a fixed order.
struct NamedParam {
    std::string name;
    ParamBlock* block;
};

double grad_global_norm(std::span<const NamedParam> params);

/// Rescales all gradients so the global L2 norm is at most max_norm.
/// Returns the norm before clipping.
double clip_grad_norm(std::span<const NamedParam> params, double max_norm);

}  // namespace lssa
