#include "lssa/optim.hpp"

#include <cmath>

#include "lssa/error.hpp"

namespace lssa {

void ParamBlock::reset_optimizer() {
    grad = Matrix(rows(), cols());
    adam_m = Matrix(rows(), cols());
    adam_v = Matrix(rows(), cols());
    step = 0;
}

void adam_step(ParamBlock& block, const AdamConfig& cfg) {
    if (!block.value.same_shape(block.grad) || !block.value.same_shape(block.adam_m) ||
        !block.value.same_shape(block.adam_v))
        throw ShapeError("adam_step: buffer shapes differ");

    ++block.step;
    const double t = static_cast<double>(block.step);
    const double c1 = 1.0 - std::pow(cfg.beta1, t);
    const double c2 = 1.0 - std::pow(cfg.beta2, t);

    auto w = block.value.data();
    auto g = block.grad.data();
    auto m = block.adam_m.data();
    auto v = block.adam_v.data();
    for (std::size_t i = 0; i < w.size(); ++i) {
        const double gi = g[i];
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
        const double mhat = m[i] / c1;
        const double vhat = v[i] / c2;
        w[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
        g[i] = 0.0;
    }
}

double grad_global_norm(std::span<const NamedParam> params) {
    double sq = 0.0;
    for (const auto& p : params)
        for (double g : p.block->grad.data()) sq += g * g;
    return std::sqrt(sq);
}

double clip_grad_norm(std::span<const NamedParam> params, double max_norm) {
    const double norm = grad_global_norm(params);
    if (norm > max_norm && norm > 0.0) {
        const double scale = max_norm / norm;
        for (const auto& p : params)
            for (double& g : p.block->grad.data()) g *= scale;
    }
    return norm;
}

}  // namespace lssa
