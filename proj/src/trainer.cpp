#include "lssa/trainer.hpp"

#include <cmath>

#include "lssa/error.hpp"
#include "lssa/lstm.hpp"

namespace lssa {

std::size_t LossCurve::epochs_to_reach(double threshold) const noexcept {
    for (std::size_t e = 0; e < val_loss.size(); ++e)
        if (val_loss[e] <= threshold) return e + 1;
    return epochs_ran + 1;
}

LossSum evaluate_loss(const std::vector<TokenSequence>& data, std::size_t batch_size, const EvalStep& eval) {
    LossSum total;
    for (const auto& batch : make_batches_ordered(data, batch_size)) total += eval(batch);
    return total;
}

LossCurve train_loop(std::span<const NamedParam> params, const std::vector<TokenSequence>& train,
                     const std::vector<TokenSequence>& val, const TrainConfig& cfg, std::uint64_t seed,
                     const TrainStep& step, const EvalStep& eval) {
    if (train.empty()) throw ConfigError("training set is empty");
    const auto& monitor = val.empty() ? train : val;

    LossCurve curve;
    curve.initial_val_loss = evaluate_loss(monitor, cfg.batch_size, eval).mean();
    double best = curve.initial_val_loss;
    auto best_values = snapshot_values(params);
    std::size_t since_best = 0;

    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        Rng dropout_rng(sub_seed(seed, "dropout", epoch));
        LossSum epoch_loss;
        for (const auto& batch : make_batches(train, cfg.batch_size, sub_seed(seed, "batches", epoch))) {
            for (const auto& p : params) p.block->zero_grad();
            const LossSum l = step(batch, cfg.dropout ? &dropout_rng : nullptr);
            if (!std::isfinite(l.sum)) throw StateError("non-finite training loss");
            epoch_loss += l;
            if (cfg.clip_norm > 0) clip_grad_norm(params, cfg.clip_norm);
            for (const auto& p : params) adam_step(*p.block, cfg.adam);
        }
        const double v = evaluate_loss(monitor, cfg.batch_size, eval).mean();
        curve.train_loss.push_back(epoch_loss.mean());
        curve.val_loss.push_back(v);
        curve.epochs_ran = epoch;
        if (v < best) {
            best = v;
            curve.best_epoch = epoch;
            best_values = snapshot_values(params);
            since_best = 0;
        } else if (cfg.patience > 0 && ++since_best >= cfg.patience) {
            curve.stopped_early = true;
            break;
        }
    }
    restore_values(params, best_values);
    return curve;
}

}  // namespace lssa
