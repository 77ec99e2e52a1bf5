#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "lssa/corpus.hpp"
#include "lssa/optim.hpp"
#include "lssa/rng.hpp"

namespace lssa {

struct TrainConfig {
    std::size_t epochs = 50;
    std::size_t batch_size = 128;
    AdamConfig adam;
    double clip_norm = 5.0;   ///< <= 0 disables clipping
    std::size_t patience = 0; ///< early stopping on validation loss; 0 disables
    bool dropout = true;
};

/// Accumulated loss over some number of scored items.
struct LossSum {
    double sum = 0.0;
    double count = 0.0;

    double mean() const noexcept { return count > 0 ? sum / count : 0.0; }
    LossSum& operator+=(const LossSum& o) noexcept {
        sum += o.sum;
        count += o.count;
        return *this;
    }
};

struct LossCurve {
    double initial_val_loss = 0.0;   ///< before the first update
    std::vector<double> train_loss;  ///< one entry per epoch run
    std::vector<double> val_loss;
    std::size_t best_epoch = 0;      ///< 1-based; 0 means the initial weights won
    std::size_t epochs_ran = 0;
    bool stopped_early = false;

    /// First epoch (1-based) whose validation loss is <= threshold, or
    /// epochs_ran + 1 when it never gets there.
    std::size_t epochs_to_reach(double threshold) const noexcept;
};

/// Forward + backward on one batch. Must accumulate gradients of the batch's
/// mean loss and return the summed loss and item count.
using TrainStep = std::function<LossSum(const Batch&, Rng* dropout)>;
/// Loss without gradients or dropout.
using EvalStep = std::function<LossSum(const Batch&)>;

LossSum evaluate_loss(const std::vector<TokenSequence>& data, std::size_t batch_size, const EvalStep& eval);

/// Adam training loop shared by every model. Each epoch shuffles with
/// sub_seed(seed, "batches", epoch) and draws dropout masks from
/// sub_seed(seed, "dropout", epoch). The best-validation weights are
/// restored before returning.
LossCurve train_loop(std::span<const NamedParam> params, const std::vector<TokenSequence>& train,
                     const std::vector<TokenSequence>& val, const TrainConfig& cfg, std::uint64_t seed,
                     const TrainStep& step, const EvalStep& eval);

}  // namespace lssa
