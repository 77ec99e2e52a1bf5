#pragma once

#include <cstdint>
#include <vector>

#include "lssa/language_model.hpp"

namespace lssa {

/// Sequence-autoencoder options. The encoder and decoder are always the
/// same LanguageModel instance, so there is exactly one set of LSTM weights.
struct AeOptions {
    /// Decoder consumes the true previous tokens. When off, the decoder's
    /// inputs are its own greedy predictions (no gradient through the choice).
    bool teacher_forcing = true;
};

/// Final per-layer (h, c) after reading each full sequence BOS ... EOS.
HiddenState encode(const LanguageModel& model, const Batch& batch);

/// Encode, then decode from the encoder's final state and score the
/// reconstruction of w_1 ... EOS. Gradients from both passes accumulate
/// into the shared weights when `backward` is set.
LossSum ae_batch_loss(LanguageModel& model, const Batch& batch, Rng* dropout, bool backward,
                      const AeOptions& opts = {});

/// Same loop and optimizer as train_lm with the reconstruction objective.
/// Throws ConfigError on an empty train set.
LossCurve train_ae(LanguageModel& model, const std::vector<TokenSequence>& train,
                   const std::vector<TokenSequence>& val, const TrainConfig& cfg, std::uint64_t seed,
                   const AeOptions& opts = {});

/// Fraction of target tokens (w_1 ... EOS) whose argmax prediction is
/// right. With teacher forcing off the decoder runs greedily on its own output.
double reconstruction_accuracy(const LanguageModel& model, const std::vector<TokenSequence>& seqs,
                               bool teacher_forcing, std::size_t batch_size = 128);

}  // namespace lssa
