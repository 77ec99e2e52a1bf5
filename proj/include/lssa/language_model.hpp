#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "lssa/checkpoint.hpp"
#include "lssa/corpus.hpp"
#include "lssa/lstm.hpp"
#include "lssa/trainer.hpp"

namespace lssa {

/// Stacked LSTM with a vocabulary-sized projection on every step. The
/// sequence autoencoder reuses this type: encoder and decoder are the
/// same `net`.
struct LanguageModel {
    ModelConfig config;
    LstmNet net;
    LinearHead head;  ///< V × H projection + V bias

    LanguageModel() = default;
    /// Zero weights.
    explicit LanguageModel(const ModelConfig& cfg);

    static LanguageModel random(const ModelConfig& cfg, std::uint64_t seed);
    /// Throws CheckpointError if the checkpoint lacks the head or shapes differ.
    static LanguageModel from_checkpoint(const Checkpoint& ck);
    static LanguageModel load(const std::string& path) { return from_checkpoint(load_checkpoint(path)); }
    void save(const std::string& path, const std::string& stage, std::uint64_t seed);

    std::vector<NamedParam> params();
};

/// Cross-entropy of the head's prediction at every active step t of `cache`
/// against batch.id(b, t + 1). With `d_top` set, the gradient of the mean
/// loss w.r.t. the top-layer outputs is written there and the head's
/// gradients are accumulated.
LossSum projected_loss(LanguageModel& model, const ForwardCache& cache, const Batch& batch, Matrix* d_top);

/// Mean next-token cross-entropy on one batch. When `backward` is set,
/// gradients of that mean are accumulated into the model.
LossSum lm_batch_loss(LanguageModel& model, const Batch& batch, Rng* dropout, bool backward);

/// Teacher-forced next-word training with the best-validation weights kept.
/// Throws ConfigError on an empty train set.
LossCurve train_lm(LanguageModel& model, const std::vector<TokenSequence>& train,
                   const std::vector<TokenSequence>& val, const TrainConfig& cfg, std::uint64_t seed);

/// Incremental single-sequence decoding; used for generation and for
/// stego embedding and extraction.
class LmStepper {
public:
    explicit LmStepper(const LanguageModel& model);

    /// Feeds one token and returns the distribution over the next token.
    std::vector<double> feed(int token);

private:
    const LanguageModel* model_;
    HiddenState state_;
};

/// Distribution over the token following `prefix` (which starts with BOS).
std::vector<double> next_token_distribution(const LanguageModel& model, std::span<const int> prefix);

/// Pr(w_i | w_<i) for every scored position i = 1..n of each sequence.
std::vector<std::vector<double>> conditional_probabilities(const LanguageModel& model,
                                                           const std::vector<TokenSequence>& seqs,
                                                           std::size_t batch_size = 128);

/// 2^(-(1/n) Σ log2 p_i) with each p_i floored at 1e-12.
/// Throws DegenerateInputError when probs is empty.
double perplexity_from_probs(std::span<const double> probs);
/// 1 / max(p_i, 1e-12) per position.
std::vector<double> positionwise_from_probs(std::span<const double> probs);

double perplexity(const LanguageModel& model, const TokenSequence& seq);
std::vector<double> positionwise_perplexity(const LanguageModel& model, const TokenSequence& seq);

/// Perplexity of the best possible unigram model of `seqs` scored on
/// `seqs` itself: 2^H where H is the entropy of the empirical distribution
/// of scored tokens.
double unigram_perplexity(const std::vector<TokenSequence>& seqs);

/// Mann-Whitney AUC of `scores` with stego as the positive class; ties count 1/2.
double auc(std::span<const double> scores, std::span<const Label> labels);

struct ClassPerplexity {
    std::vector<double> text_perplexity;
    std::vector<double> position_mean;       ///< index i-1 holds position i
    std::vector<std::size_t> position_count; ///< texts reaching that position
    std::vector<std::size_t> histogram;
};

struct PerplexityReport {
    ClassPerplexity carrier;
    ClassPerplexity stego;
    std::vector<double> bin_edges;  ///< bins + 1 edges, equal width over the observed range
    double auc = 0.5;               ///< text perplexity as a stego score
    double log2_gap = 0.0;          ///< mean log2 Perp(stego) - mean log2 Perp(carrier)

    /// max(auc, 1 - auc): discriminative power without assuming a direction.
    double separability() const noexcept { return auc >= 0.5 ? auc : 1.0 - auc; }
};

/// Per-class position-wise means, text-level histograms and AUC.
/// Throws ConfigError if texts is empty or bins is 0.
PerplexityReport perplexity_report(const LanguageModel& model, const std::vector<TokenSequence>& texts,
                                   std::size_t bins);
PerplexityReport perplexity_report_from_probs(const std::vector<std::vector<double>>& probs,
                                              std::span<const Label> labels, std::size_t bins);

}  // namespace lssa
