#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "lssa/checkpoint.hpp"
#include "lssa/language_model.hpp"
#include "lssa/lstm.hpp"
#include "lssa/trainer.hpp"

namespace lssa {

enum class InitMode { random, from_lm, from_ae };

std::string init_mode_name(InitMode mode);
/// "random", "lm" / "from_lm", "ae" / "from_ae". Throws ConfigError.
InitMode parse_init_mode(std::string_view text);

/// Embedding + LSTM followed by a 2-way layer on the last hidden state.
struct Classifier {
    ModelConfig config;
    LstmNet net;
    LinearHead fc;  ///< 2 × H

    Classifier() = default;
    /// Zero weights.
    explicit Classifier(const ModelConfig& cfg);

    static Classifier load(const std::string& path);
    void save(const std::string& path, std::uint64_t seed);

    /// net params then "fc.weight", "fc.bias".
    std::vector<NamedParam> params();
};

/// Random mode draws the network from sub_seed(seed, "init-net"). The fc
/// layer is always uniform(-0.08, 0.08) from sub_seed(seed, "init-fc").
/// For the pretrained modes `source` must hold the embedding and LSTM
/// tensors for `cfg`; a shape mismatch throws CheckpointError.
Classifier init_classifier(InitMode mode, const ModelConfig& cfg, std::uint64_t seed,
                           const Checkpoint* source = nullptr);

/// Top-layer hidden state after the final token of each row (B × H).
Matrix last_hidden(const ForwardCache& cache);

/// Mean 2-way cross-entropy over the batch. Requires labels.
LossSum classifier_batch_loss(Classifier& model, const Batch& batch, Rng* dropout, bool backward);

struct FinetuneConfig {
    TrainConfig train = defaults();

    /// 50 epochs at most, early stopping after 5 epochs without improvement.
    static TrainConfig defaults() {
        TrainConfig t;
        t.epochs = 50;
        t.patience = 5;
        return t;
    }
};

/// Throws ConfigError if the training set lacks either class or a label.
LossCurve finetune(Classifier& model, const std::vector<TokenSequence>& train,
                   const std::vector<TokenSequence>& val, const FinetuneConfig& cfg, std::uint64_t seed);

struct Prediction {
    Label label = Label::carrier;
    double p_stego = 0.5;
};

/// Argmax of the 2-way softmax; an exact 0.5 goes to carrier.
std::vector<Prediction> classify(const Classifier& model, const std::vector<TokenSequence>& texts,
                                 std::size_t batch_size = 128);
Prediction classify(const Classifier& model, const TokenSequence& text);

enum class ThresholdDirection { greater_is_stego, less_is_stego };

struct ThresholdDetector {
    double tau = 0.0;
    ThresholdDirection direction = ThresholdDirection::greater_is_stego;
    double fit_accuracy = 0.0;

    Label predict(double perplexity) const noexcept;
};

/// Exhaustive scan of every midpoint between sorted unique values plus one
/// point below and above the range, in both directions. Best accuracy wins;
/// ties go to the smaller tau, then greater-is-stego. Throws ConfigError if
/// a class is missing or the lengths differ.
ThresholdDetector fit_threshold(std::span<const double> perplexities, std::span<const Label> labels);

struct MetricsReport {
    std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
    double acc = 0.0;
    double f1 = 0.0;
    LossCurve curve;
    std::size_t epochs_to_threshold = 0;
};

/// Confusion counts with stego as the positive class.
MetricsReport metrics_from_counts(std::size_t tp, std::size_t fp, std::size_t fn, std::size_t tn);
MetricsReport evaluate(std::span<const Label> predicted, std::span<const Label> truth);
MetricsReport evaluate(const Classifier& model, const std::vector<TokenSequence>& test);

}  // namespace lssa
