#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "lssa/corpus.hpp"
#include "lssa/matrix.hpp"
#include "lssa/optim.hpp"
#include "lssa/rng.hpp"

namespace lssa {

/// Architecture hyperparameters. Defaults are 128-d embeddings, two 256-d
/// LSTM layers and keep probability 0.5.
struct ModelConfig {
    std::size_t vocab_size = 0;
    std::size_t embed_dim = 128;
    std::size_t hidden_dim = 256;
    std::size_t layers = 2;
    double dropout_keep = 0.5;

    /// Throws ConfigError on non-positive sizes or keep outside (0, 1].
    void validate() const;
    std::size_t input_dim(std::size_t layer) const noexcept { return layer == 0 ? embed_dim : hidden_dim; }

    bool operator==(const ModelConfig&) const = default;
};

/// Weights of one LSTM layer; gate rows are ordered (input, forget, cell, output).
struct LstmLayer {
    ParamBlock w;  ///< 4H × in
    ParamBlock u;  ///< 4H × H
    ParamBlock b;  ///< 1 × 4H
};

/// Embedding plus stacked LSTM layers. Shared by every model in the project.
struct LstmNet {
    ModelConfig config;
    ParamBlock embedding;  ///< V × E
    std::vector<LstmLayer> layers;

    LstmNet() = default;
    /// All-zero weights of the configured shapes.
    explicit LstmNet(const ModelConfig& cfg);

    /// uniform(-range, range) for every weight; forget-gate bias 1, other biases 0.
    void init_uniform(Rng& rng, double range = 0.08);

    /// embedding, lstm.<l>.w, lstm.<l>.u, lstm.<l>.b, in that order.
    std::vector<NamedParam> params();
};

/// Per-layer h and c, each batch × H.
struct HiddenState {
    std::vector<Matrix> h;
    std::vector<Matrix> c;

    static HiddenState zeros(std::size_t layers, std::size_t batch, std::size_t hidden);
    bool empty() const noexcept { return h.empty(); }
};

/// Time-major token ids fed to the recurrence. Row b is active for the first
/// lengths[b] steps; after that its state is carried through unchanged.
struct StepInput {
    std::size_t batch = 0;
    std::size_t steps = 0;
    std::vector<int> ids;  ///< steps × batch
    std::vector<std::size_t> lengths;

    int id(std::size_t t, std::size_t b) const noexcept { return ids[t * batch + b]; }
    bool active(std::size_t t, std::size_t b) const noexcept { return t < lengths[b]; }
};

/// Consumes every id of each sequence (BOS ... EOS); classifier and encoder view.
StepInput full_input(const Batch& batch);
/// Consumes BOS ... last word, so step t predicts ids[t + 1]; language-model view.
StepInput teacher_input(const Batch& batch);

struct LayerCache {
    Matrix input;   ///< (T·B) × in, zero rows where inactive
    Matrix gates;   ///< (T·B) × 4H activations i, f, g, o
    Matrix c;       ///< (T·B) × H
    Matrix tanh_c;  ///< (T·B) × H
    Matrix h;       ///< (T·B) × H
    Matrix h0;      ///< B × H
    Matrix c0;      ///< B × H
};

/// Everything backward_sequence needs, produced by forward_sequence.
struct ForwardCache {
    StepInput input;
    std::vector<LayerCache> layers;
    Matrix dropout_scale;  ///< (T·B) × E of 0 or 1/keep; empty when dropout was off
    HiddenState final_state;

    /// Top-layer outputs for every (t, b), row t·B + b.
    const Matrix& top_outputs() const { return layers.back().h; }
    bool valid() const noexcept { return !layers.empty(); }
};

/// Runs the stacked LSTM. Dropout on the embedding output is applied only
/// when `dropout_rng` is given. `initial` defaults to zeros.
/// Throws IndexError for ids outside the vocabulary.
ForwardCache forward_sequence(const LstmNet& net, const StepInput& input, Rng* dropout_rng = nullptr,
                              const HiddenState* initial = nullptr);

/// Backpropagation through time. Accumulates parameter gradients into
/// `net` and returns the gradient with respect to the initial state.
/// `d_top` is (T·B) × H or null; `d_final` is the gradient flowing into
/// the final state or null. Throws StateError on an empty cache.
HiddenState backward_sequence(LstmNet& net, const ForwardCache& cache, const Matrix* d_top,
                              const HiddenState* d_final = nullptr);

/// Dense output layer: weight out × H, bias 1 × out.
struct LinearHead {
    ParamBlock weight;
    ParamBlock bias;

    LinearHead() = default;
    LinearHead(std::size_t out, std::size_t in) : weight(out, in), bias(1, out) {}
    std::size_t out_dim() const noexcept { return weight.rows(); }

    void init_uniform(Rng& rng, double range = 0.08);
    /// x (N × H) → logits (N × out).
    Matrix forward(const Matrix& x) const;
    /// Accumulates weight/bias grads; returns dx (N × H).
    Matrix backward(const Matrix& x, const Matrix& d_logits);
};

/// Copies values only (optimizer state stays untouched). Shapes must match.
void copy_values(std::span<const NamedParam> from, std::span<const NamedParam> to);
std::vector<Matrix> snapshot_values(std::span<const NamedParam> params);
void restore_values(std::span<const NamedParam> params, const std::vector<Matrix>& values);

}  // namespace lssa
