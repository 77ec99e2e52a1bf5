#include "lssa/autoencoder.hpp"

#include <algorithm>

#include "lssa/error.hpp"

namespace lssa {

namespace {

std::size_t argmax(std::span<const double> row) {
    return static_cast<std::size_t>(std::ranges::max_element(row) - row.begin());
}

// Greedy decoding from `initial`: step 0 reads BOS, step t > 0 reads the
// prediction made at step t - 1. Returns the predictions, time-major.
std::vector<int> greedy_decode(const LanguageModel& model, const StepInput& shape, const HiddenState& initial) {
    const std::size_t B = shape.batch;
    std::vector<int> pred(shape.steps * B, special::kPad);
    HiddenState state = initial;
    StepInput step;
    step.batch = B;
    step.steps = 1;
    step.ids.assign(B, special::kBos);
    step.lengths.assign(B, 0);
    for (std::size_t t = 0; t < shape.steps; ++t) {
        for (std::size_t b = 0; b < B; ++b) step.lengths[b] = shape.active(t, b) ? 1 : 0;
        ForwardCache cache = forward_sequence(model.net, step, nullptr, &state);
        state = std::move(cache.final_state);
        const Matrix logits = model.head.forward(state.h.back());
        for (std::size_t b = 0; b < B; ++b) {
            if (!shape.active(t, b)) continue;
            const int id = static_cast<int>(argmax(logits.row(b)));
            pred[t * B + b] = id;
            step.ids[b] = id;
        }
    }
    return pred;
}

// Decoder input: BOS followed by the previous greedy predictions.
StepInput autoregressive_input(const LanguageModel& model, const Batch& batch, const HiddenState& initial) {
    StepInput in = teacher_input(batch);
    const std::vector<int> pred = greedy_decode(model, in, initial);
    for (std::size_t t = 1; t < in.steps; ++t)
        for (std::size_t b = 0; b < in.batch; ++b)
            if (in.active(t, b)) in.ids[t * in.batch + b] = pred[(t - 1) * in.batch + b];
    return in;
}

}  // namespace

HiddenState encode(const LanguageModel& model, const Batch& batch) {
    return forward_sequence(model.net, full_input(batch), nullptr).final_state;
}

LossSum ae_batch_loss(LanguageModel& model, const Batch& batch, Rng* dropout, bool backward,
                      const AeOptions& opts) {
    const ForwardCache enc = forward_sequence(model.net, full_input(batch), dropout);
    const StepInput dec_in =
        opts.teacher_forcing ? teacher_input(batch) : autoregressive_input(model, batch, enc.final_state);
    const ForwardCache dec = forward_sequence(model.net, dec_in, dropout, &enc.final_state);
    if (!backward) return projected_loss(model, dec, batch, nullptr);

    Matrix d_top;
    const LossSum loss = projected_loss(model, dec, batch, &d_top);
    if (loss.count == 0) return loss;
    const HiddenState d_state = backward_sequence(model.net, dec, &d_top);
    backward_sequence(model.net, enc, nullptr, &d_state);
    return loss;
}

LossCurve train_ae(LanguageModel& model, const std::vector<TokenSequence>& train,
                   const std::vector<TokenSequence>& val, const TrainConfig& cfg, std::uint64_t seed,
                   const AeOptions& opts) {
    if (train.empty()) throw ConfigError("train_ae: empty training set");
    const auto params = model.params();
    return train_loop(
        params, train, val, cfg, seed,
        [&](const Batch& b, Rng* dropout) { return ae_batch_loss(model, b, dropout, true, opts); },
        [&](const Batch& b) { return ae_batch_loss(model, b, nullptr, false, opts); });
}

double reconstruction_accuracy(const LanguageModel& model, const std::vector<TokenSequence>& seqs,
                               bool teacher_forcing, std::size_t batch_size) {
    std::size_t hits = 0, total = 0;
    for (const auto& batch : make_batches_ordered(seqs, batch_size)) {
        const HiddenState enc = encode(model, batch);
        const StepInput in = teacher_input(batch);
        std::vector<int> pred;
        if (teacher_forcing) {
            const ForwardCache dec = forward_sequence(model.net, in, nullptr, &enc);
            const Matrix logits = model.head.forward(dec.top_outputs());
            pred.resize(in.steps * in.batch);
            for (std::size_t r = 0; r < pred.size(); ++r) pred[r] = static_cast<int>(argmax(logits.row(r)));
        } else {
            pred = greedy_decode(model, in, enc);
        }
        for (std::size_t t = 0; t < in.steps; ++t)
            for (std::size_t b = 0; b < in.batch; ++b)
                if (in.active(t, b)) {
                    ++total;
                    if (pred[t * in.batch + b] == batch.id(b, t + 1)) ++hits;
                }
    }
    if (total == 0) throw DegenerateInputError("reconstruction_accuracy: nothing to score");
    return static_cast<double>(hits) / static_cast<double>(total);
}

}  // namespace lssa
