#include "lssa/steganalyzer.hpp"

#include <algorithm>
#include <cmath>

#include "lssa/error.hpp"

namespace lssa {

std::string init_mode_name(InitMode mode) {
    switch (mode) {
        case InitMode::random: return "random";
        case InitMode::from_lm: return "lm";
        case InitMode::from_ae: return "ae";
    }
    return "?";
}

InitMode parse_init_mode(std::string_view text) {
    if (text == "random" || text == "none") return InitMode::random;
    if (text == "lm" || text == "from_lm") return InitMode::from_lm;
    if (text == "ae" || text == "from_ae") return InitMode::from_ae;
    throw ConfigError("unknown init mode '" + std::string(text) + "'");
}

Classifier::Classifier(const ModelConfig& cfg) : config(cfg), net(cfg), fc(2, cfg.hidden_dim) {}

Classifier Classifier::load(const std::string& path) {
    const Checkpoint ck = load_checkpoint(path);
    Classifier c(ck.meta.config);
    ck.load_into(c.params());
    return c;
}

void Classifier::save(const std::string& path, std::uint64_t seed) {
    save_checkpoint(path, {config, seed, stage::kFinetune}, params());
}

std::vector<NamedParam> Classifier::params() {
    auto out = net.params();
    out.push_back({"fc.weight", &fc.weight});
    out.push_back({"fc.bias", &fc.bias});
    return out;
}

Classifier init_classifier(InitMode mode, const ModelConfig& cfg, std::uint64_t seed, const Checkpoint* source) {
    cfg.validate();
    Classifier c(cfg);
    if (mode == InitMode::random) {
        Rng net_rng(sub_seed(seed, "init-net"));
        c.net.init_uniform(net_rng);
    } else {
        if (!source) throw ConfigError("init mode " + init_mode_name(mode) + " needs a checkpoint");
        if (source->meta.config.vocab_size != cfg.vocab_size || source->meta.config.embed_dim != cfg.embed_dim ||
            source->meta.config.hidden_dim != cfg.hidden_dim || source->meta.config.layers != cfg.layers)
            throw CheckpointError("checkpoint shapes do not match the classifier config");
        source->load_into(c.net.params());
    }
    Rng fc_rng(sub_seed(seed, "init-fc"));
    c.fc.init_uniform(fc_rng);
    return c;
}

Matrix last_hidden(const ForwardCache& cache) { return cache.final_state.h.back(); }

LossSum classifier_batch_loss(Classifier& model, const Batch& batch, Rng* dropout, bool backward) {
    if (batch.labels.size() != batch.batch_size) throw ConfigError("classifier batch needs labels on every row");
    const ForwardCache cache = forward_sequence(model.net, full_input(batch), dropout);
    const Matrix h = last_hidden(cache);
    Matrix probs = model.fc.forward(h);

    LossSum loss;
    loss.count = static_cast<double>(batch.batch_size);
    const double scale = batch.batch_size ? 1.0 / static_cast<double>(batch.batch_size) : 0.0;
    for (std::size_t b = 0; b < batch.batch_size; ++b) {
        auto p = probs.row(b);
        softmax_inplace(p);
        const auto target = static_cast<std::size_t>(batch.labels[b]);
        loss.sum += cross_entropy(p, target);
        if (backward) {
            p[target] -= 1.0;
            for (double& x : p) x *= scale;
        }
    }
    if (!backward || batch.batch_size == 0) return loss;

    const Matrix dh = model.fc.backward(h, probs);
    const std::size_t L = model.config.layers, H = model.config.hidden_dim;
    HiddenState d_final = HiddenState::zeros(L, batch.batch_size, H);
    d_final.h.back() = dh;
    backward_sequence(model.net, cache, nullptr, &d_final);
    return loss;
}

LossCurve finetune(Classifier& model, const std::vector<TokenSequence>& train,
                   const std::vector<TokenSequence>& val, const FinetuneConfig& cfg, std::uint64_t seed) {
    bool seen[2] = {false, false};
    for (const auto& s : train) {
        if (!s.label) throw ConfigError("finetune: unlabeled training text");
        seen[static_cast<std::size_t>(*s.label)] = true;
    }
    if (!seen[0] || !seen[1]) throw ConfigError("finetune: training set must contain both classes");
    for (const auto& s : val)
        if (!s.label) throw ConfigError("finetune: unlabeled validation text");
    const auto params = model.params();
    return train_loop(
        params, train, val, cfg.train, seed,
        [&](const Batch& b, Rng* dropout) { return classifier_batch_loss(model, b, dropout, true); },
        [&](const Batch& b) { return classifier_batch_loss(model, b, nullptr, false); });
}

std::vector<Prediction> classify(const Classifier& model, const std::vector<TokenSequence>& texts,
                                 std::size_t batch_size) {
    std::vector<Prediction> out(texts.size());
    for (const auto& batch : make_batches_ordered(texts, batch_size)) {
        const ForwardCache cache = forward_sequence(model.net, full_input(batch), nullptr);
        Matrix probs = model.fc.forward(last_hidden(cache));
        for (std::size_t b = 0; b < batch.batch_size; ++b) {
            auto p = probs.row(b);
            softmax_inplace(p);
            Prediction& pred = out[batch.source[b]];
            pred.p_stego = p[1];
            pred.label = p[1] > p[0] ? Label::stego : Label::carrier;
        }
    }
    return out;
}

Prediction classify(const Classifier& model, const TokenSequence& text) {
    return classify(model, std::vector<TokenSequence>{text}).front();
}

Label ThresholdDetector::predict(double perplexity) const noexcept {
    const bool stego = direction == ThresholdDirection::greater_is_stego ? perplexity > tau : perplexity < tau;
    return stego ? Label::stego : Label::carrier;
}

ThresholdDetector fit_threshold(std::span<const double> perplexities, std::span<const Label> labels) {
    if (perplexities.size() != labels.size()) throw ConfigError("fit_threshold: length mismatch");
    const auto n_stego = static_cast<std::size_t>(std::ranges::count(labels, Label::stego));
    if (n_stego == 0 || n_stego == labels.size()) throw ConfigError("fit_threshold: both classes are required");

    std::vector<double> values(perplexities.begin(), perplexities.end());
    std::ranges::sort(values);
    values.erase(std::unique(values.begin(), values.end()), values.end());
    std::vector<double> candidates;
    candidates.push_back(values.front() - 1.0);
    for (std::size_t i = 0; i + 1 < values.size(); ++i) candidates.push_back(0.5 * (values[i] + values[i + 1]));
    candidates.push_back(values.back() + 1.0);

    ThresholdDetector best;
    best.fit_accuracy = -1.0;
    for (double tau : candidates)
        for (auto dir : {ThresholdDirection::greater_is_stego, ThresholdDirection::less_is_stego}) {
            const ThresholdDetector d{tau, dir, 0.0};
            std::size_t right = 0;
            for (std::size_t i = 0; i < labels.size(); ++i)
                if (d.predict(perplexities[i]) == labels[i]) ++right;
            const double acc = static_cast<double>(right) / static_cast<double>(labels.size());
            if (acc > best.fit_accuracy) best = {tau, dir, acc};
        }
    return best;
}

MetricsReport metrics_from_counts(std::size_t tp, std::size_t fp, std::size_t fn, std::size_t tn) {
    MetricsReport r;
    r.tp = tp;
    r.fp = fp;
    r.fn = fn;
    r.tn = tn;
    const std::size_t total = tp + fp + fn + tn;
    r.acc = total ? static_cast<double>(tp + tn) / static_cast<double>(total) : 0.0;
    r.f1 = tp ? 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn) : 0.0;
    return r;
}

MetricsReport evaluate(std::span<const Label> predicted, std::span<const Label> truth) {
    if (predicted.size() != truth.size()) throw ConfigError("evaluate: length mismatch");
    std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        const bool p = predicted[i] == Label::stego, t = truth[i] == Label::stego;
        if (p && t) ++tp;
        else if (p) ++fp;
        else if (t) ++fn;
        else ++tn;
    }
    return metrics_from_counts(tp, fp, fn, tn);
}

MetricsReport evaluate(const Classifier& model, const std::vector<TokenSequence>& test) {
    std::vector<Label> truth, pred;
    for (const auto& s : test) {
        if (!s.label) throw ConfigError("evaluate: unlabeled test text");
        truth.push_back(*s.label);
    }
    for (const auto& p : classify(model, test)) pred.push_back(p.label);
    return evaluate(pred, truth);
}

}  // namespace lssa
