#include "lssa/language_model.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "lssa/error.hpp"

namespace lssa {

LanguageModel::LanguageModel(const ModelConfig& cfg)
    : config(cfg), net(cfg), head(cfg.vocab_size, cfg.hidden_dim) {}

LanguageModel LanguageModel::random(const ModelConfig& cfg, std::uint64_t seed) {
    LanguageModel m(cfg);
    Rng net_rng(sub_seed(seed, "init-net"));
    m.net.init_uniform(net_rng);
    Rng head_rng(sub_seed(seed, "init-lm-head"));
    m.head.init_uniform(head_rng);
    return m;
}

LanguageModel LanguageModel::from_checkpoint(const Checkpoint& ck) {
    LanguageModel m(ck.meta.config);
    ck.load_into(m.params());
    return m;
}

void LanguageModel::save(const std::string& path, const std::string& stage, std::uint64_t seed) {
    save_checkpoint(path, {config, seed, stage}, params());
}

std::vector<NamedParam> LanguageModel::params() {
    auto out = net.params();
    out.push_back({"lm_head.weight", &head.weight});
    out.push_back({"lm_head.bias", &head.bias});
    return out;
}

LossSum projected_loss(LanguageModel& model, const ForwardCache& cache, const Batch& batch, Matrix* d_top) {
    const StepInput& in = cache.input;
    const std::size_t H = model.config.hidden_dim, B = in.batch;

    std::vector<std::size_t> rows;
    for (std::size_t t = 0; t < in.steps; ++t)
        for (std::size_t b = 0; b < B; ++b)
            if (in.active(t, b)) rows.push_back(t * B + b);

    Matrix hv(rows.size(), H);
    const Matrix& top = cache.top_outputs();
    for (std::size_t i = 0; i < rows.size(); ++i) std::ranges::copy(top.row(rows[i]), hv.row(i).begin());

    Matrix probs = model.head.forward(hv);
    LossSum loss;
    loss.count = static_cast<double>(rows.size());
    const double scale = rows.empty() ? 0.0 : 1.0 / static_cast<double>(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const std::size_t t = rows[i] / B, b = rows[i] % B;
        const auto target = static_cast<std::size_t>(batch.id(b, t + 1));
        auto p = probs.row(i);
        softmax_inplace(p);
        loss.sum += cross_entropy(p, target);
        if (d_top) {
            p[target] -= 1.0;
            for (double& x : p) x *= scale;
        }
    }
    if (!d_top) return loss;

    *d_top = Matrix(top.rows(), H);
    if (rows.empty()) return loss;
    const Matrix d_hv = model.head.backward(hv, probs);
    for (std::size_t i = 0; i < rows.size(); ++i) std::ranges::copy(d_hv.row(i), d_top->row(rows[i]).begin());
    return loss;
}

LossSum lm_batch_loss(LanguageModel& model, const Batch& batch, Rng* dropout, bool backward) {
    const ForwardCache cache = forward_sequence(model.net, teacher_input(batch), dropout);
    if (!backward) return projected_loss(model, cache, batch, nullptr);
    Matrix d_top;
    const LossSum loss = projected_loss(model, cache, batch, &d_top);
    if (loss.count > 0) backward_sequence(model.net, cache, &d_top);
    return loss;
}

LossCurve train_lm(LanguageModel& model, const std::vector<TokenSequence>& train,
                   const std::vector<TokenSequence>& val, const TrainConfig& cfg, std::uint64_t seed) {
    if (train.empty()) throw ConfigError("train_lm: empty training set");
    const auto params = model.params();
    return train_loop(
        params, train, val, cfg, seed,
        [&](const Batch& b, Rng* dropout) { return lm_batch_loss(model, b, dropout, true); },
        [&](const Batch& b) { return lm_batch_loss(model, b, nullptr, false); });
}

LmStepper::LmStepper(const LanguageModel& model)
    : model_(&model), state_(HiddenState::zeros(model.config.layers, 1, model.config.hidden_dim)) {}

std::vector<double> LmStepper::feed(int token) {
    StepInput in;
    in.batch = 1;
    in.steps = 1;
    in.ids = {token};
    in.lengths = {1};
    ForwardCache cache = forward_sequence(model_->net, in, nullptr, &state_);
    state_ = std::move(cache.final_state);
    Matrix logits = model_->head.forward(state_.h.back());
    auto row = logits.row(0);
    softmax_inplace(row);
    return {row.begin(), row.end()};
}

std::vector<double> next_token_distribution(const LanguageModel& model, std::span<const int> prefix) {
    if (prefix.empty() || prefix.front() != special::kBos)
        throw ConfigError("prefix must start with BOS");
    LmStepper stepper(model);
    std::vector<double> dist;
    for (int id : prefix) dist = stepper.feed(id);
    return dist;
}

std::vector<std::vector<double>> conditional_probabilities(const LanguageModel& model,
                                                           const std::vector<TokenSequence>& seqs,
                                                           std::size_t batch_size) {
    std::vector<std::vector<double>> out(seqs.size());
    const std::size_t H = model.config.hidden_dim;
    for (const auto& batch : make_batches_ordered(seqs, batch_size)) {
        const StepInput in = teacher_input(batch);
        const ForwardCache cache = forward_sequence(model.net, in, nullptr);
        std::vector<std::size_t> rows;
        for (std::size_t t = 0; t < in.steps; ++t)
            for (std::size_t b = 0; b < in.batch; ++b)
                if (in.active(t, b)) rows.push_back(t * in.batch + b);
        Matrix hv(rows.size(), H);
        for (std::size_t i = 0; i < rows.size(); ++i)
            std::ranges::copy(cache.top_outputs().row(rows[i]), hv.row(i).begin());
        Matrix logits = model.head.forward(hv);
        for (std::size_t b = 0; b < in.batch; ++b) out[batch.source[b]].resize(in.lengths[b]);
        for (std::size_t i = 0; i < rows.size(); ++i) {
            const std::size_t t = rows[i] / in.batch, b = rows[i] % in.batch;
            auto p = logits.row(i);
            softmax_inplace(p);
            out[batch.source[b]][t] = p[static_cast<std::size_t>(batch.id(b, t + 1))];
        }
    }
    return out;
}

double perplexity_from_probs(std::span<const double> probs) {
    if (probs.empty()) throw DegenerateInputError("perplexity of a sequence with no scored positions");
    double log2_sum = 0.0;
    for (double p : probs) log2_sum += std::log2(std::max(p, kProbFloor));
    return std::exp2(-log2_sum / static_cast<double>(probs.size()));
}

std::vector<double> positionwise_from_probs(std::span<const double> probs) {
    if (probs.empty()) throw DegenerateInputError("perplexity of a sequence with no scored positions");
    std::vector<double> out;
    out.reserve(probs.size());
    for (double p : probs) out.push_back(std::exp2(-std::log2(std::max(p, kProbFloor))));
    return out;
}

double perplexity(const LanguageModel& model, const TokenSequence& seq) {
    if (seq.scored_len() == 0) throw DegenerateInputError("perplexity of an empty sequence");
    return perplexity_from_probs(conditional_probabilities(model, {seq}).front());
}

std::vector<double> positionwise_perplexity(const LanguageModel& model, const TokenSequence& seq) {
    if (seq.scored_len() == 0) throw DegenerateInputError("perplexity of an empty sequence");
    return positionwise_from_probs(conditional_probabilities(model, {seq}).front());
}

double unigram_perplexity(const std::vector<TokenSequence>& seqs) {
    std::map<int, std::size_t> counts;
    std::size_t total = 0;
    for (const auto& s : seqs)
        for (std::size_t i = 1; i < s.ids.size(); ++i) {
            ++counts[s.ids[i]];
            ++total;
        }
    if (total == 0) throw DegenerateInputError("unigram perplexity of an empty corpus");
    double h = 0.0;
    for (const auto& [id, c] : counts) {
        const double p = static_cast<double>(c) / static_cast<double>(total);
        h -= p * std::log2(p);
    }
    return std::exp2(h);
}

double auc(std::span<const double> scores, std::span<const Label> labels) {
    if (scores.size() != labels.size()) throw ShapeError("auc: scores and labels differ in length");
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] < scores[b]; });

    // Rank-sum with mid-ranks for ties.
    double pos_rank_sum = 0.0;
    std::size_t npos = 0;
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
        const double mid = 0.5 * static_cast<double>(i + 1 + j);
        for (std::size_t k = i; k < j; ++k)
            if (labels[order[k]] == Label::stego) {
                pos_rank_sum += mid;
                ++npos;
            }
        i = j;
    }
    const std::size_t nneg = scores.size() - npos;
    if (npos == 0 || nneg == 0) return 0.5;
    const double np = static_cast<double>(npos), nn = static_cast<double>(nneg);
    return (pos_rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

PerplexityReport perplexity_report_from_probs(const std::vector<std::vector<double>>& probs,
                                              std::span<const Label> labels, std::size_t bins) {
    if (probs.empty()) throw ConfigError("perplexity_report: no texts");
    if (bins == 0) throw ConfigError("perplexity_report: bins must be >= 1");
    if (probs.size() != labels.size()) throw ShapeError("perplexity_report: label count mismatch");

    PerplexityReport rep;
    std::vector<double> all_perp;
    std::vector<std::vector<double>> sums(2);
    for (std::size_t i = 0; i < probs.size(); ++i) {
        ClassPerplexity& cls = labels[i] == Label::stego ? rep.stego : rep.carrier;
        auto& sum = sums[static_cast<std::size_t>(labels[i])];
        const double pp = perplexity_from_probs(probs[i]);
        cls.text_perplexity.push_back(pp);
        all_perp.push_back(pp);
        const auto pw = positionwise_from_probs(probs[i]);
        if (sum.size() < pw.size()) {
            sum.resize(pw.size(), 0.0);
            cls.position_count.resize(pw.size(), 0);
        }
        for (std::size_t p = 0; p < pw.size(); ++p) {
            sum[p] += pw[p];
            ++cls.position_count[p];
        }
    }
    for (std::size_t c = 0; c < 2; ++c) {
        ClassPerplexity& cls = c == 1 ? rep.stego : rep.carrier;
        cls.position_mean.resize(sums[c].size());
        for (std::size_t p = 0; p < sums[c].size(); ++p)
            cls.position_mean[p] = sums[c][p] / static_cast<double>(cls.position_count[p]);
    }

    const auto [lo_it, hi_it] = std::minmax_element(all_perp.begin(), all_perp.end());
    const double lo = *lo_it, hi = *hi_it;
    const double width = (hi - lo) / static_cast<double>(bins);
    for (std::size_t k = 0; k <= bins; ++k)
        rep.bin_edges.push_back(k == bins ? hi : lo + width * static_cast<double>(k));
    auto bin_of = [&](double v) -> std::size_t {
        if (width <= 0.0) return 0;
        const auto k = static_cast<std::size_t>((v - lo) / width);
        return std::min(k, bins - 1);
    };
    rep.carrier.histogram.assign(bins, 0);
    rep.stego.histogram.assign(bins, 0);
    for (double v : rep.carrier.text_perplexity) ++rep.carrier.histogram[bin_of(v)];
    for (double v : rep.stego.text_perplexity) ++rep.stego.histogram[bin_of(v)];

    std::vector<Label> lab(labels.begin(), labels.end());
    rep.auc = auc(all_perp, lab);
    auto mean_log2 = [](const std::vector<double>& v) {
        if (v.empty()) return 0.0;
        double s = 0.0;
        for (double x : v) s += std::log2(x);
        return s / static_cast<double>(v.size());
    };
    if (!rep.carrier.text_perplexity.empty() && !rep.stego.text_perplexity.empty())
        rep.log2_gap = mean_log2(rep.stego.text_perplexity) - mean_log2(rep.carrier.text_perplexity);
    return rep;
}

PerplexityReport perplexity_report(const LanguageModel& model, const std::vector<TokenSequence>& texts,
                                   std::size_t bins) {
    if (texts.empty()) throw ConfigError("perplexity_report: no texts");
    std::vector<Label> labels;
    for (const auto& t : texts) labels.push_back(t.label.value_or(Label::carrier));
    return perplexity_report_from_probs(conditional_probabilities(model, texts), labels, bins);
}

}  // namespace lssa
