#include "lssa/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "lssa/autoencoder.hpp"
#include "lssa/error.hpp"
#include "lssa/language_model.hpp"
#include "lssa/steganalyzer.hpp"

namespace lssa {

std::string grad_check_target_name(GradCheckTarget t) {
    switch (t) {
        case GradCheckTarget::lm: return "lm";
        case GradCheckTarget::ae: return "ae";
        case GradCheckTarget::classifier: return "classifier";
    }
    return "?";
}

GradCheckTarget parse_grad_check_target(std::string_view text) {
    if (text == "lm") return GradCheckTarget::lm;
    if (text == "ae") return GradCheckTarget::ae;
    if (text == "classifier") return GradCheckTarget::classifier;
    throw ConfigError("unknown grad-check target '" + std::string(text) + "'");
}

ModelConfig tiny_config() {
    ModelConfig cfg;
    cfg.vocab_size = 20;
    cfg.embed_dim = 8;
    cfg.hidden_dim = 12;
    cfg.layers = 2;
    return cfg;
}

GradCheckResult grad_check(GradCheckTarget target, const ModelConfig& cfg, std::uint64_t seed,
                           const GradCheckOptions& opts) {
    cfg.validate();
    GradCheckResult result;
    if (opts.batch_size == 0 || opts.max_words == 0) {
        result.warning = "empty probe batch; nothing to check";
        return result;
    }
    if (cfg.vocab_size <= special::kCount) throw ConfigError("grad_check needs non-special tokens");

    Rng data_rng(sub_seed(seed, "gradcheck-data"));
    std::vector<TokenSequence> seqs;
    std::vector<std::size_t> rows;
    const auto words = static_cast<std::uint64_t>(cfg.vocab_size - special::kCount);
    for (std::size_t i = 0; i < opts.batch_size; ++i) {
        TokenSequence s;
        s.ids.push_back(special::kBos);
        const std::size_t n = 1 + static_cast<std::size_t>(data_rng.below(opts.max_words));
        for (std::size_t k = 0; k < n; ++k) s.ids.push_back(special::kCount + static_cast<int>(data_rng.below(words)));
        s.ids.push_back(special::kEos);
        s.label = i % 2 ? Label::stego : Label::carrier;
        seqs.push_back(std::move(s));
        rows.push_back(i);
    }
    const Batch batch = make_batch(seqs, rows);

    LanguageModel lm;
    Classifier clf;
    std::vector<NamedParam> params;
    std::function<LossSum(bool)> loss;
    if (target == GradCheckTarget::classifier) {
        clf = init_classifier(InitMode::random, cfg, seed);
        params = clf.params();
        loss = [&](bool backward) { return classifier_batch_loss(clf, batch, nullptr, backward); };
    } else {
        lm = LanguageModel::random(cfg, seed);
        params = lm.params();
        if (target == GradCheckTarget::lm)
            loss = [&](bool backward) { return lm_batch_loss(lm, batch, nullptr, backward); };
        else
            loss = [&](bool backward) { return ae_batch_loss(lm, batch, nullptr, backward); };
    }

    // Small init ranges leave most gradients near the finite-difference noise floor.
    Rng init_rng(sub_seed(seed, "gradcheck-init"));
    for (const auto& p : params)
        for (double& x : p.block->value.data()) x = init_rng.uniform(-opts.init_range, opts.init_range);

    for (const auto& p : params) p.block->zero_grad();
    loss(true);
    for (const auto& p : params) {
        Matrix& v = p.block->value;
        const Matrix& g = p.block->grad;
        double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
        for (std::size_t i = 0; i < v.size(); ++i) {
            const double saved = v.data()[i];
            v.data()[i] = saved + opts.eps;
            const double up = loss(false).mean();
            v.data()[i] = saved - opts.eps;
            const double down = loss(false).mean();
            v.data()[i] = saved;
            const double numeric = (up - down) / (2.0 * opts.eps);
            const double analytic = g.data()[i];
            diff2 += (analytic - numeric) * (analytic - numeric);
            a2 += analytic * analytic;
            n2 += numeric * numeric;
            const double abs_err = std::abs(analytic - numeric);
            if (abs_err > result.max_abs_error) {
                result.max_abs_error = abs_err;
                result.worst_index = i;
                result.worst_coordinate_param = p.name;
            }
            ++result.coordinates;
        }
        const double err = std::sqrt(diff2) / std::max(1e-8, std::sqrt(a2) + std::sqrt(n2));
        result.per_param.emplace_back(p.name, err);
        if (err > result.max_rel_error || result.worst_param.empty()) {
            result.max_rel_error = std::max(err, result.max_rel_error);
            result.worst_param = p.name;
        }
    }
    return result;
}

}  // namespace lssa
