#include "lssa/synth.hpp"

#include <algorithm>
#include <cmath>

#include "lssa/corpus.hpp"
#include "lssa/error.hpp"
#include "lssa/rng.hpp"

namespace lssa {

namespace {

constexpr const char* kConsonants = "bdfgklmnprstvz";
constexpr const char* kVowels = "aeiou";

std::size_t draw(Rng& rng, const std::vector<double>& cumulative) {
    const double u = rng.uniform() * cumulative.back();
    const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
    return std::min(static_cast<std::size_t>(it - cumulative.begin()), cumulative.size() - 1);
}

std::size_t poisson(Rng& rng, double lambda) {
    if (lambda <= 0.0) return 0;
    const double limit = std::exp(-lambda);
    std::size_t k = 0;
    double p = rng.uniform();
    while (p > limit) {
        ++k;
        p *= rng.uniform();
    }
    return k;
}

}  // namespace

std::string synth_word(std::size_t index) {
    const std::size_t nc = 14, nv = 5, base = nc * nv;
    // Two syllables minimum keeps forms readable and unique.
    std::size_t v = index + base;
    std::string w;
    while (v > 0) {
        const std::size_t s = v % base;
        w.insert(0, {kConsonants[s / nv], kVowels[s % nv]});
        v /= base;
    }
    return w;
}

std::vector<std::string> synth_corpus(std::uint64_t seed, const SynthParams& params) {
    if (params.sentences < 100) throw ConfigError("synth_corpus needs at least 100 sentences");
    if (params.classes < 2 || params.types < params.classes || params.successors < 1 ||
        params.successors > params.classes)
        throw ConfigError("synth_corpus: inconsistent types/classes/successors");
    if (params.mean_length < 1.0) throw ConfigError("synth_corpus: mean_length must be >= 1");

    const std::size_t C = params.classes;
    // Type t belongs to class t % C; its rank inside the class is t / C.
    std::vector<std::vector<double>> word_cdf(C);
    for (std::size_t t = 0; t < params.types; ++t) {
        auto& cdf = word_cdf[t % C];
        const double w = 1.0 / std::pow(static_cast<double>(t / C + 1), params.zipf_exponent);
        cdf.push_back((cdf.empty() ? 0.0 : cdf.back()) + w);
    }

    // Context (c2, c1) with C standing for "sentence start".
    const std::size_t contexts = (C + 1) * (C + 1);
    std::vector<std::vector<std::size_t>> next_class(contexts);
    std::vector<std::vector<double>> next_cdf(contexts);
    Rng table_rng(sub_seed(seed, "synth-table"));
    for (std::size_t ctx = 0; ctx < contexts; ++ctx) {
        std::vector<std::size_t> all(C);
        for (std::size_t c = 0; c < C; ++c) all[c] = c;
        table_rng.shuffle(all);
        double acc = 0.0;
        for (std::size_t k = 0; k < params.successors; ++k) {
            next_class[ctx].push_back(all[k]);
            acc += 0.2 + table_rng.uniform();
            next_cdf[ctx].push_back(acc);
        }
    }

    std::vector<std::string> words(params.types);
    for (std::size_t t = 0; t < params.types; ++t) words[t] = synth_word(t);

    Rng rng(sub_seed(seed, "synth-sentences"));
    const std::size_t max_words = kMaxSequenceLength - 2;
    std::vector<std::string> out;
    out.reserve(params.sentences);
    for (std::size_t s = 0; s < params.sentences; ++s) {
        const std::size_t len = std::min(max_words, 1 + poisson(rng, params.mean_length - 1.0));
        std::size_t c2 = C, c1 = C;
        std::string line;
        for (std::size_t i = 0; i < len; ++i) {
            const std::size_t ctx = c2 * (C + 1) + c1;
            const std::size_t c = next_class[ctx][draw(rng, next_cdf[ctx])];
            const std::size_t rank = draw(rng, word_cdf[c]);
            if (!line.empty()) line.push_back(' ');
            line += words[rank * C + c];
            c2 = c1;
            c1 = c;
        }
        out.push_back(std::move(line));
    }
    return out;
}

}  // namespace lssa
