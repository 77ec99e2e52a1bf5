#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <numeric>

#include "lssa/error.hpp"
#include "lssa/language_model.hpp"
#include "lssa/synth.hpp"

using namespace lssa;

namespace {

ModelConfig lm_config(std::size_t vocab = 30) {
    ModelConfig c;
    c.vocab_size = vocab;
    c.embed_dim = 8;
    c.hidden_dim = 12;
    return c;
}

TokenSequence random_seq(Rng& rng, std::size_t vocab, std::size_t words) {
    TokenSequence s;
    s.ids.push_back(special::kBos);
    for (std::size_t i = 0; i < words; ++i) s.ids.push_back(4 + static_cast<int>(rng.below(vocab - 4)));
    s.ids.push_back(special::kEos);
    return s;
}

// Perplexity evaluated term by term from fresh prefix distributions.
double loop_perplexity(const LanguageModel& m, const TokenSequence& s) {
    double log2_sum = 0.0;
    const std::size_t n = s.ids.size() - 1;
    for (std::size_t i = 1; i <= n; ++i) {
        const auto dist = next_token_distribution(m, std::span(s.ids).first(i));
        log2_sum += std::log2(std::max(dist[static_cast<std::size_t>(s.ids[i])], 1e-12));
    }
    return std::pow(2.0, -log2_sum / static_cast<double>(n));
}

double pair_auc(const std::vector<double>& carrier, const std::vector<double>& stego) {
    double wins = 0.0;
    for (double s : stego)
        for (double c : carrier) wins += s > c ? 1.0 : (s == c ? 0.5 : 0.0);
    return wins / static_cast<double>(carrier.size() * stego.size());
}

}  // namespace

TEST_CASE("perplexity formula") {
    CHECK(perplexity_from_probs(std::vector<double>{1.0, 1.0, 1.0}) == 1.0);
    for (std::size_t n : {1, 2, 7, 40}) CHECK(perplexity_from_probs(std::vector<double>(n, 0.5)) == doctest::Approx(2.0));
    CHECK(perplexity_from_probs(std::vector<double>{0.5, 0.25}) == doctest::Approx(2.828427).epsilon(1e-6));
    CHECK(positionwise_from_probs(std::vector<double>{0.25})[0] == doctest::Approx(4.0));
    CHECK(positionwise_from_probs(std::vector<double>{1.0, 1.0}) == std::vector<double>{1.0, 1.0});
    CHECK_THROWS_AS(perplexity_from_probs(std::vector<double>{}), DegenerateInputError);
}

TEST_CASE("zero-weight model predicts uniformly") {
    const LanguageModel m(lm_config(20));
    const std::vector<int> prefix{special::kBos, 5, 6};
    const auto d = next_token_distribution(m, prefix);
    REQUIRE(d.size() == 20);
    for (double p : d) CHECK(p == doctest::Approx(0.05).epsilon(1e-14));
}

TEST_CASE("next token distribution") {
    const LanguageModel m = LanguageModel::random(lm_config(), 3);
    const std::vector<int> prefix{special::kBos, 7, 9, 11};
    const auto d = next_token_distribution(m, prefix);
    CHECK(std::abs(std::accumulate(d.begin(), d.end(), 0.0) - 1.0) < 1e-12);
    CHECK(d == next_token_distribution(m, prefix));
    const std::vector<int> bad{special::kBos, 30};
    CHECK_THROWS_AS(next_token_distribution(m, bad), IndexError);

    LmStepper st(m);
    std::vector<double> last;
    for (int id : prefix) last = st.feed(id);
    CHECK(last == d);
}

TEST_CASE("perplexity equals a direct loop oracle and the geometric mean identity") {
    const LanguageModel m = LanguageModel::random(lm_config(), 17);
    Rng rng(101);
    std::vector<TokenSequence> seqs;
    for (int i = 0; i < 100; ++i) seqs.push_back(random_seq(rng, 30, 1 + rng.below(15)));
    const auto probs = conditional_probabilities(m, seqs, 16);
    for (std::size_t i = 0; i < seqs.size(); ++i) {
        const double oracle = loop_perplexity(m, seqs[i]);
        const double got = perplexity(m, seqs[i]);
        CHECK(std::abs(got - oracle) / oracle < 1e-9);
        CHECK(std::abs(perplexity_from_probs(probs[i]) - oracle) / oracle < 1e-9);
        CHECK(got >= 1.0);

        const auto pw = positionwise_perplexity(m, seqs[i]);
        REQUIRE(pw.size() == seqs[i].scored_len());
        double log_sum = 0.0;
        for (double v : pw) log_sum += std::log(v);
        const double geo = std::exp(log_sum / static_cast<double>(pw.size()));
        CHECK(std::abs(geo - got) / got < 1e-9);
    }
    TokenSequence empty;
    CHECK_THROWS_AS(perplexity(m, empty), DegenerateInputError);
}

TEST_CASE("auc") {
    const std::vector<double> s{1, 2, 3, 4};
    const std::vector<Label> l{Label::carrier, Label::carrier, Label::stego, Label::stego};
    CHECK(auc(s, l) == 1.0);
    const std::vector<Label> rev{Label::stego, Label::stego, Label::carrier, Label::carrier};
    CHECK(auc(s, rev) == 0.0);

    Rng rng(4);
    std::vector<double> scores, carrier, stego;
    std::vector<Label> labels;
    for (int i = 0; i < 300; ++i) {
        const bool is_stego = rng.bernoulli(0.4);
        const double v = static_cast<double>(rng.below(20)) + (is_stego ? 3.0 : 0.0);
        scores.push_back(v);
        labels.push_back(is_stego ? Label::stego : Label::carrier);
        (is_stego ? stego : carrier).push_back(v);
    }
    CHECK(auc(scores, labels) == doctest::Approx(pair_auc(carrier, stego)).epsilon(1e-12));
}

TEST_CASE("perplexity report") {
    const LanguageModel m = LanguageModel::random(lm_config(), 5);
    Rng rng(6);
    std::vector<TokenSequence> carriers;
    for (int i = 0; i < 1000; ++i) {
        carriers.push_back(random_seq(rng, 30, 1 + rng.below(12)));
        carriers.back().label = Label::carrier;
    }

    SUBCASE("identical classes") {
        std::vector<TokenSequence> texts(carriers.begin(), carriers.begin() + 50);
        for (int i = 0; i < 50; ++i) {
            texts.push_back(texts[static_cast<std::size_t>(i)]);
            texts.back().label = Label::stego;
        }
        const PerplexityReport r = perplexity_report(m, texts, 10);
        CHECK(r.auc == 0.5);
        CHECK(r.carrier.position_mean == r.stego.position_mean);
        CHECK(r.carrier.histogram == r.stego.histogram);
        CHECK(r.log2_gap == 0.0);
    }
    SUBCASE("single text") {
        const std::vector<TokenSequence> one{carriers[0]};
        const PerplexityReport r = perplexity_report(m, one, 5);
        CHECK(std::accumulate(r.carrier.histogram.begin(), r.carrier.histogram.end(), std::size_t{0}) == 1);
        CHECK(std::ranges::count_if(r.carrier.histogram, [](std::size_t c) { return c > 0; }) == 1);
        CHECK(r.bin_edges.size() == 6);
    }
    SUBCASE("position means match a streaming mean") {
        const PerplexityReport r = perplexity_report(m, carriers, 20);
        std::vector<double> mean;
        std::vector<std::size_t> count;
        for (const auto& s : carriers) {
            const auto pw = positionwise_perplexity(m, s);
            if (mean.size() < pw.size()) {
                mean.resize(pw.size(), 0.0);
                count.resize(pw.size(), 0);
            }
            for (std::size_t p = 0; p < pw.size(); ++p) {
                ++count[p];
                mean[p] += (pw[p] - mean[p]) / static_cast<double>(count[p]);
            }
        }
        REQUIRE(r.carrier.position_mean.size() == mean.size());
        for (std::size_t p = 0; p < mean.size(); ++p) {
            CHECK(r.carrier.position_count[p] == count[p]);
            CHECK(std::abs(r.carrier.position_mean[p] - mean[p]) <= 1e-9 * mean[p]);
        }
        CHECK(std::accumulate(r.carrier.histogram.begin(), r.carrier.histogram.end(), std::size_t{0}) == 1000);
        CHECK(r.stego.text_perplexity.empty());
    }
    CHECK_THROWS_AS(perplexity_report(m, {}, 10), ConfigError);
    CHECK_THROWS_AS(perplexity_report(m, carriers, 0), ConfigError);
}

TEST_CASE("unigram baseline is the exponentiated empirical entropy") {
    TokenSequence s;
    s.ids = {special::kBos, 4, 4, 5, special::kEos};
    // targets 4,4,5,EOS -> p = {1/2, 1/4, 1/4} -> H = 1.5 bits
    CHECK(unigram_perplexity({s}) == doctest::Approx(std::pow(2.0, 1.5)));
    CHECK_THROWS_AS(unigram_perplexity({}), DegenerateInputError);
}

TEST_CASE("untrained loss is about ln V") {
    const LanguageModel m = LanguageModel::random(lm_config(50), 1);
    Rng rng(2);
    std::vector<TokenSequence> seqs;
    for (int i = 0; i < 40; ++i) seqs.push_back(random_seq(rng, 50, 8));
    LanguageModel copy = m;
    const LossSum loss = evaluate_loss(seqs, 16, [&](const Batch& b) { return lm_batch_loss(copy, b, nullptr, false); });
    CHECK(loss.mean() == doctest::Approx(std::log(50.0)).epsilon(0.01));
}

TEST_CASE("a single repeated sentence is memorized") {
    const Vocab v = Vocab::from_tokens({"a", "b", "c", "d", "e"});
    const TokenSequence s = encode_text(v, "a c b e d a");
    const std::vector<TokenSequence> train(128, s), val(4, s);
    ModelConfig cfg = lm_config(v.size());
    LanguageModel m = LanguageModel::random(cfg, 1);
    TrainConfig tc;
    tc.epochs = 50;
    tc.batch_size = 8;
    tc.adam.lr = 1e-2;
    const LossCurve curve = train_lm(m, train, val, tc, 1);
    CHECK(perplexity(m, s) < 1.05);
    CHECK(curve.epochs_ran == 50);
    CHECK_THROWS_AS(train_lm(m, {}, val, tc, 1), ConfigError);
}

TEST_CASE("training is deterministic") {
    Rng rng(8);
    std::vector<TokenSequence> train, val;
    for (int i = 0; i < 60; ++i) train.push_back(random_seq(rng, 30, 1 + rng.below(8)));
    for (int i = 0; i < 10; ++i) val.push_back(random_seq(rng, 30, 1 + rng.below(8)));
    TrainConfig tc;
    tc.epochs = 3;
    tc.batch_size = 16;
    LanguageModel a = LanguageModel::random(lm_config(), 4), b = LanguageModel::random(lm_config(), 4);
    const LossCurve ca = train_lm(a, train, val, tc, 9), cb = train_lm(b, train, val, tc, 9);
    CHECK(ca.train_loss == cb.train_loss);
    CHECK(ca.val_loss == cb.val_loss);
    CHECK(a.head.weight.value == b.head.weight.value);
}

TEST_CASE("early stopping restores the best weights") {
    LossCurve c;
    c.val_loss = {3.0, 2.0, 2.5};
    c.epochs_ran = 3;
    CHECK(c.epochs_to_reach(2.2) == 2);
    CHECK(c.epochs_to_reach(1.0) == 4);

    Rng rng(8);
    std::vector<TokenSequence> train, val;
    for (int i = 0; i < 30; ++i) train.push_back(random_seq(rng, 30, 3));
    for (int i = 0; i < 10; ++i) val.push_back(random_seq(rng, 30, 3));
    TrainConfig tc;
    tc.epochs = 40;
    tc.batch_size = 8;
    tc.adam.lr = 2e-2;
    tc.patience = 2;
    LanguageModel m = LanguageModel::random(lm_config(), 4);
    const LossCurve curve = train_lm(m, train, val, tc, 3);
    REQUIRE(curve.stopped_early);
    CHECK(curve.epochs_ran == curve.best_epoch + 2);
    const double restored = evaluate_loss(val, 8, [&](const Batch& b) { return lm_batch_loss(m, b, nullptr, false); }).mean();
    CHECK(restored == curve.val_loss[curve.best_epoch - 1]);
}

TEST_CASE("language model checkpoint round trip") {
    LanguageModel m = LanguageModel::random(lm_config(), 12);
    const std::string path = (std::filesystem::temp_directory_path() / "lssa_lm_test.ckpt").string();
    m.save(path, stage::kLm, 12);
    const LanguageModel back = LanguageModel::load(path);
    CHECK(back.head.weight.value == m.head.weight.value);
    CHECK(back.net.embedding.value == m.net.embedding.value);
    std::filesystem::remove(path);
}

TEST_CASE("synthetic corpus") {
    SynthParams p;
    p.sentences = 10000;
    const auto a = synth_corpus(3, p);
    CHECK(a == synth_corpus(3, p));
    CHECK(a.size() == 10000);

    std::map<std::string, std::size_t> freq;
    std::size_t words = 0;
    for (const auto& line : a)
        for (const auto& t : tokenize(line)) {
            ++freq[t];
            ++words;
        }
    const double mean_len = static_cast<double>(words) / static_cast<double>(a.size());
    CHECK(std::abs(mean_len - p.mean_length) <= 0.1 * p.mean_length);

    std::vector<std::size_t> counts;
    for (const auto& [w, c] : freq) counts.push_back(c);
    std::ranges::sort(counts, std::greater<>());
    const std::size_t top = std::accumulate(counts.begin(), counts.begin() + std::min<std::ptrdiff_t>(2000, static_cast<std::ptrdiff_t>(counts.size())), std::size_t{0});
    CHECK(static_cast<double>(top) >= 0.95 * static_cast<double>(words));

    p.mean_length = 20;
    const auto longer = synth_corpus(3, p);
    std::size_t w20 = 0;
    for (const auto& line : longer) w20 += tokenize(line).size();
    CHECK(std::abs(static_cast<double>(w20) / 10000.0 - 20.0) <= 2.0);

    p.sentences = 99;
    CHECK_THROWS_AS(synth_corpus(1, p), ConfigError);
}
