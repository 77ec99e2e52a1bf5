// Acceptance suite: one PASS/FAIL line per criterion.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "lssa/autoencoder.hpp"
#include "lssa/error.hpp"
#include "lssa/grad_check.hpp"
#include "lssa/harness.hpp"
#include "lssa/language_model.hpp"
#include "lssa/steganalyzer.hpp"
#include "lssa/stego_codec.hpp"
#include "lssa/synth.hpp"

using namespace lssa;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

struct Env {
    fs::path work;
    fs::path configs;
    bool keep = false;
};

// A small trained LM shared by the codec checks.
LanguageModel codec_lm() {
    SynthParams sp;
    sp.sentences = 3000;
    sp.types = 500;
    std::vector<std::vector<std::string>> toks;
    for (const auto& l : synth_corpus(sub_seed(7, "acceptance-corpus"), sp)) toks.push_back(tokenize(l));
    const Vocab vocab = Vocab::build(toks, 500);
    std::vector<TokenSequence> seqs;
    for (const auto& t : toks) seqs.push_back({vocab.encode(t), std::nullopt});
    const std::vector<TokenSequence> train(seqs.begin(), seqs.begin() + 2700), val(seqs.begin() + 2700, seqs.end());
    ModelConfig cfg;
    cfg.vocab_size = vocab.size();
    cfg.embed_dim = 16;
    cfg.hidden_dim = 32;
    LanguageModel lm = LanguageModel::random(cfg, 7);
    TrainConfig tc;
    tc.epochs = 3;
    tc.batch_size = 32;
    tc.adam.lr = 3e-3;
    train_lm(lm, train, val, tc, 7);
    return lm;
}

const std::vector<CodecSpec>& codec_grid() {
    static const std::vector<CodecSpec> grid{
        {CodecKind::bins, 1, 101}, {CodecKind::bins, 2, 102}, {CodecKind::bins, 3, 103},
        {CodecKind::flc, 1},       {CodecKind::flc, 2},       {CodecKind::flc, 3},
        {CodecKind::vlc, 4},       {CodecKind::vlc, 8},       {CodecKind::vlc, 16}};
    return grid;
}

struct CodecRun {
    CodecSpec codec;
    std::vector<StegoRecord> records;
    std::size_t prefix_failures = 0;
    std::size_t desyncs = 0;
};

// Shared by criteria 1 and 2: 1000 seeded texts per codec, lengths 5..30.
std::vector<CodecRun>& codec_runs(double* elapsed) {
    static std::vector<CodecRun> runs;
    static double secs = 0.0;
    if (runs.empty()) {
        const LanguageModel lm = codec_lm();
        const auto t0 = Clock::now();
        for (std::size_t ci = 0; ci < codec_grid().size(); ++ci) {
            CodecRun run{codec_grid()[ci], {}, 0, 0};
            Rng rng(sub_seed(11, "acceptance-codec", ci));
            for (int i = 0; i < 1000; ++i) {
                const std::size_t len = 5 + static_cast<std::size_t>(rng.below(26));
                const BitStream payload = rng_bits(rng, len * 16);
                StegoRecord rec = embed(lm, run.codec, payload, len);
                try {
                    const BitStream bits = extract(lm, run.codec, rec.tokens.ids);
                    BitStream sent;
                    for (std::size_t b = 0; b < rec.bits_consumed; ++b) sent.push_back(payload[b]);
                    if (!bits.starts_with(sent) || rec.bits_consumed != std::min(bits.size(), payload.size()))
                        ++run.prefix_failures;
                } catch (const DesyncError&) {
                    ++run.desyncs;
                }
                run.records.push_back(std::move(rec));
            }
            runs.push_back(std::move(run));
        }
        secs = seconds_since(t0);
    }
    if (elapsed) *elapsed = secs;
    return runs;
}

Outcome criterion1(const Env&) {
    double secs = 0.0;
    const auto& runs = codec_runs(&secs);
    std::size_t trials = 0, bad = 0;
    for (const auto& r : runs) {
        trials += r.records.size();
        bad += r.prefix_failures + r.desyncs;
    }
    return {bad == 0 && secs < 120.0, fmt("%zu/%zu round trips prefix-match across 9 codecs in %.1f s (limit 120 s)",
                                          trials - bad, trials, secs)};
}

Outcome criterion2(const Env&) {
    const LanguageModel lm = codec_lm();
    bool ok = true;
    std::string detail;
    for (const auto& r : codec_runs(nullptr)) {
        const double bpw = measure_bpw(r.records);
        if (r.codec.kind != CodecKind::vlc) {
            ok = ok && bpw == static_cast<double>(r.codec.param);
            detail += fmt("%s=%.3f ", r.codec.name().c_str(), bpw);
            continue;
        }
        // Independent per-step depth: rebuild each step's tree from the model.
        std::size_t depth = 0, words = 0;
        for (const auto& rec : r.records) {
            LmStepper st(lm);
            for (std::size_t t = 0; t + 2 < rec.tokens.ids.size(); ++t) {
                const auto dist = st.feed(rec.tokens.ids[t]);
                const HuffmanCode code = huffman_build(candidate_pool(dist, r.codec));
                depth += code.code(rec.tokens.ids[t + 1]).size();
            }
            words += rec.words();
        }
        const double mean_depth = static_cast<double>(depth) / static_cast<double>(words);
        const bool rate_ok = std::abs(bpw - mean_depth) <= 1e-12 && bpw > 0.0 &&
                             bpw <= std::log2(static_cast<double>(r.codec.param));
        ok = ok && rate_ok;
        detail += fmt("%s=%.3f(depth %.3f) ", r.codec.name().c_str(), bpw, mean_depth);
    }
    return {ok, "bpw " + detail};
}

Outcome criterion3(const Env&) {
    const auto t0 = Clock::now();
    double worst = 0.0;
    std::string detail;
    for (auto target : {GradCheckTarget::lm, GradCheckTarget::ae, GradCheckTarget::classifier}) {
        GradCheckOptions opts;
        opts.eps = 1e-5;
        const GradCheckResult r = grad_check(target, tiny_config(), 1, opts);
        worst = std::max(worst, r.max_rel_error);
        detail += fmt("%s %.2e ", grad_check_target_name(target).c_str(), r.max_rel_error);
    }
    const double secs = seconds_since(t0);
    return {worst < 1e-4 && secs < 60.0, "max relative error " + detail + fmt("(limit 1e-4) in %.1f s", secs)};
}

Outcome criterion4(const Env&) {
    ModelConfig cfg;
    cfg.vocab_size = 60;
    cfg.embed_dim = 16;
    cfg.hidden_dim = 24;
    const LanguageModel lm = LanguageModel::random(cfg, 4);
    Rng rng(sub_seed(4, "acceptance-perplexity-oracle"));
    double worst_oracle = 0.0, worst_geo = 0.0;
    for (int i = 0; i < 100; ++i) {
        TokenSequence s;
        s.ids.push_back(special::kBos);
        const std::size_t n = 1 + static_cast<std::size_t>(rng.below(30));
        for (std::size_t k = 0; k < n; ++k) s.ids.push_back(4 + static_cast<int>(rng.below(56)));
        s.ids.push_back(special::kEos);

        // Perplexity as a plain loop over fresh prefix distributions.
        double log2_sum = 0.0;
        for (std::size_t t = 1; t < s.ids.size(); ++t) {
            const auto dist = next_token_distribution(lm, std::span(s.ids).first(t));
            log2_sum += std::log2(std::max(dist[static_cast<std::size_t>(s.ids[t])], 1e-12));
        }
        const double oracle = std::pow(2.0, -log2_sum / static_cast<double>(s.ids.size() - 1));
        const double got = perplexity(lm, s);
        worst_oracle = std::max(worst_oracle, std::abs(got - oracle) / oracle);

        double ln_sum = 0.0;
        const auto pw = positionwise_perplexity(lm, s);
        for (double v : pw) ln_sum += std::log(v);
        const double geo = std::exp(ln_sum / static_cast<double>(pw.size()));
        worst_geo = std::max(worst_geo, std::abs(geo - got) / got);
    }
    return {worst_oracle < 1e-9 && worst_geo < 1e-9,
            fmt("max relative deviation: oracle %.2e, geometric mean %.2e (limit 1e-9)", worst_oracle, worst_geo)};
}

Outcome criterion5(const Env&) {
    const auto t0 = Clock::now();
    SynthParams sp;
    sp.sentences = 5000;
    sp.types = 500;
    std::vector<std::vector<std::string>> toks;
    for (const auto& l : synth_corpus(sub_seed(5, "acceptance-lm-corpus"), sp)) toks.push_back(tokenize(l));
    std::vector<std::size_t> order(toks.size());
    std::iota(order.begin(), order.end(), 0);
    Rng(sub_seed(5, "acceptance-lm-split")).shuffle(order);
    const std::size_t n_val = toks.size() / 10;
    std::vector<std::vector<std::string>> train_toks;
    for (std::size_t i = n_val; i < order.size(); ++i) train_toks.push_back(toks[order[i]]);
    const Vocab vocab = Vocab::build(train_toks, 500);
    std::vector<TokenSequence> train, val;
    for (std::size_t i = 0; i < order.size(); ++i)
        (i < n_val ? val : train).push_back({vocab.encode(toks[order[i]]), std::nullopt});

    ModelConfig cfg;
    cfg.vocab_size = vocab.size();
    cfg.embed_dim = 32;
    cfg.hidden_dim = 64;
    LanguageModel lm = LanguageModel::random(cfg, 5);
    TrainConfig tc;
    tc.epochs = 10;
    tc.batch_size = 32;
    tc.adam.lr = 3e-3;
    train_lm(lm, train, val, tc, 5);

    // Token-level perplexity pooled over the whole validation set.
    double log2_sum = 0.0;
    std::size_t n = 0;
    for (const auto& probs : conditional_probabilities(lm, val))
        for (double p : probs) {
            log2_sum += std::log2(std::max(p, 1e-12));
            ++n;
        }
    const double ppl = std::exp2(-log2_sum / static_cast<double>(n));
    const double unigram = unigram_perplexity(val);
    const double secs = seconds_since(t0);
    return {ppl < unigram && secs < 300.0,
            fmt("validation perplexity %.2f vs unigram baseline %.2f after 10 epochs in %.1f s (limit 300 s)", ppl,
                unigram, secs)};
}

ExperimentConfig load_config(const Env& env, const std::string& name, const std::string& out) {
    ExperimentConfig cfg = ExperimentConfig::load((env.configs / name).string());
    cfg.output_dir = (env.work / out).string();
    return cfg;
}

void progress(const std::string& msg) { std::fprintf(stderr, "  .. %s\n", msg.c_str()); }

Outcome criterion6(const Env& env) {
    const auto t0 = Clock::now();
    const RunResult res = run_experiment(load_config(env, "acceptance-perplexity.cfg", "perplexity"), progress);
    const double secs = seconds_since(t0);
    std::size_t wins = 0;
    std::string detail;
    for (const auto& a : res.aucs) {
        const bool win = a.separability_trained > a.separability_random;
        wins += win;
        detail += fmt("seed %zu: %.3f vs %.3f; ", a.replicate, a.separability_trained, a.separability_random);
    }
    return {wins >= 2 && res.aucs.size() == 3 && secs < 600.0,
            fmt("trained beats random in %zu/3 seeds (", wins) + detail + fmt("%.0f s, limit 600 s)", secs)};
}

const RunResult& pretrain_run(const Env& env) {
    static std::optional<RunResult> res;
    if (!res) res = run_experiment(load_config(env, "acceptance-pretrain.cfg", "pretrain"), progress);
    return *res;
}

Outcome criterion7(const Env& env) {
    const RunResult& res = pretrain_run(env);
    std::size_t smallest = 0;
    for (const auto& r : res.rows)
        if (r.init_mode != "random" && (smallest == 0 || r.pretrain_size < smallest)) smallest = r.pretrain_size;
    std::map<std::string, std::pair<double, std::size_t>> mean;
    for (const auto& r : res.rows) {
        if (!r.early_stopping || (r.init_mode != "random" && r.pretrain_size != smallest)) continue;
        auto& [sum, n] = mean[r.init_mode];
        sum += static_cast<double>(r.metrics.epochs_to_threshold);
        ++n;
    }
    auto avg = [&](const std::string& m) { return mean[m].first / static_cast<double>(std::max<std::size_t>(1, mean[m].second)); };
    const double rnd = avg("random"), lm = avg("lm"), ae = avg("ae");
    return {lm < rnd && ae < rnd && mean["lm"].second > 0 && mean["ae"].second > 0,
            fmt("mean epochs to reach the random-init epoch-5 validation loss: random %.2f, lm %.2f, ae %.2f "
                "(pool %zu, 3 seeds x 3 codecs)",
                rnd, lm, ae, smallest)};
}

Outcome criterion8(const Env& env) {
    const RunResult& res = pretrain_run(env);
    std::set<std::size_t> sizes;
    for (const auto& r : res.rows)
        if (r.init_mode != "random") sizes.insert(r.pretrain_size);
    if (sizes.empty()) return {false, "no pre-trained rows"};
    const std::size_t smallest = *sizes.begin();

    // (a) per codec and seed: mean of the pre-trained modes vs random, smallest pool.
    std::map<std::pair<std::string, std::size_t>, std::pair<double, std::size_t>> pre;
    std::map<std::pair<std::string, std::size_t>, double> rnd;
    for (const auto& r : res.rows) {
        if (!r.early_stopping) continue;
        const auto key = std::make_pair(r.codec, r.replicate);
        if (r.init_mode == "random") rnd[key] = r.metrics.acc;
        else if (r.pretrain_size == smallest) {
            pre[key].first += r.metrics.acc;
            ++pre[key].second;
        }
    }
    std::map<std::string, std::size_t> wins;
    for (const auto& [key, v] : pre)
        if (v.first / static_cast<double>(v.second) >= rnd[key]) ++wins[key.first];
    bool a_ok = !pre.empty();
    std::string a_detail;
    std::set<std::string> codecs;
    for (const auto& [key, v] : pre) codecs.insert(key.first);
    for (const auto& c : codecs) {
        a_ok = a_ok && wins[c] >= 2;
        a_detail += fmt("%s %zu/3 ", c.c_str(), wins[c]);
    }

    // (b) mean accuracy over codecs, seeds and pre-trained modes per pool size.
    std::vector<double> means;
    std::string b_detail;
    for (std::size_t s : sizes) {
        double sum = 0.0;
        std::size_t n = 0;
        for (const auto& r : res.rows)
            if (r.early_stopping && r.init_mode != "random" && r.pretrain_size == s) {
                sum += r.metrics.acc;
                ++n;
            }
        means.push_back(sum / static_cast<double>(n));
        b_detail += fmt("%zu: %.4f ", s, means.back());
    }
    std::size_t inversions = 0;
    bool small_drops = true;
    for (std::size_t i = 1; i < means.size(); ++i)
        if (means[i] < means[i - 1]) {
            ++inversions;
            small_drops = small_drops && means[i - 1] - means[i] <= 0.005;
        }
    const bool b_ok = sizes.size() >= 3 && inversions <= 1 && small_drops;
    return {a_ok && b_ok, "(a) " + std::string(a_ok ? "ok" : "FAIL") + " pre-trained >= random in " + a_detail +
                              "(b) " + (b_ok ? "ok" : "FAIL") + " mean acc by pool size " + b_detail +
                              fmt("(%zu inversion(s))", inversions)};
}

Outcome criterion9(const Env&) {
    const MetricsReport m = metrics_from_counts(40, 10, 20, 30);
    std::vector<Label> truth, all_carrier;
    for (int i = 0; i < 50; ++i) {
        truth.push_back(Label::carrier);
        truth.push_back(Label::stego);
        all_carrier.push_back(Label::carrier);
        all_carrier.push_back(Label::carrier);
    }
    const MetricsReport perfect = evaluate(truth, truth);
    const MetricsReport none = evaluate(all_carrier, truth);
    const bool ok = std::abs(m.acc - 0.7) < 1e-12 && std::abs(m.f1 - 0.72727) < 1e-5 && perfect.acc == 1.0 &&
                    perfect.f1 == 1.0 && none.acc == 0.5 && none.f1 == 0.0;
    return {ok, fmt("40/10/20/30 -> acc %.5f f1 %.5f; perfect %.1f/%.1f; all-carrier %.1f/%.1f", m.acc, m.f1,
                    perfect.acc, perfect.f1, none.acc, none.f1)};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Outcome criterion10(const Env& env) {
    const ExperimentConfig a = load_config(env, "min.cfg", "determinism-a");
    const ExperimentConfig b = load_config(env, "min.cfg", "determinism-b");
    run_experiment(a);
    run_experiment(b);
    std::set<std::string> files_a, files_b;
    for (const auto& e : fs::recursive_directory_iterator(a.output_dir))
        if (e.is_regular_file()) files_a.insert(fs::relative(e.path(), a.output_dir).string());
    for (const auto& e : fs::recursive_directory_iterator(b.output_dir))
        if (e.is_regular_file()) files_b.insert(fs::relative(e.path(), b.output_dir).string());
    std::size_t differing = 0;
    for (const auto& f : files_a)
        if (!files_b.count(f) || slurp(fs::path(a.output_dir) / f) != slurp(fs::path(b.output_dir) / f)) ++differing;
    return {files_a == files_b && differing == 0 && !files_a.empty(),
            fmt("%zu files compared, %zu differ", files_a.size(), differing)};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Acceptance criteria"};
    Env env;
    std::string work = (fs::temp_directory_path() / "lssa-acceptance").string();
    std::string configs = LSSA_CONFIG_DIR;
    std::vector<int> only;
    app.add_option("--work-dir", work, "Scratch directory for experiment outputs")->capture_default_str();
    app.add_option("--config-dir", configs, "Directory holding the acceptance configs")->capture_default_str();
    app.add_option("--only", only, "Run only these criteria (1-10)")->check(CLI::Range(1, 10));
    app.add_flag("--keep", env.keep, "Keep experiment outputs");
    CLI11_PARSE(app, argc, argv);
    env.work = work;
    env.configs = configs;
    fs::create_directories(env.work);

    const std::vector<std::pair<int, std::function<Outcome(const Env&)>>> criteria{
        {1, criterion1}, {2, criterion2}, {3, criterion3}, {4, criterion4}, {5, criterion5},
        {6, criterion6}, {7, criterion7}, {8, criterion8}, {9, criterion9}, {10, criterion10}};

    std::size_t failed = 0;
    for (const auto& [n, fn] : criteria) {
        if (!only.empty() && std::ranges::count(only, n) == 0) continue;
        const auto t0 = Clock::now();
        Outcome o;
        try {
            o = fn(env);
        } catch (const std::exception& e) {
            o = {false, std::string("error: ") + e.what()};
        }
        failed += !o.pass;
        std::printf("criterion %2d: %s  %s  [%.1f s]\n", n, o.pass ? "PASS" : "FAIL", o.detail.c_str(),
                    seconds_since(t0));
        std::fflush(stdout);
    }
    if (!env.keep) fs::remove_all(env.work);
    return failed ? 1 : 0;
}
