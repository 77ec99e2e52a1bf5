// Command-line front end: one subcommand per pipeline step.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "lssa/autoencoder.hpp"
#include "lssa/corpus.hpp"
#include "lssa/error.hpp"
#include "lssa/grad_check.hpp"
#include "lssa/harness.hpp"
#include "lssa/language_model.hpp"
#include "lssa/steganalyzer.hpp"
#include "lssa/stego_codec.hpp"
#include "lssa/synth.hpp"

using namespace lssa;

namespace {

struct ModelFlags {
    std::size_t embed_dim = 128;
    std::size_t hidden_dim = 256;
    std::size_t layers = 2;
    double dropout_keep = 0.5;

    void add(CLI::App* app) {
        app->add_option("--embed-dim", embed_dim, "Embedding size")->capture_default_str();
        app->add_option("--hidden-dim", hidden_dim, "LSTM hidden size")->capture_default_str();
        app->add_option("--layers", layers, "LSTM layers")->capture_default_str();
        app->add_option("--dropout-keep", dropout_keep, "Keep probability of embedding dropout")->capture_default_str();
    }
    ModelConfig config(std::size_t vocab) const {
        ModelConfig c;
        c.vocab_size = vocab;
        c.embed_dim = embed_dim;
        c.hidden_dim = hidden_dim;
        c.layers = layers;
        c.dropout_keep = dropout_keep;
        c.validate();
        return c;
    }
};

struct TrainFlags {
    std::size_t epochs = 50;
    std::size_t batch_size = 128;
    double lr = 1e-3;
    double clip = 5.0;
    std::size_t patience = 0;
    bool no_dropout = false;
    std::string curve_path;

    void add(CLI::App* app, std::size_t default_patience) {
        patience = default_patience;
        app->add_option("--epochs", epochs, "Maximum epochs")->capture_default_str();
        app->add_option("--batch-size", batch_size, "Batch size")->capture_default_str();
        app->add_option("--lr", lr, "Adam learning rate")->capture_default_str();
        app->add_option("--clip", clip, "Global gradient-norm clip (0 disables)")->capture_default_str();
        app->add_option("--patience", patience, "Early-stopping patience (0 disables)")->capture_default_str();
        app->add_flag("--no-dropout", no_dropout, "Disable embedding dropout");
        app->add_option("--curve", curve_path, "Write per-epoch losses to this TSV");
    }
    TrainConfig config() const {
        TrainConfig t;
        t.epochs = epochs;
        t.batch_size = batch_size;
        t.adam.lr = lr;
        t.clip_norm = clip;
        t.patience = patience;
        t.dropout = !no_dropout;
        return t;
    }
};

void add_config(CLI::App* app) {
    app->set_config("--config", "", "key = value file supplying defaults for any flag of this command");
    app->allow_config_extras(CLI::config_extras_mode::ignore);
}

void write_curve(const std::string& path, const LossCurve& c) {
    if (path.empty()) return;
    std::ofstream out(path);
    if (!out) throw IoError("cannot write '" + path + "'");
    out << "epoch\ttrain_loss\tval_loss\n";
    out << "0\t\t" << c.initial_val_loss << "\n";
    for (std::size_t e = 0; e < c.train_loss.size(); ++e)
        out << e + 1 << "\t" << c.train_loss[e] << "\t" << c.val_loss[e] << "\n";
}

void print_curve(const LossCurve& c) {
    std::printf("initial val loss %.6f\n", c.initial_val_loss);
    for (std::size_t e = 0; e < c.train_loss.size(); ++e)
        std::printf("epoch %zu  train %.6f  val %.6f\n", e + 1, c.train_loss[e], c.val_loss[e]);
    std::printf("best epoch %zu of %zu%s\n", c.best_epoch, c.epochs_ran, c.stopped_early ? " (stopped early)" : "");
}

std::vector<TokenSequence> encode_file(const Vocab& vocab, const std::string& path, std::optional<Label> label) {
    std::vector<TokenSequence> out;
    for (const auto& line : read_lines(path)) out.push_back(encode_text(vocab, line, label));
    return out;
}

// 90/10 train/validation carve-out for the unsupervised trainers.
std::pair<std::vector<TokenSequence>, std::vector<TokenSequence>> holdout(std::vector<TokenSequence> seqs,
                                                                          std::uint64_t seed) {
    Rng(sub_seed(seed, "holdout")).shuffle(seqs);
    const auto n_val = static_cast<std::size_t>(std::llround(0.1 * static_cast<double>(seqs.size())));
    std::vector<TokenSequence> val(seqs.begin(), seqs.begin() + static_cast<std::ptrdiff_t>(n_val));
    seqs.erase(seqs.begin(), seqs.begin() + static_cast<std::ptrdiff_t>(n_val));
    return {std::move(seqs), std::move(val)};
}

std::vector<std::uint8_t> read_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "'");
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const std::string& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write '" + path + "'");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

void print_metrics(const MetricsReport& m) {
    std::printf("tp %zu  fp %zu  fn %zu  tn %zu\nacc %.6f  f1 %.6f  (positive class: stego)\n", m.tp, m.fp, m.fn,
                m.tn, m.acc, m.f1);
}

std::vector<TokenSequence> labeled_set(const Vocab& vocab, const std::string& carrier, const std::string& stego) {
    auto all = encode_file(vocab, carrier, Label::carrier);
    for (auto& s : encode_file(vocab, stego, Label::stego)) all.push_back(std::move(s));
    return all;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Linguistic steganography and steganalysis workbench"};
    app.require_subcommand(1);
    std::uint64_t seed = 1;
    std::string stage = "cli";

    // synth-corpus
    auto* synth = app.add_subcommand("synth-corpus", "Generate a synthetic line-per-sentence corpus");
    SynthParams sp;
    std::string synth_out;
    synth->add_option("--out", synth_out, "Output corpus file")->required();
    synth->add_option("--sentences", sp.sentences, "Number of sentences")->capture_default_str();
    synth->add_option("--types", sp.types, "Distinct word types")->capture_default_str();
    synth->add_option("--classes", sp.classes, "Latent word classes")->capture_default_str();
    synth->add_option("--successors", sp.successors, "Successor classes per context")->capture_default_str();
    synth->add_option("--mean-length", sp.mean_length, "Mean words per sentence")->capture_default_str();
    synth->add_option("--zipf", sp.zipf_exponent, "Zipf exponent inside a class")->capture_default_str();

    // build-vocab
    auto* bv = app.add_subcommand("build-vocab", "Build a frequency-capped vocabulary");
    std::string bv_corpus, bv_out;
    std::size_t bv_cap = 2000;
    bv->add_option("--corpus", bv_corpus, "Corpus file")->required()->check(CLI::ExistingFile);
    bv->add_option("--out", bv_out, "Vocabulary file")->required();
    bv->add_option("--cap", bv_cap, "Vocabulary size including the four specials")->capture_default_str();

    // train-lm / train-ae
    std::string tr_corpus, tr_vocab, tr_out;
    ModelFlags tr_model;
    TrainFlags tr_train;
    bool ae_no_tf = false;
    auto* tlm = app.add_subcommand("train-lm", "Train a next-word language model");
    auto* tae = app.add_subcommand("train-ae", "Train a sequence autoencoder (shared encoder/decoder)");
    for (auto* sub : {tlm, tae}) {
        sub->add_option("--corpus", tr_corpus, "Training corpus; 10% is held out for validation")
            ->required()
            ->check(CLI::ExistingFile);
        sub->add_option("--vocab", tr_vocab, "Vocabulary file")->required()->check(CLI::ExistingFile);
        sub->add_option("--out", tr_out, "Checkpoint to write")->required();
        tr_model.add(sub);
        tr_train.add(sub, 0);
    }
    tae->add_flag("--no-teacher-forcing", ae_no_tf, "Decoder reads its own greedy predictions");

    // embed / extract
    std::string em_ckpt, em_vocab, em_codec, em_payload, em_out, em_sidecar, em_lengths_from;
    std::size_t em_count = 1, em_length = 10, em_random_bits = 0;
    auto* emb = app.add_subcommand("embed", "Hide payload bits in generated texts");
    emb->add_option("--checkpoint", em_ckpt, "Steganographer LM checkpoint")->required()->check(CLI::ExistingFile);
    emb->add_option("--vocab", em_vocab, "Vocabulary of the checkpoint")->required()->check(CLI::ExistingFile);
    emb->add_option("--codec", em_codec, "bins:B[:SEED], flc:K or vlc:M")->required();
    auto* payload_opt = emb->add_option("--payload", em_payload, "Payload file (raw bytes, MSB first)");
    emb->add_option("--random-bits", em_random_bits, "Use this many seeded random bits as the payload")
        ->excludes(payload_opt);
    emb->add_option("--count", em_count, "Number of texts")->capture_default_str();
    emb->add_option("--length", em_length, "Words per text")->capture_default_str();
    emb->add_option("--lengths-from", em_lengths_from, "Sample word counts from this corpus instead of --length");
    emb->add_option("--out", em_out, "Stego corpus to write")->required();
    emb->add_option("--sidecar", em_sidecar, "Metadata JSON (default: <out>.json)");

    std::string ex_ckpt, ex_vocab, ex_codec, ex_stego, ex_sidecar, ex_out;
    auto* ext = app.add_subcommand("extract", "Recover payload bits from stego texts");
    ext->add_option("--checkpoint", ex_ckpt, "Steganographer LM checkpoint")->required()->check(CLI::ExistingFile);
    ext->add_option("--vocab", ex_vocab, "Vocabulary of the checkpoint")->required()->check(CLI::ExistingFile);
    ext->add_option("--codec", ex_codec, "Codec used for embedding")->required();
    ext->add_option("--stego", ex_stego, "Stego corpus")->required()->check(CLI::ExistingFile);
    ext->add_option("--sidecar", ex_sidecar, "Metadata JSON; drops padding bits using per-line counts");
    ext->add_option("--out", ex_out, "Write recovered bits as bytes (MSB first)");

    // perplexity / report-perplexity
    std::string pp_ckpt, pp_vocab, pp_input, pp_text;
    bool pp_positions = false;
    auto* ppl = app.add_subcommand("perplexity", "Perplexity of texts under a language model");
    ppl->add_option("--checkpoint", pp_ckpt, "LM checkpoint")->required()->check(CLI::ExistingFile);
    ppl->add_option("--vocab", pp_vocab, "Vocabulary")->required()->check(CLI::ExistingFile);
    auto* in_opt = ppl->add_option("--input", pp_input, "One text per line")->check(CLI::ExistingFile);
    ppl->add_option("--text", pp_text, "A single text")->excludes(in_opt);
    ppl->add_flag("--positionwise", pp_positions, "Also print position-wise perplexities");

    std::string rp_ckpt, rp_vocab, rp_carrier, rp_stego, rp_prefix;
    std::size_t rp_bins = 20;
    auto* rpp = app.add_subcommand("report-perplexity", "Per-class position-wise means, histograms and AUC");
    rpp->add_option("--checkpoint", rp_ckpt, "LM checkpoint")->required()->check(CLI::ExistingFile);
    rpp->add_option("--vocab", rp_vocab, "Vocabulary")->required()->check(CLI::ExistingFile);
    rpp->add_option("--carrier", rp_carrier, "Carrier texts")->required()->check(CLI::ExistingFile);
    rpp->add_option("--stego", rp_stego, "Stego texts")->required()->check(CLI::ExistingFile);
    rpp->add_option("--bins", rp_bins, "Histogram bins")->capture_default_str();
    rpp->add_option("--out-prefix", rp_prefix, "Write <prefix>positions.tsv and <prefix>histogram.tsv");

    // finetune / fit-threshold / evaluate
    std::string ft_carrier, ft_stego, ft_vocab, ft_init = "random", ft_pre, ft_out;
    ModelFlags ft_model;
    TrainFlags ft_train;
    auto* ft = app.add_subcommand("finetune", "Train a carrier/stego classifier; reports held-out test metrics");
    ft->add_option("--carrier", ft_carrier, "Carrier texts")->required()->check(CLI::ExistingFile);
    ft->add_option("--stego", ft_stego, "Stego texts")->required()->check(CLI::ExistingFile);
    ft->add_option("--vocab", ft_vocab, "Vocabulary")->required()->check(CLI::ExistingFile);
    ft->add_option("--init", ft_init, "random, lm or ae")->capture_default_str();
    ft->add_option("--pretrained", ft_pre, "Pre-trained LM/AE checkpoint for --init lm|ae")->check(CLI::ExistingFile);
    ft->add_option("--out", ft_out, "Classifier checkpoint to write");
    ft_model.add(ft);
    ft_train.add(ft, 5);

    std::string th_ckpt, th_vocab, th_carrier, th_stego, th_test_carrier, th_test_stego;
    auto* th = app.add_subcommand("fit-threshold", "Fit a perplexity threshold detector");
    th->add_option("--checkpoint", th_ckpt, "LM checkpoint")->required()->check(CLI::ExistingFile);
    th->add_option("--vocab", th_vocab, "Vocabulary")->required()->check(CLI::ExistingFile);
    th->add_option("--carrier", th_carrier, "Validation carrier texts")->required()->check(CLI::ExistingFile);
    th->add_option("--stego", th_stego, "Validation stego texts")->required()->check(CLI::ExistingFile);
    th->add_option("--test-carrier", th_test_carrier, "Test carrier texts")->check(CLI::ExistingFile);
    th->add_option("--test-stego", th_test_stego, "Test stego texts")->check(CLI::ExistingFile);

    std::string ev_clf, ev_vocab, ev_carrier, ev_stego;
    auto* ev = app.add_subcommand("evaluate", "Acc/F1 of a classifier checkpoint on labelled files");
    ev->add_option("--classifier", ev_clf, "Classifier checkpoint")->required()->check(CLI::ExistingFile);
    ev->add_option("--vocab", ev_vocab, "Vocabulary")->required()->check(CLI::ExistingFile);
    ev->add_option("--carrier", ev_carrier, "Carrier texts")->required()->check(CLI::ExistingFile);
    ev->add_option("--stego", ev_stego, "Stego texts")->required()->check(CLI::ExistingFile);

    // run-experiment
    std::string rx_config, rx_output;
    std::size_t rx_replicates = 0;
    bool rx_quiet = false;
    auto* rx = app.add_subcommand("run-experiment", "Run the full pipeline from an experiment config");
    rx->add_option("--config", rx_config, "Experiment config (key = value)")->required()->check(CLI::ExistingFile);
    auto* rx_seed = rx->add_option("--seed", seed, "Override master_seed");
    rx->add_option("--output", rx_output, "Override output_dir");
    rx->add_option("--replicates", rx_replicates, "Override replicates");
    rx->add_flag("--quiet", rx_quiet, "No progress messages");

    // grad-check
    std::string gc_target = "all";
    double gc_eps = 1e-5, gc_tol = 1e-4;
    std::size_t gc_vocab = 20, gc_embed = 8, gc_hidden = 12, gc_layers = 2;
    auto* gc = app.add_subcommand("grad-check", "Compare analytic gradients with central differences");
    gc->add_option("--target", gc_target, "lm, ae, classifier or all")->capture_default_str();
    gc->add_option("--eps", gc_eps, "Finite-difference step")->capture_default_str();
    gc->add_option("--tolerance", gc_tol, "Fail above this relative error")->capture_default_str();
    gc->add_option("--vocab-size", gc_vocab, "Vocabulary size")->capture_default_str();
    gc->add_option("--embed-dim", gc_embed, "Embedding size")->capture_default_str();
    gc->add_option("--hidden-dim", gc_hidden, "Hidden size")->capture_default_str();
    gc->add_option("--layers", gc_layers, "Layers")->capture_default_str();

    for (auto* sub : app.get_subcommands({})) {
        if (sub != rx) {
            sub->add_option("--seed", seed, "Master seed")->capture_default_str();
            add_config(sub);
        }
    }

    CLI11_PARSE(app, argc, argv);

    try {
        if (*synth) {
            stage = "synth-corpus";
            write_lines(synth_out, synth_corpus(seed, sp));
        } else if (*bv) {
            stage = "build-vocab";
            std::vector<std::vector<std::string>> toks;
            for (const auto& l : read_lines(bv_corpus)) toks.push_back(tokenize(l));
            const Vocab v = Vocab::build(toks, bv_cap);
            v.save(bv_out);
            std::printf("vocabulary of %zu entries\n", v.size());
        } else if (*tlm || *tae) {
            const bool is_lm = static_cast<bool>(*tlm);
            stage = is_lm ? "train-lm" : "train-ae";
            const Vocab vocab = Vocab::load(tr_vocab);
            auto [train, val] = holdout(encode_file(vocab, tr_corpus, std::nullopt), seed);
            LanguageModel m = LanguageModel::random(tr_model.config(vocab.size()), seed);
            const LossCurve curve = is_lm ? train_lm(m, train, val, tr_train.config(), seed)
                                          : train_ae(m, train, val, tr_train.config(), seed, {!ae_no_tf});
            m.save(tr_out, is_lm ? stage::kLm : stage::kAePretrain, seed);
            print_curve(curve);
            write_curve(tr_train.curve_path, curve);
            if (is_lm && !val.empty()) {
                const double best =
                    curve.best_epoch ? curve.val_loss[curve.best_epoch - 1] : curve.initial_val_loss;
                std::printf("val perplexity %.4f  unigram baseline %.4f\n", std::exp(best), unigram_perplexity(val));
            }
        } else if (*emb) {
            stage = "embed";
            const Vocab vocab = Vocab::load(em_vocab);
            const LanguageModel lm = LanguageModel::load(em_ckpt);
            const CodecSpec codec = CodecSpec::parse(em_codec);
            BitStream payload;
            if (!em_payload.empty()) payload = BitStream::from_bytes(read_bytes(em_payload));
            else {
                Rng prng(sub_seed(seed, "payload"));
                payload = rng_bits(prng, em_random_bits);
            }
            std::vector<std::size_t> lengths;
            if (!em_lengths_from.empty())
                for (const auto& l : read_lines(em_lengths_from))
                    if (auto n = tokenize(l).size(); n > 0) lengths.push_back(std::min(n, kMaxSequenceLength - 2));
            Rng len_rng(sub_seed(seed, "stego-lengths"));
            std::vector<std::string> lines;
            nlohmann::ordered_json per_line = nlohmann::ordered_json::array();
            std::vector<StegoRecord> records;
            std::size_t cursor = 0;
            for (std::size_t i = 0; i < em_count; ++i) {
                const std::size_t len =
                    lengths.empty() ? em_length : lengths[static_cast<std::size_t>(len_rng.below(lengths.size()))];
                BitStream rest;
                for (std::size_t b = cursor; b < payload.size(); ++b) rest.push_back(payload[b]);
                StegoRecord rec = embed(lm, codec, rest, len);
                cursor += rec.bits_consumed;
                lines.push_back(vocab.decode(rec.tokens.ids));
                per_line.push_back({{"words", rec.words()}, {"bits_consumed", rec.bits_consumed}});
                records.push_back(std::move(rec));
            }
            write_lines(em_out, lines);
            nlohmann::ordered_json side;
            side["codec"] = codec.name();
            side["partition_seed"] = codec.partition_seed;
            side["checkpoint"] = std::filesystem::path(em_ckpt).filename().string();
            side["checkpoint_hash"] = git_blob_hash_file(em_ckpt);
            side["payload_bits"] = payload.size();
            side["bits_embedded"] = cursor;
            side["bpw"] = measure_bpw(records);
            side["lines"] = per_line;
            std::ofstream(em_sidecar.empty() ? em_out + ".json" : em_sidecar) << side.dump(1) << "\n";
            std::printf("%zu texts, %zu of %zu payload bits embedded, bpw %.6f\n", lines.size(), cursor,
                        payload.size(), measure_bpw(records));
        } else if (*ext) {
            stage = "extract";
            const Vocab vocab = Vocab::load(ex_vocab);
            const LanguageModel lm = LanguageModel::load(ex_ckpt);
            const CodecSpec codec = CodecSpec::parse(ex_codec);
            std::vector<std::size_t> keep;
            if (!ex_sidecar.empty()) {
                std::ifstream in(ex_sidecar);
                if (!in) throw IoError("cannot open '" + ex_sidecar + "'");
                const auto side = nlohmann::json::parse(in);
                for (const auto& l : side.at("lines")) keep.push_back(l.at("bits_consumed").get<std::size_t>());
            }
            const auto lines = read_lines(ex_stego);
            if (!keep.empty() && keep.size() != lines.size())
                throw ConfigError("sidecar line count does not match the stego corpus");
            BitStream all;
            for (std::size_t i = 0; i < lines.size(); ++i) {
                const BitStream bits = extract(lm, codec, encode_text(vocab, lines[i]).ids);
                const std::size_t n = keep.empty() ? bits.size() : std::min(keep[i], bits.size());
                for (std::size_t b = 0; b < n; ++b) all.push_back(bits[b]);
            }
            if (!ex_out.empty()) write_bytes(ex_out, all.to_bytes());
            else std::printf("%s\n", all.to_string().c_str());
            std::fprintf(stderr, "%zu bits recovered from %zu texts\n", all.size(), lines.size());
        } else if (*ppl) {
            stage = "perplexity";
            const Vocab vocab = Vocab::load(pp_vocab);
            const LanguageModel lm = LanguageModel::load(pp_ckpt);
            std::vector<std::string> texts = pp_input.empty() ? std::vector<std::string>{pp_text} : read_lines(pp_input);
            std::vector<TokenSequence> seqs;
            for (const auto& t : texts) seqs.push_back(encode_text(vocab, t));
            const auto probs = conditional_probabilities(lm, seqs);
            for (const auto& p : probs) {
                std::printf("%.10g", perplexity_from_probs(p));
                if (pp_positions)
                    for (double v : positionwise_from_probs(p)) std::printf("\t%.10g", v);
                std::printf("\n");
            }
        } else if (*rpp) {
            stage = "report-perplexity";
            const Vocab vocab = Vocab::load(rp_vocab);
            const LanguageModel lm = LanguageModel::load(rp_ckpt);
            const auto texts = labeled_set(vocab, rp_carrier, rp_stego);
            const PerplexityReport rep = perplexity_report(lm, texts, rp_bins);
            std::printf("auc %.6f  separability %.6f  log2 gap (stego - carrier) %.6f\n", rep.auc, rep.separability(),
                        rep.log2_gap);
            if (!rp_prefix.empty()) {
                std::ofstream pos(rp_prefix + "positions.tsv"), hist(rp_prefix + "histogram.tsv");
                pos << "position\tmean_perp_carrier\tmean_perp_stego\n";
                const std::size_t n = std::max(rep.carrier.position_mean.size(), rep.stego.position_mean.size());
                for (std::size_t p = 0; p < n; ++p) {
                    pos << p + 1 << "\t";
                    if (p < rep.carrier.position_mean.size()) pos << rep.carrier.position_mean[p];
                    else pos << "NA";
                    pos << "\t";
                    if (p < rep.stego.position_mean.size()) pos << rep.stego.position_mean[p];
                    else pos << "NA";
                    pos << "\n";
                }
                hist << "bin_left\tbin_right\tcount_carrier\tcount_stego\n";
                for (std::size_t k = 0; k < rp_bins; ++k)
                    hist << rep.bin_edges[k] << "\t" << rep.bin_edges[k + 1] << "\t" << rep.carrier.histogram[k]
                         << "\t" << rep.stego.histogram[k] << "\n";
            }
        } else if (*ft) {
            stage = "finetune";
            const Vocab vocab = Vocab::load(ft_vocab);
            const InitMode mode = parse_init_mode(ft_init);
            const ModelConfig cfg = ft_model.config(vocab.size());
            std::optional<Checkpoint> source;
            if (mode != InitMode::random) {
                if (ft_pre.empty()) throw ConfigError("--pretrained is required for --init " + ft_init);
                source = load_checkpoint(ft_pre);
            }
            const DatasetSplit split = split_dataset(labeled_set(vocab, ft_carrier, ft_stego), seed);
            Classifier clf = init_classifier(mode, cfg, seed, source ? &*source : nullptr);
            FinetuneConfig fc;
            fc.train = ft_train.config();
            const LossCurve curve = finetune(clf, split.train, split.validation, fc, seed);
            print_curve(curve);
            write_curve(ft_train.curve_path, curve);
            std::printf("test split (%zu texts):\n", split.test.size());
            print_metrics(evaluate(clf, split.test));
            if (!ft_out.empty()) clf.save(ft_out, seed);
        } else if (*th) {
            stage = "fit-threshold";
            const Vocab vocab = Vocab::load(th_vocab);
            const LanguageModel lm = LanguageModel::load(th_ckpt);
            auto scored = [&](const std::string& c, const std::string& s) {
                const auto texts = labeled_set(vocab, c, s);
                std::vector<double> perp;
                std::vector<Label> labels;
                const auto probs = conditional_probabilities(lm, texts);
                for (std::size_t i = 0; i < texts.size(); ++i) {
                    perp.push_back(perplexity_from_probs(probs[i]));
                    labels.push_back(*texts[i].label);
                }
                return std::make_pair(perp, labels);
            };
            const auto [perp, labels] = scored(th_carrier, th_stego);
            const ThresholdDetector det = fit_threshold(perp, labels);
            std::printf("tau %.10g  direction %s  fit accuracy %.6f\n", det.tau,
                        det.direction == ThresholdDirection::greater_is_stego ? "greater-is-stego" : "less-is-stego",
                        det.fit_accuracy);
            if (!th_test_carrier.empty() && !th_test_stego.empty()) {
                const auto [tp, tl] = scored(th_test_carrier, th_test_stego);
                std::vector<Label> pred;
                for (double v : tp) pred.push_back(det.predict(v));
                print_metrics(evaluate(pred, tl));
            }
        } else if (*ev) {
            stage = "evaluate";
            const Vocab vocab = Vocab::load(ev_vocab);
            const Classifier clf = Classifier::load(ev_clf);
            print_metrics(evaluate(clf, labeled_set(vocab, ev_carrier, ev_stego)));
        } else if (*rx) {
            stage = "run-experiment";
            ExperimentConfig cfg = ExperimentConfig::load(rx_config);
            if (rx_seed->count()) cfg.master_seed = seed;
            if (!rx_output.empty()) cfg.output_dir = rx_output;
            if (rx_replicates) cfg.replicates = rx_replicates;
            const RunResult res = run_experiment(cfg, [&](const std::string& msg) {
                if (!rx_quiet) std::fprintf(stderr, "%s\n", msg.c_str());
            });
            std::printf("%zu result rows written to %s (config %s)\n", res.rows.size(), res.output_dir.c_str(),
                        res.config_hash.c_str());
        } else if (*gc) {
            stage = "grad-check";
            ModelConfig cfg;
            cfg.vocab_size = gc_vocab;
            cfg.embed_dim = gc_embed;
            cfg.hidden_dim = gc_hidden;
            cfg.layers = gc_layers;
            std::vector<GradCheckTarget> targets;
            if (gc_target == "all") targets = {GradCheckTarget::lm, GradCheckTarget::ae, GradCheckTarget::classifier};
            else targets = {parse_grad_check_target(gc_target)};
            bool ok = true;
            for (auto t : targets) {
                GradCheckOptions opts;
                opts.eps = gc_eps;
                const GradCheckResult r = grad_check(t, cfg, seed, opts);
                if (!r.warning.empty()) std::fprintf(stderr, "warning: %s\n", r.warning.c_str());
                const bool pass = r.max_rel_error < gc_tol;
                ok = ok && pass;
                std::printf("%-10s max relative error %.3e (%s) over %zu coordinates: %s\n",
                            grad_check_target_name(t).c_str(), r.max_rel_error, r.worst_param.c_str(), r.coordinates,
                            pass ? "pass" : "FAIL");
            }
            if (!ok) {
                std::fprintf(stderr, "lssa: [grad-check] relative error above %.1e\n", gc_tol);
                return 1;
            }
        }
    } catch (const StageError& e) {
        std::fprintf(stderr, "lssa: [%s] %s\n", stage.c_str(), e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "lssa: [%s] %s\n", stage.c_str(), e.what());
        return 1;
    }
    return 0;
}
