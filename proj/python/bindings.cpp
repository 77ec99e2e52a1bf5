#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "lssa/autoencoder.hpp"
#include "lssa/bitstream.hpp"
#include "lssa/corpus.hpp"
#include "lssa/error.hpp"
#include "lssa/grad_check.hpp"
#include "lssa/harness.hpp"
#include "lssa/language_model.hpp"
#include "lssa/steganalyzer.hpp"
#include "lssa/stego_codec.hpp"
#include "lssa/synth.hpp"

namespace py = pybind11;
using namespace lssa;

namespace {

std::vector<TokenSequence> encode_all(const Vocab& vocab, const std::vector<std::string>& texts,
                                      std::optional<Label> label = std::nullopt) {
    std::vector<TokenSequence> out;
    out.reserve(texts.size());
    for (const auto& t : texts) out.push_back(encode_text(vocab, t, label));
    return out;
}

TrainConfig train_config(std::size_t epochs, std::size_t batch_size, double lr, std::size_t patience,
                         bool dropout) {
    TrainConfig t;
    t.epochs = epochs;
    t.batch_size = batch_size;
    t.adam.lr = lr;
    t.patience = patience;
    t.dropout = dropout;
    return t;
}

py::dict curve_dict(const LossCurve& c) {
    py::dict d;
    d["initial_val_loss"] = c.initial_val_loss;
    d["train_loss"] = c.train_loss;
    d["val_loss"] = c.val_loss;
    d["best_epoch"] = c.best_epoch;
    d["epochs_ran"] = c.epochs_ran;
    d["stopped_early"] = c.stopped_early;
    return d;
}

py::dict metrics_dict(const MetricsReport& m) {
    py::dict d;
    d["tp"] = m.tp;
    d["fp"] = m.fp;
    d["fn"] = m.fn;
    d["tn"] = m.tn;
    d["acc"] = m.acc;
    d["f1"] = m.f1;
    return d;
}

py::dict row_dict(const ResultRow& r) {
    py::dict d = metrics_dict(r.metrics);
    d["codec"] = r.codec;
    d["init_mode"] = r.init_mode;
    d["pretrain_size"] = r.pretrain_size;
    d["seed"] = r.seed;
    d["replicate"] = r.replicate;
    d["early_stopping"] = r.early_stopping;
    d["epochs_ran"] = r.epochs_ran;
    d["epochs_to_threshold"] = r.metrics.epochs_to_threshold;
    return d;
}

std::vector<Label> parse_labels(const std::vector<std::string>& names) {
    std::vector<Label> out;
    for (const auto& n : names) {
        if (n == "carrier") out.push_back(Label::carrier);
        else if (n == "stego") out.push_back(Label::stego);
        else throw ConfigError("label must be 'carrier' or 'stego', got '" + n + "'");
    }
    return out;
}

}  // namespace

PYBIND11_MODULE(_lssa, m) {
    m.doc() = "LSTM steganography and steganalysis";

    auto base = py::register_exception<Error>(m, "LssaError", PyExc_RuntimeError);
    py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
    py::register_exception<DesyncError>(m, "DesyncError", base.ptr());
    py::register_exception<CheckpointError>(m, "CheckpointError", base.ptr());
    py::register_exception<IoError>(m, "IoError", base.ptr());
    py::register_exception<StageError>(m, "StageError", base.ptr());

    m.attr("PAD") = special::kPad;
    m.attr("UNK") = special::kUnk;
    m.attr("BOS") = special::kBos;
    m.attr("EOS") = special::kEos;

    m.def("tokenize", [](const std::string& s) { return tokenize(s); });

    m.def(
        "synth_corpus",
        [](std::uint64_t seed, std::size_t sentences, std::size_t types, double mean_length) {
            SynthParams p;
            p.sentences = sentences;
            p.types = types;
            p.mean_length = mean_length;
            return synth_corpus(seed, p);
        },
        py::arg("seed"), py::arg("sentences") = 10000, py::arg("types") = 2000, py::arg("mean_length") = 10.0);

    py::class_<Vocab>(m, "Vocab")
        .def_static(
            "build",
            [](const std::vector<std::string>& texts, std::size_t cap) {
                std::vector<std::vector<std::string>> toks;
                toks.reserve(texts.size());
                for (const auto& t : texts) toks.push_back(tokenize(t));
                return Vocab::build(toks, cap);
            },
            py::arg("texts"), py::arg("cap") = 2000)
        .def_static("load", &Vocab::load)
        .def("save", &Vocab::save)
        .def("__len__", &Vocab::size)
        .def("id", &Vocab::id)
        .def("token", &Vocab::token)
        .def("encode", [](const Vocab& v, const std::string& text) { return encode_text(v, text).ids; })
        .def("decode", &Vocab::decode);

    py::class_<ModelConfig>(m, "ModelConfig")
        .def(py::init([](std::size_t vocab_size, std::size_t embed_dim, std::size_t hidden_dim,
                         std::size_t layers, double keep) {
                 ModelConfig c;
                 c.vocab_size = vocab_size;
                 c.embed_dim = embed_dim;
                 c.hidden_dim = hidden_dim;
                 c.layers = layers;
                 c.dropout_keep = keep;
                 c.validate();
                 return c;
             }),
             py::arg("vocab_size"), py::arg("embed_dim") = 128, py::arg("hidden_dim") = 256,
             py::arg("layers") = 2, py::arg("dropout_keep") = 0.5)
        .def_readwrite("vocab_size", &ModelConfig::vocab_size)
        .def_readwrite("embed_dim", &ModelConfig::embed_dim)
        .def_readwrite("hidden_dim", &ModelConfig::hidden_dim)
        .def_readwrite("layers", &ModelConfig::layers)
        .def_readwrite("dropout_keep", &ModelConfig::dropout_keep);

    py::class_<LanguageModel>(m, "LanguageModel")
        .def_static("random", &LanguageModel::random, py::arg("config"), py::arg("seed"))
        .def_static("load", &LanguageModel::load)
        .def("save", &LanguageModel::save, py::arg("path"), py::arg("stage") = "lm-pretrain",
             py::arg("seed") = 0)
        .def_readonly("config", &LanguageModel::config)
        .def("next_token_distribution",
             [](const LanguageModel& lm, const std::vector<int>& prefix) {
                 return next_token_distribution(lm, prefix);
             })
        .def("perplexity",
             [](const LanguageModel& lm, const Vocab& v, const std::string& text) {
                 return perplexity(lm, encode_text(v, text));
             })
        .def("positionwise_perplexity",
             [](const LanguageModel& lm, const Vocab& v, const std::string& text) {
                 return positionwise_perplexity(lm, encode_text(v, text));
             });

    m.def(
        "train_lm",
        [](LanguageModel& lm, const Vocab& v, const std::vector<std::string>& train,
           const std::vector<std::string>& val, std::size_t epochs, std::size_t batch_size, double lr,
           std::size_t patience, bool dropout, std::uint64_t seed) {
            py::gil_scoped_release release;
            auto c = train_lm(lm, encode_all(v, train), encode_all(v, val),
                              train_config(epochs, batch_size, lr, patience, dropout), seed);
            py::gil_scoped_acquire acquire;
            return curve_dict(c);
        },
        py::arg("model"), py::arg("vocab"), py::arg("train"), py::arg("val"), py::arg("epochs") = 10,
        py::arg("batch_size") = 128, py::arg("lr") = 1e-3, py::arg("patience") = 0, py::arg("dropout") = true,
        py::arg("seed") = 0);

    m.def(
        "train_ae",
        [](LanguageModel& lm, const Vocab& v, const std::vector<std::string>& train,
           const std::vector<std::string>& val, std::size_t epochs, std::size_t batch_size, double lr,
           std::size_t patience, bool dropout, bool teacher_forcing, std::uint64_t seed) {
            py::gil_scoped_release release;
            auto c = train_ae(lm, encode_all(v, train), encode_all(v, val),
                              train_config(epochs, batch_size, lr, patience, dropout), seed,
                              AeOptions{teacher_forcing});
            py::gil_scoped_acquire acquire;
            return curve_dict(c);
        },
        py::arg("model"), py::arg("vocab"), py::arg("train"), py::arg("val"), py::arg("epochs") = 10,
        py::arg("batch_size") = 128, py::arg("lr") = 1e-3, py::arg("patience") = 0, py::arg("dropout") = true,
        py::arg("teacher_forcing") = true, py::arg("seed") = 0);

    m.def("unigram_perplexity", [](const Vocab& v, const std::vector<std::string>& texts) {
        return unigram_perplexity(encode_all(v, texts));
    });

    m.def(
        "embed",
        [](const LanguageModel& lm, const std::string& codec, const std::string& bits, std::size_t length) {
            auto rec = embed(lm, CodecSpec::parse(codec), BitStream::from_string(bits), length);
            py::dict d;
            d["ids"] = rec.tokens.ids;
            d["bits_consumed"] = rec.bits_consumed;
            d["step_bits"] = rec.step_bits;
            d["bpw"] = rec.bpw();
            return d;
        },
        py::arg("model"), py::arg("codec"), py::arg("bits"), py::arg("length"));

    m.def(
        "extract",
        [](const LanguageModel& lm, const std::string& codec, const std::vector<int>& ids) {
            return extract(lm, CodecSpec::parse(codec), ids).to_string();
        },
        py::arg("model"), py::arg("codec"), py::arg("ids"));

    m.def("huffman_codes", [](const std::vector<std::pair<int, double>>& pool) {
        auto code = huffman_build(pool);
        std::vector<std::pair<int, std::string>> out;
        for (const auto& [id, p] : pool) out.emplace_back(id, code.code(id));
        return out;
    });

    py::class_<Classifier>(m, "Classifier")
        .def_static(
            "init",
            [](const std::string& mode, const ModelConfig& cfg, std::uint64_t seed,
               const std::optional<std::string>& checkpoint) {
                std::optional<Checkpoint> ck;
                if (checkpoint) ck = load_checkpoint(*checkpoint);
                return init_classifier(parse_init_mode(mode), cfg, seed, ck ? &*ck : nullptr);
            },
            py::arg("mode"), py::arg("config"), py::arg("seed"), py::arg("checkpoint") = py::none())
        .def_static("load", &Classifier::load)
        .def("save", &Classifier::save, py::arg("path"), py::arg("seed") = 0)
        .def_readonly("config", &Classifier::config)
        .def("p_stego",
             [](const Classifier& c, const Vocab& v, const std::vector<std::string>& texts) {
                 std::vector<double> out;
                 for (const auto& p : classify(c, encode_all(v, texts))) out.push_back(p.p_stego);
                 return out;
             })
        .def("predict", [](const Classifier& c, const Vocab& v, const std::vector<std::string>& texts) {
            std::vector<std::string> out;
            for (const auto& p : classify(c, encode_all(v, texts))) out.emplace_back(label_name(p.label));
            return out;
        });

    m.def(
        "finetune",
        [](Classifier& c, const Vocab& v, const std::vector<std::string>& carrier_train,
           const std::vector<std::string>& stego_train, const std::vector<std::string>& carrier_val,
           const std::vector<std::string>& stego_val, std::size_t epochs, std::size_t patience,
           std::uint64_t seed) {
            auto join = [&](const std::vector<std::string>& a, const std::vector<std::string>& b) {
                auto out = encode_all(v, a, Label::carrier);
                auto s = encode_all(v, b, Label::stego);
                out.insert(out.end(), s.begin(), s.end());
                return out;
            };
            FinetuneConfig cfg;
            cfg.train.epochs = epochs;
            cfg.train.patience = patience;
            auto train = join(carrier_train, stego_train);
            auto val = join(carrier_val, stego_val);
            py::gil_scoped_release release;
            auto curve = finetune(c, train, val, cfg, seed);
            py::gil_scoped_acquire acquire;
            return curve_dict(curve);
        },
        py::arg("model"), py::arg("vocab"), py::arg("carrier_train"), py::arg("stego_train"),
        py::arg("carrier_val"), py::arg("stego_val"), py::arg("epochs") = 50, py::arg("patience") = 5,
        py::arg("seed") = 0);

    m.def(
        "fit_threshold",
        [](const std::vector<double>& ppl, const std::vector<std::string>& labels) {
            auto det = fit_threshold(ppl, parse_labels(labels));
            py::dict d;
            d["tau"] = det.tau;
            d["direction"] = det.direction == ThresholdDirection::greater_is_stego ? "greater" : "less";
            d["accuracy"] = det.fit_accuracy;
            return d;
        },
        py::arg("perplexities"), py::arg("labels"));

    m.def("metrics_from_counts", [](std::size_t tp, std::size_t fp, std::size_t fn, std::size_t tn) {
        return metrics_dict(metrics_from_counts(tp, fp, fn, tn));
    }, py::arg("tp"), py::arg("fp"), py::arg("fn"), py::arg("tn"));

    m.def(
        "grad_check",
        [](const std::string& target, std::uint64_t seed) {
            auto r = grad_check(parse_grad_check_target(target), tiny_config(), seed);
            py::dict d;
            d["max_rel_error"] = r.max_rel_error;
            d["worst_param"] = r.worst_param;
            d["per_param"] = r.per_param;
            d["coordinates"] = r.coordinates;
            return d;
        },
        py::arg("target"), py::arg("seed") = 1);

    m.def(
        "run_experiment",
        [](const std::string& config_path, const std::optional<std::string>& output_dir, bool quiet) {
            auto cfg = ExperimentConfig::load(config_path);
            if (output_dir) cfg.output_dir = *output_dir;
            std::function<void(const std::string&)> log;
            if (!quiet) log = [](const std::string& s) { py::gil_scoped_acquire g; py::print(s); };
            RunResult res;
            {
                py::gil_scoped_release release;
                res = run_experiment(cfg, log);
            }
            py::dict d;
            py::list rows, base;
            for (const auto& r : res.rows) rows.append(row_dict(r));
            for (const auto& r : res.baseline_rows) base.append(row_dict(r));
            d["rows"] = rows;
            d["baseline_rows"] = base;
            d["config_hash"] = res.config_hash;
            d["output_dir"] = res.output_dir;
            return d;
        },
        py::arg("config"), py::arg("output_dir") = py::none(), py::arg("quiet") = true);
}
