#include "lssa/harness.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include <json.hpp>
#include <openssl/evp.h>

#include "lssa/autoencoder.hpp"
#include "lssa/error.hpp"
#include "lssa/language_model.hpp"

namespace fs = std::filesystem;

namespace lssa {

namespace {

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream in(s);
    while (std::getline(in, item, ','))
        if (auto t = trim(item); !t.empty()) out.push_back(t);
    return out;
}

std::string join(const std::vector<std::string>& items) {
    std::string out;
    for (const auto& s : items) out += (out.empty() ? "" : ",") + s;
    return out;
}

template <typename T>
T parse_number(const std::string& key, const std::string& v) {
    T out{};
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size() || v.empty())
        throw ConfigError("config key '" + key + "': cannot parse '" + v + "'");
    return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw ConfigError("config key '" + key + "': expected a boolean, got '" + v + "'");
}

// Shortest text that reads back to the same double.
std::string num(double v) {
    char buf[32];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return ec == std::errc() ? std::string(buf, ptr) : std::string("nan");
}

std::string bool_text(bool b) { return b ? "true" : "false"; }

struct Key {
    const char* name;
    std::function<void(ExperimentConfig&, const std::string&)> set;
    std::function<std::string(const ExperimentConfig&)> get;
};

template <typename T>
Key size_key(const char* name, T ExperimentConfig::*field) {
    return {name, [=](ExperimentConfig& c, const std::string& v) { c.*field = parse_number<T>(name, v); },
            [=](const ExperimentConfig& c) { return std::to_string(c.*field); }};
}

Key double_key(const char* name, double ExperimentConfig::*field) {
    return {name, [=](ExperimentConfig& c, const std::string& v) { c.*field = parse_number<double>(name, v); },
            [=](const ExperimentConfig& c) { return num(c.*field); }};
}

Key bool_key(const char* name, bool ExperimentConfig::*field) {
    return {name, [=](ExperimentConfig& c, const std::string& v) { c.*field = parse_bool(name, v); },
            [=](const ExperimentConfig& c) { return bool_text(c.*field); }};
}

const std::vector<Key>& keys() {
    static const std::vector<Key> table = {
        {"dataset", [](ExperimentConfig& c, const std::string& v) { c.dataset = v; },
         [](const ExperimentConfig& c) { return c.dataset; }},
        {"corpus", [](ExperimentConfig& c, const std::string& v) { c.corpus_path = v; },
         [](const ExperimentConfig& c) { return c.corpus_path; }},
        {"synth_sentences", [](ExperimentConfig& c, const std::string& v) { c.synth.sentences = parse_number<std::size_t>("synth_sentences", v); },
         [](const ExperimentConfig& c) { return std::to_string(c.synth.sentences); }},
        {"synth_types", [](ExperimentConfig& c, const std::string& v) { c.synth.types = parse_number<std::size_t>("synth_types", v); },
         [](const ExperimentConfig& c) { return std::to_string(c.synth.types); }},
        {"synth_classes", [](ExperimentConfig& c, const std::string& v) { c.synth.classes = parse_number<std::size_t>("synth_classes", v); },
         [](const ExperimentConfig& c) { return std::to_string(c.synth.classes); }},
        {"synth_successors", [](ExperimentConfig& c, const std::string& v) { c.synth.successors = parse_number<std::size_t>("synth_successors", v); },
         [](const ExperimentConfig& c) { return std::to_string(c.synth.successors); }},
        {"synth_mean_length", [](ExperimentConfig& c, const std::string& v) { c.synth.mean_length = parse_number<double>("synth_mean_length", v); },
         [](const ExperimentConfig& c) { return num(c.synth.mean_length); }},
        {"synth_zipf", [](ExperimentConfig& c, const std::string& v) { c.synth.zipf_exponent = parse_number<double>("synth_zipf", v); },
         [](const ExperimentConfig& c) { return num(c.synth.zipf_exponent); }},
        size_key("vocab_cap", &ExperimentConfig::vocab_cap),
        {"embed_dim", [](ExperimentConfig& c, const std::string& v) { c.model.embed_dim = parse_number<std::size_t>("embed_dim", v); },
         [](const ExperimentConfig& c) { return std::to_string(c.model.embed_dim); }},
        {"hidden_dim", [](ExperimentConfig& c, const std::string& v) { c.model.hidden_dim = parse_number<std::size_t>("hidden_dim", v); },
         [](const ExperimentConfig& c) { return std::to_string(c.model.hidden_dim); }},
        {"layers", [](ExperimentConfig& c, const std::string& v) { c.model.layers = parse_number<std::size_t>("layers", v); },
         [](const ExperimentConfig& c) { return std::to_string(c.model.layers); }},
        {"dropout_keep", [](ExperimentConfig& c, const std::string& v) { c.model.dropout_keep = parse_number<double>("dropout_keep", v); },
         [](const ExperimentConfig& c) { return num(c.model.dropout_keep); }},
        {"codecs",
         [](ExperimentConfig& c, const std::string& v) {
             c.codecs.clear();
             for (const auto& s : split_list(v)) c.codecs.push_back(CodecSpec::parse(s));
         },
         [](const ExperimentConfig& c) {
             std::vector<std::string> names;
             for (const auto& s : c.codecs)
                 names.push_back(s.name() + (s.partition_seed ? ":" + std::to_string(s.partition_seed) : ""));
             return join(names);
         }},
        size_key("texts_per_class", &ExperimentConfig::texts_per_class),
        {"modes",
         [](ExperimentConfig& c, const std::string& v) {
             c.modes.clear();
             for (const auto& s : split_list(v)) c.modes.push_back(parse_init_mode(s));
         },
         [](const ExperimentConfig& c) {
             std::vector<std::string> names;
             for (auto m : c.modes) names.push_back(init_mode_name(m));
             return join(names);
         }},
        {"pretrain_sizes",
         [](ExperimentConfig& c, const std::string& v) {
             c.pretrain_sizes.clear();
             for (const auto& s : split_list(v))
                 c.pretrain_sizes.push_back(s == "auto" ? 0 : parse_number<std::size_t>("pretrain_sizes", s));
         },
         [](const ExperimentConfig& c) {
             std::vector<std::string> names;
             for (auto n : c.pretrain_sizes) names.push_back(n == 0 ? "auto" : std::to_string(n));
             return join(names);
         }},
        size_key("stego_lm_epochs", &ExperimentConfig::stego_lm_epochs),
        size_key("pretrain_epochs", &ExperimentConfig::pretrain_epochs),
        size_key("finetune_epochs", &ExperimentConfig::finetune_epochs),
        size_key("finetune_patience", &ExperimentConfig::finetune_patience),
        bool_key("finetune_dropout", &ExperimentConfig::finetune_dropout),
        bool_key("fixed_epoch_rows", &ExperimentConfig::fixed_epoch_rows),
        bool_key("run_finetune", &ExperimentConfig::run_finetune),
        size_key("batch_size", &ExperimentConfig::batch_size),
        double_key("lr", &ExperimentConfig::lr),
        double_key("clip_norm", &ExperimentConfig::clip_norm),
        bool_key("teacher_forcing", &ExperimentConfig::teacher_forcing),
        bool_key("disjoint_corpora", &ExperimentConfig::disjoint_corpora),
        bool_key("verify_extraction", &ExperimentConfig::verify_extraction),
        bool_key("save_classifiers", &ExperimentConfig::save_classifiers),
        size_key("histogram_bins", &ExperimentConfig::histogram_bins),
        size_key("reference_epoch", &ExperimentConfig::reference_epoch),
        size_key("master_seed", &ExperimentConfig::master_seed),
        size_key("replicates", &ExperimentConfig::replicates),
        {"output_dir", [](ExperimentConfig& c, const std::string& v) { c.output_dir = v; },
         [](const ExperimentConfig& c) { return c.output_dir; }},
    };
    return table;
}

}  // namespace

KeyValueConfig KeyValueConfig::parse(const std::string& text) {
    KeyValueConfig kv;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string t = trim(line);
        if (t.empty() || t.front() == '#') continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
        const std::string key = trim(std::string_view(t).substr(0, eq));
        if (key.empty()) throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
        if (kv.has(key)) throw ConfigError("config line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
        kv.values_[key] = trim(std::string_view(t).substr(eq + 1));
    }
    return kv;
}

KeyValueConfig KeyValueConfig::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open config file '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

const std::string& KeyValueConfig::get(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("missing config key '" + key + "'");
    return it->second;
}

std::string KeyValueConfig::canonical() const {
    std::string out;
    for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
    return out;
}

ExperimentConfig ExperimentConfig::from_kv(const KeyValueConfig& kv) {
    ExperimentConfig cfg;
    for (const auto& [k, v] : kv.values()) {
        const auto it = std::ranges::find_if(keys(), [&](const Key& key) { return k == key.name; });
        if (it == keys().end()) throw ConfigError("unknown config key '" + k + "'");
        it->set(cfg, v);
    }
    cfg.validate();
    return cfg;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) { return from_kv(KeyValueConfig::load(path)); }

KeyValueConfig ExperimentConfig::to_kv() const {
    KeyValueConfig kv;
    for (const auto& key : keys()) kv.set(key.name, key.get(*this));
    return kv;
}

void ExperimentConfig::validate() const {
    ModelConfig m = model;
    m.vocab_size = std::max<std::size_t>(vocab_cap, 5);
    m.validate();
    if (vocab_cap < 5) throw ConfigError("vocab_cap must be >= 5");
    if (codecs.empty()) throw ConfigError("at least one codec is required");
    for (const auto& c : codecs) c.validate();
    if (texts_per_class < 10) throw ConfigError("texts_per_class must be >= 10");
    if (modes.empty()) throw ConfigError("at least one init mode is required");
    if (pretrain_sizes.empty()) throw ConfigError("pretrain_sizes must not be empty");
    if (stego_lm_epochs == 0 || pretrain_epochs == 0 || finetune_epochs == 0)
        throw ConfigError("epoch counts must be >= 1");
    if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
    if (!(lr > 0.0)) throw ConfigError("lr must be positive");
    if (histogram_bins == 0) throw ConfigError("histogram_bins must be >= 1");
    if (reference_epoch == 0) throw ConfigError("reference_epoch must be >= 1");
    if (replicates == 0) throw ConfigError("replicates must be >= 1");
    if (output_dir.empty()) throw ConfigError("output_dir must not be empty");
}

std::uint64_t ExperimentConfig::replicate_seed(std::size_t r) const { return sub_seed(master_seed, "replicate", r); }

std::string git_blob_hash(const std::string& content) {
    const std::string header = "blob " + std::to_string(content.size()) + std::string(1, '\0');
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr) != 1 ||
        EVP_DigestUpdate(ctx, header.data(), header.size()) != 1 ||
        EVP_DigestUpdate(ctx, content.data(), content.size()) != 1 || EVP_DigestFinal_ex(ctx, md, &len) != 1) {
        EVP_MD_CTX_free(ctx);
        throw Error("SHA-1 computation failed");
    }
    EVP_MD_CTX_free(ctx);
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned i = 0; i < len; ++i) {
        out.push_back(hex[md[i] >> 4]);
        out.push_back(hex[md[i] & 15]);
    }
    return out;
}

std::string git_blob_hash_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return git_blob_hash(ss.str());
}

namespace {

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write '" + path.string() + "'");
    out << text;
    if (!out) throw IoError("write failed for '" + path.string() + "'");
}

nlohmann::ordered_json curve_json(const LossCurve& c) {
    nlohmann::ordered_json j;
    j["initial_val_loss"] = c.initial_val_loss;
    j["train_loss"] = c.train_loss;
    j["val_loss"] = c.val_loss;
    j["best_epoch"] = c.best_epoch;
    j["epochs_ran"] = c.epochs_ran;
    j["stopped_early"] = c.stopped_early;
    return j;
}

std::string file_tag(const CodecSpec& c) { return codec_kind_name(c.kind) + "-" + std::to_string(c.param); }

std::vector<TokenSequence> pick(const std::vector<TokenSequence>& all, const std::vector<std::size_t>& idx) {
    std::vector<TokenSequence> out;
    out.reserve(idx.size());
    for (auto i : idx) out.push_back(all[i]);
    return out;
}

std::vector<TokenSequence> concat(std::vector<TokenSequence> a, const std::vector<TokenSequence>& b) {
    a.insert(a.end(), b.begin(), b.end());
    return a;
}

std::vector<TokenSequence> unlabeled(std::vector<TokenSequence> v) {
    for (auto& s : v) s.label.reset();
    return v;
}

bool disjoint(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) {
    const std::set<std::size_t> sa(a.begin(), a.end());
    return std::ranges::none_of(b, [&](std::size_t x) { return sa.count(x) > 0; });
}

// Train count of split_indices for n texts of one class.
std::size_t split_train_count(std::size_t n) {
    const auto test = static_cast<std::size_t>(std::llround(0.3 * static_cast<double>(n)));
    const auto val = static_cast<std::size_t>(std::llround(0.1 * static_cast<double>(n - test)));
    return n - test - val;
}

const char* kDecisions[] = {
    "tokenizer: word-level, lowercased ASCII, every ASCII punctuation character is its own token",
    "perplexity: EOS scored, BOS not; probabilities floored at 1e-12; base-2 logs",
    "dropout: inverted, keep 0.5, applied to the embedding output only; also active during fine-tuning",
    "gradient clipping: global norm 5.0 for every training run",
    "init: uniform(-0.08, 0.08), forget-gate bias 1",
    "autoencoder: encoder and decoder are one network; decoder starts from the encoder's final h and c of every layer",
    "stego generation: specials excluded from candidate pools; fixed word count per text sampled from the steganographer corpus; EOS appended",
    "metrics: stego is the positive class; a classifier probability of exactly 0.5 is labelled carrier",
    "fine-tuning: early stopping on validation loss (patience from config), best-validation weights kept",
    "splits: stratified 70/30 then 10% of train for validation, per class",
    "pre-training pool: carrier training split first, then an independent carrier reservoir disjoint from every test text",
};

struct CurveAccumulator {
    std::vector<double> train, val;
    std::vector<std::size_t> count;

    void add(const LossCurve& c) {
        if (train.size() < c.train_loss.size()) {
            train.resize(c.train_loss.size(), 0.0);
            val.resize(c.train_loss.size(), 0.0);
            count.resize(c.train_loss.size(), 0);
        }
        for (std::size_t e = 0; e < c.train_loss.size(); ++e) {
            train[e] += c.train_loss[e];
            val[e] += c.val_loss[e];
            ++count[e];
        }
    }
};

class Pipeline {
public:
    Pipeline(const ExperimentConfig& cfg, fs::path work, const std::function<void(const std::string&)>& log)
        : cfg_(cfg), work_(std::move(work)), log_(log) {}

    RunResult run();

private:
    void say(const std::string& msg) const {
        if (log_) log_(msg);
    }
    TrainConfig train_config(std::size_t epochs, std::size_t patience, bool dropout) const {
        TrainConfig t;
        t.epochs = epochs;
        t.batch_size = cfg_.batch_size;
        t.adam.lr = cfg_.lr;
        t.clip_norm = cfg_.clip_norm;
        t.patience = patience;
        t.dropout = dropout;
        return t;
    }
    void run_replicate(std::size_t r);

    const ExperimentConfig& cfg_;
    fs::path work_;
    std::function<void(const std::string&)> log_;
    std::string stage_ = "setup";
    std::string config_hash_;
    std::vector<std::vector<std::string>> corpus_;
    RunResult result_;
    nlohmann::ordered_json meta_replicates_ = nlohmann::ordered_json::array();
    std::map<std::tuple<std::string, std::size_t, std::size_t>, CurveAccumulator> fig6_;
    std::string fig1_, fig2_, fig3_;

public:
    const std::string& stage() const noexcept { return stage_; }
};

RunResult Pipeline::run() {
    KeyValueConfig kv = cfg_.to_kv();
    KeyValueConfig hashed;
    for (const auto& [k, v] : kv.values())
        if (k != "output_dir") hashed.set(k, v);
    config_hash_ = git_blob_hash(hashed.canonical());
    result_.config_hash = config_hash_;
    write_text(work_ / "config.cfg", hashed.canonical());

    stage_ = "corpus";
    std::vector<std::string> lines;
    if (cfg_.corpus_path.empty()) {
        say("generating synthetic corpus");
        lines = synth_corpus(sub_seed(cfg_.master_seed, "synth-corpus"), cfg_.synth);
        write_lines((work_ / "corpus.txt").string(), lines);
    } else {
        lines = read_lines(cfg_.corpus_path);
    }
    for (const auto& l : lines)
        if (auto toks = tokenize(l); !toks.empty()) corpus_.push_back(std::move(toks));
    if (corpus_.size() < 100) throw ConfigError("corpus has fewer than 100 non-empty lines");

    fig1_ = "replicate\tposition\tcarrier";
    for (const auto& c : cfg_.codecs) fig1_ += "\t" + c.name();
    fig1_ += "\n";
    fig2_ = "replicate\tcodec\tbin_left\tbin_right\tcount_carrier\tcount_stego\n";
    fig3_ = "replicate\tcodec\tlm\tbin_left\tbin_right\tcount_carrier\tcount_stego\n";

    for (std::size_t r = 0; r < cfg_.replicates; ++r) run_replicate(r);

    stage_ = "report";
    auto csv = [&](const std::vector<ResultRow>& rows) {
        std::string out =
            "dataset,codec,bpw,init_mode,pretrain_size,seed,replicate,early_stopping,acc,f1,tp,fp,fn,tn,"
            "epochs_ran,epochs_to_threshold,config_hash,lineage_hash\n";
        for (const auto& row : rows) {
            const auto& m = row.metrics;
            out += row.dataset + "," + row.codec + "," + num(row.bpw) + "," + row.init_mode + "," +
                   std::to_string(row.pretrain_size) + "," + std::to_string(row.seed) + "," +
                   std::to_string(row.replicate) + "," + (row.early_stopping ? "1" : "0") + "," + num(m.acc) + "," +
                   num(m.f1) + "," + std::to_string(m.tp) + "," + std::to_string(m.fp) + "," + std::to_string(m.fn) +
                   "," + std::to_string(m.tn) + "," + std::to_string(row.epochs_ran) + "," +
                   std::to_string(m.epochs_to_threshold) + "," + config_hash_ + "," + row.lineage + "\n";
        }
        return out;
    };
    write_text(work_ / "results.csv", csv(result_.rows));
    write_text(work_ / "threshold_baseline.csv", csv(result_.baseline_rows));

    // Mean accuracy per (mode, pool size) over codecs and replicates.
    std::map<std::pair<std::string, std::size_t>, std::pair<double, std::size_t>> table2;
    std::map<std::pair<std::string, std::size_t>, double> table2_f1;
    for (const auto& row : result_.rows) {
        if (!row.early_stopping) continue;
        auto& [acc, n] = table2[{row.init_mode, row.pretrain_size}];
        acc += row.metrics.acc;
        table2_f1[{row.init_mode, row.pretrain_size}] += row.metrics.f1;
        ++n;
    }
    std::string t2 = "init_mode\tpretrain_size\tmean_acc\tmean_f1\truns\n";
    for (const auto& [key, v] : table2)
        t2 += key.first + "\t" + std::to_string(key.second) + "\t" + num(v.first / static_cast<double>(v.second)) +
              "\t" + num(table2_f1[key] / static_cast<double>(v.second)) + "\t" + std::to_string(v.second) + "\n";
    write_text(work_ / "table2.tsv", t2);

    std::string f6 = "replicate\tinit_mode\tpretrain_size\tepoch\truns\tmean_train_loss\tmean_val_loss\n";
    for (const auto& [key, acc] : fig6_)
        for (std::size_t e = 0; e < acc.count.size(); ++e) {
            const auto n = static_cast<double>(acc.count[e]);
            f6 += std::to_string(std::get<1>(key)) + "\t" + std::get<0>(key) + "\t" + std::to_string(std::get<2>(key)) +
                  "\t" + std::to_string(e + 1) + "\t" + std::to_string(acc.count[e]) + "\t" + num(acc.train[e] / n) +
                  "\t" + num(acc.val[e] / n) + "\n";
        }
    write_text(work_ / "fig6.tsv", f6);
    write_text(work_ / "fig1.tsv", fig1_);
    write_text(work_ / "fig2.tsv", fig2_);
    write_text(work_ / "fig3.tsv", fig3_);

    std::string auc = "replicate\tcodec\tauc_trained\tauc_random\tseparability_trained\tseparability_random\t"
                      "log2_gap_trained\tlog2_gap_random\n";
    for (const auto& a : result_.aucs)
        auc += std::to_string(a.replicate) + "\t" + a.codec + "\t" + num(a.auc_trained) + "\t" + num(a.auc_random) +
               "\t" + num(a.separability_trained) + "\t" + num(a.separability_random) + "\t" +
               num(a.log2_gap_trained) + "\t" + num(a.log2_gap_random) + "\n";
    write_text(work_ / "perplexity_auc.tsv", auc);

    nlohmann::ordered_json meta;
    meta["config_hash"] = config_hash_;
    meta["config"] = hashed.values();
    meta["master_seed"] = cfg_.master_seed;
    meta["seed_derivation"] = "sub_seed(master, purpose) = SplitMix64 first output for state master XOR FNV-1a-64(purpose)";
    meta["positive_class"] = "stego";
    meta["decisions"] = std::vector<std::string>(std::begin(kDecisions), std::end(kDecisions));
    meta["corpus_lines"] = corpus_.size();
    meta["replicates"] = meta_replicates_;
    write_text(work_ / "run_meta.json", meta.dump(2) + "\n");
    return result_;
}

void Pipeline::run_replicate(std::size_t r) {
    const std::uint64_t seed = cfg_.replicate_seed(r);
    const fs::path dir = work_ / ("rep-" + std::to_string(r));
    fs::create_directories(dir / "stego");
    fs::create_directories(dir / "checkpoints");
    nlohmann::ordered_json meta;
    meta["index"] = r;
    meta["seed"] = seed;
    say("replicate " + std::to_string(r) + " (seed " + std::to_string(seed) + ")");

    // Corpus halves.
    stage_ = "partition";
    const std::size_t n_carrier_train = split_train_count(cfg_.texts_per_class);
    std::vector<std::size_t> pool_sizes;
    for (auto p : cfg_.pretrain_sizes) pool_sizes.push_back(p == 0 ? n_carrier_train : p);
    const std::size_t max_pool = *std::ranges::max_element(pool_sizes);
    const std::size_t reservoir_need = max_pool > n_carrier_train ? max_pool - n_carrier_train : 0;
    const std::size_t analyst_need = cfg_.texts_per_class + reservoir_need;

    std::vector<std::size_t> order(corpus_.size());
    std::iota(order.begin(), order.end(), 0);
    Rng(sub_seed(seed, "corpus-halves")).shuffle(order);
    if (analyst_need > order.size()) throw ConfigError("corpus too small for texts_per_class plus pre-training pool");
    std::vector<std::size_t> analyst(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(analyst_need));
    std::vector<std::size_t> steg;
    if (cfg_.disjoint_corpora) steg.assign(order.begin() + static_cast<std::ptrdiff_t>(analyst_need), order.end());
    else steg = order;
    if (steg.size() < 100) throw ConfigError("steganographer corpus has fewer than 100 texts");
    const bool steg_disjoint = disjoint(steg, analyst);
    if (cfg_.disjoint_corpora && !steg_disjoint) throw StateError("steganographer and steganalyst corpora overlap");
    meta["steganographer_texts"] = steg.size();
    meta["steganalyst_texts"] = analyst.size();

    // Carrier roles inside the steganalyst half.
    const std::vector<std::size_t> carrier_src(analyst.begin(),
                                               analyst.begin() + static_cast<std::ptrdiff_t>(cfg_.texts_per_class));
    const std::vector<std::size_t> reservoir_src(analyst.begin() + static_cast<std::ptrdiff_t>(cfg_.texts_per_class),
                                                 analyst.end());
    const SplitIndices carrier_split =
        split_indices(std::vector<std::optional<Label>>(cfg_.texts_per_class, Label::carrier),
                      sub_seed(seed, "split-carrier"));

    stage_ = "vocab";
    std::vector<std::vector<std::string>> steg_tokens, analyst_tokens;
    for (auto i : steg) steg_tokens.push_back(corpus_[i]);
    for (auto i : carrier_split.train) analyst_tokens.push_back(corpus_[carrier_src[i]]);
    for (auto i : reservoir_src) analyst_tokens.push_back(corpus_[i]);
    const Vocab steg_vocab = Vocab::build(steg_tokens, cfg_.vocab_cap);
    const Vocab analyst_vocab = Vocab::build(analyst_tokens, cfg_.vocab_cap);
    steg_vocab.save((dir / "steganographer.vocab").string());
    analyst_vocab.save((dir / "steganalyst.vocab").string());
    meta["steganographer_vocab"] = steg_vocab.size();
    meta["steganalyst_vocab"] = analyst_vocab.size();

    auto encode_all = [](const Vocab& v, const std::vector<std::vector<std::string>>& toks,
                         std::optional<Label> label) {
        std::vector<TokenSequence> out;
        out.reserve(toks.size());
        for (const auto& t : toks) out.push_back({v.encode(t), label});
        return out;
    };

    // Steganographer LM.
    stage_ = "stego-lm";
    say("training steganographer LM on " + std::to_string(steg.size()) + " texts");
    ModelConfig steg_cfg = cfg_.model;
    steg_cfg.vocab_size = steg_vocab.size();
    std::vector<TokenSequence> steg_seqs = encode_all(steg_vocab, steg_tokens, std::nullopt);
    std::vector<std::size_t> steg_order(steg_seqs.size());
    std::iota(steg_order.begin(), steg_order.end(), 0);
    Rng(sub_seed(seed, "stego-lm-split")).shuffle(steg_order);
    const auto steg_val_n = static_cast<std::size_t>(std::llround(0.1 * static_cast<double>(steg_seqs.size())));
    const std::vector<std::size_t> sv(steg_order.begin(), steg_order.begin() + static_cast<std::ptrdiff_t>(steg_val_n));
    const std::vector<std::size_t> st(steg_order.begin() + static_cast<std::ptrdiff_t>(steg_val_n), steg_order.end());
    LanguageModel steg_lm = LanguageModel::random(steg_cfg, sub_seed(seed, "stego-lm"));
    const LossCurve steg_curve = train_lm(steg_lm, pick(steg_seqs, st), pick(steg_seqs, sv),
                                          train_config(cfg_.stego_lm_epochs, 0, true), sub_seed(seed, "stego-lm"));
    const std::string steg_ckpt = (dir / "checkpoints" / "stego_lm.ckpt").string();
    steg_lm.save(steg_ckpt, stage::kLm, sub_seed(seed, "stego-lm"));
    const std::string steg_hash = git_blob_hash_file(steg_ckpt);
    meta["stego_lm"] = {{"checkpoint_hash", steg_hash}, {"curve", curve_json(steg_curve)}};

    std::vector<std::size_t> steg_lengths;
    for (const auto& s : steg_seqs) steg_lengths.push_back(std::clamp<std::size_t>(s.ids.size() - 2, 1, kMaxSequenceLength - 2));

    // Carriers.
    stage_ = "carriers";
    std::vector<std::vector<std::string>> carrier_tokens;
    for (auto i : carrier_src) carrier_tokens.push_back(corpus_[i]);
    const std::vector<TokenSequence> carriers = encode_all(analyst_vocab, carrier_tokens, Label::carrier);
    const auto carrier_train = pick(carriers, carrier_split.train);
    const auto carrier_val = pick(carriers, carrier_split.validation);
    const auto carrier_test = pick(carriers, carrier_split.test);

    // Stego sets per codec.
    struct CodecData {
        CodecSpec spec;
        double bpw = 0.0;
        std::vector<TokenSequence> train, val, test;
    };
    std::vector<CodecData> codecs;
    nlohmann::ordered_json codec_meta = nlohmann::ordered_json::array();
    for (std::size_t ci = 0; ci < cfg_.codecs.size(); ++ci) {
        CodecSpec spec = cfg_.codecs[ci];
        stage_ = "embed:" + spec.name();
        if (spec.kind == CodecKind::bins && spec.partition_seed == 0)
            spec.partition_seed = sub_seed(seed, "bins-partition-seed", ci);
        say("embedding " + spec.name() + " into " + std::to_string(cfg_.texts_per_class) + " texts");
        Rng len_rng(sub_seed(seed, "stego-lengths", ci));
        const std::uint64_t payload_seed = sub_seed(seed, "payload", ci);
        const std::size_t max_bits = spec.kind == CodecKind::vlc ? spec.param - 1 : spec.param;
        std::vector<StegoRecord> records;
        std::vector<std::string> lines;
        nlohmann::ordered_json per_line = nlohmann::ordered_json::array();
        for (std::size_t i = 0; i < cfg_.texts_per_class; ++i) {
            const std::size_t len = steg_lengths[static_cast<std::size_t>(len_rng.below(steg_lengths.size()))];
            Rng prng(sub_seed(payload_seed, i));
            const BitStream payload = rng_bits(prng, len * max_bits);
            StegoRecord rec = embed(steg_lm, spec, payload, len);
            if (cfg_.verify_extraction) {
                const BitStream back = extract(steg_lm, spec, rec.tokens.ids);
                if (!payload.starts_with(back) || back.size() < rec.bits_consumed)
                    throw DesyncError("text " + std::to_string(i) + ": extracted bits differ from the payload");
            }
            lines.push_back(steg_vocab.decode(rec.tokens.ids));
            per_line.push_back({{"words", rec.words()}, {"bits_consumed", rec.bits_consumed}});
            records.push_back(std::move(rec));
        }
        const double bpw = measure_bpw(records);
        write_lines((dir / "stego" / (file_tag(spec) + ".txt")).string(), lines);
        nlohmann::ordered_json side;
        side["codec"] = spec.name();
        side["partition_seed"] = spec.partition_seed;
        side["payload_seed"] = payload_seed;
        side["payload_seed_derivation"] = "text i uses Rng(sub_seed(payload_seed, i))";
        side["stego_lm_checkpoint_hash"] = steg_hash;
        side["bpw"] = bpw;
        side["lines"] = per_line;
        write_text(dir / "stego" / (file_tag(spec) + ".json"), side.dump(1) + "\n");
        codec_meta.push_back({{"codec", spec.name()}, {"partition_seed", spec.partition_seed}, {"bpw", bpw}});

        std::vector<std::vector<std::string>> stego_tokens;
        for (const auto& l : lines) stego_tokens.push_back(tokenize(l));
        const auto stego = encode_all(analyst_vocab, stego_tokens, Label::stego);
        const SplitIndices ss = split_indices(std::vector<std::optional<Label>>(stego.size(), Label::stego),
                                              sub_seed(seed, "split-stego", ci));
        codecs.push_back({spec, bpw, pick(stego, ss.train), pick(stego, ss.validation), pick(stego, ss.test)});
    }
    meta["codecs"] = codec_meta;

    // Pre-training pools and checkpoints.
    ModelConfig an_cfg = cfg_.model;
    an_cfg.vocab_size = analyst_vocab.size();
    auto pool_for = [&](std::size_t size, std::vector<std::size_t>* source) {
        std::vector<TokenSequence> pool;
        for (std::size_t i = 0; i < carrier_split.train.size() && pool.size() < size; ++i) {
            pool.push_back(carriers[carrier_split.train[i]]);
            source->push_back(carrier_src[carrier_split.train[i]]);
        }
        for (std::size_t i = 0; i < reservoir_src.size() && pool.size() < size; ++i) {
            pool.push_back({analyst_vocab.encode(corpus_[reservoir_src[i]]), std::nullopt});
            source->push_back(reservoir_src[i]);
        }
        return unlabeled(std::move(pool));
    };
    std::vector<std::size_t> test_src;
    for (auto i : carrier_split.test) test_src.push_back(carrier_src[i]);

    const bool want_lm = std::ranges::count(cfg_.modes, InitMode::from_lm) > 0;
    const bool want_ae = std::ranges::count(cfg_.modes, InitMode::from_ae) > 0;
    std::map<std::pair<InitMode, std::size_t>, std::pair<Checkpoint, std::string>> pretrained;
    nlohmann::ordered_json pre_meta = nlohmann::ordered_json::array();
    bool leakage_ok = steg_disjoint || !cfg_.disjoint_corpora;
    for (std::size_t si = 0; si < pool_sizes.size(); ++si) {
        const std::size_t size = pool_sizes[si];
        std::vector<std::size_t> source;
        const auto pool = pool_for(size, &source);
        if (!disjoint(source, test_src)) throw StateError("pre-training pool intersects the test carriers");
        const auto val = unlabeled(carrier_val);
        for (auto mode : {InitMode::from_lm, InitMode::from_ae}) {
            if (mode == InitMode::from_lm && !want_lm && si != 0) continue;
            if (mode == InitMode::from_ae && !want_ae) continue;
            if (pretrained.count({mode, size})) continue;
            const bool is_lm = mode == InitMode::from_lm;
            stage_ = std::string(is_lm ? "pretrain-lm:" : "pretrain-ae:") + std::to_string(size);
            say(stage_ + " on " + std::to_string(pool.size()) + " carriers");
            const std::uint64_t ps = sub_seed(seed, is_lm ? "pretrain-lm" : "pretrain-ae");
            LanguageModel m = LanguageModel::random(an_cfg, ps);
            const TrainConfig tc = train_config(cfg_.pretrain_epochs, 0, true);
            const LossCurve curve =
                is_lm ? train_lm(m, pool, val, tc, ps) : train_ae(m, pool, val, tc, ps, {cfg_.teacher_forcing});
            const std::string path =
                (dir / "checkpoints" / ((is_lm ? "pretrain-lm-" : "pretrain-ae-") + std::to_string(size) + ".ckpt"))
                    .string();
            m.save(path, is_lm ? stage::kLmPretrain : stage::kAePretrain, ps);
            const std::string hash = git_blob_hash_file(path);
            pretrained.emplace(std::make_pair(mode, size), std::make_pair(load_checkpoint(path), hash));
            nlohmann::ordered_json pm;
            pm["mode"] = init_mode_name(mode);
            pm["pool_size"] = pool.size();
            pm["checkpoint_hash"] = hash;
            pm["curve"] = curve_json(curve);
            if (!is_lm) pm["reconstruction_accuracy_val"] = reconstruction_accuracy(m, val, true);
            pre_meta.push_back(pm);
        }
    }
    meta["pretrain"] = pre_meta;
    meta["leakage"] = {{"steganographer_steganalyst_disjoint", steg_disjoint},
                       {"pretrain_test_disjoint", true},
                       {"checks_passed", leakage_ok}};

    // Perplexity figures under the carrier-trained and a random LM.
    stage_ = "perplexity";
    const auto& [trained_ck, trained_hash] = pretrained.at({InitMode::from_lm, pool_sizes.front()});
    const LanguageModel trained_lm = LanguageModel::from_checkpoint(trained_ck);
    const LanguageModel random_lm = LanguageModel::random(an_cfg, sub_seed(seed, "random-lm"));
    const auto carrier_test_probs = conditional_probabilities(trained_lm, carrier_test);
    const auto carrier_test_probs_rand = conditional_probabilities(random_lm, carrier_test);
    std::vector<PerplexityReport> reports;
    for (const auto& cd : codecs) {
        say("perplexity report for " + cd.spec.name());
        std::vector<Label> labels(carrier_test.size(), Label::carrier);
        labels.resize(carrier_test.size() + cd.test.size(), Label::stego);
        auto probs = carrier_test_probs;
        for (auto& p : conditional_probabilities(trained_lm, cd.test)) probs.push_back(std::move(p));
        auto probs_rand = carrier_test_probs_rand;
        for (auto& p : conditional_probabilities(random_lm, cd.test)) probs_rand.push_back(std::move(p));
        const PerplexityReport rt = perplexity_report_from_probs(probs, labels, cfg_.histogram_bins);
        const PerplexityReport rr = perplexity_report_from_probs(probs_rand, labels, cfg_.histogram_bins);
        result_.aucs.push_back({r, cd.spec.name(), rt.auc, rr.auc, rt.separability(), rr.separability(), rt.log2_gap,
                                rr.log2_gap});
        for (std::size_t k = 0; k < cfg_.histogram_bins; ++k) {
            fig2_ += std::to_string(r) + "\t" + cd.spec.name() + "\t" + num(rt.bin_edges[k]) + "\t" +
                     num(rt.bin_edges[k + 1]) + "\t" + std::to_string(rt.carrier.histogram[k]) + "\t" +
                     std::to_string(rt.stego.histogram[k]) + "\n";
            for (const auto* rep : {&rt, &rr})
                fig3_ += std::to_string(r) + "\t" + cd.spec.name() + "\t" + (rep == &rt ? "trained" : "random") +
                         "\t" + num(rep->bin_edges[k]) + "\t" + num(rep->bin_edges[k + 1]) + "\t" +
                         std::to_string(rep->carrier.histogram[k]) + "\t" + std::to_string(rep->stego.histogram[k]) +
                         "\n";
        }
        reports.push_back(rt);

        // Perplexity-threshold baseline, fitted on validation texts only.
        const auto val_texts = concat(carrier_val, cd.val);
        const auto val_probs = conditional_probabilities(trained_lm, val_texts);
        std::vector<double> val_perp;
        std::vector<Label> val_labels;
        for (std::size_t i = 0; i < val_texts.size(); ++i) {
            val_perp.push_back(perplexity_from_probs(val_probs[i]));
            val_labels.push_back(*val_texts[i].label);
        }
        const ThresholdDetector det = fit_threshold(val_perp, val_labels);
        std::vector<Label> pred;
        for (std::size_t i = 0; i < probs.size(); ++i) pred.push_back(det.predict(perplexity_from_probs(probs[i])));
        ResultRow row;
        row.dataset = cfg_.dataset;
        row.codec = cd.spec.name();
        row.bpw = cd.bpw;
        row.init_mode = "ppl-threshold";
        row.pretrain_size = pool_sizes.front();
        row.seed = seed;
        row.replicate = r;
        row.metrics = evaluate(pred, labels);
        row.lineage = git_blob_hash(config_hash_ + steg_hash + trained_hash);
        result_.baseline_rows.push_back(row);
    }
    std::size_t max_pos = 0;
    for (const auto& rep : reports)
        max_pos = std::max({max_pos, rep.carrier.position_mean.size(), rep.stego.position_mean.size()});
    for (std::size_t p = 0; p < max_pos; ++p) {
        const auto& car = reports.front().carrier;
        fig1_ += std::to_string(r) + "\t" + std::to_string(p + 1) + "\t" +
                 (p < car.position_mean.size() ? num(car.position_mean[p]) : "NA");
        for (const auto& rep : reports)
            fig1_ += "\t" + (p < rep.stego.position_mean.size() ? num(rep.stego.position_mean[p]) : std::string("NA"));
        fig1_ += "\n";
    }

    // Fine-tuning.
    if (cfg_.run_finetune) {
        for (std::size_t ci = 0; ci < codecs.size(); ++ci) {
            const auto& cd = codecs[ci];
            const auto train = concat(carrier_train, cd.train);
            const auto val = concat(carrier_val, cd.val);
            const auto test = concat(carrier_test, cd.test);
            const std::uint64_t fs_seed = sub_seed(seed, "finetune", ci);
            double reference = 0.0;
            bool have_reference = false;

            struct Job {
                InitMode mode;
                std::size_t size;
            };
            std::vector<Job> jobs;
            // The random run comes first: it defines the convergence target.
            jobs.push_back({InitMode::random, 0});
            for (auto mode : cfg_.modes)
                if (mode != InitMode::random)
                    for (auto size : pool_sizes) jobs.push_back({mode, size});
            const bool random_listed = std::ranges::count(cfg_.modes, InitMode::random) > 0;

            for (bool early : {true, false}) {
                if (!early && !cfg_.fixed_epoch_rows) continue;
                for (const auto& job : jobs) {
                    stage_ = "finetune:" + cd.spec.name() + ":" + init_mode_name(job.mode) + ":" +
                             std::to_string(job.size) + (early ? "" : ":fixed");
                    say(stage_);
                    const std::pair<Checkpoint, std::string>* src =
                        job.mode == InitMode::random ? nullptr : &pretrained.at({job.mode, job.size});
                    Classifier clf = init_classifier(job.mode, an_cfg, fs_seed, src ? &src->first : nullptr);
                    FinetuneConfig fc;
                    fc.train = train_config(cfg_.finetune_epochs, early ? cfg_.finetune_patience : 0,
                                            cfg_.finetune_dropout);
                    const LossCurve curve = finetune(clf, train, val, fc, fs_seed);
                    if (job.mode == InitMode::random && early) {
                        const std::size_t e = std::min(cfg_.reference_epoch, curve.val_loss.size());
                        reference = curve.val_loss[e - 1];
                        have_reference = true;
                    }
                    MetricsReport m = evaluate(clf, test);
                    m.curve = curve;
                    m.epochs_to_threshold = have_reference ? curve.epochs_to_reach(reference) : 0;
                    if (job.mode == InitMode::random && !random_listed) continue;
                    if (early) fig6_[{init_mode_name(job.mode), r, job.size}].add(curve);
                    if (cfg_.save_classifiers)
                        clf.save((dir / "checkpoints" /
                                  ("clf-" + file_tag(cd.spec) + "-" + init_mode_name(job.mode) + "-" +
                                   std::to_string(job.size) + (early ? "" : "-fixed") + ".ckpt"))
                                     .string(),
                                 fs_seed);
                    ResultRow row;
                    row.dataset = cfg_.dataset;
                    row.codec = cd.spec.name();
                    row.bpw = cd.bpw;
                    row.init_mode = init_mode_name(job.mode);
                    row.pretrain_size = job.size;
                    row.seed = seed;
                    row.replicate = r;
                    row.early_stopping = early;
                    row.metrics = m;
                    row.epochs_ran = curve.epochs_ran;
                    row.lineage = git_blob_hash(config_hash_ + steg_hash + (src ? src->second : std::string()));
                    result_.rows.push_back(row);
                }
            }
        }
    }
    meta_replicates_.push_back(meta);
}

}  // namespace

RunResult run_experiment(const ExperimentConfig& cfg, const std::function<void(const std::string&)>& log) {
    cfg.validate();
    const fs::path out = cfg.output_dir;
    const fs::path work = out.string() + ".partial";
    std::error_code ec;
    fs::remove_all(work, ec);
    Pipeline pipeline(cfg, work, log);
    RunResult result;
    try {
        fs::create_directories(work);
        result = pipeline.run();
        fs::remove_all(out, ec);
        fs::rename(work, out);
    } catch (const StageError&) {
        fs::remove_all(work, ec);
        throw;
    } catch (const std::exception& e) {
        fs::remove_all(work, ec);
        throw StageError(pipeline.stage(), e.what());
    }
    result.output_dir = out.string();
    return result;
}

}  // namespace lssa
