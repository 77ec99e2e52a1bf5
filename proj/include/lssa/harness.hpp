#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "lssa/lstm.hpp"
#include "lssa/steganalyzer.hpp"
#include "lssa/stego_codec.hpp"
#include "lssa/synth.hpp"

namespace lssa {

/// Flat key=value text. Blank lines and lines starting with '#' are ignored.
class KeyValueConfig {
public:
    static KeyValueConfig parse(const std::string& text);
    static KeyValueConfig load(const std::string& path);

    bool has(const std::string& key) const { return values_.count(key) > 0; }
    const std::string& get(const std::string& key) const;
    void set(const std::string& key, std::string value) { values_[key] = std::move(value); }
    const std::map<std::string, std::string>& values() const noexcept { return values_; }

    /// Canonical text: sorted "key = value" lines.
    std::string canonical() const;

private:
    std::map<std::string, std::string> values_;
};

struct ExperimentConfig {
    std::string dataset = "synthetic";
    std::string corpus_path;          ///< empty: generate a synthetic corpus
    SynthParams synth;
    std::size_t vocab_cap = 2000;
    ModelConfig model;                ///< vocab_size is filled from the built vocabulary
    std::vector<CodecSpec> codecs{{CodecKind::bins, 1}, {CodecKind::bins, 2}, {CodecKind::bins, 3},
                                  {CodecKind::flc, 1},  {CodecKind::flc, 2},  {CodecKind::flc, 3},
                                  {CodecKind::vlc, 4},  {CodecKind::vlc, 8},  {CodecKind::vlc, 16}};
    std::size_t texts_per_class = 5000;
    std::vector<InitMode> modes{InitMode::random, InitMode::from_lm, InitMode::from_ae};
    /// Pre-training pool sizes; 0 stands for "the carrier training split only".
    std::vector<std::size_t> pretrain_sizes{0};
    std::size_t stego_lm_epochs = 10;
    std::size_t pretrain_epochs = 10;
    std::size_t finetune_epochs = 10;
    std::size_t finetune_patience = 5;
    bool finetune_dropout = true;
    bool fixed_epoch_rows = false;    ///< also fine-tune without early stopping
    bool run_finetune = true;
    std::size_t batch_size = 128;
    double lr = 1e-3;
    double clip_norm = 5.0;
    bool teacher_forcing = true;
    bool disjoint_corpora = true;
    bool verify_extraction = true;
    bool save_classifiers = false;
    std::size_t histogram_bins = 20;
    std::size_t reference_epoch = 5;  ///< random-init val loss at this epoch is the convergence target
    std::uint64_t master_seed = 1;
    std::size_t replicates = 1;
    std::string output_dir = "lssa-out";

    /// Unknown keys and malformed values throw ConfigError.
    static ExperimentConfig from_kv(const KeyValueConfig& kv);
    static ExperimentConfig load(const std::string& path);
    KeyValueConfig to_kv() const;
    void validate() const;

    std::uint64_t replicate_seed(std::size_t r) const;
};

/// SHA-1 of "blob <size>\0<content>", lowercase hex.
std::string git_blob_hash(const std::string& content);
std::string git_blob_hash_file(const std::string& path);

struct ResultRow {
    std::string dataset;
    std::string codec;
    double bpw = 0.0;
    std::string init_mode;
    std::size_t pretrain_size = 0;
    std::uint64_t seed = 0;
    std::size_t replicate = 0;
    bool early_stopping = true;
    MetricsReport metrics;
    std::size_t epochs_ran = 0;
    std::string lineage;
};

struct AucRow {
    std::size_t replicate = 0;
    std::string codec;
    double auc_trained = 0.5;
    double auc_random = 0.5;
    double separability_trained = 0.5;
    double separability_random = 0.5;
    double log2_gap_trained = 0.0;
    double log2_gap_random = 0.0;
};

struct RunResult {
    std::vector<ResultRow> rows;           ///< fine-tuned classifiers
    std::vector<ResultRow> baseline_rows;  ///< perplexity-threshold detector, init_mode "ppl-threshold"
    std::vector<AucRow> aucs;
    std::string config_hash;
    std::string output_dir;
};

/// Runs the full pipeline and writes results.csv, run_meta.json, the figure
/// TSVs, checkpoints and stego corpora into cfg.output_dir. Work happens in
/// a sibling ".partial" directory that replaces the output only on success.
/// Failures surface as StageError naming the stage.
RunResult run_experiment(const ExperimentConfig& cfg, const std::function<void(const std::string&)>& log = {});

}  // namespace lssa
