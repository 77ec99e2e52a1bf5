"""LSTM text steganography and steganalysis."""

from ._lssa import (
    BOS,
    EOS,
    PAD,
    UNK,
    CheckpointError,
    Classifier,
    ConfigError,
    DesyncError,
    IoError,
    LanguageModel,
    LssaError,
    ModelConfig,
    StageError,
    Vocab,
    embed,
    extract,
    finetune,
    fit_threshold,
    grad_check,
    huffman_codes,
    metrics_from_counts,
    run_experiment,
    synth_corpus,
    tokenize,
    train_ae,
    train_lm,
    unigram_perplexity,
)

__all__ = [name for name in dir() if not name.startswith("_")]
