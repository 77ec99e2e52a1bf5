import math
import random

import pytest

import lssa


@pytest.fixture(scope="module")
def setup():
    texts = lssa.synth_corpus(7, sentences=300, types=60, mean_length=6.0)
    vocab = lssa.Vocab.build(texts, 100)
    cfg = lssa.ModelConfig(len(vocab), embed_dim=8, hidden_dim=12)
    lm = lssa.LanguageModel.random(cfg, 3)
    return texts, vocab, cfg, lm


def test_tokenize():
    assert lssa.tokenize("The cat.") == ["the", "cat", "."]


def test_vocab_round_trip(setup, tmp_path):
    _, vocab, _, _ = setup
    path = str(tmp_path / "vocab.txt")
    vocab.save(path)
    again = lssa.Vocab.load(path)
    assert len(again) == len(vocab)
    assert again.token(5) == vocab.token(5)


def test_distribution_sums_to_one(setup):
    _, vocab, _, lm = setup
    dist = lm.next_token_distribution([lssa.BOS])
    assert len(dist) == len(vocab)
    assert math.isclose(sum(dist), 1.0, abs_tol=1e-9)


@pytest.mark.parametrize("codec", ["bins:2", "flc:2", "vlc:4"])
def test_embed_extract_round_trip(setup, codec):
    _, _, _, lm = setup
    rng = random.Random(11)
    bits = "".join(rng.choice("01") for _ in range(60))
    rec = lssa.embed(lm, codec, bits, 12)
    assert len(rec["ids"]) == 14
    got = lssa.extract(lm, codec, rec["ids"])
    n = rec["bits_consumed"]
    assert got[:n] == bits[:n]


def test_training_lowers_loss(setup):
    texts, vocab, _, _ = setup
    cfg = lssa.ModelConfig(len(vocab), embed_dim=8, hidden_dim=12)
    lm = lssa.LanguageModel.random(cfg, 5)
    curve = lssa.train_lm(lm, vocab, texts[:200], texts[200:], epochs=3, batch_size=32, lr=1e-2, seed=1)
    assert curve["epochs_ran"] == 3
    assert min(curve["val_loss"]) < curve["initial_val_loss"]


def test_classifier_probabilities(setup):
    texts, vocab, cfg, _ = setup
    clf = lssa.Classifier.init("random", cfg, 9)
    probs = clf.p_stego(vocab, texts[:5])
    assert all(0.0 <= p <= 1.0 for p in probs)
    assert set(clf.predict(vocab, texts[:5])) <= {"carrier", "stego"}


def test_metrics_and_threshold():
    m = lssa.metrics_from_counts(40, 10, 20, 30)
    assert math.isclose(m["acc"], 0.7)
    assert math.isclose(m["f1"], 80 / 110)
    det = lssa.fit_threshold([1.0, 2.0, 3.0, 4.0], ["carrier", "carrier", "stego", "stego"])
    assert det["tau"] == 2.5 and det["direction"] == "greater" and det["accuracy"] == 1.0


def test_grad_check():
    assert lssa.grad_check("lm", 1)["max_rel_error"] < 1e-4


def test_errors():
    with pytest.raises(lssa.ConfigError):
        lssa.ModelConfig(10, dropout_keep=0.0)
    with pytest.raises(lssa.LssaError):
        lssa.LanguageModel.load("/nonexistent/model.ckpt")
