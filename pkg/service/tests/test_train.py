import numpy as np
import pytest
import torch

import patterns
from conftest import TINY, to_samples
from relscore.data import DataError, collate, encode_samples, load_samples
from relscore.model import CLASS_NAMES, ModelConfig, load_checkpoint, save_checkpoint
from relscore.train import TrainSettings, train_classifier


def test_synthetic_patterns_reach_ninety_percent_validation(trained):
    result, _, _ = trained
    assert result.best_val_accuracy >= 0.9, result.log
    assert len(result.log["epochs"]) == 5
    assert result.log["val_size"] == 100  # 90/10 split of 1k
    print(f"[acceptance] synthetic-fine-tune: PASS (val acc={result.best_val_accuracy:.3f})")


def test_training_positive_is_memorized(trained):
    result, samples, _ = trained
    positives = [s for s in samples if CLASS_NAMES[s.label] == "forward"][:32]
    encoded, labels = encode_samples(positives, result.tokenizer, result.model.config.max_len)
    ids, mask_a, mask_b, padding = collate(encoded, result.tokenizer.pad_id)
    with torch.no_grad():
        preds = result.model(ids, mask_a, mask_b, padding).argmax(dim=1)
    accuracy = float((preds == labels).float().mean())
    assert accuracy >= 0.9


def test_directional_consistency_soft_check(trained):
    # reversal should roughly swap the directional components; logged only
    result, samples, _ = trained
    directional = [s for s in samples if CLASS_NAMES[s.label] != "none"][:100]
    flipped = [
        type(s)(s.tokens, s.pos_b, s.pos_a, s.label) for s in directional
    ]
    def run(batch):
        encoded, _ = encode_samples(batch, result.tokenizer, result.model.config.max_len)
        ids, a, b, pad = collate(encoded, result.tokenizer.pad_id)
        with torch.no_grad():
            return torch.softmax(result.model(ids, a, b, pad), dim=1).numpy()

    straight = run(directional)
    reverse = run(flipped)
    swapped = np.abs(straight[:, 0] - reverse[:, 1]) <= 0.1
    fraction = float(swapped.mean())
    print(f"directional consistency: {fraction:.2f} of reversals swap within 0.1")


def test_contradictory_labels_still_complete():
    raw = patterns.generate(120, seed=2)
    flipped = []
    for i, r in enumerate(raw):
        r = dict(r)
        if i % 2:
            r["label"] = "none" if r["label"] != "none" else "forward"
        flipped.append(r)
    samples = to_samples(flipped)
    result = train_classifier(
        samples,
        ModelConfig(vocab_size=1, **TINY),
        TrainSettings(epochs=2, batch_size=16, seed=5),
    )
    assert 0.0 <= result.best_val_accuracy <= 1.0


def test_needs_three_classes_unless_degenerate():
    raw = [r for r in patterns.generate(60, seed=3) if r["label"] == "forward"]
    samples = to_samples(raw)
    with pytest.raises(DataError, match="classes"):
        train_classifier(samples, ModelConfig(vocab_size=1, **TINY))
    result = train_classifier(
        samples,
        ModelConfig(vocab_size=1, **TINY),
        TrainSettings(epochs=1, allow_degenerate=True),
    )
    assert result.model is not None


def test_empty_sample_set_errors():
    with pytest.raises(DataError, match="empty"):
        train_classifier([], ModelConfig(vocab_size=1, **TINY))


def test_checkpoint_round_trip(tmp_path, trained):
    result, samples, _ = trained
    path = tmp_path / "model.ckpt"
    save_checkpoint(str(path), result.model, result.tokenizer.id_to_token, result.log)
    model, vocab, log = load_checkpoint(str(path))
    assert vocab == result.tokenizer.id_to_token
    assert log["best_val_accuracy"] == result.best_val_accuracy
    encoded, _ = encode_samples(samples[:4], result.tokenizer, model.config.max_len)
    ids, a, b, pad = collate(encoded, result.tokenizer.pad_id)
    with torch.no_grad():
        original = result.model(ids, a, b, pad)
        restored = model(ids, a, b, pad)
    assert torch.allclose(original, restored, atol=1e-6)


def test_load_samples_round_trip(tmp_path):
    raw = patterns.generate(30, seed=4)
    path = tmp_path / "samples.jsonl"
    patterns.write_jsonl(raw, str(path))
    samples = load_samples(str(path))
    assert len(samples) == 30
    assert samples[0].tokens == tuple(raw[0]["tokens"])
    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"tokens": ["a"], "pos_a": 0}\n')
    with pytest.raises(DataError, match="line 1"):
        load_samples(str(bad))
