import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

import patterns  # noqa: E402
from relscore.data import LabeledSample, LABEL_IDS  # noqa: E402
from relscore.model import ModelConfig  # noqa: E402
from relscore.train import TrainSettings, train_classifier  # noqa: E402

TINY = dict(hidden=64, layers=2, heads=4, max_len=48)


def to_samples(raw: list[dict]) -> list[LabeledSample]:
    return [
        LabeledSample(tuple(r["tokens"]), r["pos_a"], r["pos_b"], LABEL_IDS[r["label"]])
        for r in raw
    ]


@pytest.fixture(scope="session")
def trained():
    """One small fine-tune on 1k synthetic pattern statements, shared."""
    raw = patterns.generate(1000, seed=1)
    samples = to_samples(raw)
    config = ModelConfig(vocab_size=1, **TINY)
    result = train_classifier(
        samples, config, TrainSettings(epochs=5, batch_size=16, seed=3)
    )
    return result, samples, raw
