"""Synthetic hypernym-pattern statements with known labels.

Generates sentences where the relation between the pair is readable from
lexical patterns ("such_as", "is_a") or absent, so a classifier that
attends to context can reach high accuracy from scratch.
"""

from __future__ import annotations

import numpy as np

PARENTS = [f"genus{i}" for i in range(12)]
CHILDREN = [f"species{i}" for i in range(36)]
FILLER = [
    "the", "a", "people", "enjoy", "here", "often", "very", "quite",
    "today", "always", "some", "many",
]


def parent_of(child: str) -> str:
    return PARENTS[CHILDREN.index(child) % len(PARENTS)]


def generate(n: int, seed: int = 0) -> list[dict]:
    """``n`` labeled statements in the JSONL exchange schema (as dicts)."""
    rng = np.random.default_rng(seed)
    samples: list[dict] = []
    while len(samples) < n:
        child = CHILDREN[int(rng.integers(len(CHILDREN)))]
        parent = parent_of(child)
        pad = lambda k: [FILLER[int(rng.integers(len(FILLER)))] for _ in range(k)]
        kind = len(samples) % 3
        if kind == 0:
            tokens = pad(2) + [parent, "such_as", child] + pad(1)
            pos_p, pos_c = 2, 4
        elif kind == 1:
            tokens = pad(1) + [child, "is_a", parent] + pad(2)
            pos_p, pos_c = 3, 1
        else:
            # unrelated pair in a patternless sentence
            other = CHILDREN[int(rng.integers(len(CHILDREN)))]
            while other == child:
                other = CHILDREN[int(rng.integers(len(CHILDREN)))]
            tokens = pad(1) + [child, "and", other] + pad(2)
            samples.append(
                {"tokens": tokens, "pos_a": 1, "pos_b": 3, "label": "none"}
            )
            continue
        forward = {"tokens": tokens, "pos_a": pos_p, "pos_b": pos_c, "label": "forward"}
        samples.append(forward)
        if len(samples) < n:
            samples.append(
                {"tokens": tokens, "pos_a": pos_c, "pos_b": pos_p, "label": "backward"}
            )
    return samples[:n]


def write_jsonl(samples: list[dict], path: str) -> None:
    import json

    with open(path, "w", encoding="utf-8") as fh:
        for sample in samples:
            fh.write(json.dumps(sample) + "\n")
