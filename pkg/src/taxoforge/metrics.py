"""Automatic quality metrics for topical taxonomies."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .corpus import Corpus, CorpusIndex
from .taxonomy import Taxonomy

Pair = tuple[str, str]


class MetricError(ValueError):
    pass


def relation_f1(pred: set[Pair], gold: set[Pair]) -> tuple[float, float, float]:
    """Precision/recall/F1 of predicted ancestor pairs against a gold set.

    Precision is 0 for an empty prediction set; F1 is 0 when P + R is 0.
    An empty gold set is an error, not a degenerate score.
    """
    if not gold:
        raise MetricError("gold pair set is empty")
    hits = len(pred & gold)
    precision = hits / len(pred) if pred else 0.0
    recall = hits / len(gold)
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


def read_pair_file(path: str) -> set[Pair]:
    """Gold pairs: one "ancestor<TAB>descendant" per line; '#' comments allowed."""
    pairs: set[Pair] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise MetricError(f"bad pair line {lineno}: {line!r}")
            pairs.add((parts[0], parts[1]))
    return pairs


def read_synonym_file(path: str) -> dict[str, str]:
    """Concept synonym map: "alias<TAB>canonical" lines."""
    synonyms: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise MetricError(f"bad synonym line {lineno}: {line!r}")
            synonyms[parts[0]] = parts[1]
    return synonyms


def canonicalize_pairs(pairs: set[Pair], synonyms: dict[str, str]) -> set[Pair]:
    """Map both pair members through the synonym table.

    Pairs whose members collapse onto one canonical concept are dropped
    (ancestor sets stay irreflexive).
    """
    out: set[Pair] = set()
    for a, d in pairs:
        ca, cd = synonyms.get(a, a), synonyms.get(d, d)
        if ca != cd:
            out.add((ca, cd))
    return out


def sibling_distinctiveness(
    tax: Taxonomy, k: int = 10
) -> tuple[dict[str, float], float]:
    """Per-node SD and the mean over non-root nodes.

    SD of a node is 1 minus the largest Jaccard overlap between its top-k
    cluster terms and any sibling's top-k terms; nodes without siblings
    score 1.
    """
    per_node: dict[str, float] = {}
    for node in tax.iter_nodes():
        mine = set(node.cluster[:k])
        worst = 0.0
        for sib in tax.siblings(node.name):
            if sib == node.name:
                continue
            theirs = set(tax.nodes[sib].cluster[:k])
            union = mine | theirs
            if union:
                worst = max(worst, len(mine & theirs) / len(union))
        per_node[node.name] = 1.0 - worst
    non_root = [sd for name, sd in per_node.items() if tax.parent[name] is not None]
    mean = sum(non_root) / len(non_root) if non_root else 1.0
    return per_node, mean


def pair_npmi(index: CorpusIndex, a: int, b: int) -> float:
    """Normalized PMI of two terms from sentence co-occurrence.

    Pairs that never co-occur score -1; a pair that always co-occurs (and
    only ever appears together) scores 1.
    """
    n = index.corpus.n_sentences
    joint = len(index.pair_sentences(a, b))
    if joint == 0:
        return -1.0
    p_ab = joint / n
    if p_ab >= 1.0:
        return 1.0
    p_a = len(index.postings[a]) / n
    p_b = len(index.postings[b]) / n
    pmi = math.log(p_ab / (p_a * p_b))
    return pmi / -math.log(p_ab)


@dataclass
class CoherenceReport:
    per_node: dict[str, float]
    mean: float


def coherence_proxy(tax: Taxonomy, corpus: Corpus, index: CorpusIndex, k: int = 10) -> CoherenceReport:
    """Mean pairwise NPMI of each node's top-k cluster terms.

    Nodes with fewer than two in-vocabulary top terms are skipped.  This is
    an automated stand-in for human coherence judging.
    """
    per_node: dict[str, float] = {}
    for node in tax.iter_nodes():
        ids = [corpus.term_ids[t] for t in node.cluster[:k] if t in corpus.term_ids]
        if len(ids) < 2:
            continue
        values = [
            pair_npmi(index, ids[i], ids[j])
            for i in range(len(ids))
            for j in range(i + 1, len(ids))
        ]
        per_node[node.name] = sum(values) / len(values)
    mean = sum(per_node.values()) / len(per_node) if per_node else 0.0
    return CoherenceReport(per_node, mean)


def format_metric_lines(values: dict[str, float]) -> str:
    """Machine-readable key=value lines, sorted for stable output."""
    return "\n".join(f"{key}={values[key]:.6f}" for key in sorted(values)) + "\n"


def format_metric_table(values: dict[str, float]) -> str:
    width = max(len(k) for k in values) if values else 0
    lines = ["metric".ljust(width) + "  value", "-" * (width + 8)]
    for key in sorted(values):
        lines.append(key.ljust(width) + f"  {values[key]:.4f}")
    return "\n".join(lines) + "\n"
