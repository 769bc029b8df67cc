"""Relation transfer: turn per-sentence relation predictions into
corpus-level directional scores and use them to expand the taxonomy.

A relation scorer maps a statement (sentence + two term positions) to a
probability vector over the three directed classes.  Low-information
predictions are discarded by a KL-from-uniform confidence filter; the
surviving predictions are counted into a directional score, which drives
root discovery (upward transfer) and topic/subtopic finding (downward
transfer).
"""

from __future__ import annotations

import enum
import logging
import re
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Protocol, Sequence

import numpy as np
import requests

from .corpus import (
    Corpus,
    CorpusError,
    CorpusIndex,
    RelationStatement,
    candidate_terms,
    relation_statements,
    sample_negative_sentences,
)
from .taxonomy import Taxonomy

logger = logging.getLogger(__name__)


class RelationClass(enum.IntEnum):
    """Directed relation between the statement's pair (a, b)."""

    FORWARD = 0   # a is parent of b
    BACKWARD = 1  # b is parent of a
    NONE = 2

    def reversed(self) -> "RelationClass":
        if self is RelationClass.FORWARD:
            return RelationClass.BACKWARD
        if self is RelationClass.BACKWARD:
            return RelationClass.FORWARD
        return RelationClass.NONE


class ScorerError(RuntimeError):
    """Transport or protocol failure of a scorer backend."""


def check_distribution(p: Sequence[float]) -> np.ndarray:
    arr = np.asarray(p, dtype=np.float64)
    if arr.shape != (3,) or (arr < 0).any() or abs(arr.sum() - 1.0) > 1e-6:
        raise ValueError(f"not a relation distribution: {p!r}")
    return arr


@dataclass(frozen=True)
class ConfidenceFilter:
    """Keeps predictions whose KL divergence from uniform exceeds ``delta``."""

    delta: float = 0.5

    def __post_init__(self) -> None:
        if self.delta <= 0:
            raise ValueError("delta must be > 0")

    def kl_from_uniform(self, p: Sequence[float]) -> float:
        arr = np.maximum(np.asarray(p, dtype=np.float64), 1e-9)
        third = 1.0 / 3.0
        return float(np.sum(third * np.log(third / arr)))

    def is_confident(self, p: Sequence[float]) -> bool:
        return self.kl_from_uniform(p) > self.delta


@dataclass(frozen=True)
class LabeledStatement:
    statement: RelationStatement
    label: RelationClass

    def reversed(self) -> "LabeledStatement":
        """Swap the pair order; directional labels swap, NONE stays."""
        return LabeledStatement(self.statement.reversed(), self.label.reversed())


@dataclass
class TrainingSetReport:
    positives: int = 0
    sibling_negatives: int = 0
    random_negatives: int = 0
    warnings: list[str] = field(default_factory=list)

    @property
    def total(self) -> int:
        return 2 * (self.positives + self.sibling_negatives + self.random_negatives)


def build_training_set(
    tax: Taxonomy,
    corpus: Corpus,
    index: CorpusIndex,
    cap: int = 200,
    random_negatives: int | None = None,
    seed: int = 13,
) -> tuple[list[LabeledStatement], TrainingSetReport]:
    """Self-supervised training data from the seed taxonomy.

    Positives: statements of every seed edge (parent, child), labeled
    FORWARD in that order.  Negatives: statements of sibling pairs plus
    random sentences, labeled NONE.  Every sample is emitted twice, original
    and reversed with the directional label swapped.  ``random_negatives``
    defaults to the number of positives.
    """
    edges = tax.edges()
    if not edges:
        raise ValueError("seed taxonomy has no edges")
    report = TrainingSetReport()
    samples: list[LabeledStatement] = []
    for parent, child in edges:
        stmts = relation_statements(
            index, corpus.term_id(parent), corpus.term_id(child), cap
        )
        if not stmts:
            msg = f"seed edge ({parent}, {child}) has no co-occurring sentence"
            report.warnings.append(msg)
            logger.warning(msg)
        for st in stmts:
            samples.append(LabeledStatement(st, RelationClass.FORWARD))
            report.positives += 1

    seen_pairs: set[tuple[str, str]] = set()
    for name in tax.node_names():
        sibs = tax.siblings(name)
        for other in sibs:
            if other == name:
                continue
            key = (min(name, other), max(name, other))
            if key in seen_pairs:
                continue
            seen_pairs.add(key)
            for st in relation_statements(
                index, corpus.term_id(key[0]), corpus.term_id(key[1]), cap
            ):
                samples.append(LabeledStatement(st, RelationClass.NONE))
                report.sibling_negatives += 1

    n_random = report.positives if random_negatives is None else random_negatives
    if n_random:
        for st in sample_negative_sentences(corpus, n_random, seed):
            samples.append(LabeledStatement(st, RelationClass.NONE))
            report.random_negatives += 1

    return [s for pair in ((s, s.reversed()) for s in samples) for s in pair], report


# -- scorer backends -----------------------------------------------------------


class Scorer(Protocol):
    def score_batch(self, statements: Sequence[RelationStatement]) -> list[np.ndarray]: ...


_PATTERN_DIST = np.array([0.90, 0.05, 0.05])
_NO_PATTERN_DIST = np.array([0.34, 0.33, 0.33])

# markers voting the earlier term as parent ("P such as C, C and C");
# after the marker an enumeration of other children may precede the pair's
# later term
_PARENT_FIRST = (
    ("such", "as"), ("like",), ("including",), ("include",), ("includes",),
    ("especially",), ("for", "example"),
)
_PARENT_FIRST_GAP = 8
# markers voting the later term as parent ("C is a kind of P"); the parent
# follows almost immediately
_PARENT_SECOND = (
    ("is", "a"), ("is", "an"), ("are", "a"), ("type", "of"), ("types", "of"),
    ("kind", "of"), ("kinds", "of"), ("and", "other"), ("or", "other"),
)
_PARENT_SECOND_GAP = 2
_SKIPPABLE = {",", ";"}


def _marker_vote(between: list[str]) -> str | None:
    """Which side the marker names as parent, if one is anchored here.

    The marker must start right at the earlier term (modulo punctuation) so
    that an unrelated word standing before the pattern never collects the
    credit; the later term may trail by a bounded enumeration gap.
    """
    while between and between[0] in _SKIPPABLE:
        between = between[1:]
    for markers, gap in ((_PARENT_FIRST, _PARENT_FIRST_GAP), (_PARENT_SECOND, _PARENT_SECOND_GAP)):
        for marker in markers:
            m = len(marker)
            if tuple(between[:m]) == marker and len(between) - m <= gap:
                return "first" if markers is _PARENT_FIRST else "second"
    return None


def heuristic_score(tokens: Sequence[str], pos_a: int, pos_b: int) -> np.ndarray:
    """Pattern-rule distribution for one statement over term strings.

    Hypernym markers in the span strictly between the pair (underscores
    normalized to spaces) decide which side is the parent; with no anchored
    marker the result is near-uniform, which the confidence filter drops.
    """
    lo, hi = (pos_a, pos_b) if pos_a < pos_b else (pos_b, pos_a)
    between = [w for t in tokens[lo + 1 : hi] for w in t.lower().split("_")]
    vote = _marker_vote(between)
    if vote is None:
        return _NO_PATTERN_DIST.copy()
    parent_pos = lo if vote == "first" else hi
    forward = parent_pos == pos_a
    return _PATTERN_DIST.copy() if forward else _PATTERN_DIST[[1, 0, 2]].copy()


class HeuristicScorer:
    """Local fallback scorer built on lexical hypernym patterns."""

    def __init__(self, corpus: Corpus) -> None:
        self.corpus = corpus

    def score_batch(self, statements: Sequence[RelationStatement]) -> list[np.ndarray]:
        out = []
        for st in statements:
            tokens = self.corpus.term_strings(st.tokens)
            out.append(heuristic_score(tokens, st.pos_a, st.pos_b))
        return out


_ORACLE_DIST = np.array([0.98, 0.01, 0.01])
_ORACLE_NONE = np.array([0.01, 0.01, 0.98])


class OracleScorer:
    """Scores from a fixed (parent, child) table; pairs off the table get NONE."""

    def __init__(self, corpus: Corpus, parent_child: set[tuple[str, str]]) -> None:
        self.corpus = corpus
        self.table = set(parent_child)

    @classmethod
    def from_file(cls, corpus: Corpus, path: str) -> "OracleScorer":
        """Lines "termA<TAB>termB<TAB>forward|backward|none"."""
        pairs: set[tuple[str, str]] = set()
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                parts = line.split("\t")
                if len(parts) != 3 or parts[2] not in ("forward", "backward", "none"):
                    raise ScorerError(f"bad oracle line {lineno}: {line!r}")
                a, b, rel = parts
                if rel == "forward":
                    pairs.add((a, b))
                elif rel == "backward":
                    pairs.add((b, a))
        return cls(corpus, pairs)

    def score_batch(self, statements: Sequence[RelationStatement]) -> list[np.ndarray]:
        out = []
        for st in statements:
            a = self.corpus.terms[st.tokens[st.pos_a]]
            b = self.corpus.terms[st.tokens[st.pos_b]]
            if (a, b) in self.table:
                out.append(_ORACLE_DIST.copy())
            elif (b, a) in self.table:
                out.append(_ORACLE_DIST[[1, 0, 2]].copy())
            else:
                out.append(_ORACLE_NONE.copy())
        return out


class RemoteScorer:
    """HTTP backend speaking the batch-scoring wire protocol.

    Transient transport failures are retried with exponential backoff;
    after ``retries`` attempts a :class:`ScorerError` carries the count.
    """

    def __init__(
        self,
        url: str,
        corpus: Corpus,
        retries: int = 3,
        timeout: float = 30.0,
        backoff: float = 0.5,
    ) -> None:
        self.url = url.rstrip("/")
        self.corpus = corpus
        self.retries = retries
        self.timeout = timeout
        self.backoff = backoff

    def score_batch(self, statements: Sequence[RelationStatement]) -> list[np.ndarray]:
        if not statements:
            return []
        payload = {
            "statements": [
                {
                    "tokens": self.corpus.term_strings(st.tokens),
                    "pos_a": st.pos_a,
                    "pos_b": st.pos_b,
                }
                for st in statements
            ]
        }
        last: Exception | None = None
        for attempt in range(self.retries):
            try:
                resp = requests.post(
                    f"{self.url}/score", json=payload, timeout=self.timeout
                )
                resp.raise_for_status()
                dists = resp.json()["distributions"]
                if len(dists) != len(statements):
                    raise ScorerError(
                        f"scorer returned {len(dists)} distributions for "
                        f"{len(statements)} statements"
                    )
                return [check_distribution(d) for d in dists]
            except (requests.RequestException, KeyError, ValueError) as exc:
                last = exc
                if attempt + 1 < self.retries:
                    time.sleep(self.backoff * 2**attempt)
        raise ScorerError(
            f"scorer at {self.url} failed after {self.retries} attempts: {last}"
        )


@dataclass
class ScorerHandle:
    """Backend selector: "heuristic", "oracle" (+ table path), or a URL."""

    backend: str = "heuristic"
    address: str | None = None

    def resolve(self, corpus: Corpus) -> Scorer:
        if self.backend == "heuristic":
            return HeuristicScorer(corpus)
        if self.backend == "oracle":
            if not self.address:
                raise ScorerError("oracle backend needs a table path")
            return OracleScorer.from_file(corpus, self.address)
        if self.backend == "remote":
            if not self.address:
                raise ScorerError("remote backend needs a URL")
            return RemoteScorer(self.address, corpus)
        raise ScorerError(f"unknown scorer backend: {self.backend!r}")


# -- corpus-level scores ---------------------------------------------------------


def directional_score(
    scorer: Scorer,
    index: CorpusIndex,
    src: int,
    dst: int,
    conf: ConfidenceFilter,
    cap: int = 200,
) -> float | None:
    """Fraction of confident statements predicting src -> dst.

    None when no statement exists or none is confident (the score is
    undefined, not zero).
    """
    if src == dst:
        raise CorpusError("directional score needs two distinct terms")
    stmts = relation_statements(index, src, dst, cap)
    if not stmts:
        return None
    confident = [d for d in scorer.score_batch(stmts) if conf.is_confident(d)]
    if not confident:
        return None
    forward = sum(1 for d in confident if int(np.argmax(d)) == RelationClass.FORWARD)
    return forward / len(confident)


class RootDiscoveryError(RuntimeError):
    def __init__(self, per_topic: dict[str, list[str]]) -> None:
        self.per_topic = per_topic
        listing = "; ".join(f"{t}: {sorted(ps)}" for t, ps in per_topic.items())
        super().__init__(f"no common root found (parent lists: {listing})")


def discover_roots(
    scorer: Scorer,
    corpus: Corpus,
    index: CorpusIndex,
    tax: Taxonomy,
    gamma: float = 0.7,
    conf: ConfidenceFilter = ConfidenceFilter(),
    cap: int = 200,
    min_cooccur: int = 3,
    max_roots: int = 3,
) -> list[str]:
    """Common parents of all first-layer seed topics, best first.

    For each seed topic e the candidate pool is its co-occurring terms; a
    candidate w joins e's parent list when Score(w -> e) > gamma.  The root
    set is the intersection of the parent lists, ordered by mean score
    descending and capped at ``max_roots``.
    """
    topics = tax.root_ids
    if len(topics) < 2:
        raise ValueError("root discovery needs at least two first-layer topics")
    parent_scores: dict[str, dict[str, float]] = {}
    for topic in topics:
        tid = corpus.term_id(topic)
        scores: dict[str, float] = {}
        for cand in candidate_terms(index, tid, min_cooccur):
            s = directional_score(scorer, index, cand, tid, conf, cap)
            if s is not None and s > gamma:
                scores[corpus.terms[cand]] = s
        parent_scores[topic] = scores
    common = set.intersection(*(set(s) for s in parent_scores.values()))
    if not common:
        raise RootDiscoveryError({t: list(s) for t, s in parent_scores.items()})
    ranked = sorted(
        common,
        key=lambda name: (
            -sum(parent_scores[t][name] for t in topics) / len(topics),
            name,
        ),
    )
    return ranked[:max_roots]


def root_average_score(
    scorer: Scorer,
    corpus: Corpus,
    index: CorpusIndex,
    roots: Sequence[str],
    candidate: int,
    conf: ConfidenceFilter,
    cap: int = 200,
) -> float:
    """Mean of Score(root -> candidate) over the root set; undefined terms count 0."""
    total = 0.0
    for root in roots:
        rid = corpus.term_id(root)
        if rid == candidate:
            return 0.0
        s = directional_score(scorer, index, rid, candidate, conf, cap)
        total += s if s is not None else 0.0
    return total / len(roots)


def expand_first_layer(
    scorer: Scorer,
    corpus: Corpus,
    index: CorpusIndex,
    roots: Sequence[str],
    candidates: Sequence[int],
    gamma: float = 0.7,
    conf: ConfidenceFilter = ConfidenceFilter(),
    cap: int = 200,
    exclude: set[str] | None = None,
    workers: int = 1,
) -> list[tuple[str, float]]:
    """New first-layer topics: candidates whose root-averaged score beats gamma.

    Existing node names (``exclude``) are skipped; results are sorted by
    score descending, ties by name.  Per-candidate scoring fans out over a
    bounded worker pool; counting is commutative, so the result does not
    depend on the interleaving.
    """
    if not roots:
        raise ValueError("root set is empty")
    exclude = exclude or set()
    pool = [
        cand
        for cand in candidates
        if corpus.terms[cand] not in exclude and corpus.terms[cand] not in roots
    ]

    def score_one(cand: int) -> float:
        return root_average_score(scorer, corpus, index, roots, cand, conf, cap)

    if workers > 1 and len(pool) > 1:
        with ThreadPoolExecutor(min(workers, len(pool))) as executor:
            scores = list(executor.map(score_one, pool))
    else:
        scores = [score_one(cand) for cand in pool]
    kept = [
        (corpus.terms[cand], score)
        for cand, score in zip(pool, scores)
        if score > gamma
    ]
    kept.sort(key=lambda item: (-item[1], item[0]))
    return kept


def subtopic_candidates(
    scorer: Scorer,
    corpus: Corpus,
    index: CorpusIndex,
    tax: Taxonomy,
    topic: str,
    gamma: float = 0.7,
    conf: ConfidenceFilter = ConfidenceFilter(),
    cap: int = 200,
    min_cooccur: int = 3,
    allow_ancestor_clusters: bool = False,
) -> list[str]:
    """Downward transfer: co-occurring terms w with Score(topic -> w) > gamma.

    Existing node names are never candidates, nor are terms already claimed
    by another node's cluster (the topic's own cluster terms stay eligible).
    ``allow_ancestor_clusters`` keeps terms claimed by the topic's ancestors
    eligible: deeper extraction runs after cluster growth, which routinely
    captures a node's future children into the surrounding subtree.
    """
    tid = corpus.term_id(topic)
    allowed_owners = {None, topic}
    if allow_ancestor_clusters:
        allowed_owners |= tax.ancestors(topic)
    out = []
    for cand in candidate_terms(index, tid, min_cooccur):
        name = corpus.terms[cand]
        if name in tax.nodes or tax.term_owner(name) not in allowed_owners:
            continue
        s = directional_score(scorer, index, tid, cand, conf, cap)
        if s is not None and s > gamma:
            out.append(name)
    return out
