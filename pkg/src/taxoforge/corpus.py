"""Corpus ingestion, vocabulary, and sentence-level co-occurrence indexes.

The input format is pre-phrased text: one document per line, tokens
space-separated, multi-word phrases joined by underscores.  Sentences are
split on '.', '!' or '?' followed by whitespace (or end of line), and all
tokens are case-folded.  Terms below the frequency cutoff are dropped from
both the vocabulary and the sentence store.
"""

from __future__ import annotations

import io
import re
import struct
from dataclasses import dataclass
from typing import Iterable, NamedTuple

import numpy as np

TermId = int

_SENTENCE_END = re.compile(r"[.!?]+(?=\s|$)")

MAGIC = b"TXFC"
FORMAT_VERSION = 1


class CorpusError(ValueError):
    """Raised for malformed input or out-of-vocabulary lookups."""


class Sentence(NamedTuple):
    tokens: tuple[TermId, ...]
    doc_id: int


@dataclass(frozen=True)
class RelationStatement:
    """One sentence taken as evidence for the relation of a term pair.

    ``pos_a`` and ``pos_b`` are the token indexes of the first occurrence of
    each term; they always differ.
    """

    sentence_id: int
    tokens: tuple[TermId, ...]
    pos_a: int
    pos_b: int

    def reversed(self) -> "RelationStatement":
        """The same sentence with the pair order swapped."""
        return RelationStatement(self.sentence_id, self.tokens, self.pos_b, self.pos_a)


class Corpus:
    """Immutable vocabulary + sentence store built by :func:`ingest`."""

    def __init__(
        self,
        terms: list[str],
        frequencies: list[int],
        sentences: list[Sentence],
        n_docs: int,
    ) -> None:
        self.terms = terms
        self.frequencies = frequencies
        self.sentences = sentences
        self.n_docs = n_docs
        self.term_ids: dict[str, TermId] = {t: i for i, t in enumerate(terms)}

    @property
    def n_terms(self) -> int:
        return len(self.terms)

    @property
    def n_sentences(self) -> int:
        return len(self.sentences)

    def term_id(self, term: str) -> TermId:
        try:
            return self.term_ids[term]
        except KeyError:
            raise CorpusError(f"term not in vocabulary: {term!r}") from None

    def has_term(self, term: str) -> bool:
        return term in self.term_ids

    def term_strings(self, ids: Iterable[TermId]) -> list[str]:
        return [self.terms[i] for i in ids]


def _split_line(line: str) -> list[list[str]]:
    """Case-fold one document line and split it into token lists per sentence."""
    chunks = _SENTENCE_END.split(line.lower())
    return [toks for chunk in chunks if (toks := chunk.split())]


def ingest(source: Iterable[str] | str, min_count: int = 50) -> Corpus:
    """Build a corpus from line-oriented text, one document per line.

    Terms occurring fewer than ``min_count`` times are removed from the
    vocabulary and from every sentence; sentences left empty are dropped.
    Deterministic given identical input bytes: term ids follow first
    occurrence order.
    """
    if min_count < 1:
        raise CorpusError("min_count must be >= 1")
    if isinstance(source, str):
        source = io.StringIO(source)

    raw_docs: list[list[list[str]]] = []
    counts: dict[str, int] = {}
    for line in source:
        sents = _split_line(line)
        if not sents:
            continue
        raw_docs.append(sents)
        for toks in sents:
            for tok in toks:
                counts[tok] = counts.get(tok, 0) + 1
    if not raw_docs:
        raise CorpusError("empty corpus")

    terms: list[str] = []
    frequencies: list[int] = []
    ids: dict[str, int] = {}
    for sents in raw_docs:
        for toks in sents:
            for tok in toks:
                if tok not in ids and counts[tok] >= min_count:
                    ids[tok] = len(terms)
                    terms.append(tok)
                    frequencies.append(counts[tok])
    if not terms:
        raise CorpusError("min_count too high: no term survives the cutoff")

    sentences: list[Sentence] = []
    for doc_id, sents in enumerate(raw_docs):
        for toks in sents:
            kept = tuple(ids[t] for t in toks if t in ids)
            if kept:
                sentences.append(Sentence(kept, doc_id))
    return Corpus(terms, frequencies, sentences, len(raw_docs))


def export_text(corpus: Corpus) -> str:
    """Render the corpus back to its line-oriented input format.

    Re-ingesting the result with the same ``min_count`` reproduces the
    vocabulary and sentence store exactly (filtering is idempotent).
    """
    lines = []
    for doc_id in range(corpus.n_docs):
        parts = [
            " ".join(corpus.terms[t] for t in sent.tokens) + " ."
            for sent in corpus.sentences
            if sent.doc_id == doc_id
        ]
        lines.append(" ".join(parts))
    return "\n".join(lines) + "\n"


class CorpusIndex:
    """Term -> sorted sentence-id postings over a corpus.

    Pair co-occurrence is resolved lazily by intersecting two postings
    lists, which is exact: the intersection equals the set of sentences
    containing both terms.
    """

    def __init__(self, corpus: Corpus) -> None:
        self.corpus = corpus
        postings: list[list[int]] = [[] for _ in range(corpus.n_terms)]
        for sid, sent in enumerate(corpus.sentences):
            for tid in set(sent.tokens):
                postings[tid].append(sid)
        # sentence ids are visited in ascending order, so postings are sorted
        self.postings = postings

    def sentences_with(self, term: TermId) -> list[int]:
        self._check(term)
        return self.postings[term]

    def pair_sentences(self, a: TermId, b: TermId) -> list[int]:
        """Sorted ids of sentences containing both ``a`` and ``b``."""
        self._check(a)
        self._check(b)
        pa, pb = self.postings[a], self.postings[b]
        if len(pa) > len(pb):
            pa, pb = pb, pa
        bset = set(pb)
        return [sid for sid in pa if sid in bset]

    def _check(self, term: TermId) -> None:
        if not 0 <= term < self.corpus.n_terms:
            raise CorpusError(f"term not in vocabulary: id {term}")


def build_index(corpus: Corpus) -> CorpusIndex:
    return CorpusIndex(corpus)


def relation_statements(
    index: CorpusIndex, a: TermId, b: TermId, cap: int
) -> list[RelationStatement]:
    """Statements for the pair (a, b): sentences containing both terms.

    Returns at most ``cap`` statements, taken from the lowest sentence ids;
    positions point at the first occurrence of each term.
    """
    if a == b:
        raise CorpusError("relation statements need two distinct terms")
    if cap < 1:
        raise CorpusError("cap must be >= 1")
    out = []
    for sid in index.pair_sentences(a, b)[:cap]:
        tokens = index.corpus.sentences[sid].tokens
        out.append(
            RelationStatement(sid, tokens, tokens.index(a), tokens.index(b))
        )
    return out


def candidate_terms(
    index: CorpusIndex, anchor: TermId, min_cooccur: int = 3
) -> list[TermId]:
    """Terms sharing at least ``min_cooccur`` sentences with ``anchor``.

    The anchor itself is excluded; results are sorted by co-occurrence count
    descending, ties by term id ascending.
    """
    index._check(anchor)
    counts: dict[int, int] = {}
    for sid in index.postings[anchor]:
        for tid in set(index.corpus.sentences[sid].tokens):
            if tid != anchor:
                counts[tid] = counts.get(tid, 0) + 1
    keep = [(tid, n) for tid, n in counts.items() if n >= min_cooccur]
    keep.sort(key=lambda item: (-item[1], item[0]))
    return [tid for tid, _ in keep]


def sample_negative_sentences(
    corpus: Corpus, n: int, rng_seed: int
) -> list[RelationStatement]:
    """Draw ``n`` pseudo statements from random sentences, reproducibly.

    Each draw picks a sentence uniformly (with replacement) among sentences
    holding at least two distinct tokens, then two positions carrying
    distinct tokens to stand in for the term pair.
    """
    eligible = [
        sid for sid, sent in enumerate(corpus.sentences) if len(set(sent.tokens)) >= 2
    ]
    if not eligible:
        raise CorpusError("no sentence with two distinct tokens")
    rng = np.random.default_rng(rng_seed)
    out = []
    for _ in range(n):
        sid = eligible[int(rng.integers(len(eligible)))]
        tokens = corpus.sentences[sid].tokens
        while True:
            pos_a = int(rng.integers(len(tokens)))
            pos_b = int(rng.integers(len(tokens)))
            if tokens[pos_a] != tokens[pos_b]:
                break
        out.append(RelationStatement(sid, tokens, pos_a, pos_b))
    return out


def save_corpus(corpus: Corpus, path: str) -> None:
    """Write the corpus in the versioned binary layout.

    Layout: magic ``TXFC``, version byte, then little-endian fields —
    u32 term count; per term u16 utf-8 length + bytes + u32 frequency;
    u32 document count; u32 sentence count; per sentence u32 doc id,
    u32 token count, u32 token ids.  The postings index is rebuilt on load.
    """
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(bytes([FORMAT_VERSION]))
        fh.write(struct.pack("<I", corpus.n_terms))
        for term, freq in zip(corpus.terms, corpus.frequencies):
            raw = term.encode("utf-8")
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<I", freq))
        fh.write(struct.pack("<II", corpus.n_docs, corpus.n_sentences))
        for sent in corpus.sentences:
            fh.write(struct.pack("<II", sent.doc_id, len(sent.tokens)))
            fh.write(struct.pack(f"<{len(sent.tokens)}I", *sent.tokens))


def load_corpus(path: str) -> Corpus:
    with open(path, "rb") as fh:
        if fh.read(4) != MAGIC:
            raise CorpusError(f"not a corpus file: {path}")
        version = fh.read(1)[0]
        if version != FORMAT_VERSION:
            raise CorpusError(f"unsupported corpus format version {version}")
        (n_terms,) = struct.unpack("<I", fh.read(4))
        terms, frequencies = [], []
        for _ in range(n_terms):
            (tlen,) = struct.unpack("<H", fh.read(2))
            terms.append(fh.read(tlen).decode("utf-8"))
            frequencies.append(struct.unpack("<I", fh.read(4))[0])
        n_docs, n_sents = struct.unpack("<II", fh.read(8))
        sentences = []
        for _ in range(n_sents):
            doc_id, ntok = struct.unpack("<II", fh.read(8))
            tokens = struct.unpack(f"<{ntok}I", fh.read(4 * ntok))
            sentences.append(Sentence(tuple(tokens), doc_id))
    return Corpus(terms, frequencies, sentences, n_docs)
