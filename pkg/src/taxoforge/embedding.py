"""Joint embedding of words, documents, and concept nodes.

Three negative-sampling losses share one space:

* a skip-gram term over (center, context) pairs inside a fixed window,
  center vectors ``u_word`` against context vectors ``v_word``;
* a document term pulling each word toward the document it appears in;
* a proximity term pulling each concept's cluster words toward the concept
  vector, which is what makes the space discriminative between concepts.

Each softmax ``P(target | source) ∝ exp(u_source · v_target)`` is replaced
by the logistic surrogate with K sampled negatives, and the weighted sum of
the three negative log-likelihoods is minimized by SGD.  After every epoch
each concept grabs at most one new distinctive word into its cluster.
"""

from __future__ import annotations

import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .corpus import Corpus
from .taxonomy import Taxonomy

EMB_MAGIC = b"TXFE"
EMB_FORMAT_VERSION = 1


class EmbeddingError(ValueError):
    pass


@dataclass
class TrainingConfig:
    dim: int = 100
    window: int = 5
    lambda_doc: float = 1.5
    lambda_prox: float = 1.0
    negatives: int = 5
    epochs: int = 10
    lr_start: float = 0.025
    lr_end: float = 0.0001
    cluster_margin: float = 0.05
    # clusters start growing only once vectors carry signal; growth over
    # near-random cosines locks junk words in permanently
    growth_warmup: int = 2
    # classic frequent-word subsampling threshold; 0 disables
    subsample: float = 1e-3
    seed: int = 13
    # deterministic mode updates single-threaded in corpus order; turning it
    # off lets `workers` threads update the shared table without locks
    deterministic: bool = True
    workers: int = 4

    def validate(self) -> None:
        if self.dim < 1 or self.window < 1 or self.negatives < 1:
            raise EmbeddingError("dim, window and negatives must be >= 1")
        if self.lambda_doc < 0 or self.lambda_prox < 0:
            raise EmbeddingError("loss weights must be >= 0")
        if self.growth_warmup < 0 or self.subsample < 0:
            raise EmbeddingError("growth_warmup and subsample must be >= 0")


@dataclass
class EmbeddingTable:
    u_word: np.ndarray
    v_word: np.ndarray
    u_doc: np.ndarray
    u_concept: np.ndarray

    @property
    def dim(self) -> int:
        return self.u_word.shape[1]

    def copy(self) -> "EmbeddingTable":
        return EmbeddingTable(
            self.u_word.copy(), self.v_word.copy(), self.u_doc.copy(), self.u_concept.copy()
        )

    def assert_finite(self) -> None:
        for name in ("u_word", "v_word", "u_doc", "u_concept"):
            arr = getattr(self, name)
            if not np.isfinite(arr).all():
                raise EmbeddingError(f"non-finite entries in {name}")


def init(vocab_size: int, n_docs: int, n_concepts: int, d: int, seed: int) -> EmbeddingTable:
    """Fresh table: center/doc/concept rows uniform in [-0.5/d, 0.5/d], contexts zero."""
    if d < 1:
        raise EmbeddingError("embedding dimension must be >= 1")
    if min(vocab_size, n_docs, n_concepts) < 1:
        raise EmbeddingError("all table sizes must be >= 1")
    rng = np.random.default_rng(seed)
    bound = 0.5 / d
    return EmbeddingTable(
        u_word=rng.uniform(-bound, bound, (vocab_size, d)),
        v_word=np.zeros((vocab_size, d)),
        u_doc=rng.uniform(-bound, bound, (n_docs, d)),
        u_concept=rng.uniform(-bound, bound, (n_concepts, d)),
    )


@dataclass
class TrainingBatch:
    """Index arrays for one update step; negatives are pre-sampled.

    Shapes: sources/targets (n,), negatives (n, K).  Empty groups are
    allowed and contribute nothing.
    """

    sg_center: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    sg_context: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    sg_negatives: np.ndarray = field(default_factory=lambda: np.empty((0, 0), dtype=np.int64))
    doc_word: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    doc_target: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    doc_negatives: np.ndarray = field(default_factory=lambda: np.empty((0, 0), dtype=np.int64))
    prox_word: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    prox_concept: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    prox_negatives: np.ndarray = field(default_factory=lambda: np.empty((0, 0), dtype=np.int64))


class SparseGrads:
    """Row-sparse gradients per table array, applied with scatter-add."""

    def __init__(self) -> None:
        self.parts: dict[str, list[tuple[np.ndarray, np.ndarray]]] = {
            "u_word": [], "v_word": [], "u_doc": [], "u_concept": []
        }

    def add(self, array: str, rows: np.ndarray, grads: np.ndarray) -> None:
        if rows.size:
            self.parts[array].append((rows, grads))

    def apply(self, table: EmbeddingTable, lr: float) -> None:
        for name, chunks in self.parts.items():
            target = getattr(table, name)
            for rows, grads in chunks:
                np.add.at(target, rows, -lr * grads)

    def touched_rows(self, array: str) -> set[int]:
        rows: set[int] = set()
        for idx, _ in self.parts[array]:
            rows.update(int(i) for i in idx.reshape(-1))
        return rows


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _log_sigmoid(x: np.ndarray) -> np.ndarray:
    return -np.logaddexp(0.0, -x)


def _component(
    src: np.ndarray,
    pos: np.ndarray,
    neg: np.ndarray,
    src_table: np.ndarray,
    tgt_table: np.ndarray,
    weight: float,
) -> tuple[float, np.ndarray, tuple[np.ndarray, np.ndarray], tuple[np.ndarray, np.ndarray]]:
    """Logistic negative-sampling loss and gradients for one pair group.

    Returns (loss, grad wrt source rows, (pos rows, grads), (neg rows, grads)).
    """
    u = src_table[src]                      # (n, d)
    vp = tgt_table[pos]                     # (n, d)
    vn = tgt_table[neg]                     # (n, K, d)
    s_pos = np.einsum("nd,nd->n", u, vp)
    s_neg = np.einsum("nd,nkd->nk", u, vn)
    loss = -(_log_sigmoid(s_pos).sum() + _log_sigmoid(-s_neg).sum())
    gp = -(1.0 - _sigmoid(s_pos))           # (n,)
    gn = _sigmoid(s_neg)                    # (n, K)
    grad_u = gp[:, None] * vp + np.einsum("nk,nkd->nd", gn, vn)
    grad_vp = gp[:, None] * u
    grad_vn = gn[:, :, None] * u[:, None, :]
    return (
        weight * loss,
        weight * grad_u,
        (pos, weight * grad_vp),
        (neg.reshape(-1), weight * grad_vn.reshape(-1, u.shape[1])),
    )


def loss_and_grad(
    batch: TrainingBatch, table: EmbeddingTable, config: TrainingConfig
) -> tuple[float, SparseGrads]:
    """Total weighted loss and row-sparse gradients for one batch.

    Pure in (batch, table): negatives ride in the batch, so the result is a
    deterministic function of the parameters, which keeps it checkable
    against finite differences.
    """
    loss = 0.0
    grads = SparseGrads()
    for src, pos, neg, s_name, t_name, weight in (
        (batch.sg_center, batch.sg_context, batch.sg_negatives, "u_word", "v_word", 1.0),
        (batch.doc_word, batch.doc_target, batch.doc_negatives, "u_word", "u_doc", config.lambda_doc),
        (batch.prox_word, batch.prox_concept, batch.prox_negatives, "u_word", "u_concept", config.lambda_prox),
    ):
        if src.size == 0 or weight == 0.0:
            continue
        if src.max(initial=-1) >= getattr(table, s_name).shape[0]:
            raise EmbeddingError(f"batch references a missing row in {s_name}")
        n_targets = getattr(table, t_name).shape[0]
        if max(pos.max(initial=-1), neg.max(initial=-1)) >= n_targets:
            raise EmbeddingError(f"batch references a missing row in {t_name}")
        part_loss, grad_u, (p_rows, p_grads), (n_rows, n_grads) = _component(
            src, pos, neg, getattr(table, s_name), getattr(table, t_name), weight
        )
        loss += part_loss
        grads.add(s_name, src, grad_u)
        grads.add(t_name, p_rows, p_grads)
        grads.add(t_name, n_rows, n_grads)
    return loss, grads


class ConceptSpace:
    """An embedding table plus the term/concept name maps trained with it."""

    def __init__(self, table: EmbeddingTable, corpus: Corpus, concepts: list[str]) -> None:
        self.table = table
        self.corpus = corpus
        self.concepts = list(concepts)
        self.concept_ids = {name: i for i, name in enumerate(self.concepts)}

    def word_vector(self, term: str) -> np.ndarray | None:
        tid = self.corpus.term_ids.get(term)
        return None if tid is None else self.table.u_word[tid]

    def concept_vector(self, name: str) -> np.ndarray | None:
        cid = self.concept_ids.get(name)
        return None if cid is None else self.table.u_concept[cid]

    def term_order(self, term: str) -> int:
        return self.corpus.term_ids.get(term, len(self.corpus.terms))

    def add_concept(self, name: str, vector: np.ndarray | None = None) -> None:
        """Register a concept created after training; defaults to its word vector."""
        if name in self.concept_ids:
            return
        if vector is None:
            vector = self.word_vector(name)
        if vector is None:
            raise EmbeddingError(f"no vector available for new concept {name!r}")
        self.concept_ids[name] = len(self.concepts)
        self.concepts.append(name)
        self.table.u_concept = np.vstack([self.table.u_concept, vector[None, :]])

    def cosine_to_concepts(self, term_id: int) -> np.ndarray:
        u = self.table.u_word[term_id]
        c = self.table.u_concept
        denom = np.linalg.norm(u) * np.linalg.norm(c, axis=1)
        out = np.zeros(len(self.concepts))
        ok = denom > 0
        out[ok] = (c[ok] @ u) / denom[ok]
        return out


def _cosine_matrix(words: np.ndarray, concepts: np.ndarray) -> np.ndarray:
    wn = np.linalg.norm(words, axis=1, keepdims=True)
    cn = np.linalg.norm(concepts, axis=1, keepdims=True)
    wn[wn == 0] = 1.0
    cn[cn == 0] = 1.0
    return (words / wn) @ (concepts / cn).T


def grow_clusters(
    space: ConceptSpace,
    tax: Taxonomy,
    margin: float = 0.05,
    reserved: frozenset[str] | set[str] = frozenset(),
) -> dict[str, str]:
    """Give each concept at most one new distinctive word.

    A word qualifies for concept e when its cosine to e strictly exceeds its
    cosine to every other concept and the gap to the runner-up is at least
    ``margin``.  The margin makes assignments unique, so cluster
    disjointness is preserved without ordering effects.  ``reserved`` terms
    are never grabbed (subtopic candidates awaiting attachment stay free).
    """
    free = [
        tid
        for tid, term in enumerate(space.corpus.terms)
        if tax.term_owner(term) is None and term not in reserved
    ]
    added: dict[str, str] = {}
    if not free or not space.concepts:
        return added
    cos = _cosine_matrix(space.table.u_word[free], space.table.u_concept)
    if len(space.concepts) == 1:
        gaps = np.full(len(free), np.inf)
        best = np.zeros(len(free), dtype=int)
    else:
        order = np.argsort(-cos, axis=1)
        best = order[:, 0]
        runner = order[:, 1]
        gaps = cos[np.arange(len(free)), best] - cos[np.arange(len(free)), runner]
    for cid, name in enumerate(space.concepts):
        if name not in tax.nodes:
            continue
        mask = (best == cid) & (gaps >= margin) & (gaps > 0)
        if not mask.any():
            continue
        rows = np.nonzero(mask)[0]
        scores = cos[rows, cid]
        # highest cosine wins; ties fall to the smaller term id
        pick = rows[np.lexsort((np.array(free)[rows], -scores))[0]]
        term = space.corpus.terms[free[pick]]
        tax.add_cluster_term(name, term)
        added[name] = term
    return added


def top_terms(space: ConceptSpace, tax: Taxonomy, name: str, k: int) -> list[str]:
    """The node's cluster terms ranked by cosine to its concept vector."""
    cvec = space.concept_vector(name)
    if cvec is None:
        raise EmbeddingError(f"unknown concept: {name!r}")
    node = tax.node(name)
    scored = []
    cnorm = np.linalg.norm(cvec)
    for term in node.cluster:
        wvec = space.word_vector(term)
        if wvec is None:
            raise EmbeddingError(f"cluster term {term!r} has no embedding")
        denom = cnorm * np.linalg.norm(wvec)
        cos = float(cvec @ wvec) / float(denom) if denom > 0 else 0.0
        scored.append((-cos, space.term_order(term), term))
    scored.sort()
    return [t for _, _, t in scored[: max(k, 0)]]


class _NegativeSampler:
    """Seeded draws from a distribution, rejecting a forbidden value."""

    def __init__(self, rng: np.random.Generator, probs: np.ndarray | None, size: int) -> None:
        self.rng = rng
        self.probs = probs
        self.size = size

    def draw(self, n: int, k: int, forbidden: np.ndarray) -> np.ndarray:
        if n == 0:
            return np.empty((0, k), dtype=np.int64)
        out = self.rng.choice(self.size, size=(n, k), p=self.probs)
        if self.size > 1:
            for _ in range(64):
                clash = out == forbidden[:, None]
                if not clash.any():
                    break
                out[clash] = self.rng.choice(self.size, size=int(clash.sum()), p=self.probs)
        return out.astype(np.int64)


def _sentence_batch(
    sent_tokens: tuple[int, ...],
    doc_id: int,
    owner_concept: dict[int, int],
    config: TrainingConfig,
    word_sampler: _NegativeSampler,
    doc_sampler: _NegativeSampler | None,
    concept_sampler: _NegativeSampler | None,
) -> TrainingBatch:
    k = config.negatives
    centers, contexts = [], []
    for i, w in enumerate(sent_tokens):
        lo = max(0, i - config.window)
        hi = min(len(sent_tokens), i + config.window + 1)
        for j in range(lo, hi):
            if j != i:
                centers.append(w)
                contexts.append(sent_tokens[j])
    batch = TrainingBatch()
    if centers:
        batch.sg_center = np.asarray(centers, dtype=np.int64)
        batch.sg_context = np.asarray(contexts, dtype=np.int64)
        batch.sg_negatives = word_sampler.draw(len(centers), k, batch.sg_context)
    if doc_sampler is not None:
        batch.doc_word = np.asarray(sent_tokens, dtype=np.int64)
        batch.doc_target = np.full(len(sent_tokens), doc_id, dtype=np.int64)
        batch.doc_negatives = doc_sampler.draw(len(sent_tokens), k, batch.doc_target)
    if concept_sampler is not None:
        prox_w = [w for w in sent_tokens if w in owner_concept]
        if prox_w:
            batch.prox_word = np.asarray(prox_w, dtype=np.int64)
            batch.prox_concept = np.asarray(
                [owner_concept[w] for w in prox_w], dtype=np.int64
            )
            batch.prox_negatives = concept_sampler.draw(
                len(prox_w), k, batch.prox_concept
            )
    return batch


def unigram_noise(corpus: Corpus, power: float = 0.75) -> np.ndarray:
    freq = np.asarray(corpus.frequencies, dtype=np.float64) ** power
    return freq / freq.sum()


def _keep_probabilities(corpus: Corpus, threshold: float) -> np.ndarray | None:
    """Per-term keep probability for frequent-word subsampling."""
    if threshold <= 0:
        return None
    freq = np.asarray(corpus.frequencies, dtype=np.float64)
    rel = freq / freq.sum()
    ratio = threshold / np.maximum(rel, 1e-12)
    return np.minimum(1.0, np.sqrt(ratio) + ratio)


def train(
    corpus: Corpus,
    tax: Taxonomy,
    config: TrainingConfig,
    reserved_terms: frozenset[str] | set[str] = frozenset(),
) -> ConceptSpace:
    """Run the joint training loop and grow clusters once per epoch.

    Concepts are the taxonomy's nodes in traversal order; their names must
    be in the vocabulary.  Frequent words are subsampled per epoch and
    cluster growth starts after the warmup, once vectors carry signal.
    ``reserved_terms`` are excluded from growth.  With a fixed seed the
    result is bit-identical across runs (single-threaded updates in corpus
    order).
    """
    config.validate()
    concepts = tax.node_names()
    for name in concepts:
        if not corpus.has_term(name):
            raise EmbeddingError(f"taxonomy node {name!r} not in vocabulary")
    table = init(corpus.n_terms, corpus.n_docs, len(concepts), config.dim, config.seed)
    space = ConceptSpace(table, corpus, concepts)
    if config.epochs == 0:
        return space

    rng = np.random.default_rng(config.seed + 1)
    word_sampler = _NegativeSampler(rng, unigram_noise(corpus), corpus.n_terms)
    doc_sampler = _NegativeSampler(rng, None, corpus.n_docs) if corpus.n_docs > 1 else None
    concept_sampler = (
        _NegativeSampler(rng, None, len(concepts)) if len(concepts) > 1 else None
    )
    if config.lambda_doc == 0:
        doc_sampler = None
    if config.lambda_prox == 0:
        concept_sampler = None

    keep_prob = _keep_probabilities(corpus, config.subsample)
    total_steps = max(1, config.epochs * corpus.n_sentences)

    def sweep(sentences, owner_concept, rng_, samplers, lr_of) -> None:
        w_sampler, d_sampler, c_sampler = samplers
        for offset, sent in enumerate(sentences):
            tokens = sent.tokens
            if keep_prob is not None:
                tokens = tuple(t for t in tokens if rng_.random() < keep_prob[t])
                if not tokens:
                    continue
            batch = _sentence_batch(
                tokens, sent.doc_id, owner_concept, config,
                w_sampler, d_sampler, c_sampler,
            )
            _, grads = loss_and_grad(batch, table, config)
            grads.apply(table, lr_of(offset))

    step = 0
    for epoch in range(config.epochs):
        owner_concept = {
            corpus.term_ids[term]: cid
            for cid, name in enumerate(concepts)
            for term in tax.nodes[name].cluster
            if term in corpus.term_ids
        }
        if config.deterministic or config.workers <= 1:
            base = step
            sweep(
                corpus.sentences, owner_concept, rng,
                (word_sampler, doc_sampler, concept_sampler),
                lambda off: config.lr_start
                + (config.lr_end - config.lr_start) * ((base + off) / total_steps),
            )
            step += corpus.n_sentences
        else:
            # relaxed-consistency mode: workers share the table without
            # locks; races lose the occasional update, which SGD tolerates
            lr = config.lr_start + (config.lr_end - config.lr_start) * (step / total_steps)
            chunks = np.array_split(np.arange(corpus.n_sentences), config.workers)
            noise = unigram_noise(corpus)
            with ThreadPoolExecutor(config.workers) as pool:
                futures = []
                for w, chunk in enumerate(chunks):
                    wrng = np.random.default_rng((config.seed, epoch, w))
                    samplers = (
                        _NegativeSampler(wrng, noise, corpus.n_terms),
                        _NegativeSampler(wrng, None, corpus.n_docs) if doc_sampler else None,
                        _NegativeSampler(wrng, None, len(concepts)) if concept_sampler else None,
                    )
                    futures.append(
                        pool.submit(
                            sweep,
                            [corpus.sentences[i] for i in chunk],
                            owner_concept, wrng, samplers, lambda off, lr=lr: lr,
                        )
                    )
                for fut in futures:
                    fut.result()
            step += corpus.n_sentences
        table.assert_finite()
        if epoch + 1 > config.growth_warmup:
            grow_clusters(space, tax, config.cluster_margin, reserved_terms)
    return space


def exact_concept_nll(space: ConceptSpace, tax: Taxonomy) -> float:
    """Full-softmax negative log-likelihood of concept membership.

    Evaluates -sum over nodes e and cluster words w of log softmax(u_w·u_e)
    with the softmax taken over all concepts.  Small concept counts only.
    """
    total = 0.0
    for name in space.concepts:
        if name not in tax.nodes:
            continue
        cid = space.concept_ids[name]
        for term in tax.nodes[name].cluster:
            tid = space.corpus.term_ids.get(term)
            if tid is None:
                continue
            logits = space.table.u_concept @ space.table.u_word[tid]
            total -= float(logits[cid] - np.logaddexp.reduce(logits))
    return total


# -- persistence ---------------------------------------------------------------


def save_table(table: EmbeddingTable, path: str) -> None:
    """Binary layout: magic TXFE, version byte, u32 dim + row counts
    (words, docs, concepts), then the four arrays row-major as f32."""
    with open(path, "wb") as fh:
        fh.write(EMB_MAGIC)
        fh.write(bytes([EMB_FORMAT_VERSION]))
        fh.write(
            struct.pack(
                "<IIII",
                table.dim,
                table.u_word.shape[0],
                table.u_doc.shape[0],
                table.u_concept.shape[0],
            )
        )
        for arr in (table.u_word, table.v_word, table.u_doc, table.u_concept):
            fh.write(arr.astype("<f4").tobytes())


def load_table(path: str) -> EmbeddingTable:
    with open(path, "rb") as fh:
        if fh.read(4) != EMB_MAGIC:
            raise EmbeddingError(f"not an embedding file: {path}")
        version = fh.read(1)[0]
        if version != EMB_FORMAT_VERSION:
            raise EmbeddingError(f"unsupported embedding format version {version}")
        dim, n_words, n_docs, n_concepts = struct.unpack("<IIII", fh.read(16))
        arrays = []
        for rows in (n_words, n_words, n_docs, n_concepts):
            raw = fh.read(4 * rows * dim)
            arrays.append(
                np.frombuffer(raw, dtype="<f4").reshape(rows, dim).astype(np.float64)
            )
    return EmbeddingTable(*arrays)


def export_word_vectors(space: ConceptSpace, path: str) -> None:
    """Conventional text format: a count/dim header then 'word v1 v2 ...' lines."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{space.corpus.n_terms} {space.table.dim}\n")
        for tid, term in enumerate(space.corpus.terms):
            vec = " ".join(f"{x:.6f}" for x in space.table.u_word[tid])
            fh.write(f"{term} {vec}\n")
