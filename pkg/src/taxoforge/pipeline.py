"""End-to-end orchestration: seed in, expanded topical taxonomy out.

Stage order: build the relation training set from the seed; discover root
nodes (upward transfer); expand the first layer of topics under the roots
(downward transfer); extract subtopic candidates per topic; train the joint
embedding, growing each node's cluster; filter candidates by closest-topic
assignment in the trained space; group candidates per topic via the
Topic-Type matrix, co-cluster, keep consistent groups and attach them as
subtopic nodes; export the taxonomy and a stage-by-stage report.

Any stage failure aborts the run with the stage name; partial artifacts
(structure so far plus the report) are written to the output directory.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import clustering, embedding, relation, taxonomy
from .corpus import Corpus, CorpusIndex, build_index, candidate_terms, ingest
from .embedding import ConceptSpace, TrainingConfig
from .relation import ConfidenceFilter, RelationClass, Scorer, ScorerHandle
from .taxonomy import Taxonomy

logger = logging.getLogger(__name__)

SCORER_URL_ENV = "TAXOFORGE_SCORER_URL"


class ConfigError(ValueError):
    pass


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: Exception) -> None:
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage {stage!r} failed: {cause}")


@dataclass
class RunConfig:
    corpus_path: str = ""
    seed_path: str = ""
    output_dir: str = "out"
    scorer_backend: str = "heuristic"
    scorer_address: str | None = None
    gamma: float = 0.7
    delta: float = 0.5
    consistency_threshold: float = 0.5
    min_count: int = 50
    statement_cap: int = 200
    min_cooccur: int = 3
    random_negatives: int | None = None
    max_roots: int = 3
    expansion_layers: int = 2
    export_top_k: int = 10
    # candidate pools smaller than this skip meaning grouping (median-
    # preference AP cannot split three points into singletons)
    min_grouping_pool: int = 4
    # bounded fan-out for per-pair scoring and per-topic extraction
    workers: int = 4
    seed: int = 13
    embedding: TrainingConfig = field(default_factory=TrainingConfig)

    def __post_init__(self) -> None:
        env_url = os.environ.get(SCORER_URL_ENV)
        if env_url:
            self.scorer_address = env_url
        self.embedding.seed = self.seed

    def validate(self, check_paths: bool = True) -> None:
        for name, value in (
            ("gamma", self.gamma),
            ("delta", self.delta),
            ("consistency_threshold", self.consistency_threshold),
        ):
            if not 0 < value <= 1:
                raise ConfigError(f"{name} must lie in (0, 1], got {value}")
        if self.expansion_layers < 1:
            raise ConfigError("expansion_layers must be >= 1")
        if check_paths:
            for label, path in (("corpus", self.corpus_path), ("seed", self.seed_path)):
                if not path or not Path(path).exists():
                    raise ConfigError(f"{label} path does not exist: {path!r}")
        self.embedding.validate()

    @classmethod
    def from_file(cls, path: str) -> "RunConfig":
        """Load the YAML key/value tree; unknown keys are rejected."""
        try:
            with open(path, encoding="utf-8") as fh:
                raw = yaml.safe_load(fh) or {}
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError(f"cannot read config {path!r}: {exc}") from None
        if not isinstance(raw, dict):
            raise ConfigError("config file must hold a mapping")
        emb_raw = raw.pop("embedding", {}) or {}
        known = {f.name for f in dataclasses.fields(cls)} - {"embedding"}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        emb_known = {f.name for f in dataclasses.fields(TrainingConfig)}
        emb_unknown = set(emb_raw) - emb_known
        if emb_unknown:
            raise ConfigError(f"unknown embedding config keys: {sorted(emb_unknown)}")
        return cls(embedding=TrainingConfig(**emb_raw), **raw)

    def scorer_handle(self) -> ScorerHandle:
        return ScorerHandle(self.scorer_backend, self.scorer_address)


@dataclass
class RunResult:
    taxonomy: Taxonomy
    space: ConceptSpace
    report: dict
    export_text: str


def _truncate(items: list, limit: int = 50) -> list:
    return items if len(items) <= limit else items[:limit] + [f"... {len(items) - limit} more"]


class _DegradingScorer:
    """Partial-failure policy: a batch whose transport fails (after the
    backend's own retries) scores near-uniform, which the confidence filter
    discards, so the affected pair aggregates to Undefined instead of
    aborting the run.  After a few consecutive failures the backend is
    treated as down and skipped outright."""

    BREAKER = 3

    def __init__(self, inner: Scorer) -> None:
        self.inner = inner
        self.failed_batches = 0
        self.consecutive = 0

    def score_batch(self, statements):
        if self.consecutive >= self.BREAKER:
            self.failed_batches += 1
            return [np.array([1 / 3, 1 / 3, 1 / 3]) for _ in statements]
        try:
            result = self.inner.score_batch(statements)
            self.consecutive = 0
            return result
        except relation.ScorerError as exc:
            self.failed_batches += 1
            self.consecutive += 1
            logger.warning("scorer batch failed, pair scored undefined: %s", exc)
            if self.consecutive >= self.BREAKER:
                logger.warning("scorer backend treated as down after %d failures", self.consecutive)
            return [np.array([1 / 3, 1 / 3, 1 / 3]) for _ in statements]


def _best_root(
    scorer: Scorer,
    corpus: Corpus,
    index: CorpusIndex,
    roots: list[str],
    name: str,
    conf: ConfidenceFilter,
    cap: int,
) -> str:
    if len(roots) == 1:
        return roots[0]
    tid = corpus.term_id(name)
    best, best_score = roots[0], -1.0
    for root in roots:
        rid = corpus.term_id(root)
        s = relation.directional_score(scorer, index, rid, tid, conf, cap)
        score = s if s is not None else 0.0
        if score > best_score:
            best, best_score = root, score
    return best


def _reroot(
    seed: Taxonomy,
    roots: list[str],
    scorer: Scorer,
    corpus: Corpus,
    index: CorpusIndex,
    conf: ConfidenceFilter,
    cap: int,
) -> Taxonomy:
    """New forest with the discovered roots on top of the seed topics."""
    tax = Taxonomy()
    for root in roots:
        tax.add_root(root)

    def copy_subtree(parent: str, name: str) -> None:
        tax.attach(parent, name, list(seed.nodes[name].cluster))
        for child in seed.children[name]:
            copy_subtree(name, child)

    for topic in seed.root_ids:
        copy_subtree(_best_root(scorer, corpus, index, roots, topic, conf, cap), topic)
    return tax


def _contextual_signatures(
    corpus: Corpus,
    index: CorpusIndex,
    space: ConceptSpace,
    terms: list[str],
    window: int,
    max_mentions: int = 200,
) -> np.ndarray:
    """Mention-averaged context signatures in the trained space.

    For each mention of a term, the context-word vectors inside the window
    are averaged; mentions are then averaged per term.  This is the local
    stand-in for service-provided contextual term embeddings.
    """
    table = space.table
    out = np.zeros((len(terms), table.dim))
    for row, term in enumerate(terms):
        tid = corpus.term_id(term)
        mention_vecs = []
        for sid in index.postings[tid][:max_mentions]:
            tokens = corpus.sentences[sid].tokens
            for pos, tok in enumerate(tokens):
                if tok != tid:
                    continue
                lo = max(0, pos - window)
                ctx = [t for t in tokens[lo : pos + window + 1] if t != tid]
                if ctx:
                    mention_vecs.append(table.v_word[list(ctx)].mean(axis=0))
        if mention_vecs:
            out[row] = np.mean(mention_vecs, axis=0)
    return out


def _remote_signatures(
    scorer: Scorer,
    corpus: Corpus,
    index: CorpusIndex,
    terms: list[str],
    max_mentions: int = 50,
) -> np.ndarray | None:
    """Contextual term embeddings from the scoring service, if it serves them."""
    if isinstance(scorer, _DegradingScorer):
        scorer = scorer.inner
    if not isinstance(scorer, relation.RemoteScorer):
        return None
    import requests

    vectors = []
    for term in terms:
        tid = corpus.term_id(term)
        mentions = []
        for sid in index.postings[tid][:max_mentions]:
            tokens = corpus.sentences[sid].tokens
            mentions.append(
                {"tokens": corpus.term_strings(tokens), "pos": tokens.index(tid)}
            )
        try:
            resp = requests.post(
                f"{scorer.url}/embed",
                json={"term": term, "mentions": mentions},
                timeout=scorer.timeout,
            )
            resp.raise_for_status()
            vectors.append(np.asarray(resp.json()["vector"], dtype=np.float64))
        except (requests.RequestException, KeyError, ValueError) as exc:
            logger.warning("embed request for %r failed (%s); using local signatures", term, exc)
            return None
    return np.vstack(vectors) if vectors else None


def run(config: RunConfig) -> RunResult:
    config.validate()
    out_dir = Path(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    conf = ConfidenceFilter(config.delta)
    cap = config.statement_cap
    report: dict = {"stages": {}}
    tax: Taxonomy | None = None

    def fail(stage: str, exc: Exception) -> StageError:
        if tax is not None:
            (out_dir / "partial_taxonomy.json").write_text(
                taxonomy.export_structure(tax), encoding="utf-8"
            )
        report["failed_stage"] = stage
        (out_dir / "report.json").write_text(
            json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
        return StageError(stage, exc)

    # ingest
    try:
        with open(config.corpus_path, encoding="utf-8") as fh:
            corpus = ingest(fh, config.min_count)
        index = build_index(corpus)
    except Exception as exc:
        raise fail("ingest", exc) from exc
    report["corpus"] = {
        "documents": corpus.n_docs,
        "sentences": corpus.n_sentences,
        "terms": corpus.n_terms,
    }

    # seed
    try:
        tax = taxonomy.load_seed(Path(config.seed_path).read_text(encoding="utf-8"))
        missing = [n for n in tax.node_names() if not corpus.has_term(n)]
        if missing:
            raise ConfigError(f"seed nodes not in vocabulary: {missing}")
    except Exception as exc:
        raise fail("load_seed", exc) from exc
    report["seed"] = {"nodes": len(tax.nodes), "roots": list(tax.root_ids)}

    # relation training set (also the artifact the scoring service trains on)
    try:
        samples, ts_report = relation.build_training_set(
            tax, corpus, index, cap, config.random_negatives, config.seed
        )
        write_training_set(samples, corpus, out_dir / "relation_training_set.jsonl")
    except Exception as exc:
        raise fail("training_set", exc) from exc
    report["stages"]["training_set"] = {
        "positives": ts_report.positives,
        "sibling_negatives": ts_report.sibling_negatives,
        "random_negatives": ts_report.random_negatives,
        "total_after_augmentation": ts_report.total,
        "warnings": ts_report.warnings,
    }
    logger.info("training set: %d samples after augmentation", ts_report.total)

    scorer = _DegradingScorer(config.scorer_handle().resolve(corpus))

    # root discovery
    try:
        if len(tax.root_ids) == 1:
            roots = list(tax.root_ids)
            report["stages"]["root_discovery"] = {
                "skipped": True,
                "roots": roots,
                "note": "seed already has a single root",
            }
        else:
            roots = relation.discover_roots(
                scorer, corpus, index, tax, config.gamma, conf, cap,
                config.min_cooccur, config.max_roots,
            )
            tax = _reroot(tax, roots, scorer, corpus, index, conf, cap)
            report["stages"]["root_discovery"] = {"skipped": False, "roots": roots}
        tax.validate()
        logger.info("roots: %s", ", ".join(roots))
    except Exception as exc:
        raise fail("root_discovery", exc) from exc

    # first-layer expansion
    try:
        pool: list[int] = []
        seen: set[int] = set()
        for root in roots:
            for cand in candidate_terms(index, corpus.term_id(root), config.min_cooccur):
                if cand not in seen:
                    seen.add(cand)
                    pool.append(cand)
        kept = relation.expand_first_layer(
            scorer, corpus, index, roots, pool, config.gamma, conf, cap,
            exclude=set(tax.nodes), workers=config.workers,
        )
        attached_topics = []
        for name, score in kept:
            root = _best_root(scorer, corpus, index, roots, name, conf, cap)
            tax.attach(root, name)
            attached_topics.append({"name": name, "score": round(score, 6), "root": root})
        tax.validate()
        logger.info("first layer: %d of %d candidates attached", len(kept), len(pool))
    except Exception as exc:
        raise fail("first_layer", exc) from exc
    report["stages"]["first_layer"] = {
        "candidates": len(pool),
        "attached": attached_topics,
        "dropped_below_threshold": len(pool) - len(kept),
    }

    # subtopic candidate extraction (before embedding training, by design;
    # the topical constraint is applied after training, see below); topics
    # fan out over a bounded pool, extraction only reads shared state
    try:
        topics = tax.depth1_nodes()

        def extract(topic: str) -> list[str]:
            return relation.subtopic_candidates(
                scorer, corpus, index, tax, topic, config.gamma, conf, cap,
                config.min_cooccur,
            )

        if config.workers > 1 and len(topics) > 1:
            with ThreadPoolExecutor(min(config.workers, len(topics))) as executor:
                extracted = list(executor.map(extract, topics))
        else:
            extracted = [extract(t) for t in topics]
        candidates = dict(zip(topics, extracted))
    except Exception as exc:
        raise fail("subtopic_candidates", exc) from exc
    report["stages"]["subtopic_candidates"] = {
        t: {"count": len(c), "terms": _truncate(c)} for t, c in candidates.items()
    }

    # joint embedding with per-epoch cluster growth; extracted candidates
    # are provisional children, so growth must not capture them
    try:
        reserved = frozenset(term for terms in candidates.values() for term in terms)
        space = embedding.train(corpus, tax, config.embedding, reserved)
    except Exception as exc:
        raise fail("train_embedding", exc) from exc
    report["stages"]["embedding"] = {
        "epochs": config.embedding.epochs,
        "concepts": len(space.concepts),
        "cluster_sizes": {n.name: len(n.cluster) for n in tax.iter_nodes()},
    }

    # topical constraint: keep a candidate only where it is closest
    try:
        filtered, filter_log = _apply_topical_filter(tax, space, corpus, candidates)
    except Exception as exc:
        raise fail("topical_filter", exc) from exc
    report["stages"]["topical_filter"] = {
        "note": (
            "candidates were extracted before embedding training;"
            " multi-topic claims are resolved to the closest topic using"
            " embeddings trained over the expanded structure"
        ),
        "per_topic": filter_log,
    }

    # subtopic grouping and attachment, then optional deeper layers
    try:
        matrices_dir = out_dir / "topic_type_matrices"
        cluster_log = _attach_subtopics(
            tax, space, corpus, index, filtered, config, scorer, matrices_dir
        )
        for depth in range(2, config.expansion_layers):
            deeper: dict[str, list[str]] = {}
            for node in tax.iter_nodes():
                if node.depth == depth:
                    deeper[node.name] = relation.subtopic_candidates(
                        scorer, corpus, index, tax, node.name, config.gamma, conf,
                        cap, config.min_cooccur, allow_ancestor_clusters=True,
                    )
            deeper = {t: c for t, c in deeper.items() if c}
            if not deeper:
                break
            filtered_deeper, _ = _apply_topical_filter(tax, space, corpus, deeper)
            cluster_log.update(
                _attach_subtopics(
                    tax, space, corpus, index, filtered_deeper, config, scorer,
                    matrices_dir,
                )
            )
        tax.validate()
        attached = sum(len(entry["attached"]) for entry in cluster_log.values())
        logger.info("subtopics attached: %d", attached)
    except Exception as exc:
        raise fail("subtopic_clustering", exc) from exc
    report["stages"]["subtopic_clustering"] = cluster_log

    # export
    try:
        tax.validate()
        export_text = taxonomy.export(tax, space, config.export_top_k)
        (out_dir / "taxonomy.json").write_text(export_text, encoding="utf-8")
        report["result"] = {
            "nodes": len(tax.nodes),
            "edges": len(tax.edges()),
            "roots": list(tax.root_ids),
            "degraded_scorer_batches": scorer.failed_batches,
        }
        (out_dir / "report.json").write_text(
            json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
    except Exception as exc:
        raise fail("export", exc) from exc
    return RunResult(tax, space, report, export_text)


def _apply_topical_filter(
    tax: Taxonomy,
    space: ConceptSpace,
    corpus: Corpus,
    candidates: dict[str, list[str]],
) -> tuple[dict[str, list[str]], dict]:
    """Resolve candidates claimed by several topics to the closest one.

    The relational gate already bound each candidate to the topics that
    claimed it; a term can become only one node, so multi-claim conflicts
    are settled by cosine to the claimants' concept vectors in the trained
    space (ties keep the first claimant in topic order).
    """
    claimants: dict[str, list[str]] = {}
    for topic, cands in candidates.items():
        for cand in cands:
            claimants.setdefault(cand, []).append(topic)
    filtered: dict[str, list[str]] = {t: [] for t in candidates}
    log: dict = {t: {"kept": [], "dropped": []} for t in candidates}
    for cand, topics in claimants.items():
        if len(topics) == 1:
            winner = topics[0]
        else:
            cos = space.cosine_to_concepts(corpus.term_id(cand))
            winner = max(topics, key=lambda t: (cos[space.concept_ids[t]], -topics.index(t)))
        for topic in topics:
            if topic == winner:
                filtered[topic].append(cand)
                log[topic]["kept"].append(cand)
            else:
                log[topic]["dropped"].append(cand)
    for topic in log:
        log[topic]["kept"] = _truncate(log[topic]["kept"])
        log[topic]["dropped"] = _truncate(log[topic]["dropped"])
    return filtered, log


def _attach_subtopics(
    tax: Taxonomy,
    space: ConceptSpace,
    corpus: Corpus,
    index: CorpusIndex,
    candidates: dict[str, list[str]],
    config: RunConfig,
    scorer: Scorer,
    matrices_dir: Path | None = None,
) -> dict:
    log: dict = {}
    for topic, cands in sorted(candidates.items()):
        if not cands:
            continue
        entry: dict = {"candidates": len(cands), "attached": [], "dropped": []}
        meaning = np.vstack([space.table.u_word[corpus.term_id(c)] for c in cands])
        types = _remote_signatures(scorer, corpus, index, cands)
        if types is None:
            types = _contextual_signatures(
                corpus, index, space, cands, config.embedding.window
            )
        ttm = clustering.build_topic_type_matrix(
            cands, meaning, types, min_grouping_pool=config.min_grouping_pool
        )
        if matrices_dir is not None:
            matrices_dir.mkdir(parents=True, exist_ok=True)
            (matrices_dir / f"{topic}.tsv").write_text(ttm.to_tsv(), encoding="utf-8")
        rows, cols = ttm.shape
        k = clustering.default_bicluster_count(rows, cols)
        assignment = clustering.cocluster(ttm.matrix, k, config.seed)
        retained = set(
            clustering.retained_clusters(
                ttm.matrix, assignment, config.consistency_threshold
            )
        )
        entry["columns"] = cols
        entry["biclusters"] = assignment.k
        entry["retained_biclusters"] = sorted(retained)
        for j in range(cols):
            name = ttm.col_exemplars[j]
            if assignment.col_labels[j] not in retained:
                entry["dropped"].append({"name": name, "reason": "inconsistent_bicluster"})
                continue
            owner = tax.term_owner(name)
            movable = owner == topic or owner in tax.ancestors(topic)
            if name in tax.nodes or (owner is not None and not movable):
                entry["dropped"].append({"name": name, "reason": "owned_elsewhere"})
                continue
            if owner is not None:
                tax.remove_cluster_term(owner, name)
            tax.attach(topic, name)
            space.add_concept(name)
            for member in ttm.col_members[j]:
                if member != name and tax.term_owner(member) is None:
                    tax.add_cluster_term(name, member)
            entry["attached"].append(name)
        log[topic] = entry
    return log


def write_training_set(
    samples: list[relation.LabeledStatement], corpus: Corpus, path: Path | str
) -> None:
    """JSONL artifact consumed by the scoring service's trainer.

    One object per line: {"tokens": [str], "pos_a": int, "pos_b": int,
    "label": "forward"|"backward"|"none"}.
    """
    names = {
        RelationClass.FORWARD: "forward",
        RelationClass.BACKWARD: "backward",
        RelationClass.NONE: "none",
    }
    with open(path, "w", encoding="utf-8") as fh:
        for sample in samples:
            st = sample.statement
            fh.write(
                json.dumps(
                    {
                        "tokens": corpus.term_strings(st.tokens),
                        "pos_a": st.pos_a,
                        "pos_b": st.pos_b,
                        "label": names[sample.label],
                    },
                    ensure_ascii=False,
                )
                + "\n"
            )
