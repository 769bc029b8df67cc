"""Command-line surface: every pipeline stage plus the full run.

Exit codes: 0 success, 2 configuration error, 3 stage failure.
"""

from __future__ import annotations

import json
import logging
import subprocess
import sys
import time
from pathlib import Path

import click

from . import embedding, metrics, pipeline, relation, taxonomy
from .corpus import build_index, candidate_terms, ingest, load_corpus, save_corpus
from .pipeline import ConfigError, RunConfig, StageError

logger = logging.getLogger(__name__)

EXIT_CONFIG = 2
EXIT_STAGE = 3


def _load_config(path: str | None) -> RunConfig:
    try:
        config = RunConfig.from_file(path) if path else RunConfig()
        return config
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)


def _out_dir(config: RunConfig) -> Path:
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_corpus_artifact(config: RunConfig, fallback_ingest: bool = False) -> tuple:
    path = _out_dir(config) / "corpus.bin"
    if not path.exists():
        if fallback_ingest and Path(config.corpus_path).exists():
            with open(config.corpus_path, encoding="utf-8") as fh:
                corpus = ingest(fh, config.min_count)
            return corpus, build_index(corpus)
        click.echo(f"missing corpus artifact {path}; run `taxoforge ingest` first", err=True)
        sys.exit(EXIT_STAGE)
    corpus = load_corpus(str(path))
    return corpus, build_index(corpus)


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Log progress to stderr.")
def main(verbose: bool) -> None:
    """Seed-guided topical taxonomy construction."""
    logging.basicConfig(
        level=logging.INFO if verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )


@main.command("ingest")
@click.option("--config", "config_path", type=click.Path(exists=True), required=True)
def ingest_cmd(config_path: str) -> None:
    """Build the corpus artifact from the configured text file."""
    config = _load_config(config_path)
    try:
        config.validate()
        with open(config.corpus_path, encoding="utf-8") as fh:
            corpus = ingest(fh, config.min_count)
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    except Exception as exc:
        click.echo(f"ingest failed: {exc}", err=True)
        sys.exit(EXIT_STAGE)
    path = _out_dir(config) / "corpus.bin"
    save_corpus(corpus, str(path))
    click.echo(
        f"ingested {corpus.n_docs} documents, {corpus.n_sentences} sentences, "
        f"{corpus.n_terms} terms -> {path}"
    )


@main.command("build-relset")
@click.option("--config", "config_path", type=click.Path(exists=True), required=True)
def build_relset_cmd(config_path: str) -> None:
    """Write the relation training set extracted from the seed."""
    config = _load_config(config_path)
    corpus, index = _load_corpus_artifact(config)
    try:
        tax = taxonomy.load_seed(Path(config.seed_path).read_text(encoding="utf-8"))
        samples, report = relation.build_training_set(
            tax, corpus, index, config.statement_cap, config.random_negatives, config.seed
        )
    except Exception as exc:
        click.echo(f"build-relset failed: {exc}", err=True)
        sys.exit(EXIT_STAGE)
    path = _out_dir(config) / "relation_training_set.jsonl"
    pipeline.write_training_set(samples, corpus, path)
    for warning in report.warnings:
        click.echo(f"warning: {warning}", err=True)
    click.echo(
        f"{report.total} samples ({report.positives} positives, "
        f"{report.sibling_negatives} sibling + {report.random_negatives} random "
        f"negatives, doubled by reversal) -> {path}"
    )


@main.command("train-scorer")
@click.option("--config", "config_path", type=click.Path(exists=True), required=True)
@click.option("--epochs", default=5, show_default=True)
@click.option("--batch-size", default=16, show_default=True)
@click.option("--layers", default=12, show_default=True)
@click.option("--hidden", default=768, show_default=True)
@click.option("--heads", default=12, show_default=True)
def train_scorer_cmd(
    config_path: str, epochs: int, batch_size: int, layers: int, hidden: int, heads: int
) -> None:
    """Delegate classifier training to the scoring service package."""
    config = _load_config(config_path)
    relset = _out_dir(config) / "relation_training_set.jsonl"
    if not relset.exists():
        click.echo("missing relation_training_set.jsonl; run build-relset first", err=True)
        sys.exit(EXIT_STAGE)
    checkpoint = _out_dir(config) / "scorer.ckpt"
    cmd = [
        sys.executable, "-m", "relscore", "train",
        "--samples", str(relset), "--checkpoint", str(checkpoint),
        "--epochs", str(epochs), "--batch-size", str(batch_size),
        "--layers", str(layers), "--hidden", str(hidden), "--heads", str(heads),
        "--seed", str(config.seed),
    ]
    result = subprocess.run(cmd)
    if result.returncode != 0:
        click.echo(
            "scorer training failed; is the relscore service package installed?",
            err=True,
        )
        sys.exit(EXIT_STAGE)
    click.echo(f"scorer checkpoint -> {checkpoint}")


@main.command("discover-roots")
@click.option("--config", "config_path", type=click.Path(exists=True), required=True)
def discover_roots_cmd(config_path: str) -> None:
    """Find common parents of the seed's first-layer topics."""
    config = _load_config(config_path)
    corpus, index = _load_corpus_artifact(config)
    try:
        tax = taxonomy.load_seed(Path(config.seed_path).read_text(encoding="utf-8"))
        scorer = config.scorer_handle().resolve(corpus)
        roots = relation.discover_roots(
            scorer, corpus, index, tax, config.gamma,
            relation.ConfidenceFilter(config.delta), config.statement_cap,
            config.min_cooccur, config.max_roots,
        )
    except Exception as exc:
        click.echo(f"discover-roots failed: {exc}", err=True)
        sys.exit(EXIT_STAGE)
    (_out_dir(config) / "roots.json").write_text(json.dumps(roots) + "\n", encoding="utf-8")
    click.echo("roots: " + ", ".join(roots))


@main.command("run")
@click.option("--config", "config_path", type=click.Path(exists=True), required=True)
def run_cmd(config_path: str) -> None:
    """Run the full construction pipeline."""
    config = _load_config(config_path)
    try:
        config.validate()
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    started = time.monotonic()
    try:
        result = pipeline.run(config)
    except StageError as exc:
        click.echo(str(exc), err=True)
        click.echo(f"partial artifacts kept in {config.output_dir}", err=True)
        sys.exit(EXIT_STAGE)
    elapsed = time.monotonic() - started
    res = result.report["result"]
    click.echo(
        f"done in {elapsed:.1f}s: {res['nodes']} nodes, {res['edges']} edges "
        f"-> {Path(config.output_dir) / 'taxonomy.json'}"
    )


@main.command("expand")
@click.option("--config", "config_path", type=click.Path(exists=True), required=True)
def expand_cmd(config_path: str) -> None:
    """Structure-only expansion: roots, first layer, subtopic candidates."""
    config = _load_config(config_path)
    corpus, index = _load_corpus_artifact(config)
    out = _out_dir(config)
    try:
        tax = taxonomy.load_seed(Path(config.seed_path).read_text(encoding="utf-8"))
        scorer = config.scorer_handle().resolve(corpus)
        conf = relation.ConfidenceFilter(config.delta)
        if len(tax.root_ids) > 1:
            roots = relation.discover_roots(
                scorer, corpus, index, tax, config.gamma, conf,
                config.statement_cap, config.min_cooccur, config.max_roots,
            )
            tax = pipeline._reroot(tax, roots, scorer, corpus, index, conf, config.statement_cap)
        else:
            roots = list(tax.root_ids)
        pool: list[int] = []
        seen: set[int] = set()
        for root in roots:
            for cand in candidate_terms(index, corpus.term_id(root), config.min_cooccur):
                if cand not in seen:
                    seen.add(cand)
                    pool.append(cand)
        kept = relation.expand_first_layer(
            scorer, corpus, index, roots, pool, config.gamma, conf,
            config.statement_cap, exclude=set(tax.nodes),
        )
        for name, _score in kept:
            root = pipeline._best_root(
                scorer, corpus, index, roots, name, conf, config.statement_cap
            )
            tax.attach(root, name)
        candidates = {
            topic: relation.subtopic_candidates(
                scorer, corpus, index, tax, topic, config.gamma, conf,
                config.statement_cap, config.min_cooccur,
            )
            for topic in tax.depth1_nodes()
        }
    except Exception as exc:
        click.echo(f"expand failed: {exc}", err=True)
        sys.exit(EXIT_STAGE)
    (out / "taxonomy_structure.json").write_text(
        taxonomy.export_structure(tax), encoding="utf-8"
    )
    (out / "subtopic_candidates.json").write_text(
        json.dumps(candidates, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    click.echo(
        f"{len(tax.nodes)} nodes after first-layer expansion; candidate lists "
        f"for {len(candidates)} topics -> {out}"
    )


@main.command("train-embed")
@click.option("--config", "config_path", type=click.Path(exists=True), required=True)
def train_embed_cmd(config_path: str) -> None:
    """Train the joint embedding over the expanded structure."""
    config = _load_config(config_path)
    corpus, _ = _load_corpus_artifact(config)
    out = _out_dir(config)
    structure = out / "taxonomy_structure.json"
    if not structure.exists():
        click.echo("missing taxonomy_structure.json; run expand first", err=True)
        sys.exit(EXIT_STAGE)
    try:
        tax = taxonomy.load_seed(structure.read_text(encoding="utf-8"))
        space = embedding.train(corpus, tax, config.embedding)
    except Exception as exc:
        click.echo(f"train-embed failed: {exc}", err=True)
        sys.exit(EXIT_STAGE)
    embedding.save_table(space.table, str(out / "embeddings.bin"))
    (out / "embeddings.meta.json").write_text(
        json.dumps({"concepts": space.concepts}, indent=2) + "\n", encoding="utf-8"
    )
    embedding.export_word_vectors(space, str(out / "embeddings.txt"))
    (out / "taxonomy_structure.json").write_text(
        taxonomy.export_structure(tax), encoding="utf-8"
    )
    click.echo(f"embeddings for {corpus.n_terms} terms, {len(space.concepts)} concepts -> {out}")


@main.command("cluster")
@click.option("--config", "config_path", type=click.Path(exists=True), required=True)
def cluster_cmd(config_path: str) -> None:
    """Group subtopic candidates and attach the consistent ones."""
    config = _load_config(config_path)
    corpus, index = _load_corpus_artifact(config)
    out = _out_dir(config)
    try:
        tax = taxonomy.load_seed((out / "taxonomy_structure.json").read_text(encoding="utf-8"))
        table = embedding.load_table(str(out / "embeddings.bin"))
        meta = json.loads((out / "embeddings.meta.json").read_text(encoding="utf-8"))
        space = embedding.ConceptSpace(table, corpus, meta["concepts"])
        candidates = json.loads(
            (out / "subtopic_candidates.json").read_text(encoding="utf-8")
        )
        scorer = config.scorer_handle().resolve(corpus)
        filtered, _ = pipeline._apply_topical_filter(tax, space, corpus, candidates)
        log = pipeline._attach_subtopics(
            tax, space, corpus, index, filtered, config, scorer
        )
    except Exception as exc:
        click.echo(f"cluster failed: {exc}", err=True)
        sys.exit(EXIT_STAGE)
    (out / "taxonomy_structure.json").write_text(
        taxonomy.export_structure(tax), encoding="utf-8"
    )
    (out / "embeddings.meta.json").write_text(
        json.dumps({"concepts": space.concepts}, indent=2) + "\n", encoding="utf-8"
    )
    embedding.save_table(space.table, str(out / "embeddings.bin"))
    attached = sum(len(e["attached"]) for e in log.values())
    click.echo(f"attached {attached} subtopics across {len(log)} topics")


@main.command("export")
@click.option("--config", "config_path", type=click.Path(exists=True), required=True)
def export_cmd(config_path: str) -> None:
    """Rank clusters and write the final topical taxonomy."""
    config = _load_config(config_path)
    corpus, _ = _load_corpus_artifact(config)
    out = _out_dir(config)
    try:
        tax = taxonomy.load_seed((out / "taxonomy_structure.json").read_text(encoding="utf-8"))
        table = embedding.load_table(str(out / "embeddings.bin"))
        meta = json.loads((out / "embeddings.meta.json").read_text(encoding="utf-8"))
        space = embedding.ConceptSpace(table, corpus, meta["concepts"])
        text = taxonomy.export(tax, space, config.export_top_k)
    except Exception as exc:
        click.echo(f"export failed: {exc}", err=True)
        sys.exit(EXIT_STAGE)
    (out / "taxonomy.json").write_text(text, encoding="utf-8")
    click.echo(f"taxonomy -> {out / 'taxonomy.json'}")


@main.command("evaluate")
@click.option("--config", "config_path", type=click.Path(exists=True), required=True)
@click.option("--gold", "gold_path", type=click.Path(exists=True), required=True)
@click.option("--taxonomy", "taxonomy_path", type=click.Path(exists=True), default=None)
@click.option(
    "--pairs",
    type=click.Choice(["transitive", "direct"]),
    default="transitive",
    show_default=True,
    help="Compare ancestor pairs under transitive closure or direct edges only.",
)
@click.option(
    "--synonyms",
    "synonyms_path",
    type=click.Path(exists=True),
    default=None,
    help="Concept synonym map (alias<TAB>canonical) applied to both pair sets.",
)
@click.option("--top-k", default=10, show_default=True)
def evaluate_cmd(
    config_path: str,
    gold_path: str,
    taxonomy_path: str | None,
    pairs: str,
    synonyms_path: str | None,
    top_k: int,
) -> None:
    """Score a taxonomy against gold ancestor pairs."""
    config = _load_config(config_path)
    corpus, index = _load_corpus_artifact(config, fallback_ingest=True)
    tax_path = Path(taxonomy_path) if taxonomy_path else Path(config.output_dir) / "taxonomy.json"
    try:
        # externally produced taxonomies may share terms across clusters
        tax = taxonomy.load_seed(tax_path.read_text(encoding="utf-8"), strict_clusters=False)
        gold = metrics.read_pair_file(gold_path)
        pred = tax.ancestor_pairs(transitive=pairs == "transitive")
        if synonyms_path:
            synonyms = metrics.read_synonym_file(synonyms_path)
            gold = metrics.canonicalize_pairs(gold, synonyms)
            pred = metrics.canonicalize_pairs(pred, synonyms)
        precision, recall, f1 = metrics.relation_f1(pred, gold)
        _, sd_mean = metrics.sibling_distinctiveness(tax, top_k)
        coherence = metrics.coherence_proxy(tax, corpus, index, top_k)
    except Exception as exc:
        click.echo(f"evaluate failed: {exc}", err=True)
        sys.exit(EXIT_STAGE)
    values = {
        "relation_precision": precision,
        "relation_recall": recall,
        "relation_f1": f1,
        "sibling_distinctiveness": sd_mean,
        "coherence_npmi": coherence.mean,
    }
    click.echo(metrics.format_metric_table(values))
    click.echo(metrics.format_metric_lines(values), nl=False)


if __name__ == "__main__":
    main()
