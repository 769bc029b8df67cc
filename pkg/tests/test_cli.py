import json

import pytest
from pathlib import Path

import yaml
from click.testing import CliRunner

from taxoforge.cli import main


def write_config(planted, out: str, backend: str = "oracle") -> str:
    config = {
        "corpus_path": str(planted.corpus_path),
        "seed_path": str(planted.seed_path),
        "output_dir": str(planted.root / out),
        "scorer_backend": backend,
        "min_count": 1,
        "seed": 13,
        "embedding": {"dim": 32, "epochs": 60, "growth_warmup": 50, "seed": 13},
    }
    if backend == "oracle":
        config["scorer_address"] = str(planted.oracle_path)
    path = planted.root / f"config_{out}.yaml"
    path.write_text(yaml.safe_dump(config))
    return str(path)


def test_full_run_and_evaluate(planted):
    runner = CliRunner()
    config_path = write_config(planted, "cli_run")
    result = runner.invoke(main, ["run", "--config", config_path])
    assert result.exit_code == 0, result.output
    out_dir = planted.root / "cli_run"
    assert (out_dir / "taxonomy.json").exists()

    result = runner.invoke(
        main,
        ["evaluate", "--config", config_path, "--gold", str(planted.gold_path)],
    )
    assert result.exit_code == 0, result.output
    assert "relation_f1=1.000000" in result.output
    assert "sibling_distinctiveness" in result.output


def test_stagewise_commands(planted):
    runner = CliRunner()
    config_path = write_config(planted, "cli_stages")
    for command in ("ingest", "build-relset", "discover-roots", "expand", "train-embed", "cluster", "export"):
        result = runner.invoke(main, [command, "--config", config_path])
        assert result.exit_code == 0, f"{command}: {result.output}"
    out_dir = planted.root / "cli_stages"
    assert (out_dir / "corpus.bin").exists()
    assert (out_dir / "relation_training_set.jsonl").exists()
    assert json.loads((out_dir / "roots.json").read_text()) == ["food"]
    tax = json.loads((out_dir / "taxonomy.json").read_text())
    assert tax["name"] == "food"
    assert len(tax["children"]) == 5


def test_config_error_exit_code(planted, tmp_path):
    runner = CliRunner()
    bad = tmp_path / "bad.yaml"
    bad.write_text("gamma: 7\ncorpus_path: nope\nseed_path: nope\n")
    result = runner.invoke(main, ["run", "--config", str(bad)])
    assert result.exit_code == 2


def test_stage_failure_exit_code(planted, tmp_path):
    runner = CliRunner()
    config = {
        "corpus_path": str(planted.corpus_path),
        "seed_path": str(planted.seed_path),
        "output_dir": str(tmp_path / "out"),
        "scorer_backend": "remote",
        "scorer_address": "http://127.0.0.1:9/dead",
        "min_count": 1,
        "embedding": {"dim": 16, "epochs": 2},
    }
    path = tmp_path / "config.yaml"
    path.write_text(yaml.safe_dump(config))
    result = runner.invoke(main, ["run", "--config", str(path)])
    assert result.exit_code == 3
    assert "root_discovery" in result.output


def test_evaluate_with_synonym_map(planted, tmp_path):
    runner = CliRunner()
    config_path = write_config(planted, "cli_run")  # artifacts from the run test
    if not (planted.root / "cli_run" / "taxonomy.json").exists():
        result = runner.invoke(main, ["run", "--config", config_path])
        assert result.exit_code == 0, result.output
    synonyms = tmp_path / "synonyms.tsv"
    synonyms.write_text("pastry\tpastries\n")
    gold = tmp_path / "gold_syn.tsv"
    gold.write_text(
        "".join(
            f"{a}\t{'pastries' if d == 'pastry' else d}\n"
            for a, d in sorted(planted.data.gold_pairs)
        )
    )
    result = runner.invoke(
        main,
        [
            "evaluate", "--config", config_path, "--gold", str(gold),
            "--synonyms", str(synonyms),
        ],
    )
    assert result.exit_code == 0, result.output
    assert "relation_f1=1.000000" in result.output


def test_train_scorer_delegation(planted):
    pytest.importorskip("relscore")
    runner = CliRunner()
    config_path = write_config(planted, "cli_delegate")
    for command in ("ingest", "build-relset"):
        result = runner.invoke(main, [command, "--config", config_path])
        assert result.exit_code == 0, result.output
    result = runner.invoke(
        main,
        [
            "train-scorer", "--config", config_path,
            "--epochs", "1", "--layers", "1", "--hidden", "32", "--heads", "2",
        ],
    )
    assert result.exit_code == 0, result.output
    assert (planted.root / "cli_delegate" / "scorer.ckpt").exists()


def test_missing_artifact_guidance(planted, tmp_path):
    runner = CliRunner()
    config = {
        "corpus_path": str(planted.corpus_path),
        "seed_path": str(planted.seed_path),
        "output_dir": str(tmp_path / "fresh"),
        "scorer_backend": "heuristic",
        "min_count": 1,
    }
    path = tmp_path / "config.yaml"
    path.write_text(yaml.safe_dump(config))
    result = runner.invoke(main, ["build-relset", "--config", str(path)])
    assert result.exit_code == 3
    assert "taxoforge ingest" in result.output
