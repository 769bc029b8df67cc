import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

import synthdata  # noqa: E402
from taxoforge.embedding import TrainingConfig  # noqa: E402
from taxoforge.pipeline import RunConfig  # noqa: E402


class PlantedFixture:
    def __init__(self, root: Path):
        self.data = synthdata.generate(0)
        self.root = root
        self.corpus_path = root / "corpus.txt"
        self.seed_path = root / "seed.json"
        self.oracle_path = root / "oracle.tsv"
        self.gold_path = root / "gold.tsv"
        self.corpus_path.write_text(self.data.text)
        self.seed_path.write_text(self.data.seed_json)
        self.oracle_path.write_text(self.data.oracle_lines)
        self.gold_path.write_text(
            "".join(f"{a}\t{d}\n" for a, d in sorted(self.data.gold_pairs))
        )

    def config(self, backend: str, out: str, seed: int = 13) -> RunConfig:
        address = str(self.oracle_path) if backend == "oracle" else None
        return RunConfig(
            corpus_path=str(self.corpus_path),
            seed_path=str(self.seed_path),
            output_dir=str(self.root / out),
            scorer_backend=backend,
            scorer_address=address,
            min_count=1,
            seed=seed,
            embedding=TrainingConfig(dim=32, epochs=60, growth_warmup=50, seed=seed),
        )


@pytest.fixture(scope="session")
def planted(tmp_path_factory) -> PlantedFixture:
    return PlantedFixture(tmp_path_factory.mktemp("planted"))


@pytest.fixture(scope="session")
def oracle_run(planted):
    """One timed full-pipeline run on the planted corpus, shared by tests."""
    import time

    from taxoforge.pipeline import run

    started = time.monotonic()
    result = run(planted.config("oracle", "out_oracle_shared"))
    elapsed = time.monotonic() - started
    return result, elapsed
