"""Seed-guided topical taxonomy construction.

Give it a pre-phrased corpus and a small seed taxonomy; it transfers the
seed relation upward (root discovery) and downward (topic and subtopic
finding) with a pluggable relation scorer, and enriches every concept node
with a discriminative term cluster learned by a joint corpus/taxonomy
embedding.
"""

from .corpus import Corpus, CorpusError, CorpusIndex, RelationStatement, build_index, ingest
from .embedding import ConceptSpace, EmbeddingTable, TrainingConfig, train
from .pipeline import RunConfig, RunResult, StageError, run
from .relation import ConfidenceFilter, RelationClass, ScorerHandle
from .taxonomy import Taxonomy, TaxonomyError, load_seed

__version__ = "0.1.0"

__all__ = [
    "ConceptSpace",
    "ConfidenceFilter",
    "Corpus",
    "CorpusError",
    "CorpusIndex",
    "EmbeddingTable",
    "RelationClass",
    "RelationStatement",
    "RunConfig",
    "RunResult",
    "ScorerHandle",
    "StageError",
    "Taxonomy",
    "TaxonomyError",
    "TrainingConfig",
    "build_index",
    "ingest",
    "load_seed",
    "run",
    "train",
]
