"""kgeval: train knowledge graph embeddings and evaluate them beyond filtered MRR."""

__version__ = "0.1.0"

from kgeval.graph import (  # noqa: E402
    GraphError,
    KnowledgeGraph,
    SplitSpec,
    contains,
    entity_types,
    load_dataset,
    load_graph,
)
from kgeval.models import FAMILIES, ModelParams, score, score_batch_heads, score_batch_tails  # noqa: E402
from kgeval.training import TrainConfig, train  # noqa: E402

__all__ = [
    "FAMILIES",
    "GraphError",
    "KnowledgeGraph",
    "ModelParams",
    "SplitSpec",
    "TrainConfig",
    "contains",
    "entity_types",
    "load_dataset",
    "load_graph",
    "score",
    "score_batch_heads",
    "score_batch_tails",
    "train",
]
