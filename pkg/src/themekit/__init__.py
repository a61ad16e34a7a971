"""themekit: interactive theme discovery over embedded text corpora."""

from .embedding import HashEmbedder, HttpEmbedderClient, make_embedder
from .index import EmbedIndex, NeighborHit, cosine, theme_similarity
from .mapper import MappingResult, NesyMapper, RuleWeightModel, TrainingSet
from .partition import Partition, density_partition, kmeans_partition, rank_members
from .session import Session, SessionConfig
from .store import Assignment, ConceptSchema, ConceptSpec, CorpusStats, CorpusStore, Instance
from .themes import Theme, ThemeRegistry

__all__ = [
    "Assignment",
    "ConceptSchema",
    "ConceptSpec",
    "CorpusStats",
    "CorpusStore",
    "EmbedIndex",
    "HashEmbedder",
    "HttpEmbedderClient",
    "Instance",
    "MappingResult",
    "NeighborHit",
    "NesyMapper",
    "Partition",
    "RuleWeightModel",
    "Session",
    "SessionConfig",
    "Theme",
    "ThemeRegistry",
    "TrainingSet",
    "cosine",
    "density_partition",
    "kmeans_partition",
    "make_embedder",
    "rank_members",
    "theme_similarity",
]

__version__ = "0.1.0"
