"""Hierarchical topic trees from recursive nonnegative factorization of
hyperbolic-embedding-enriched document representations."""

from .corpus import (
    Corpus,
    DocTermRepresentation,
    Document,
    PreprocessConfig,
    TermFrequencyMatrix,
    Vocabulary,
    build_document_representation,
    build_tf,
    compute_idf,
    preprocess,
)
from .hierarchy import (
    TopicNode,
    TopicTree,
    TrainConfig,
    assign_documents,
    build_hierarchy,
    next_level_representation,
    parent_child_reweight,
    top_words,
)
from .hypspace import (
    EmbeddingTable,
    Neighborhood,
    TermHierarchyMatrix,
    TermSimilarityMatrix,
    build_hierarchy_matrix,
    build_similarity_matrix,
    euclidean_cosine,
    knn,
    load_embeddings,
    neighborhood_similarity,
    poincare_distance,
)
from .metrics import (
    CooccurrenceStats,
    EvalReport,
    build_stats,
    coherence,
    evaluate,
    hierarchical_affinity,
    hierarchical_coherence,
    pmi,
    topic_specialization,
)
from .nmf import FactorPair, NmfConfig, factorize, reconstruction_error

__version__ = "0.1.0"

__all__ = [
    "Corpus",
    "CooccurrenceStats",
    "DocTermRepresentation",
    "Document",
    "EmbeddingTable",
    "EvalReport",
    "FactorPair",
    "Neighborhood",
    "NmfConfig",
    "PreprocessConfig",
    "TermFrequencyMatrix",
    "TermHierarchyMatrix",
    "TermSimilarityMatrix",
    "TopicNode",
    "TopicTree",
    "TrainConfig",
    "Vocabulary",
    "assign_documents",
    "build_document_representation",
    "build_hierarchy",
    "build_hierarchy_matrix",
    "build_similarity_matrix",
    "build_stats",
    "build_tf",
    "coherence",
    "compute_idf",
    "euclidean_cosine",
    "evaluate",
    "factorize",
    "hierarchical_affinity",
    "hierarchical_coherence",
    "knn",
    "load_embeddings",
    "neighborhood_similarity",
    "next_level_representation",
    "parent_child_reweight",
    "pmi",
    "poincare_distance",
    "preprocess",
    "reconstruction_error",
    "top_words",
    "topic_specialization",
]
