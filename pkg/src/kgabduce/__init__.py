"""Abductive reasoning over knowledge graphs.

Core pipeline: load and split a graph (:mod:`kgabduce.graph`), sample
observation/hypothesis pairs (:mod:`kgabduce.sampler`), evaluate hypotheses
(:mod:`kgabduce.executor`), serialize them to action tokens
(:mod:`kgabduce.tokenizer`), score structural similarity
(:mod:`kgabduce.smatch`), search one-hop baselines (:mod:`kgabduce.search`),
and serve Jaccard rewards (:mod:`kgabduce.env`, :mod:`kgabduce.service`).
"""

from .errors import (
    ActionParseError,
    ForeignSymbolError,
    GraphFormatError,
    InvalidHypothesisError,
    KgabduceError,
    OracleBudgetError,
    SamplingError,
    TripleParseError,
    VocabularyError,
)
from .executor import Conclusion, brute_force_conclusion, conclusion, conclusion_set, jaccard
from .graph import (
    GraphSplit,
    KnowledgeGraph,
    load_split,
    load_triples,
    planned_split_sizes,
    save_split,
    split_edges,
)
from .hypothesis import (
    EPFO_PATTERNS,
    NEGATION_PATTERNS,
    PATTERNS,
    Edge,
    Hypothesis,
    Node,
    ensure_valid,
    from_dict,
    make_pattern,
    pattern_of,
    to_dict,
    validate,
)
from .env import EnvServer, RewardRequest, RewardResponse, RewardScorer
from .sampler import PairSample, ground_type, sample_pair, sample_pairs, sample_split_datasets
from .search import one_hop_search
from .smatch import AmrView, exhaustive_smatch_score, smatch_score, to_amr_view
from .tokenizer import (
    Vocabulary,
    actions_to_hypothesis,
    build_vocabulary,
    canonicalize,
    encode_observation,
    encode_training_sequence,
    hypothesis_to_actions,
    load_vocabulary,
    save_vocabulary,
    to_canonical_json,
)

__version__ = "0.1.0"

__all__ = [
    "ActionParseError",
    "AmrView",
    "Conclusion",
    "Edge",
    "EnvServer",
    "EPFO_PATTERNS",
    "ForeignSymbolError",
    "GraphFormatError",
    "GraphSplit",
    "Hypothesis",
    "InvalidHypothesisError",
    "KgabduceError",
    "KnowledgeGraph",
    "NEGATION_PATTERNS",
    "Node",
    "OracleBudgetError",
    "PairSample",
    "PATTERNS",
    "RewardRequest",
    "RewardResponse",
    "RewardScorer",
    "SamplingError",
    "TripleParseError",
    "Vocabulary",
    "VocabularyError",
    "actions_to_hypothesis",
    "brute_force_conclusion",
    "build_vocabulary",
    "canonicalize",
    "conclusion",
    "conclusion_set",
    "encode_observation",
    "encode_training_sequence",
    "ensure_valid",
    "exhaustive_smatch_score",
    "from_dict",
    "ground_type",
    "hypothesis_to_actions",
    "jaccard",
    "load_split",
    "load_triples",
    "load_vocabulary",
    "make_pattern",
    "one_hop_search",
    "pattern_of",
    "planned_split_sizes",
    "sample_pair",
    "sample_pairs",
    "sample_split_datasets",
    "save_split",
    "save_vocabulary",
    "smatch_score",
    "split_edges",
    "to_amr_view",
    "to_canonical_json",
    "to_dict",
    "validate",
]
