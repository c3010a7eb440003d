"""Distill weighted automata from black-box sequence scorers.

Anything that assigns real values to symbol strings can be distilled: the
extractor queries it to fill Hankel sub-blocks over a sampled basis, runs a
truncated SVD, and assembles a weighted automaton from the factors.  The
metrics module measures how faithful the result is (perplexity, KL
divergence, next-event ranking quality, top-1 error rate), and external
scorers are reached over the SEQBOX/1 line protocol.
"""

from .exceptions import (
    BasisExhausted,
    CapabilityMissing,
    DegenerateHankel,
    DegeneratePrefix,
    NormalizerUnavailable,
    OracleTransportError,
    ParseError,
    WADistillError,
)
from .wfa import EMPTY, Alphabet, SymbolString, WeightedAutomaton
from .oracles import (
    BlackBoxOracle,
    CachedOracle,
    ExternalOracle,
    NGramModel,
    NGramOracle,
    WAOracle,
    train_ngram,
)
from .spectral import (
    Basis,
    ExtractionConfig,
    ExtractionReport,
    HankelBlocks,
    SpectralExtractor,
    dataset_sampler,
    enumerated_basis,
    extract,
    fill_hankels,
    generate_basis,
    oracle_sampler,
    spectral_extraction,
    truncated_svd,
    uniform_sampler,
)
from .metrics import (
    CLAMP_EPSILON,
    EvalSet,
    MetricsReport,
    build_eval_sets,
    clamp_probability,
    compute_report,
    kl_divergence,
    ndcg,
    normalized,
    perplexity,
    perplexity_ratio,
    ranking_metrics,
    wer,
)
from .data_io import (
    SolutionTable,
    StringDataset,
    format_strings,
    load_wa,
    parse_solution,
    parse_strings,
    random_stochastic_wa,
    save_wa,
)

__version__ = "0.1.0"

__all__ = [
    "Alphabet",
    "Basis",
    "BasisExhausted",
    "BlackBoxOracle",
    "CLAMP_EPSILON",
    "CachedOracle",
    "CapabilityMissing",
    "DegenerateHankel",
    "DegeneratePrefix",
    "EMPTY",
    "EvalSet",
    "ExternalOracle",
    "ExtractionConfig",
    "ExtractionReport",
    "HankelBlocks",
    "MetricsReport",
    "NGramModel",
    "NGramOracle",
    "NormalizerUnavailable",
    "OracleTransportError",
    "ParseError",
    "SolutionTable",
    "SpectralExtractor",
    "StringDataset",
    "SymbolString",
    "WADistillError",
    "WAOracle",
    "WeightedAutomaton",
    "build_eval_sets",
    "clamp_probability",
    "compute_report",
    "dataset_sampler",
    "enumerated_basis",
    "extract",
    "fill_hankels",
    "format_strings",
    "generate_basis",
    "kl_divergence",
    "load_wa",
    "ndcg",
    "normalized",
    "oracle_sampler",
    "parse_solution",
    "parse_strings",
    "perplexity",
    "perplexity_ratio",
    "random_stochastic_wa",
    "ranking_metrics",
    "save_wa",
    "spectral_extraction",
    "train_ngram",
    "truncated_svd",
    "uniform_sampler",
    "wer",
]
