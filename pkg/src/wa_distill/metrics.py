"""Fidelity metrics between a reference distribution and a candidate scorer.

Distribution metrics (perplexity, KL divergence) use base-2 logarithms and
the usual competition treatment: candidate scores are clamped at a tiny
epsilon (extracted automata can go nonpositive), then both sides are
normalised over the evaluation set.  The share of strings that needed the
clamp is reported separately as zeros_pct so normalisation cannot hide
negative-weight pathology.

Ranking metrics (discounted-gain score at cutoff n, top-1 error rate)
compare next-event predictions over every prefix of every evaluation string,
the full string included (there the compared event is end-of-string).  They
only use the candidate's ordering, so raw unnormalised next-event masses are
enough on that side; prefixes with no mass under the reference are skipped
and counted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import DegeneratePrefix
from .oracles import BlackBoxOracle
from .wfa import SymbolString

CLAMP_EPSILON = 1e-30

CSV_COLUMNS = (
    "problem",
    "p",
    "s",
    "rank",
    "eff_rank",
    "perplexity",
    "ratio",
    "kld",
    "wer",
    "ndcg1",
    "ndcg5",
    "zeros_pct",
    "seed",
)


def clamp_probability(x: float, epsilon: float = CLAMP_EPSILON) -> float:
    """Nonpositive scores cannot be logged; replace them by epsilon."""
    if not epsilon > 0:
        raise ValueError("epsilon must be > 0")
    return x if x > 0 else epsilon


def _clamped(scores, epsilon: float) -> tuple[np.ndarray, int]:
    raw = np.asarray(scores, dtype=float)
    clamped = np.where(raw > 0, raw, epsilon)
    return clamped, int(np.count_nonzero(raw <= 0))


def _check_reference(ref_probs) -> np.ndarray:
    # Zero entries are legal (they contribute nothing to either sum); negative
    # ones are not a distribution.
    ref = np.asarray(ref_probs, dtype=float)
    if ref.size == 0:
        raise ValueError("evaluation set is empty")
    if np.any(ref < 0):
        raise ValueError("reference probabilities must be >= 0")
    if abs(ref.sum() - 1.0) > 1e-9:
        raise ValueError(f"reference must sum to 1, got {ref.sum()!r}")
    return ref


def normalized(scores) -> np.ndarray:
    """Scores rescaled to sum to one; the usual way to build a reference."""
    arr = np.asarray(scores, dtype=float)
    total = arr.sum()
    if not total > 0:
        raise ValueError("cannot normalise scores with nonpositive total")
    return arr / total


def perplexity(
    ref_probs, cand_scores, epsilon: float = CLAMP_EPSILON
) -> tuple[float, float]:
    """2 to the cross-entropy of the clamp-and-normalised candidate against
    the reference.  Returns (perplexity, zeros_pct)."""
    ref = _check_reference(ref_probs)
    if len(ref) != len(cand_scores):
        raise ValueError("reference and candidate must have equal length")
    clamped, n_clamped = _clamped(cand_scores, epsilon)
    cand = clamped / clamped.sum()
    cross_entropy = -float(ref @ np.log2(cand))
    return 2.0 ** cross_entropy, 100.0 * n_clamped / len(ref)


def perplexity_ratio(ref_probs, model_a_scores, model_b_scores) -> float:
    """Perplexity of model a over perplexity of model b, same reference.
    Above 1 means b is the better fit."""
    perp_a, _ = perplexity(ref_probs, model_a_scores)
    perp_b, _ = perplexity(ref_probs, model_b_scores)
    return perp_a / perp_b


def kl_divergence(ref_probs, cand_scores, epsilon: float = CLAMP_EPSILON) -> float:
    """Divergence in bits of the clamp-and-normalised candidate from the
    reference; equals log2(perplexity) minus the reference entropy."""
    ref = _check_reference(ref_probs)
    if len(ref) != len(cand_scores):
        raise ValueError("reference and candidate must have equal length")
    clamped, _ = _clamped(cand_scores, epsilon)
    cand = clamped / clamped.sum()
    mask = ref > 0
    return float(ref[mask] @ np.log2(ref[mask] / cand[mask]))


# ----------------------------------------------------------------------
# Ranking metrics over next-event predictions
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class RankingScores:
    ndcg: dict[int, float]
    wer: float
    prefixes: int
    skipped: int


def _ranking(values: np.ndarray) -> list[int]:
    # Descending by value; ties by ascending event index, which puts the end
    # event (the last index) after every symbol.
    return sorted(range(len(values)), key=lambda i: (-values[i], i))


def ranking_metrics(
    ref: BlackBoxOracle,
    cand: BlackBoxOracle,
    strings,
    ndcg_positions=(1, 5),
) -> RankingScores:
    """One pass over every prefix of every string, scoring both the
    discounted-gain ratio at each cutoff and the top-1 disagreement rate."""
    positions = tuple(ndcg_positions)
    if any(n < 1 for n in positions):
        raise ValueError("ndcg cutoffs must be >= 1")
    gains = {n: 0.0 for n in positions}
    mismatches = 0
    used = 0
    skipped = 0
    for raw in strings:
        w = tuple(int(sym) for sym in raw)
        for cut in range(len(w) + 1):
            prefix = w[:cut]
            try:
                ref_dist = np.asarray(ref.next_dist(prefix), dtype=float)
            except DegeneratePrefix:
                skipped += 1
                continue
            cand_values = np.asarray(cand.next_scores(prefix), dtype=float)
            ref_order = _ranking(ref_dist)
            cand_order = _ranking(cand_values)
            used += 1
            for n in positions:
                cutk = min(n, len(ref_dist))
                discounts = [1.0 / math.log2(k + 1) for k in range(1, cutk + 1)]
                dcg = sum(ref_dist[cand_order[k]] * discounts[k] for k in range(cutk))
                ideal = sum(ref_dist[ref_order[k]] * discounts[k] for k in range(cutk))
                gains[n] += dcg / ideal
            if cand_order[0] != ref_order[0]:
                mismatches += 1
    if used == 0:
        raise ValueError("no usable prefixes in the evaluation set")
    return RankingScores(
        ndcg={n: float(gains[n]) / used for n in positions},
        wer=mismatches / used,
        prefixes=used,
        skipped=skipped,
    )


def ndcg(ref: BlackBoxOracle, cand: BlackBoxOracle, strings, n: int) -> float:
    return ranking_metrics(ref, cand, strings, (n,)).ndcg[n]


def wer(ref: BlackBoxOracle, cand: BlackBoxOracle, strings) -> float:
    return ranking_metrics(ref, cand, strings, (1,)).wer


# ----------------------------------------------------------------------
# Evaluation sets and the aggregate report
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class EvalSet:
    strings: tuple[SymbolString, ...]
    role: str
    ref_probs: tuple[float, ...] | None = None

    def __post_init__(self):
        if not self.strings:
            raise ValueError("evaluation set is empty")
        if self.ref_probs is not None:
            if len(self.ref_probs) != len(self.strings):
                raise ValueError("one reference probability per string required")
            if any(not p > 0 for p in self.ref_probs):
                raise ValueError("reference probabilities must be > 0")


def build_eval_sets(
    oracle: BlackBoxOracle,
    test_strings,
    n_test: int = 1000,
    n_sampled: int = 2000,
    rng: np.random.Generator | None = None,
    max_len: int = 50,
) -> tuple[EvalSet, EvalSet]:
    """Fixed test slice plus a generated set sampled from the oracle
    (duplicates retained).  Requires the sampling capability."""
    test_strings = [tuple(int(sym) for sym in w) for w in test_strings]
    if not test_strings:
        raise ValueError("test_strings is empty")
    if rng is None:
        rng = np.random.default_rng(0)
    test_set = EvalSet(tuple(test_strings[:n_test]), "S_test")
    sampled = tuple(oracle.sample(rng, max_len) for _ in range(n_sampled))
    return test_set, EvalSet(sampled, "S_RNN")


@dataclass(frozen=True)
class MetricsReport:
    perplexity: float
    perplexity_ratio: float
    kld: float
    wer: float | None
    ndcg1: float | None
    ndcg5: float | None
    zeros_pct: float
    provenance: dict = field(default_factory=dict)

    def to_text(self) -> str:
        lines = [
            f"perplexity {_opt(self.perplexity)}",
            f"perplexity_ratio {_opt(self.perplexity_ratio)}",
            f"kld_bits {_opt(self.kld)}",
            f"wer {_opt(self.wer)}",
            f"ndcg1 {_opt(self.ndcg1)}",
            f"ndcg5 {_opt(self.ndcg5)}",
            f"zeros_pct {_opt(self.zeros_pct)}",
        ]
        for key in sorted(self.provenance):
            lines.append(f"{key} {self.provenance[key]}")
        return "\n".join(lines) + "\n"

    def csv_row(self) -> list[str]:
        prov = self.provenance
        return [
            str(prov.get("problem", "")),
            str(prov.get("p", "")),
            str(prov.get("s", "")),
            str(prov.get("rank", "")),
            str(prov.get("eff_rank", "")),
            _opt(self.perplexity),
            _opt(self.perplexity_ratio),
            _opt(self.kld),
            _opt(self.wer),
            _opt(self.ndcg1),
            _opt(self.ndcg5),
            _opt(self.zeros_pct),
            str(prov.get("seed", "")),
        ]


def _opt(value: float | None) -> str:
    return "" if value is None else repr(float(value))


def compute_report(
    ref: BlackBoxOracle | None,
    cand: BlackBoxOracle,
    eval_set: EvalSet,
    baseline: BlackBoxOracle | None = None,
    epsilon: float = CLAMP_EPSILON,
    ranking: bool = True,
    provenance: dict | None = None,
) -> MetricsReport:
    """Full metric battery for one candidate.

    The reference distribution comes from the eval set's attached
    probabilities or from the reference oracle's scores, normalised over the
    set.  The ratio compares the baseline model (the reference itself when
    none is given) against the candidate.  Ranking metrics need next-event
    support on both oracles and are left unset when unavailable.
    """
    strings = eval_set.strings
    if eval_set.ref_probs is not None:
        ref_scores = np.asarray(eval_set.ref_probs, dtype=float)
    elif ref is not None:
        ref_scores = np.array([ref.score(w) for w in strings])
    else:
        raise ValueError("need a reference oracle or attached probabilities")
    ref_probs = normalized(ref_scores)

    cand_scores = np.array([cand.score(w) for w in strings])
    perp, zeros_pct = perplexity(ref_probs, cand_scores, epsilon)
    base_scores = (
        ref_scores
        if baseline is None
        else np.array([baseline.score(w) for w in strings])
    )
    ratio = perplexity_ratio(ref_probs, base_scores, cand_scores)
    kld = kl_divergence(ref_probs, cand_scores, epsilon)

    prov = dict(provenance or {})
    prov.setdefault("eval_size", len(strings))
    prov.setdefault("eval_role", eval_set.role)

    wer_value = ndcg1 = ndcg5 = None
    if ranking and ref is not None:
        caps_ok = "dist" in ref.capabilities and "dist" in cand.capabilities
        if caps_ok:
            scores = ranking_metrics(ref, cand, strings, (1, 5))
            wer_value = scores.wer
            ndcg1 = scores.ndcg[1]
            ndcg5 = scores.ndcg[5]
            prov.setdefault("prefixes", scores.prefixes)
            prov.setdefault("skipped_prefixes", scores.skipped)
        else:
            prov.setdefault("ranking_unavailable", "missing next-event capability")
    return MetricsReport(
        perplexity=perp,
        perplexity_ratio=ratio,
        kld=kld,
        wer=wer_value,
        ndcg1=ndcg1,
        ndcg5=ndcg5,
        zeros_pct=zeros_pct,
        provenance=prov,
    )
