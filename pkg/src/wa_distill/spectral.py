"""Spectral extraction of a weighted automaton from a black-box scorer.

The pipeline has three stages.  A prefix-closed basis is grown by sampling
strings and inserting their prefixes and suffixes until the requested sizes
are reached.  The oracle is then queried for every prefix+suffix
concatenation (and every prefix+symbol+suffix) to fill the Hankel sub-blocks.
Finally the main block is factorised with a truncated SVD and the automaton
is assembled from the factor pseudo-inverses:

    main block  H ~ U diag(D) V^T        P = U diag(D),   S = V^T
    init weights   = suffix_border @ V                  (row through S+)
    final weights  = diag(D)^-1 U^T @ prefix_border     (P+ applied)
    transition[s]  = diag(D)^-1 U^T @ H_s @ V

Splitting the weights onto the prefix-side factor keeps S+ = V exact and
confines the diag(D)^-1 conditioning to a single place.  Singular values
below rank_tolerance times the largest are dropped rather than inverted,
which is what keeps high requested ranks from exploding the final weights.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from itertools import product

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .exceptions import BasisExhausted, DegenerateHankel, WADistillError
from .oracles import BlackBoxOracle, CachedOracle
from .wfa import EMPTY, Alphabet, SymbolString, WeightedAutomaton

SAMPLING_MODES = ("uniform", "oracle-generative", "dataset")


# ----------------------------------------------------------------------
# Basis
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class Basis:
    """Ordered prefix and suffix sets indexing a Hankel sub-block.

    The prefix set is closed under taking prefixes; the empty string is both
    a prefix and a suffix, so the block's first row and column double as the
    border vectors.
    """

    alphabet: Alphabet
    prefixes: tuple[SymbolString, ...]
    suffixes: tuple[SymbolString, ...]
    prefix_index: dict = field(init=False, repr=False, compare=False)
    suffix_index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        prefix_index = {w: i for i, w in enumerate(self.prefixes)}
        suffix_index = {w: i for i, w in enumerate(self.suffixes)}
        if len(prefix_index) != len(self.prefixes):
            raise ValueError("duplicate prefixes")
        if len(suffix_index) != len(self.suffixes):
            raise ValueError("duplicate suffixes")
        if EMPTY not in prefix_index or EMPTY not in suffix_index:
            raise ValueError("the empty string must be in both prefix and suffix sets")
        for w in self.prefixes:
            self.alphabet.validate(w)
            if w and w[:-1] not in prefix_index:
                raise ValueError(f"prefix set is not prefix-closed: missing {w[:-1]!r}")
        for w in self.suffixes:
            self.alphabet.validate(w)
        object.__setattr__(self, "prefix_index", prefix_index)
        object.__setattr__(self, "suffix_index", suffix_index)

    @property
    def num_prefixes(self) -> int:
        return len(self.prefixes)

    @property
    def num_suffixes(self) -> int:
        return len(self.suffixes)

    def dump(self) -> str:
        """Reproducibility dump: sizes header, then one string per line in
        '<len> <s1> ... <sk>' form, prefixes first."""
        lines = [f"{self.num_prefixes} {self.num_suffixes}"]
        for w in self.prefixes + self.suffixes:
            lines.append(" ".join([str(len(w))] + [str(sym) for sym in w]))
        return "\n".join(lines) + "\n"

    @classmethod
    def parse(cls, text: str, alphabet: Alphabet) -> "Basis":
        lines = [line for line in text.splitlines() if line.strip()]
        p, s = (int(tok) for tok in lines[0].split())
        strings = []
        for line in lines[1 : 1 + p + s]:
            fields = [int(tok) for tok in line.split()]
            if fields[0] != len(fields) - 1:
                raise ValueError(f"bad basis line {line!r}")
            strings.append(tuple(fields[1:]))
        return cls(alphabet, tuple(strings[:p]), tuple(strings[p:]))


def uniform_sampler(alphabet: Alphabet, max_len: int):
    """Length uniform on [0, max_len], then each symbol uniform."""
    if max_len < 0:
        raise ValueError("max_len must be >= 0")

    def draw(rng: np.random.Generator) -> SymbolString:
        length = int(rng.integers(0, max_len + 1))
        return tuple(int(sym) for sym in rng.integers(0, alphabet.size, size=length))

    return draw


def oracle_sampler(oracle: BlackBoxOracle, max_len: int):
    """Chain-sample from the oracle's next-event distribution, clamping any
    negative entries to zero before drawing."""
    if max_len < 0:
        raise ValueError("max_len must be >= 0")
    end = oracle.alphabet.size

    def draw(rng: np.random.Generator) -> SymbolString:
        out: list[int] = []
        while len(out) < max_len:
            probs = np.clip(np.asarray(oracle.next_dist(tuple(out)), dtype=float), 0.0, None)
            total = probs.sum()
            if total <= 0:
                break
            event = int(rng.choice(end + 1, p=probs / total))
            if event == end:
                break
            out.append(event)
        return tuple(out)

    return draw


def dataset_sampler(strings):
    """Uniform draw over a fixed collection of strings."""
    pool = [tuple(int(sym) for sym in w) for w in strings]
    if not pool:
        raise ValueError("dataset sampler needs at least one string")

    def draw(rng: np.random.Generator) -> SymbolString:
        return pool[int(rng.integers(0, len(pool)))]

    return draw


def generate_basis(
    sampler,
    alphabet: Alphabet,
    p: int,
    s: int,
    rng: np.random.Generator,
) -> Basis:
    """Grow a basis by sampling: every sampled string contributes all of its
    prefixes to the prefix set and all of its suffixes to the suffix set
    until the prefix target is met, then further draws contribute suffixes
    only.  Raises BasisExhausted after 10*target stale draws in either phase.
    """
    if p < 1 or s < 1:
        raise ValueError("basis size targets must be >= 1")
    prefixes: dict[SymbolString, None] = {EMPTY: None}
    suffixes: dict[SymbolString, None] = {EMPTY: None}

    stale = 0
    while len(prefixes) < p:
        if stale >= 10 * p:
            raise BasisExhausted(
                f"no new prefixes after {stale} draws ({len(prefixes)}/{p} reached)"
            )
        w = alphabet.validate(sampler(rng))
        before = len(prefixes)
        for i in range(len(w) + 1):
            prefixes.setdefault(w[:i], None)
            suffixes.setdefault(w[i:], None)
        stale = 0 if len(prefixes) > before else stale + 1

    stale = 0
    while len(suffixes) < s:
        if stale >= 10 * s:
            raise BasisExhausted(
                f"no new suffixes after {stale} draws ({len(suffixes)}/{s} reached)"
            )
        w = alphabet.validate(sampler(rng))
        before = len(suffixes)
        for i in range(len(w) + 1):
            suffixes.setdefault(w[i:], None)
        stale = 0 if len(suffixes) > before else stale + 1

    return Basis(alphabet, tuple(prefixes), tuple(suffixes))


def enumerated_basis(alphabet: Alphabet, max_len: int) -> Basis:
    """Exhaustive basis of every string up to max_len, in length-then-lex
    order, as both prefixes and suffixes.  Complete for any target whose
    Hankel rank is realised within that horizon."""
    strings: list[SymbolString] = []
    for length in range(max_len + 1):
        strings.extend(product(range(alphabet.size), repeat=length))
    return Basis(alphabet, tuple(strings), tuple(strings))


# ----------------------------------------------------------------------
# Hankel blocks
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class HankelBlocks:
    """Oracle scores arranged over a basis: the main prefix-by-suffix block,
    one shifted block per symbol, and the two border vectors (scores of the
    prefixes and suffixes alone, i.e. the empty-suffix column and the
    empty-prefix row of the main block)."""

    basis: Basis
    main: np.ndarray
    symbol_blocks: np.ndarray
    prefix_border: np.ndarray
    suffix_border: np.ndarray
    _svd_cache: tuple | None = field(default=None, init=False, repr=False, compare=False)

    def full_svd(self):
        if self._svd_cache is None:
            object.__setattr__(
                self, "_svd_cache", np.linalg.svd(self.main, full_matrices=False)
            )
        return self._svd_cache


def fill_hankels(oracle: BlackBoxOracle, basis: Basis) -> HankelBlocks:
    """Query the oracle for every cell of the main and per-symbol blocks.

    Scores come straight from the oracle; when it is a CachedOracle the
    overlap between cells (prefix-closure makes it large) is deduplicated.
    """
    if oracle.alphabet.size != basis.alphabet.size:
        raise ValueError(
            f"oracle alphabet size {oracle.alphabet.size} != basis alphabet "
            f"size {basis.alphabet.size}"
        )
    n = basis.alphabet.size
    p, s = basis.num_prefixes, basis.num_suffixes
    main = np.empty((p, s))
    symbol_blocks = np.empty((n, p, s))

    def query(string: SymbolString) -> float:
        try:
            return oracle.score(string)
        except WADistillError as exc:
            exc.args = (f"{exc.args[0] if exc.args else exc} [query={string!r}]",)
            raise

    for i, u in enumerate(basis.prefixes):
        for j, v in enumerate(basis.suffixes):
            main[i, j] = query(u + v)
            for sym in range(n):
                symbol_blocks[sym, i, j] = query(u + (sym,) + v)

    prefix_border = main[:, basis.suffix_index[EMPTY]].copy()
    suffix_border = main[basis.prefix_index[EMPTY], :].copy()
    for arr in (main, symbol_blocks, prefix_border, suffix_border):
        arr.flags.writeable = False
    return HankelBlocks(basis, main, symbol_blocks, prefix_border, suffix_border)


# ----------------------------------------------------------------------
# SVD truncation and automaton assembly
# ----------------------------------------------------------------------


def _truncate(u, sing, vh, rank: int, tol: float):
    if rank < 1:
        raise ValueError("rank must be >= 1")
    if sing.size == 0 or sing[0] <= 0.0:
        raise DegenerateHankel("the Hankel block is numerically zero")
    keep = min(rank, int(np.count_nonzero(sing > tol * sing[0])))
    return u[:, :keep], sing[:keep].copy(), vh[:keep, :].T.copy()


def truncated_svd(matrix, rank: int, tol: float = 1e-12):
    """Rank-truncated SVD of a matrix.

    Returns (U, D, V) with at most ``rank`` columns; singular values below
    ``tol`` times the largest are dropped, so the returned rank may be
    smaller than requested.  A numerically zero matrix raises
    DegenerateHankel.
    """
    u, sing, vh = np.linalg.svd(np.asarray(matrix, dtype=float), full_matrices=False)
    return _truncate(u, sing, vh, rank, tol)


def _assemble(blocks: HankelBlocks, u, sing, v) -> WeightedAutomaton:
    dinv = 1.0 / sing
    init = blocks.suffix_border @ v
    final = dinv * (u.T @ blocks.prefix_border)
    n = blocks.basis.alphabet.size
    transitions = np.empty((n, sing.size, sing.size))
    for sym in range(n):
        transitions[sym] = dinv[:, None] * (u.T @ blocks.symbol_blocks[sym] @ v)
    return WeightedAutomaton(blocks.basis.alphabet, init, final, transitions)


def spectral_extraction(
    blocks: HankelBlocks, rank: int, tol: float = 1e-12
) -> WeightedAutomaton:
    """Assemble an automaton from filled Hankel blocks at the given rank.

    The returned automaton has as many states as singular values survived
    truncation (its effective rank)."""
    u, sing, vh = blocks.full_svd()
    u, sing, v = _truncate(u, sing, vh, rank, tol)
    return _assemble(blocks, u, sing, v)


# ----------------------------------------------------------------------
# End-to-end extraction
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class ExtractionConfig:
    p: int
    s: int
    rank: int
    max_len: int
    sampling: str = "uniform"
    seed: int = 0
    rank_tolerance: float = 1e-12
    dataset: tuple[SymbolString, ...] | None = None

    def __post_init__(self):
        if self.p < 1 or self.s < 1:
            raise ValueError("p and s must be >= 1")
        if self.rank < 1:
            raise ValueError("rank must be >= 1")
        if self.max_len < 0:
            raise ValueError("max_len must be >= 0")
        if self.sampling not in SAMPLING_MODES:
            raise ValueError(f"sampling must be one of {SAMPLING_MODES}")
        if self.sampling == "dataset" and not self.dataset:
            raise ValueError("dataset sampling requires a dataset")


@dataclass(frozen=True)
class ExtractionReport:
    """Run provenance.  Wall time is kept for diagnostics but excluded from
    the canonical serialisation so identical seeds give identical documents."""

    seed: int
    p: int
    s: int
    rank: int
    max_len: int
    sampling: str
    rank_tolerance: float
    num_prefixes: int
    num_suffixes: int
    effective_rank: int
    query_count: int
    singular_values: tuple[float, ...]
    wall_time_s: float = 0.0
    basis: Basis | None = field(default=None, repr=False, compare=False)

    def to_text(self, include_timing: bool = False) -> str:
        lines = [
            f"seed {self.seed}",
            f"p {self.p}",
            f"s {self.s}",
            f"rank {self.rank}",
            f"max_len {self.max_len}",
            f"sampling {self.sampling}",
            f"rank_tolerance {self.rank_tolerance!r}",
            f"prefixes {self.num_prefixes}",
            f"suffixes {self.num_suffixes}",
            f"effective_rank {self.effective_rank}",
            f"query_count {self.query_count}",
            "singular_values " + " ".join(repr(x) for x in self.singular_values),
        ]
        if include_timing:
            lines.append(f"wall_time_s {self.wall_time_s!r}")
        return "\n".join(lines) + "\n"


def make_sampler(config: ExtractionConfig, oracle: BlackBoxOracle):
    if config.sampling == "uniform":
        return uniform_sampler(oracle.alphabet, config.max_len)
    if config.sampling == "oracle-generative":
        return oracle_sampler(oracle, config.max_len)
    return dataset_sampler(config.dataset)


def extract(
    oracle: BlackBoxOracle, config: ExtractionConfig
) -> tuple[WeightedAutomaton, ExtractionReport]:
    """Run the whole pipeline: basis, Hankel fill (memoised), extraction."""
    start = time.perf_counter()
    rng = np.random.default_rng(config.seed)
    sampler = make_sampler(config, oracle)
    basis = generate_basis(sampler, oracle.alphabet, config.p, config.s, rng)
    cache = oracle if isinstance(oracle, CachedOracle) else CachedOracle(oracle)
    misses_before = cache.misses
    blocks = fill_hankels(cache, basis)
    wa = spectral_extraction(blocks, config.rank, config.rank_tolerance)
    _, spectrum, _ = blocks.full_svd()
    report = ExtractionReport(
        seed=config.seed,
        p=config.p,
        s=config.s,
        rank=config.rank,
        max_len=config.max_len,
        sampling=config.sampling,
        rank_tolerance=config.rank_tolerance,
        num_prefixes=basis.num_prefixes,
        num_suffixes=basis.num_suffixes,
        effective_rank=wa.num_states,
        query_count=cache.misses - misses_before,
        singular_values=tuple(float(x) for x in spectrum),
        wall_time_s=time.perf_counter() - start,
        basis=basis,
    )
    return wa, report


# ----------------------------------------------------------------------
# Estimator facade
# ----------------------------------------------------------------------


class SpectralExtractor(BaseEstimator):
    """Estimator-style wrapper: ``fit`` distils the oracle into an automaton,
    ``predict`` scores symbol strings with it.

    Parameters mirror ExtractionConfig.  Fitted attributes: ``automaton_``,
    ``report_`` and ``effective_rank_``.
    """

    def __init__(
        self,
        p: int = 300,
        s: int = 300,
        rank: int = 10,
        max_len: int = 10,
        sampling: str = "uniform",
        seed: int = 0,
        rank_tolerance: float = 1e-12,
        dataset=None,
    ):
        self.p = p
        self.s = s
        self.rank = rank
        self.max_len = max_len
        self.sampling = sampling
        self.seed = seed
        self.rank_tolerance = rank_tolerance
        self.dataset = dataset

    def fit(self, oracle: BlackBoxOracle, y=None) -> "SpectralExtractor":
        config = ExtractionConfig(
            p=self.p,
            s=self.s,
            rank=self.rank,
            max_len=self.max_len,
            sampling=self.sampling,
            seed=self.seed,
            rank_tolerance=self.rank_tolerance,
            dataset=tuple(tuple(w) for w in self.dataset) if self.dataset else None,
        )
        self.automaton_, self.report_ = extract(oracle, config)
        self.effective_rank_ = self.automaton_.num_states
        return self

    def predict(self, X) -> np.ndarray:
        if not hasattr(self, "automaton_"):
            raise NotFittedError("call fit before predict")
        return np.array([self.automaton_.evaluate(w) for w in X])
