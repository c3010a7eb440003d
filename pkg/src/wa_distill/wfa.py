"""Weighted automata as linear representations.

An automaton with ``r`` states over an alphabet of ``n`` symbols is a triple
of initial weights (length-r vector), one r x r transition matrix per symbol,
and final weights (length-r vector).  The weight of a string is the initial
vector pushed through the transition matrix of each symbol in turn, then
contracted against the final weights.  Entries may be negative: weighted
automata are strictly more expressive than probabilistic ones, and extracted
automata routinely carry small negative leakage.

Instances are immutable after construction and safe to share across threads.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import DegeneratePrefix, NormalizerUnavailable

SymbolString = tuple[int, ...]

EMPTY: SymbolString = ()

# Relative-determinant floor below which Id - sum(M) is treated as singular.
SINGULARITY_TOL = 1e-12


@dataclass(frozen=True)
class Alphabet:
    """Symbol inventory.  Symbols are the integer indices 0..size-1; optional
    display names are used only for rendering."""

    size: int
    names: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.size < 1:
            raise ValueError(f"alphabet size must be >= 1, got {self.size}")
        if self.names is not None:
            names = tuple(self.names)
            object.__setattr__(self, "names", names)
            if len(names) != self.size:
                raise ValueError(
                    f"got {len(names)} symbol names for alphabet of size {self.size}"
                )
            if len(set(names)) != len(names):
                raise ValueError("symbol names must be unique")

    def label(self, symbol: int) -> str:
        return self.names[symbol] if self.names is not None else str(symbol)

    def validate(self, string) -> SymbolString:
        """Coerce to a tuple of ints and check every index is in range."""
        w = tuple(int(sym) for sym in string)
        for sym in w:
            if not 0 <= sym < self.size:
                raise ValueError(
                    f"symbol {sym} out of range for alphabet of size {self.size}"
                )
        return w


class WeightedAutomaton:
    """Linear-representation weighted automaton."""

    def __init__(self, alphabet: Alphabet, init_weights, final_weights, transitions):
        init = np.array(init_weights, dtype=float)
        final = np.array(final_weights, dtype=float)
        trans = np.array(transitions, dtype=float)
        if init.ndim != 1 or init.size < 1:
            raise ValueError("init_weights must be a nonempty vector")
        r = init.shape[0]
        if final.shape != (r,):
            raise ValueError(f"final_weights must have shape ({r},), got {final.shape}")
        if trans.shape != (alphabet.size, r, r):
            raise ValueError(
                f"transitions must have shape ({alphabet.size}, {r}, {r}), got {trans.shape}"
            )
        for arr in (init, final, trans):
            if not np.all(np.isfinite(arr)):
                raise ValueError("automaton weights must all be finite")
            arr.flags.writeable = False
        self.alphabet = alphabet
        self.init_weights = init
        self.final_weights = final
        self.transitions = trans
        self._normalizer: np.ndarray | None = None
        self._kernel: np.ndarray | None = None

    @property
    def num_states(self) -> int:
        return self.init_weights.shape[0]

    def __repr__(self):
        return (
            f"WeightedAutomaton(num_states={self.num_states}, "
            f"alphabet_size={self.alphabet.size})"
        )

    # ------------------------------------------------------------------
    # String weights
    # ------------------------------------------------------------------

    def state_vector(self, string) -> np.ndarray:
        """Row state vector after consuming ``string``; the empty product is
        the initial vector itself."""
        w = self.alphabet.validate(string)
        state = self.init_weights
        for sym in w:
            state = state @ self.transitions[sym]
        return np.array(state)

    def evaluate(self, string) -> float:
        """Weight assigned to ``string``.  May be negative."""
        return float(self.state_vector(string) @ self.final_weights)

    # ------------------------------------------------------------------
    # Stochastic-automaton machinery
    # ------------------------------------------------------------------

    def normalizer(self, fallback_horizon: int | None = None) -> np.ndarray:
        """Per-state total mass of all strings generated from that state.

        Solves (Id - sum of transition matrices) x = final_weights.  For a
        stochastic automaton the result is the all-ones vector.  When the
        system is singular this raises NormalizerUnavailable unless
        ``fallback_horizon`` is given, in which case the geometric series is
        summed up to that horizon instead (diagnostics only; the series may
        diverge).
        """
        if self._normalizer is not None:
            return self._normalizer
        summed = self.transitions.sum(axis=0)
        system = np.eye(self.num_states) - summed
        row_norms = np.linalg.norm(system, axis=1)
        scale = float(np.prod(row_norms))
        det = float(np.linalg.det(system)) if scale > 0 else 0.0
        if scale <= 0 or abs(det) <= SINGULARITY_TOL * scale:
            if fallback_horizon is None:
                raise NormalizerUnavailable(
                    "Id - sum(transitions) is numerically singular; "
                    "total string mass is not computable by inversion"
                )
            acc = np.array(self.final_weights)
            term = self.final_weights
            for _ in range(fallback_horizon):
                term = summed @ term
                acc += term
            return acc
        result = np.linalg.solve(system, self.final_weights)
        result.flags.writeable = False
        self._normalizer = result
        return result

    def _next_kernel(self) -> np.ndarray:
        # Columns: one per symbol (transition matrix times normalizer), then
        # the final weights.  state @ kernel gives all next-step masses at once.
        if self._kernel is None:
            norm = self.normalizer()
            cols = [self.transitions[sym] @ norm for sym in range(self.alphabet.size)]
            cols.append(self.final_weights)
            kernel = np.column_stack(cols)
            kernel.flags.writeable = False
            self._kernel = kernel
        return self._kernel

    def next_symbol_scores(self, string) -> np.ndarray:
        """Unnormalised next-event masses after ``string``: one entry per
        symbol plus the end-of-string mass last.  Useful for ranking even when
        the prefix mass is degenerate."""
        return self.state_vector(string) @ self._next_kernel()

    def next_symbol_distribution(self, string) -> np.ndarray:
        """Conditional next-event distribution after ``string``; the last
        entry is the end-of-string probability.

        The raw next-step masses are divided by the prefix continuation mass,
        so entries sum to one on stochastic automata.
        """
        state = self.state_vector(string)
        mass = float(state @ self.normalizer())
        if mass <= 0.0:
            raise DegeneratePrefix(
                f"prefix {tuple(string)!r} has continuation mass {mass}"
            )
        return (state @ self._next_kernel()) / mass

    def sample_string(self, rng: np.random.Generator, max_len: int) -> SymbolString:
        """Draw a string by walking the conditional next-event distribution
        until the end event fires or ``max_len`` symbols were emitted.

        Negative conditional entries are clamped to zero and the rest
        renormalised before drawing, so mildly leaky extracted automata can
        still be sampled.  Deterministic given the generator state.
        """
        if max_len < 0:
            raise ValueError("max_len must be >= 0")
        kernel = self._next_kernel()
        norm = self.normalizer()
        end = self.alphabet.size
        state = self.init_weights
        out: list[int] = []
        while len(out) < max_len:
            mass = float(state @ norm)
            if mass <= 0.0:
                raise DegeneratePrefix(
                    f"prefix {tuple(out)!r} has continuation mass {mass}"
                )
            probs = np.clip(state @ kernel, 0.0, None)
            total = probs.sum()
            if total <= 0.0:
                raise DegeneratePrefix(
                    f"prefix {tuple(out)!r} has no nonnegative continuation"
                )
            event = int(rng.choice(end + 1, p=probs / total))
            if event == end:
                break
            out.append(event)
            state = state @ self.transitions[event]
        return tuple(out)

    # ------------------------------------------------------------------
    # Rendering
    # ------------------------------------------------------------------

    def to_dot(self, weight_threshold: float = 0.0) -> str:
        """DOT digraph of the automaton.

        Each state node is annotated "initial > final" weight; each nonzero
        transition with absolute weight at or above the threshold becomes an
        edge labelled "symbol:weight".  Weights are printed with 5 significant
        digits.
        """
        if weight_threshold < 0:
            raise ValueError("weight_threshold must be >= 0")
        lines = ["digraph wa {", "  rankdir=LR;", "  node [shape=circle];"]
        for q in range(self.num_states):
            label = f"q{q}\\n{_fmt(self.init_weights[q])} > {_fmt(self.final_weights[q])}"
            lines.append(f'  q{q} [label="{label}"];')
        for sym in range(self.alphabet.size):
            matrix = self.transitions[sym]
            name = self.alphabet.label(sym)
            for src in range(self.num_states):
                for dst in range(self.num_states):
                    weight = matrix[src, dst]
                    if weight != 0.0 and abs(weight) >= weight_threshold:
                        lines.append(
                            f'  q{src} -> q{dst} [label="{name}:{_fmt(weight)}"];'
                        )
        lines.append("}")
        return "\n".join(lines) + "\n"


def _fmt(x: float) -> str:
    return format(float(x), ".5g")
