"""Models the bridge can serve.

Two kinds ship with the reference server: weighted automata loaded from the
JSON interchange format (fields alphabet_size, num_states, alpha0, alpha_inf,
matrices), and a smoothed bigram next-symbol model fitted on a string dataset
file (header `<count> <alphabet_size>`, then `<len> <s1> ... <sk>` lines).
Anything with a score callable can be wrapped in a ServedModel directly.
"""

from __future__ import annotations

import json
from collections import defaultdict
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

Symbols = tuple[int, ...]


@dataclass(frozen=True)
class ServedModel:
    """A scoring callable plus an optional next-event distribution.

    The distribution callable, when present, must return alphabet_size + 1
    values with the end-of-string mass last.
    """

    alphabet_size: int
    score: Callable[[Symbols], float]
    next_dist: Callable[[Symbols], Sequence[float]] | None = None

    @property
    def capabilities(self) -> str:
        return "score,dist" if self.next_dist is not None else "score"


def load_wa_model(path: str) -> ServedModel:
    """Serve a weighted automaton from an interchange file.

    The next-event distribution is offered only when the termination-mass
    system is invertible; otherwise the model is score-only.
    """
    with open(path, encoding="utf-8") as f:
        doc = json.load(f)
    size = int(doc["alphabet_size"])
    states = int(doc["num_states"])
    init = np.asarray(doc["alpha0"], dtype=float)
    final = np.asarray(doc["alpha_inf"], dtype=float)
    matrices = np.asarray(
        [np.asarray(flat, dtype=float).reshape(states, states) for flat in doc["matrices"]]
    )
    if matrices.shape != (size, states, states) or init.shape != (states,):
        raise ValueError(f"inconsistent automaton dimensions in {path}")

    def state_after(symbols: Symbols) -> np.ndarray:
        state = init
        for sym in symbols:
            state = state @ matrices[sym]
        return state

    def score(symbols: Symbols) -> float:
        return float(state_after(symbols) @ final)

    system = np.eye(states) - matrices.sum(axis=0)
    next_dist = None
    if abs(np.linalg.det(system)) > 1e-12 * max(np.linalg.norm(system), 1e-300) ** states:
        normalizer = np.linalg.solve(system, final)
        kernel = np.column_stack([m @ normalizer for m in matrices] + [final])

        def next_dist(symbols: Symbols):
            state = state_after(symbols)
            mass = float(state @ normalizer)
            if mass <= 0.0:
                raise ValueError(f"prefix has no continuation mass ({mass})")
            return (state @ kernel) / mass

    return ServedModel(size, score, next_dist)


def _parse_dataset(path: str) -> tuple[int, list[Symbols]]:
    with open(path, encoding="utf-8") as f:
        lines = f.read().splitlines()
    count, size = (int(tok) for tok in lines[0].split())
    strings: list[Symbols] = []
    for line in lines[1 : count + 1]:
        fields = [int(tok) for tok in line.split()]
        if fields[0] != len(fields) - 1:
            raise ValueError(f"bad dataset line {line!r}")
        if any(not 0 <= sym < size for sym in fields[1:]):
            raise ValueError(f"symbol out of range in {line!r}")
        strings.append(tuple(fields[1:]))
    if not strings:
        raise ValueError(f"dataset {path} is empty")
    return size, strings


def toy_next_symbol_model(path: str, smoothing: float = 0.01) -> ServedModel:
    """Fit an add-delta smoothed bigram on a dataset file and serve its chain
    probabilities: score(w) is the product of the next-symbol conditionals
    along w times the final end-of-string conditional."""
    if not smoothing > 0:
        raise ValueError("smoothing must be > 0")
    size, strings = _parse_dataset(path)
    start = -1
    end = size
    counts: dict[int, np.ndarray] = defaultdict(lambda: np.zeros(size + 1))
    for w in strings:
        previous = start
        for sym in w:
            counts[previous][sym] += 1
            previous = sym
        counts[previous][end] += 1
    counts = dict(counts)
    empty = np.zeros(size + 1)

    def conditional(previous: int) -> np.ndarray:
        observed = counts.get(previous, empty)
        return (observed + smoothing) / (observed.sum() + smoothing * (size + 1))

    def next_dist(symbols: Symbols):
        return conditional(symbols[-1] if symbols else start)

    def score(symbols: Symbols) -> float:
        prob = 1.0
        previous = start
        for sym in symbols:
            prob *= conditional(previous)[sym]
            previous = sym
        return prob * conditional(previous)[end]

    return ServedModel(size, score, next_dist)
