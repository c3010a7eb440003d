"""Text formats: string datasets, solution tables, the automaton interchange
file, and the random stochastic-automaton generator used as ground truth in
tests and examples.

String dataset grammar (one dataset per file):
    <count> <alphabet_size>
    <len> <s1> ... <s_len>        one line per string, len 0 encodes the
                                  empty string
Solution grammar:
    <count>
    <probability>                 one positive decimal per line

Automaton interchange files are a single JSON document with fields
``alphabet_size``, ``num_states``, ``alpha0``, ``alpha_inf`` and ``matrices``
(one row-major r*r list per symbol); reals use shortest round-trip decimals,
so load(save(wa)) reproduces weights bit for bit.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .exceptions import ParseError
from .wfa import Alphabet, SymbolString, WeightedAutomaton


@dataclass(frozen=True)
class StringDataset:
    alphabet: Alphabet
    strings: tuple[SymbolString, ...]
    source: str = "<memory>"

    def __post_init__(self):
        for w in self.strings:
            self.alphabet.validate(w)


@dataclass(frozen=True)
class SolutionTable:
    probabilities: tuple[float, ...]

    def __post_init__(self):
        if not self.probabilities:
            raise ValueError("empty solution")
        for p in self.probabilities:
            if not p > 0:
                raise ValueError(f"solution probabilities must be > 0, got {p}")


def _int_fields(line: str, line_no: int) -> list[int]:
    try:
        return [int(tok) for tok in line.split()]
    except ValueError:
        raise ParseError(f"expected integers, got {line!r}", line_no) from None


def parse_strings(text: str, source: str = "<string>") -> StringDataset:
    lines = text.splitlines()
    if not lines or not lines[0].strip():
        raise ParseError("missing header", 1)
    header = _int_fields(lines[0], 1)
    if len(header) != 2:
        raise ParseError(f"header must be '<count> <alphabet_size>', got {lines[0]!r}", 1)
    count, alphabet_size = header
    if count < 0 or alphabet_size < 1:
        raise ParseError(f"bad header values {count} {alphabet_size}", 1)
    alphabet = Alphabet(alphabet_size)
    strings: list[SymbolString] = []
    for i in range(count):
        line_no = i + 2
        if i + 1 >= len(lines):
            raise ParseError(f"expected {count} strings, file ends after {i}", line_no)
        fields = _int_fields(lines[i + 1], line_no)
        if not fields:
            raise ParseError("empty string line", line_no)
        length, symbols = fields[0], fields[1:]
        if length != len(symbols):
            raise ParseError(
                f"declared length {length} but found {len(symbols)} symbols", line_no
            )
        for sym in symbols:
            if not 0 <= sym < alphabet_size:
                raise ParseError(
                    f"symbol {sym} out of range for alphabet of size {alphabet_size}",
                    line_no,
                )
        strings.append(tuple(symbols))
    for extra, line in enumerate(lines[count + 1 :], start=count + 2):
        if line.strip():
            raise ParseError(f"unexpected trailing content {line!r}", extra)
    return StringDataset(alphabet, tuple(strings), source)


def format_strings(alphabet: Alphabet, strings) -> str:
    """Serialise strings in the dataset grammar (inverse of parse_strings)."""
    lines = [f"{len(strings)} {alphabet.size}"]
    for w in strings:
        w = alphabet.validate(w)
        lines.append(" ".join([str(len(w))] + [str(sym) for sym in w]))
    return "\n".join(lines) + "\n"


def parse_solution(text: str) -> SolutionTable:
    lines = text.splitlines()
    if not lines or not lines[0].strip():
        raise ParseError("missing header", 1)
    try:
        count = int(lines[0])
    except ValueError:
        raise ParseError(f"header must be a count, got {lines[0]!r}", 1) from None
    if count < 1:
        raise ParseError("empty solution", 1)
    values: list[float] = []
    for i in range(count):
        line_no = i + 2
        if i + 1 >= len(lines):
            raise ParseError(f"expected {count} values, file ends after {i}", line_no)
        try:
            value = float(lines[i + 1])
        except ValueError:
            raise ParseError(f"expected a decimal, got {lines[i + 1]!r}", line_no) from None
        if not value > 0:
            raise ParseError(f"nonpositive probability {value}", line_no)
        values.append(value)
    for extra, line in enumerate(lines[count + 1 :], start=count + 2):
        if line.strip():
            raise ParseError(f"unexpected trailing content {line!r}", extra)
    return SolutionTable(tuple(values))


# ----------------------------------------------------------------------
# Automaton interchange format
# ----------------------------------------------------------------------


def save_wa(wa: WeightedAutomaton) -> str:
    doc = {
        "alphabet_size": wa.alphabet.size,
        "num_states": wa.num_states,
        "alpha0": [float(x) for x in wa.init_weights],
        "alpha_inf": [float(x) for x in wa.final_weights],
        "matrices": [
            [float(x) for x in wa.transitions[sym].ravel()]
            for sym in range(wa.alphabet.size)
        ],
    }
    if wa.alphabet.names is not None:
        doc["symbols"] = list(wa.alphabet.names)
    return json.dumps(doc, indent=1) + "\n"


def load_wa(text: str) -> WeightedAutomaton:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise ParseError("document must be a JSON object")
    for key in ("alphabet_size", "num_states", "alpha0", "alpha_inf", "matrices"):
        if key not in doc:
            raise ParseError(f"missing field {key!r}")
    alphabet_size = doc["alphabet_size"]
    num_states = doc["num_states"]
    if not isinstance(alphabet_size, int) or alphabet_size < 1:
        raise ParseError(f"bad alphabet_size {alphabet_size!r}")
    if not isinstance(num_states, int) or num_states < 1:
        raise ParseError(f"bad num_states {num_states!r}")
    names = doc.get("symbols")
    try:
        alphabet = Alphabet(alphabet_size, tuple(names) if names is not None else None)
    except ValueError as exc:
        raise ParseError(str(exc)) from None
    r = num_states
    alpha0 = doc["alpha0"]
    alpha_inf = doc["alpha_inf"]
    matrices = doc["matrices"]
    if len(alpha0) != r or len(alpha_inf) != r:
        raise ParseError("alpha0/alpha_inf length must equal num_states")
    if len(matrices) != alphabet_size:
        raise ParseError(
            f"expected {alphabet_size} matrices, got {len(matrices)}"
        )
    transitions = np.empty((alphabet_size, r, r))
    for sym, flat in enumerate(matrices):
        if len(flat) != r * r:
            raise ParseError(
                f"matrix {sym} must have {r * r} row-major entries, got {len(flat)}"
            )
        transitions[sym] = np.asarray(flat, dtype=float).reshape(r, r)
    try:
        return WeightedAutomaton(alphabet, alpha0, alpha_inf, transitions)
    except ValueError as exc:
        raise ParseError(str(exc)) from None


# ----------------------------------------------------------------------
# Ground-truth generator
# ----------------------------------------------------------------------


def random_stochastic_wa(
    num_states: int,
    alphabet: Alphabet,
    rng: np.random.Generator,
    min_end_mass: float = 0.01,
) -> WeightedAutomaton:
    """Random stochastic automaton: each state draws a normalised distribution
    over the end event and every (symbol, next state) pair.

    The end mass at every state is kept at or above ``min_end_mass`` (redrawn
    a few times, then floored and the rest rescaled) so expected string length
    is finite and sampling terminates.  All mass starts on state 0.
    """
    if num_states < 1:
        raise ValueError("num_states must be >= 1")
    n = alphabet.size
    transitions = np.zeros((n, num_states, num_states))
    final = np.zeros(num_states)
    for q in range(num_states):
        dist = None
        for _ in range(64):
            draws = rng.random(1 + n * num_states)
            candidate = draws / draws.sum()
            if candidate[0] >= min_end_mass:
                dist = candidate
                break
        if dist is None:
            dist = candidate
            dist[1:] *= (1.0 - min_end_mass) / dist[1:].sum()
            dist[0] = min_end_mass
        final[q] = dist[0]
        transitions[:, q, :] = dist[1:].reshape(n, num_states)
    init = np.zeros(num_states)
    init[0] = 1.0
    return WeightedAutomaton(alphabet, init, final, transitions)
