"""Black-box scoring oracles and the SEQBOX/1 wire client.

Every oracle maps a symbol string to a real score; some additionally expose a
conditional next-event distribution and seeded sampling.  Scores must be pure
functions of the string for the oracle's lifetime, which is what makes
memoisation (CachedOracle) sound.

SEQBOX/1 protocol (newline-delimited ASCII; symbols are decimal indices):

    greeting   SEQBOX/1 <alphabet_size> <cap>[,<cap>...]   sent by the server
    request    score <k> <s1> ... <sk>     reply: one decimal float
    request    dist <k> <s1> ... <sk>      reply: alphabet_size+1 floats,
                                           end-of-string mass last
    request    quit                        no reply; connection closes
    error      ERR <message>               any request may fail this way

The same line grammar runs over a child process's stdin/stdout or over a TCP
stream.  Requests on one connection are strictly ordered.  The ``dist``
request is only issued when the greeting advertises the ``dist`` capability;
``sample`` has no wire form, so external oracles never expose it.
"""

from __future__ import annotations

import os
import select
import shlex
import socket
import subprocess
import threading
from abc import ABC, abstractmethod
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from .exceptions import CapabilityMissing, OracleTransportError
from .wfa import Alphabet, SymbolString, WeightedAutomaton

DEFAULT_TIMEOUT = 30.0


class BlackBoxOracle(ABC):
    """Contract for anything that assigns real scores to symbol strings."""

    alphabet: Alphabet

    @abstractmethod
    def score(self, string) -> float:
        """Real score of ``string``; must be finite and reproducible."""

    def next_dist(self, string) -> np.ndarray:
        raise CapabilityMissing(f"{type(self).__name__} has no next_dist")

    def sample(self, rng: np.random.Generator, max_len: int) -> SymbolString:
        raise CapabilityMissing(f"{type(self).__name__} has no sample")

    def next_scores(self, string) -> np.ndarray:
        """Next-event values usable for ranking.  Defaults to the proper
        distribution; oracles that can rank degenerate prefixes override this
        with raw unnormalised masses."""
        return self.next_dist(string)

    @property
    def capabilities(self) -> frozenset[str]:
        caps = {"score"}
        if type(self).next_dist is not BlackBoxOracle.next_dist:
            caps.add("dist")
        if type(self).sample is not BlackBoxOracle.sample:
            caps.add("sample")
        return frozenset(caps)


class WAOracle(BlackBoxOracle):
    """In-process oracle over a weighted automaton; all capabilities present."""

    def __init__(self, wa: WeightedAutomaton):
        self.wa = wa
        self.alphabet = wa.alphabet

    def score(self, string) -> float:
        return self.wa.evaluate(string)

    def next_dist(self, string) -> np.ndarray:
        return self.wa.next_symbol_distribution(string)

    def next_scores(self, string) -> np.ndarray:
        return self.wa.next_symbol_scores(string)

    def sample(self, rng, max_len) -> SymbolString:
        return self.wa.sample_string(rng, max_len)


# ----------------------------------------------------------------------
# Smoothed n-gram models: the stand-in "learned black box"
# ----------------------------------------------------------------------


@dataclass
class NGramModel:
    """Add-delta smoothed n-gram over symbols plus an end event.

    Contexts are the last order-1 symbols of the start-padded prefix (-1 is
    the start marker).  Every conditional distribution covers alphabet_size+1
    outcomes (end last) and sums to one exactly by construction.
    """

    order: int
    smoothing: float
    alphabet: Alphabet
    counts: dict = field(repr=False)

    def context_of(self, string: SymbolString) -> tuple[int, ...]:
        if self.order == 1:
            return ()
        padded = (-1,) * (self.order - 1) + tuple(string)
        return padded[-(self.order - 1):]

    def conditional(self, context: tuple[int, ...]) -> np.ndarray:
        outcomes = self.alphabet.size + 1
        observed = self.counts.get(context)
        counts = np.zeros(outcomes) if observed is None else observed
        return (counts + self.smoothing) / (counts.sum() + self.smoothing * outcomes)


def train_ngram(data, order: int, smoothing: float, alphabet: Alphabet) -> NGramModel:
    """Count (context, next event) pairs over start-padded strings, including
    the terminating end event of each string."""
    if order < 1:
        raise ValueError("order must be >= 1")
    if not smoothing > 0:
        raise ValueError("smoothing must be > 0")
    data = list(data)
    if not data:
        raise ValueError("training data is empty")
    end = alphabet.size
    counts: dict[tuple[int, ...], np.ndarray] = defaultdict(
        lambda: np.zeros(alphabet.size + 1)
    )
    model = NGramModel(order, smoothing, alphabet, counts)
    for raw in data:
        w = alphabet.validate(raw)
        seen: SymbolString = ()
        for sym in w:
            counts[model.context_of(seen)][sym] += 1
            seen = seen + (sym,)
        counts[model.context_of(seen)][end] += 1
    model.counts = dict(counts)
    return model


class NGramOracle(BlackBoxOracle):
    """Oracle over a trained n-gram: score is the chain product of smoothed
    conditionals ending with the end event, so every string gets a strictly
    positive score and total mass stays at or below one."""

    def __init__(self, model: NGramModel):
        self.model = model
        self.alphabet = model.alphabet

    def score(self, string) -> float:
        w = self.alphabet.validate(string)
        end = self.alphabet.size
        prob = 1.0
        seen: SymbolString = ()
        for sym in w:
            prob *= self.model.conditional(self.model.context_of(seen))[sym]
            seen = seen + (sym,)
        return prob * self.model.conditional(self.model.context_of(seen))[end]

    def next_dist(self, string) -> np.ndarray:
        w = self.alphabet.validate(string)
        return self.model.conditional(self.model.context_of(w))

    def sample(self, rng, max_len) -> SymbolString:
        if max_len < 0:
            raise ValueError("max_len must be >= 0")
        end = self.alphabet.size
        out: list[int] = []
        while len(out) < max_len:
            probs = self.model.conditional(self.model.context_of(tuple(out)))
            event = int(rng.choice(end + 1, p=probs / probs.sum()))
            if event == end:
                break
            out.append(event)
        return tuple(out)


# ----------------------------------------------------------------------
# Memoisation
# ----------------------------------------------------------------------


class CachedOracle(BlackBoxOracle):
    """Memoises score by exact symbol sequence; all other capabilities are
    forwarded untouched.

    Thread-safe: under races a key may be evaluated more than once, but a
    cached value is always the inner oracle's value.  Failed calls are never
    cached.
    """

    def __init__(self, inner: BlackBoxOracle):
        self.inner = inner
        self.alphabet = inner.alphabet
        self.hits = 0
        self.misses = 0
        self._values: dict[SymbolString, float] = {}
        self._lock = threading.Lock()

    def score(self, string) -> float:
        key = tuple(int(sym) for sym in string)
        with self._lock:
            if key in self._values:
                self.hits += 1
                return self._values[key]
        value = self.inner.score(key)
        with self._lock:
            self._values[key] = value
            self.misses += 1
        return value

    def next_dist(self, string) -> np.ndarray:
        return self.inner.next_dist(string)

    def next_scores(self, string) -> np.ndarray:
        return self.inner.next_scores(string)

    def sample(self, rng, max_len) -> SymbolString:
        return self.inner.sample(rng, max_len)

    @property
    def capabilities(self) -> frozenset[str]:
        return self.inner.capabilities


# ----------------------------------------------------------------------
# SEQBOX/1 client
# ----------------------------------------------------------------------


class _LineChannel:
    """Blocking line reader/writer with a timeout, shared by both transports."""

    def __init__(self, timeout: float):
        self.timeout = timeout
        self._buffer = b""

    def _recv(self) -> bytes:
        raise NotImplementedError

    def _send(self, data: bytes) -> None:
        raise NotImplementedError

    def close(self) -> None:
        raise NotImplementedError

    def send_line(self, line: str) -> None:
        try:
            self._send(line.encode("ascii") + b"\n")
        except (OSError, ValueError) as exc:
            raise OracleTransportError(f"send failed: {exc}") from exc

    def read_line(self) -> str:
        while b"\n" not in self._buffer:
            chunk = self._recv()
            if not chunk:
                raise OracleTransportError("connection closed by peer")
            self._buffer += chunk
        line, self._buffer = self._buffer.split(b"\n", 1)
        return line.decode("ascii", errors="replace").rstrip("\r")


class _ProcessChannel(_LineChannel):
    def __init__(self, command: list[str], timeout: float):
        super().__init__(timeout)
        try:
            self.proc = subprocess.Popen(
                command, stdin=subprocess.PIPE, stdout=subprocess.PIPE
            )
        except OSError as exc:
            raise OracleTransportError(f"cannot spawn {command!r}: {exc}") from exc

    def _recv(self) -> bytes:
        fd = self.proc.stdout.fileno()
        ready, _, _ = select.select([fd], [], [], self.timeout)
        if not ready:
            raise OracleTransportError(f"timeout after {self.timeout}s waiting for reply")
        return os.read(fd, 65536)

    def _send(self, data: bytes) -> None:
        self.proc.stdin.write(data)
        self.proc.stdin.flush()

    def close(self) -> None:
        for stream in (self.proc.stdin, self.proc.stdout):
            try:
                stream.close()
            except OSError:
                pass
        try:
            self.proc.wait(timeout=5)
        except subprocess.TimeoutExpired:
            self.proc.kill()
            self.proc.wait()


class _TcpChannel(_LineChannel):
    def __init__(self, host: str, port: int, timeout: float):
        super().__init__(timeout)
        try:
            self.sock = socket.create_connection((host, port), timeout=timeout)
            self.sock.settimeout(timeout)
        except OSError as exc:
            raise OracleTransportError(f"cannot connect to {host}:{port}: {exc}") from exc

    def _recv(self) -> bytes:
        try:
            return self.sock.recv(65536)
        except socket.timeout:
            raise OracleTransportError(
                f"timeout after {self.timeout}s waiting for reply"
            ) from None

    def _send(self, data: bytes) -> None:
        self.sock.sendall(data)

    def close(self) -> None:
        try:
            self.sock.close()
        except OSError:
            pass


class ExternalOracle(BlackBoxOracle):
    """SEQBOX/1 client over a child process or a TCP stream.

    One connection carries strictly ordered request/reply pairs (guarded by a
    lock); open several oracles for parallelism.  The greeting fixes the
    alphabet size and the advertised capabilities.
    """

    def __init__(
        self,
        channel: _LineChannel,
        alphabet: Alphabet | None = None,
        timeout: float = DEFAULT_TIMEOUT,
    ):
        self._channel = channel
        self._lock = threading.Lock()
        self._closed = False
        greeting = channel.read_line()
        fields = greeting.split()
        if len(fields) < 2 or fields[0] != "SEQBOX/1":
            raise OracleTransportError("bad greeting", greeting)
        try:
            size = int(fields[1])
        except ValueError:
            raise OracleTransportError("bad alphabet size in greeting", greeting) from None
        caps = set(fields[2].split(",")) if len(fields) > 2 else set()
        self._advertised = frozenset(caps | {"score"})
        if alphabet is None:
            alphabet = Alphabet(size)
        elif alphabet.size != size:
            raise OracleTransportError(
                f"server alphabet size {size} != expected {alphabet.size}", greeting
            )
        self.alphabet = alphabet

    @classmethod
    def spawn(
        cls,
        command: str | list[str],
        alphabet: Alphabet | None = None,
        timeout: float = DEFAULT_TIMEOUT,
    ) -> "ExternalOracle":
        if isinstance(command, str):
            command = shlex.split(command)
        return cls(_ProcessChannel(command, timeout), alphabet, timeout)

    @classmethod
    def connect(
        cls,
        host: str,
        port: int,
        alphabet: Alphabet | None = None,
        timeout: float = DEFAULT_TIMEOUT,
    ) -> "ExternalOracle":
        return cls(_TcpChannel(host, port, timeout), alphabet, timeout)

    @property
    def capabilities(self) -> frozenset[str]:
        # Sampling has no wire form, so it is never exposed even if advertised.
        return frozenset(self._advertised & {"score", "dist"})

    def _request(self, verb: str, string) -> str:
        w = self.alphabet.validate(string)
        request = " ".join([verb, str(len(w))] + [str(sym) for sym in w])
        with self._lock:
            self._channel.send_line(request)
            reply = self._channel.read_line()
        if reply.startswith("ERR"):
            raise OracleTransportError("server error", reply)
        return reply

    def score(self, string) -> float:
        reply = self._request("score", string)
        try:
            value = float(reply)
        except ValueError:
            raise OracleTransportError("unparseable score reply", reply) from None
        if not np.isfinite(value):
            raise OracleTransportError("non-finite score reply", reply)
        return value

    def next_dist(self, string) -> np.ndarray:
        if "dist" not in self._advertised:
            raise CapabilityMissing("server does not advertise dist")
        reply = self._request("dist", string)
        fields = reply.split()
        if len(fields) != self.alphabet.size + 1:
            raise OracleTransportError(
                f"dist reply must have {self.alphabet.size + 1} entries", reply
            )
        try:
            values = np.array([float(tok) for tok in fields])
        except ValueError:
            raise OracleTransportError("unparseable dist reply", reply) from None
        return values

    def close(self) -> None:
        if self._closed:
            return
        self._closed = True
        try:
            self._channel.send_line("quit")
        except OracleTransportError:
            pass
        self._channel.close()

    def __enter__(self) -> "ExternalOracle":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()
