"""SEQBOX/1 server loop.

Line grammar (newline-delimited ASCII, symbols as decimal indices):

    greeting   SEQBOX/1 <alphabet_size> <capabilities>
    score <k> <s1> ... <sk>   ->  one float
    dist <k> <s1> ... <sk>    ->  alphabet_size+1 floats, end mass last
    quit                      ->  connection closes, no reply
    anything malformed        ->  ERR <message>, connection stays open

Floats are emitted with 17 significant digits so 64-bit values survive the
round trip.  One request is handled at a time per connection; the TCP mode
runs one handler thread per connection and serialises model calls behind a
lock, so served models need not be thread-safe.
"""

from __future__ import annotations

import socket
import sys
import threading

from .models import ServedModel

_QUIT = object()


def _fmt(value: float) -> str:
    return format(float(value), ".17g")


def greeting_line(model: ServedModel) -> str:
    return f"SEQBOX/1 {model.alphabet_size} {model.capabilities}"


def handle_request(model: ServedModel, line: str):
    """Reply for one request line: a string, or the quit sentinel."""
    fields = line.split()
    if not fields:
        return "ERR empty request"
    verb = fields[0]
    if verb == "quit":
        return _QUIT
    if verb not in ("score", "dist"):
        return f"ERR unknown verb {verb!r}"
    try:
        count = int(fields[1])
        symbols = tuple(int(tok) for tok in fields[2:])
    except (IndexError, ValueError):
        return "ERR malformed request"
    if count != len(symbols):
        return f"ERR expected {count} symbols, got {len(symbols)}"
    if any(not 0 <= sym < model.alphabet_size for sym in symbols):
        return "ERR symbol out of range"
    try:
        if verb == "score":
            return _fmt(model.score(symbols))
        if model.next_dist is None:
            return "ERR dist not supported"
        values = list(model.next_dist(symbols))
        if len(values) != model.alphabet_size + 1:
            return "ERR model produced a malformed distribution"
        return " ".join(_fmt(x) for x in values)
    except Exception as exc:  # noqa: BLE001 - report and keep serving
        return f"ERR {exc}"


def serve_stdio(model: ServedModel, stdin=None, stdout=None) -> None:
    stdin = stdin if stdin is not None else sys.stdin
    stdout = stdout if stdout is not None else sys.stdout
    stdout.write(greeting_line(model) + "\n")
    stdout.flush()
    for line in stdin:
        reply = handle_request(model, line)
        if reply is _QUIT:
            return
        stdout.write(reply + "\n")
        stdout.flush()


class TcpServer:
    """One handler thread per connection; started with start(), stopped with
    close().  Binding to port 0 picks a free port (see .port)."""

    def __init__(self, model: ServedModel, host: str = "127.0.0.1", port: int = 0):
        self.model = model
        self._model_lock = threading.Lock()
        self.sock = socket.socket()
        self.sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self.sock.bind((host, port))
        self.sock.listen(16)
        self.host, self.port = self.sock.getsockname()[:2]
        self._accept_thread: threading.Thread | None = None

    def start(self) -> "TcpServer":
        self._accept_thread = threading.Thread(target=self._accept_loop, daemon=True)
        self._accept_thread.start()
        return self

    def serve_forever(self) -> None:
        self._accept_loop()

    def _accept_loop(self) -> None:
        while True:
            try:
                conn, _ = self.sock.accept()
            except OSError:
                return
            threading.Thread(target=self._handle, args=(conn,), daemon=True).start()

    def _handle(self, conn: socket.socket) -> None:
        stream = conn.makefile("rw", encoding="ascii", newline="\n")
        try:
            stream.write(greeting_line(self.model) + "\n")
            stream.flush()
            for line in stream:
                with self._model_lock:
                    reply = handle_request(self.model, line)
                if reply is _QUIT:
                    return
                stream.write(reply + "\n")
                stream.flush()
        except (OSError, ValueError):
            pass
        finally:
            conn.close()

    def close(self) -> None:
        self.sock.close()
