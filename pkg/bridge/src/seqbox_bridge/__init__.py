"""Reference SEQBOX/1 bridge: expose any sequence-scoring callable to
extraction clients over stdio or TCP."""

from .models import ServedModel, load_wa_model, toy_next_symbol_model
from .server import TcpServer, greeting_line, handle_request, serve_stdio

__version__ = "0.1.0"

__all__ = [
    "ServedModel",
    "TcpServer",
    "greeting_line",
    "handle_request",
    "load_wa_model",
    "serve_stdio",
    "toy_next_symbol_model",
]
