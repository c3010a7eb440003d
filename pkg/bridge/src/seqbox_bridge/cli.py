"""Entry point: serve an automaton file or a toy bigram over stdio or TCP.

    bridge --wa <file> [--tcp <port>]
    bridge --toy <dataset> [--delta 0.01] [--tcp <port>]

Stdio is the default transport.  In TCP mode the bound address is announced
on stderr (useful with --tcp 0, which picks a free port).
"""

from __future__ import annotations

import argparse
import sys

from .models import load_wa_model, toy_next_symbol_model
from .server import TcpServer, serve_stdio


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="bridge", description=__doc__.split("\n")[0])
    source = parser.add_mutually_exclusive_group(required=True)
    source.add_argument("--wa", help="automaton interchange file to serve")
    source.add_argument("--toy", help="string dataset for the toy bigram model")
    parser.add_argument("--delta", type=float, default=0.01,
                        help="toy model smoothing (default 0.01)")
    parser.add_argument("--tcp", type=int, help="serve on this TCP port instead of stdio")
    parser.add_argument("--host", default="127.0.0.1")
    args = parser.parse_args(argv)

    try:
        if args.wa:
            model = load_wa_model(args.wa)
        else:
            model = toy_next_symbol_model(args.toy, args.delta)
    except (OSError, ValueError, KeyError) as exc:
        print(f"bridge: {exc}", file=sys.stderr)
        return 2

    if args.tcp is None:
        serve_stdio(model)
        return 0
    server = TcpServer(model, args.host, args.tcp)
    print(f"bridge: listening on {server.host} {server.port}", file=sys.stderr, flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.close()
    return 0


if __name__ == "__main__":
    sys.exit(main())
