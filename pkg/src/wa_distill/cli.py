"""Command-line front end: extraction, evaluation, parameter sweeps, sampling
and DOT export.

Oracle specs select where scores come from:
    wa:<path>               automaton interchange file, scored in process
    ngram:<path>:<n>:<d>    order-n model with add-d smoothing trained on a
                            string dataset file
    proc:<command>          SEQBOX/1 server spawned as a child process
    tcp:<host>:<port>       SEQBOX/1 server over TCP

Eval specs select the evaluation strings:
    file:<path>             string dataset file
    sample:<n>[:<max_len>]  n strings sampled from the reference oracle

Exit codes: 0 success, 2 I/O or transport trouble, 64 usage, 70 numeric or
capability failure.  WA_DISTILL_SEED provides the default seed.
"""

from __future__ import annotations

import argparse
import csv
import os
import shlex
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import data_io, metrics, spectral
from .exceptions import (
    CapabilityMissing,
    OracleTransportError,
    ParseError,
    WADistillError,
)
from .oracles import BlackBoxOracle, CachedOracle, ExternalOracle, NGramOracle, WAOracle, train_ngram
from .spectral import (
    ExtractionConfig,
    extract,
    fill_hankels,
    generate_basis,
    make_sampler,
    oracle_sampler,
    spectral_extraction,
)

EXIT_OK = 0
EXIT_IO = 2
EXIT_USAGE = 64
EXIT_NUMERIC = 70


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _default_seed() -> int:
    raw = os.environ.get("WA_DISTILL_SEED")
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise _UsageError(f"WA_DISTILL_SEED must be an integer, got {raw!r}") from None


def resolve_oracle(spec: str, timeout: float = 30.0) -> BlackBoxOracle:
    kind, _, rest = spec.partition(":")
    if kind == "wa" and rest:
        with open(rest, encoding="utf-8") as f:
            return WAOracle(data_io.load_wa(f.read()))
    if kind == "ngram":
        fields = rest.rsplit(":", 2)
        if len(fields) != 3:
            raise _UsageError(f"ngram spec must be ngram:<path>:<n>:<delta>, got {spec!r}")
        path, order, delta = fields
        with open(path, encoding="utf-8") as f:
            dataset = data_io.parse_strings(f.read(), path)
        return NGramOracle(
            train_ngram(dataset.strings, int(order), float(delta), dataset.alphabet)
        )
    if kind == "proc" and rest:
        return ExternalOracle.spawn(shlex.split(rest), timeout=timeout)
    if kind == "tcp":
        host, _, port = rest.rpartition(":")
        if not host or not port.isdigit():
            raise _UsageError(f"tcp spec must be tcp:<host>:<port>, got {spec!r}")
        return ExternalOracle.connect(host, int(port), timeout=timeout)
    raise _UsageError(f"unknown oracle spec {spec!r}")


def _resolve_eval_strings(spec: str, ref: BlackBoxOracle, seed: int, max_len: int):
    kind, _, rest = spec.partition(":")
    if kind == "file" and rest:
        with open(rest, encoding="utf-8") as f:
            dataset = data_io.parse_strings(f.read(), rest)
        return dataset.strings, "S_test"
    if kind == "sample" and rest:
        fields = rest.split(":")
        count = int(fields[0])
        cap = int(fields[1]) if len(fields) > 1 else max_len
        if count < 1:
            raise _UsageError("sample eval spec needs a positive count")
        rng = np.random.default_rng(seed)
        caps = ref.capabilities
        if "sample" in caps:
            draw = lambda: ref.sample(rng, cap)  # noqa: E731
        elif "dist" in caps:
            # External oracles have no sampling on the wire; chain-sample via
            # their next-event distribution instead.
            chain = oracle_sampler(ref, cap)
            draw = lambda: chain(rng)  # noqa: E731
        else:
            raise CapabilityMissing(
                "sampled eval sets need the sample or dist capability on the reference"
            )
        return tuple(draw() for _ in range(count)), "S_RNN"
    raise _UsageError(f"unknown eval spec {spec!r}")


def _write(path: str, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(text)


# ----------------------------------------------------------------------
# Subcommands
# ----------------------------------------------------------------------


def cmd_extract(args) -> int:
    if args.rank < 1:
        raise _UsageError("--rank must be >= 1")
    if args.p < 1 or args.s < 1:
        raise _UsageError("--p and --s must be >= 1")
    if args.max_len < 0:
        raise _UsageError("--max-len must be >= 0")
    dataset = None
    if args.dataset:
        with open(args.dataset, encoding="utf-8") as f:
            dataset = data_io.parse_strings(f.read(), args.dataset).strings
    if args.sampling == "dataset" and dataset is None:
        raise _UsageError("--sampling dataset requires --dataset")
    oracle = resolve_oracle(args.oracle, args.timeout)
    config = ExtractionConfig(
        p=args.p,
        s=args.s,
        rank=args.rank,
        max_len=args.max_len,
        sampling=args.sampling,
        seed=args.seed,
        rank_tolerance=args.rank_tol,
        dataset=dataset,
    )
    wa, report = extract(oracle, config)
    _write(args.out, data_io.save_wa(wa))
    if args.basis_out:
        _write(args.basis_out, report.basis.dump())
    text = report.to_text()
    if args.report:
        _write(args.report, text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _metrics_for(args, ref, cand, eval_set, provenance) -> metrics.MetricsReport:
    baseline = resolve_oracle(args.baseline, args.timeout) if args.baseline else None
    return metrics.compute_report(
        ref,
        cand,
        eval_set,
        baseline=baseline,
        ranking=not args.skip_ranking,
        provenance=provenance,
    )


def _append_csv(path: str, rows: list[list[str]], header) -> None:
    fresh = not os.path.exists(path) or os.path.getsize(path) == 0
    with open(path, "a", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        if fresh:
            writer.writerow(header)
        writer.writerows(rows)


def cmd_evaluate(args) -> int:
    solution = None
    ref_spec = args.ref
    if ref_spec.startswith("solution:"):
        with open(ref_spec.partition(":")[2], encoding="utf-8") as f:
            solution = data_io.parse_solution(f.read())
        ref = None
    else:
        ref = resolve_oracle(ref_spec, args.timeout)
    cand = resolve_oracle(args.cand, args.timeout)
    if ref is None and args.eval.startswith("sample:"):
        raise _UsageError("sampled eval sets need an oracle reference, not a solution file")
    strings, role = _resolve_eval_strings(
        args.eval, ref if ref is not None else cand, args.seed, args.max_len
    )
    ref_probs = None
    if solution is not None:
        if len(solution.probabilities) != len(strings):
            raise _UsageError(
                f"solution has {len(solution.probabilities)} entries for "
                f"{len(strings)} eval strings"
            )
        ref_probs = solution.probabilities
    eval_set = metrics.EvalSet(tuple(strings), role, ref_probs)
    provenance = {
        "problem": args.problem or args.cand,
        "seed": args.seed,
        "p": args.p or "",
        "s": args.s or "",
        "rank": args.rank or "",
        "eff_rank": "",
    }
    report = _metrics_for(args, ref, cand, eval_set, provenance)
    sys.stdout.write(report.to_text())
    if args.audit_zeros:
        raw = [cand.score(w) for w in eval_set.strings]
        brute = sum(1 for x in raw if x <= 0)
        sys.stdout.write(f"audit_zeros {brute} of {len(raw)}\n")
    if args.csv:
        _append_csv(args.csv, [report.csv_row()], metrics.CSV_COLUMNS)
    return EXIT_OK


def _parse_sizes(text: str) -> list[tuple[int, int]]:
    sizes = []
    for token in text.split(","):
        p, _, s = token.strip().partition("x")
        if not p.isdigit() or not s.isdigit():
            raise _UsageError(f"basis size must look like 300x300, got {token!r}")
        sizes.append((int(p), int(s)))
    if not sizes:
        raise _UsageError("need at least one basis size")
    return sizes


def _parse_ints(text: str, what: str) -> list[int]:
    values: list[int] = []
    for token in text.split(","):
        token = token.strip()
        if "-" in token[1:]:
            lo, _, hi = token.partition("-")
            values.extend(range(int(lo), int(hi) + 1))
        elif token:
            values.append(int(token))
    if not values:
        raise _UsageError(f"need at least one {what}")
    return values


def cmd_sweep(args) -> int:
    sizes = _parse_sizes(args.basis_sizes)
    ranks = _parse_ints(args.ranks, "rank")
    seeds = _parse_ints(args.seeds, "seed")
    if any(r < 1 for r in ranks):
        raise _UsageError("ranks must be >= 1")

    ref = resolve_oracle(args.oracle, args.timeout)
    strings, role = _resolve_eval_strings(args.eval, ref, args.eval_seed, args.max_len)
    ref_scores = np.array([ref.score(w) for w in strings])
    eval_set = metrics.EvalSet(
        tuple(strings), role, tuple(float(x) for x in metrics.normalized(ref_scores))
    )
    problem = args.problem or args.oracle

    def run_group(p: int, s: int, seed: int) -> list[list[str]]:
        # One basis and one Hankel fill per (p, s, seed); every rank reuses them.
        oracle = resolve_oracle(args.oracle, args.timeout)
        rows = []
        try:
            try:
                rng = np.random.default_rng(seed)
                config = ExtractionConfig(
                    p=p, s=s, rank=max(ranks), max_len=args.max_len,
                    sampling=args.sampling, seed=seed, rank_tolerance=args.rank_tol,
                )
                sampler = make_sampler(config, oracle)
                basis = generate_basis(sampler, oracle.alphabet, p, s, rng)
                blocks = fill_hankels(CachedOracle(oracle), basis)
            except (WADistillError, ValueError, OSError) as exc:
                failure = _error_cell(problem, p, s, seed, exc)
                return [failure(rank) for rank in ranks]
            for rank in ranks:
                try:
                    wa = spectral_extraction(blocks, rank, args.rank_tol)
                    provenance = {
                        "problem": problem, "seed": seed, "p": p, "s": s,
                        "rank": rank, "eff_rank": wa.num_states,
                    }
                    report = _metrics_for(args, ref, WAOracle(wa), eval_set, provenance)
                    rows.append(report.csv_row() + ["ok"])
                except (WADistillError, ValueError) as exc:
                    rows.append(_error_cell(problem, p, s, seed, exc)(rank))
            return rows
        finally:
            close = getattr(oracle, "close", None)
            if close is not None:
                close()

    groups = [(p, s, seed) for (p, s) in sizes for seed in seeds]
    workers = args.workers or os.cpu_count() or 1
    if workers > 1 and len(groups) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda g: run_group(*g), groups))
    else:
        results = [run_group(*g) for g in groups]

    header = list(metrics.CSV_COLUMNS) + ["status"]
    rows = [row for group_rows in results for row in group_rows]
    _append_csv(args.csv, rows, header)

    ok_rows = [row for row in rows if row[-1] == "ok"]
    sys.stdout.write(f"sweep complete: {len(rows)} cells, {len(ok_rows)} ok\n")
    for label, column in (("best ndcg5", 10), ("best perplexity ratio", 6)):
        scored = [row for row in ok_rows if row[column]]
        if scored:
            best = max(scored, key=lambda row: float(row[column]))
            sys.stdout.write(
                f"{label}: {best[column]} at p={best[1]} s={best[2]} "
                f"rank={best[3]} seed={best[12]}\n"
            )
    return EXIT_OK


def _error_cell(problem, p, s, seed, exc):
    note = f"error: {type(exc).__name__}: {exc}".replace("\n", " ")

    def row(rank: int) -> list[str]:
        return [str(problem), str(p), str(s), str(rank), "", "", "", "", "", "", "", "", str(seed), note]

    return row


def cmd_sample(args) -> int:
    if args.n < 0:
        raise _UsageError("--n must be >= 0")
    oracle = resolve_oracle(args.oracle, args.timeout)
    rng = np.random.default_rng(args.seed)
    strings = [oracle.sample(rng, args.max_len) for _ in range(args.n)]
    _write(args.out, data_io.format_strings(oracle.alphabet, strings))
    return EXIT_OK


def cmd_dot(args) -> int:
    if args.threshold < 0:
        raise _UsageError("--threshold must be >= 0")
    with open(args.wa, encoding="utf-8") as f:
        wa = data_io.load_wa(f.read())
    text = wa.to_dot(args.threshold)
    if args.out:
        _write(args.out, text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


# ----------------------------------------------------------------------
# Parser
# ----------------------------------------------------------------------


def _add_common(sub, seed_default):
    sub.add_argument("--seed", type=int, default=seed_default)
    sub.add_argument("--timeout", type=float, default=30.0)


def build_parser(seed_default: int) -> _Parser:
    parser = _Parser(prog="wa-distill", description=__doc__.split("\n\n")[0])
    commands = parser.add_subparsers(dest="command", required=True)

    ex = commands.add_parser("extract", help="distill an oracle into an automaton file")
    ex.add_argument("--oracle", required=True)
    ex.add_argument("--p", type=int, required=True)
    ex.add_argument("--s", type=int, required=True)
    ex.add_argument("--rank", type=int, required=True)
    ex.add_argument("--max-len", type=int, default=10)
    ex.add_argument("--sampling", choices=spectral.SAMPLING_MODES, default="uniform")
    ex.add_argument("--dataset")
    ex.add_argument("--rank-tol", type=float, default=1e-12)
    ex.add_argument("--out", required=True)
    ex.add_argument("--report")
    ex.add_argument("--basis-out", help="dump the sampled basis for reproducibility")
    _add_common(ex, seed_default)
    ex.set_defaults(func=cmd_extract)

    ev = commands.add_parser("evaluate", help="score a candidate against a reference")
    ev.add_argument("--ref", required=True, help="oracle spec or solution:<path>")
    ev.add_argument("--cand", required=True)
    ev.add_argument("--eval", required=True)
    ev.add_argument("--baseline")
    ev.add_argument("--max-len", type=int, default=50)
    ev.add_argument("--csv")
    ev.add_argument("--problem")
    ev.add_argument("--p", type=int)
    ev.add_argument("--s", type=int)
    ev.add_argument("--rank", type=int)
    ev.add_argument("--skip-ranking", action="store_true")
    ev.add_argument("--audit-zeros", action="store_true")
    _add_common(ev, seed_default)
    ev.set_defaults(func=cmd_evaluate)

    sw = commands.add_parser("sweep", help="extraction grid with one CSV row per cell")
    sw.add_argument("--oracle", required=True)
    sw.add_argument("--basis-sizes", required=True, help="e.g. 300x300,400x400")
    sw.add_argument("--ranks", required=True, help="e.g. 1,2,5 or 1-100")
    sw.add_argument("--seeds", required=True)
    sw.add_argument("--eval", required=True)
    sw.add_argument("--eval-seed", type=int, default=0)
    sw.add_argument("--max-len", type=int, default=10)
    sw.add_argument("--sampling", choices=spectral.SAMPLING_MODES, default="uniform")
    sw.add_argument("--rank-tol", type=float, default=1e-12)
    sw.add_argument("--csv", required=True)
    sw.add_argument("--problem")
    sw.add_argument("--baseline")
    sw.add_argument("--skip-ranking", action="store_true")
    sw.add_argument("--workers", type=int, default=0, help="0 = all cores")
    _add_common(sw, seed_default)
    sw.set_defaults(func=cmd_sweep)

    sa = commands.add_parser("sample", help="write strings sampled from an oracle")
    sa.add_argument("--oracle", required=True)
    sa.add_argument("--n", type=int, default=2000)
    sa.add_argument("--max-len", type=int, default=50)
    sa.add_argument("--out", required=True)
    _add_common(sa, seed_default)
    sa.set_defaults(func=cmd_sample)

    do = commands.add_parser("dot", help="render an automaton file to DOT")
    do.add_argument("--wa", required=True)
    do.add_argument("--threshold", type=float, default=0.05)
    do.add_argument("--out")
    _add_common(do, seed_default)
    do.set_defaults(func=cmd_dot)

    return parser


def main(argv=None) -> int:
    try:
        parser = build_parser(_default_seed())
        args = parser.parse_args(argv)
        return args.func(args)
    except _UsageError as exc:
        print(f"wa-distill: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ParseError, OracleTransportError) as exc:
        print(f"wa-distill: {exc}", file=sys.stderr)
        return EXIT_IO
    except (WADistillError, ValueError, np.linalg.LinAlgError) as exc:
        print(f"wa-distill: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
