"""Command-line front door.

Exit status: 0 on success, 1 when a join fails (or validation finds
violations), 2 on usage or input-format errors.  Data goes to files or
standard output; diagnostics go to standard error.  Files are written
atomically.
"""
from __future__ import annotations

import argparse
import os
import sys
import tempfile
from dataclasses import replace
from pathlib import Path

from . import __version__
from .engine import Simulation
from .evaluation import Scenario, compare_regimes, load_scenario, run_scenario, sweep
from .protocol import ProtocolParams, Regime, validate_tree
from .topology import TopologyError, TopologyFormatError, generate_topology, load_topology, save_topology

EXIT_OK, EXIT_FAILED, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def write_atomic(path: str | os.PathLike, text: str) -> None:
    """Write ``text`` to ``path`` through a temporary file in the same directory."""
    target = Path(path)
    fd, tmp = tempfile.mkstemp(prefix=f".{target.name}.", dir=target.parent or ".")
    try:
        with os.fdopen(fd, "w", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, target)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _emit(text: str, out: str | None) -> None:
    if out:
        write_atomic(out, text)
    else:
        sys.stdout.write(text)


def _default_format() -> str:
    return "table" if sys.stdout.isatty() else "delimited"


def _read(path: str) -> str:
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"{path}: {exc.strerror}") from None


def _located(exc: TopologyFormatError, default_path: str) -> str:
    where = exc.path or default_path
    if exc.line is not None:
        where += f":{exc.line}"
    return f"{where}: {exc.detail}"


def _params_from(args, base: ProtocolParams) -> ProtocolParams:
    changes = {}
    for name in ("type3_ttl", "type4_ttl", "type4_cap", "prune_timeout", "power_threshold"):
        value = getattr(args, name, None)
        if value is not None:
            changes[name] = value
    if getattr(args, "oeo_fallback", False):
        changes["oeo_fallback"] = True
    if getattr(args, "regime", None):
        changes["regime"] = args.regime
    try:
        return replace(base, **changes)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _load_scenario(args) -> Scenario:
    text = _read(args.scenario)
    try:
        s = load_scenario(text, Path(args.scenario).parent, args.seed)
    except TopologyFormatError as exc:
        raise UsageError(_located(exc, args.scenario)) from None
    except TopologyError as exc:
        raise UsageError(f"{args.scenario}: {exc}") from None
    return replace(s, params=_params_from(args, s.params))


# -- subcommands ---------------------------------------------------------------

def cmd_gen_topology(args) -> int:
    try:
        t = generate_topology(args.generator, args.nodes, args.splitter_fraction, args.seed,
                              args.wavelengths)
    except TopologyError as exc:
        raise UsageError(str(exc)) from None
    _emit(save_topology(t), args.out)
    return EXIT_OK


def cmd_run(args) -> int:
    s = _load_scenario(args)
    regime = args.regime or Regime.KNOWLEDGE
    run = run_scenario(s, regime)
    fmt = args.format or _default_format()
    head = ["episode", "stimulus", "node", "outcome", "reason", "cost", "ticks"]
    rows = [[str(e.episode), e.stimulus, e.node, e.outcome, e.reason or "-", str(e.cost.total), str(e.ticks)]
            for e in run.episodes]
    if fmt == "delimited":
        text = "".join("\t".join(r) + "\n" for r in [head] + rows)
    else:
        widths = [max(len(r[i]) for r in [head] + rows) for i in range(len(head))]
        text = "".join("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() + "\n" for r in [head] + rows)
        text += f"join cost: {run.join_cost.total}  prune cost: {run.prune_cost.total}  tree: {run.tree.digest()}\n"
    _emit(text, args.out)
    if args.trace:
        write_atomic(args.trace, run.simulation.trace_text())
    if args.snapshot:
        write_atomic(args.snapshot, run.simulation.snapshot())
    for e in run.failures:
        print(f"splitcast: join of {e.node} failed: {e.reason}", file=sys.stderr)
    return EXIT_FAILED if run.failures else EXIT_OK


def cmd_compare(args) -> int:
    s = _load_scenario(args)
    report = compare_regimes(s, with_oracle=args.oracle)
    _emit(report.to_text(args.format or _default_format()), args.out)
    if args.report:
        write_atomic(args.report, report.to_report())
    failed = [r for r in report.rows if r.failed]
    for r in failed:
        print(f"splitcast: row {r.name}: {r.outcome}", file=sys.stderr)
    return EXIT_FAILED if failed else EXIT_OK


def cmd_sweep(args) -> int:
    if args.trials < 1 or any(n < 2 for n in args.sizes) or args.workers < 1:
        raise UsageError("sizes must be >= 2, trials and workers positive")
    table = sweep(args.sizes, args.trials, args.seed, args.workers)
    _emit(table.to_text(args.format or _default_format()), args.out)
    return EXIT_OK


def cmd_validate(args) -> int:
    if bool(args.topology) == bool(args.scenario):
        raise UsageError("validate needs exactly one of --topology or --scenario")
    if args.topology:
        try:
            t = load_topology(_read(args.topology))
        except TopologyFormatError as exc:
            raise UsageError(_located(exc, args.topology)) from None
        except TopologyError as exc:
            raise UsageError(f"{args.topology}: {exc}") from None
        _emit(f"ok\t{len(t.nodes)} nodes\t{len(t.links)} links\t{len(t.splitters)} splitters\t"
              f"diameter {t.diameter}\n", args.out)
        return EXIT_OK
    s = _load_scenario(args)
    regime = args.regime or Regime.KNOWLEDGE
    sim = Simulation(s.topology, s.source, replace(s.params, regime=regime))
    lines, bad = [], 0
    for stimulus, nodes in (("join", s.joins), ("prune", s.prunes)):
        for node in nodes:
            if stimulus == "prune" and node not in sim.members():
                continue
            e = sim.run_episode(stimulus, node)
            rep = validate_tree(sim.tree(), sim.fabrics, s.topology)
            bad += not rep.ok
            lines.append(f"{e.episode}\t{stimulus}\t{node}\t{e.outcome}\t{'ok' if rep.ok else 'violations'}")
            lines += [f"\tviolation\t{v}" for v in rep.violations]
    _emit("\n".join(lines) + "\n", args.out)
    return EXIT_FAILED if bad else EXIT_OK


# -- parser --------------------------------------------------------------------

def _add_overrides(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("protocol overrides (default: scenario file, then topology-derived)")
    g.add_argument("--regime", choices=Regime.ALL, default=None,
                   help="splitter-location regime (default: knowledge)")
    g.add_argument("--type3-ttl", type=int, default=None, help="Type3 ttl (default: ceil(diameter/2))")
    g.add_argument("--type4-ttl", type=int, default=None, help="Type4 flood ttl (default: diameter)")
    g.add_argument("--type4-cap", type=int, default=None,
                   help="Type4 transmissions per flood (default: 2 x link count)")
    g.add_argument("--prune-timeout", type=int, default=None, help="PruneAck wait in ticks (default: 4 x diameter)")
    g.add_argument("--power-threshold", type=float, default=None,
                   help="minimum leaf power fraction, 0 disables (default: 0)")
    g.add_argument("--oeo-fallback", action="store_true",
                   help="duplicate electrically when no splitter is reachable (default: off)")
    g.add_argument("--seed", type=int, default=None, help="scenario seed (default: from the scenario file, else 0)")


def _add_format(p: argparse.ArgumentParser) -> None:
    p.add_argument("--format", choices=("table", "delimited"), default=None,
                   help="output layout (default: table on a terminal, delimited otherwise)")
    p.add_argument("-o", "--out", default=None, help="write output here instead of standard output")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="splitcast", description="Sparse-splitter optical multicast simulator.",
                                     formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    fmt = argparse.ArgumentDefaultsHelpFormatter

    p = sub.add_parser("gen-topology", help="generate a topology file", formatter_class=fmt)
    p.add_argument("--generator", choices=("ring", "grid", "random-connected"), default="random-connected")
    p.add_argument("--nodes", type=int, required=True, help="node count")
    p.add_argument("--splitter-fraction", type=float, default=0.0, help="fraction of nodes with a splitter")
    p.add_argument("--wavelengths", type=int, default=4, help="wavelengths per fiber")
    p.add_argument("--seed", type=int, default=0, help="generator seed")
    p.add_argument("-o", "--out", default=None, help="output path (default: standard output)")
    p.set_defaults(func=cmd_gen_topology)

    p = sub.add_parser("run", help="run a scenario under one regime", formatter_class=fmt)
    p.add_argument("--scenario", required=True, help="scenario file")
    p.add_argument("--trace", default=None, help="write the message trace here")
    p.add_argument("--snapshot", default=None, help="write the final simulator snapshot here")
    _add_overrides(p)
    _add_format(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("compare", help="five-row regime comparison", formatter_class=fmt)
    p.add_argument("--scenario", required=True, help="scenario file")
    p.add_argument("--report", default=None, help="write the structured-text report here")
    p.add_argument("--oracle", action="store_true", help="record the exhaustive optimum (small topologies only)")
    _add_overrides(p)
    _add_format(p)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("sweep", help="mean cost per row over generated trials", formatter_class=fmt)
    p.add_argument("--sizes", type=int, nargs="+", default=[12, 36, 50, 100], help="node counts")
    p.add_argument("--trials", type=int, default=30, help="trials per size")
    p.add_argument("--seed", type=int, default=0, help="sweep seed")
    p.add_argument("--workers", type=int, default=1, help="parallel worker processes")
    _add_format(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("validate", help="check a topology file, or validate trees after every episode",
                       formatter_class=fmt)
    p.add_argument("--topology", default=None, help="topology file to check")
    p.add_argument("--scenario", default=None, help="scenario to run with validation after each episode")
    _add_overrides(p)
    p.add_argument("-o", "--out", default=None, help="write output here instead of standard output")
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"splitcast: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
