"""Command line front end: teach, compress, repeat, eval, plot.

One scenario file drives every stage.  ``VTR_LOG`` selects the log level
(DEBUG, INFO, WARNING, ...).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from .plots import emit_plots
from .runner import (
    find_vocab_for,
    load_map,
    load_vocab,
    rebind_vocabulary,
    run_compress,
    run_eval,
    run_repeat,
    run_teach,
    write_map,
    write_metrics_csv,
)
from .scenario import load_scenario

log = logging.getLogger(__name__)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vtr", description="Teach-and-repeat navigation in a simulated world."
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("teach", help="drive the route and record a map")
    p.add_argument("scenario")
    p.add_argument("-o", "--out", required=True, help="output directory")

    p = sub.add_parser("compress", help="cluster a taught map")
    p.add_argument("map")
    p.add_argument("--tau", type=float, default=None, help="clustering threshold")
    p.add_argument("-o", "--out", required=True, help="output map file")

    p = sub.add_parser("repeat", help="retrace the route against a map")
    p.add_argument("map")
    p.add_argument("scenario")
    p.add_argument("--single-goal", action="store_true",
                   help="score only the nearest goal")
    p.add_argument("--no-expansion", action="store_true",
                   help="do not attach unmatched frames to the map")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("-o", "--out", required=True, help="output directory")

    p = sub.add_parser("eval", help="summarize run directories")
    p.add_argument("dirs", nargs="+")
    p.add_argument("-o", "--out", default="metrics.csv", help="metrics CSV path")

    p = sub.add_parser("plot", help="write figures for a run directory")
    p.add_argument("dir")
    return parser


def _cmd_teach(args) -> int:
    sc = load_scenario(args.scenario)
    result = run_teach(sc, out_dir=args.out)
    print(f"taught {len(result.m)} keyframes, {result.loop_links} loop links "
          f"over {result.ticks} ticks -> {args.out}")
    return 0


def _cmd_compress(args) -> int:
    m = load_map(args.map)
    vocab = load_vocab(find_vocab_for(args.map))
    rebind_vocabulary(m, vocab)
    report = run_compress(m, vocab, tau=args.tau)
    write_map(args.out, m)
    with open(args.out + ".report.json", "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2)
    print(f"compressed {report['keyframes_before']} -> {report['keyframes_after']} "
          f"keyframes -> {args.out}")
    return 0


def _cmd_repeat(args) -> int:
    m = load_map(args.map)
    vocab = load_vocab(find_vocab_for(args.map))
    rebind_vocabulary(m, vocab)
    sc = load_scenario(args.scenario)
    report = run_repeat(
        m, vocab, sc,
        seed=args.seed,
        single_goal=args.single_goal,
        expansion=not args.no_expansion,
        out_dir=args.out,
    )
    print(f"repeat {report.terminated_by}: end-point distance "
          f"{report.end_point_distance:.3f} m, {len(report.matches)} matches, "
          f"{'success' if report.success else 'failure'} -> {args.out}")
    return 0


def _cmd_eval(args) -> int:
    text, rows = run_eval(args.dirs)
    print(text)
    write_metrics_csv(rows, args.out)
    return 0


def _cmd_plot(args) -> int:
    written = emit_plots(args.dir)
    for path in written:
        print(path)
    return 0


_COMMANDS = {
    "teach": _cmd_teach,
    "compress": _cmd_compress,
    "repeat": _cmd_repeat,
    "eval": _cmd_eval,
    "plot": _cmd_plot,
}


def main(argv=None) -> int:
    logging.basicConfig(
        level=getattr(logging, os.environ.get("VTR_LOG", "WARNING").upper(), logging.WARNING),
        format="%(levelname)s %(name)s: %(message)s",
    )
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
