"""Command line entry point: ``jitroute <command> ...``."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import harness
from .baselines import PolicyKind
from .metrics import compare_policies, format_table, reports_to_csv, summarize, sweep
from .scenario import ScenarioError, load_scenario
from .sim import run

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_IO = 3

log = logging.getLogger("jitroute")


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _policy(text: str) -> str:
    try:
        return PolicyKind.parse(text).value
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="jitroute", description="Workflow routing and serving simulator.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, multi: bool):
        sp.add_argument("scenario", help="scenario file, or the name of a shipped scenario")
        sp.add_argument("--out", type=Path, help="output directory for CSV (and traces)")
        sp.add_argument("--beam-width", type=int, help="override the scheduler beam width")
        sp.add_argument("--workers", type=int, default=1, help="parallel runs")
        if multi:
            sp.add_argument("--rates", type=_floats, help="comma-separated arrival rates")
            sp.add_argument("--seeds", type=_ints, help="comma-separated seeds")

    sp = sub.add_parser("run", help="simulate one (policy, rate, seed)")
    common(sp, multi=False)
    sp.add_argument("--policy", type=_policy)
    sp.add_argument("--rate", type=float)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--trace", action="store_true", help="also write the JSONL run trace")

    sp = sub.add_parser("sweep", help="sweep arrival rates for one policy")
    common(sp, multi=True)
    sp.add_argument("--policy", type=_policy)

    sp = sub.add_parser("compare", help="sweep every policy and report ratios")
    common(sp, multi=True)
    sp.add_argument("--policies", type=lambda t: [_policy(x) for x in t.split(",")])

    sp = sub.add_parser("figure", help="run one desk-scale study")
    sp.add_argument("name", choices=harness.FIGURES)
    sp.add_argument("--out", type=Path, default=Path("."))
    sp.add_argument("--scenario", help="scenario for beam-size (default: self_refine)")
    sp.add_argument("--workers", type=int, default=1)

    sp = sub.add_parser("validate-scenario", help="check a scenario file")
    sp.add_argument("scenario")
    return p


def _load(args):
    sc = load_scenario(args.scenario)
    if getattr(args, "beam_width", None) is not None:
        if args.beam_width < 1:
            raise ScenarioError("--beam-width must be at least 1")
        sc = sc.with_(beam_width=args.beam_width)
    return sc


def _emit(args, name: str, text: str):
    if args.out is None:
        return
    args.out.mkdir(parents=True, exist_ok=True)
    (args.out / name).write_text(text)


def _cmd_run(args) -> int:
    sc = _load(args)
    if args.rate is not None:
        if args.rate <= 0:
            raise ScenarioError("--rate must be positive")
        sc = sc.with_(rate=args.rate)
    trace = run(sc, args.seed, args.policy)
    report = summarize(trace)
    print(format_table([report]))
    stem = f"{sc.name}_{trace.policy}_r{sc.rate:g}_s{trace.seed}"
    _emit(args, stem + ".csv", reports_to_csv([report]))
    if args.trace:
        _emit(args, stem + ".jsonl", trace.to_jsonl())
    return EXIT_OK


def _cmd_sweep(args) -> int:
    sc = _load(args)
    result = sweep(sc, args.policy, args.rates, args.seeds, workers=args.workers)
    print(format_table(result.reports))
    print(f"saturation throughput: {result.saturation:.4f}")
    policy = result.reports[0].policy
    _emit(args, f"{sc.name}_{policy}_sweep.csv", reports_to_csv(result.reports))
    return EXIT_OK


def _cmd_compare(args) -> int:
    sc = _load(args)
    cmp = compare_policies(sc, args.rates, args.seeds, args.policies, workers=args.workers)
    print(format_table(cmp.reports()))
    for p, v in cmp.saturation.items():
        print(f"saturation {p}: {v:.4f}")
    for k, v in cmp.ratios.items():
        print(f"ratio {k}: {v:.4f}")
    _emit(args, f"{sc.name}_compare.csv", reports_to_csv(cmp.reports()))
    return EXIT_OK


def _cmd_figure(args) -> int:
    sc = load_scenario(args.scenario) if args.scenario else None
    path = harness.figure_harness(args.name, args.out, scenario=sc, workers=args.workers)
    print(path)
    return EXIT_OK


def _cmd_validate(args) -> int:
    sc = load_scenario(args.scenario)
    print(f"{sc.name}: ok ({sc.graph.n} agents, {len(sc.catalog)} models, {len(sc.space)} configurations)")
    return EXIT_OK


COMMANDS = {"run": _cmd_run, "sweep": _cmd_sweep, "compare": _cmd_compare,
            "figure": _cmd_figure, "validate-scenario": _cmd_validate}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INVALID
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ScenarioError as exc:
        print(f"invalid scenario: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
