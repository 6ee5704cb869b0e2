"""Command-line front-end.

Subcommands map one-to-one onto the library pipeline:

    qng threshold -n 2 --out curve.csv
    qng witness --in counts.json --curve curve.csv
    qng depth --in model.json --curve curve.csv
    qng simulate --in model.json --seed 7 --out counts.json
    qng verify -n 2 --modes 1 --runs 100000 --seed 7 --out report.json
    qng path --in model.json --step-db 0.5 --out path.csv

All outputs are machine-readable (CSV or JSON), self-describing (version and
config hash embedded) and written atomically.  Exit codes: 0 success, 2 usage
error, 3 numerical failure.  QNG_THREADS caps internal worker count.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from ._util import PACKAGE_VERSION, atomic_write_text, config_hash, json_sanitize
from .errors import QngError
from .montecarlo import verify
from .sources import ExperimentModel, merged_state, simulate_counts, suite_to_csv
from .threshold import ThresholdCurve, default_grid, threshold_exact
from .witness import (
    CountRecord,
    classify,
    attenuation_path,
    estimate_rates,
    qng_depth,
    qng_depth_from_point,
)

EXIT_USAGE = 2
EXIT_NUMERICAL = 3


def _parse_grid(spec: str) -> np.ndarray:
    """Grid spec 'lo:hi:points', log-spaced."""
    try:
        lo, hi, pts = spec.split(":")
        return np.geomspace(float(lo), float(hi), int(pts))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(
            f"grid must be 'lo:hi:points', got {spec!r}"
        ) from exc


def _load_curve(path: str) -> ThresholdCurve:
    if path.endswith(".json"):
        return ThresholdCurve.from_json(path)
    return ThresholdCurve.from_csv(path)


def _emit(payload: dict, out: str | None) -> None:
    text = json.dumps(json_sanitize(payload), indent=1) + "\n"
    if out:
        atomic_write_text(out, text)
    else:
        sys.stdout.write(text)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="qng",
        description="Quantum non-Gaussianity witnessing from click statistics",
    )
    ap.add_argument("--version", action="version", version=PACKAGE_VERSION)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("threshold", help="compute a threshold curve")
    p.add_argument("--order", "-n", type=int, required=True)
    p.add_argument("--grid", type=_parse_grid, default=None,
                   help="lo:hi:points, log-spaced (default 1e-16:1e-2:200)")
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=("csv", "json"), default=None,
                   help="default: inferred from --out extension")

    p = sub.add_parser("witness", help="classify a count record")
    p.add_argument("--in", dest="inp", required=True, help="counts JSON")
    p.add_argument("--curve", required=True, help="threshold table (csv/json)")
    p.add_argument("--out", default=None)

    p = sub.add_parser("depth", help="QNG depth of a model or a count record")
    p.add_argument("--in", dest="inp", required=True,
                   help="model JSON or counts JSON (sniffed by keys)")
    p.add_argument("--curve", required=True)
    p.add_argument("--out", default=None)

    p = sub.add_parser("simulate", help="event-level synthetic count record")
    p.add_argument("--in", dest="inp", required=True, help="model JSON")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)

    p = sub.add_parser("verify", help="Monte-Carlo threshold certification")
    p.add_argument("--order", "-n", type=int, required=True)
    p.add_argument("--modes", type=int, default=1)
    p.add_argument("--runs", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)

    p = sub.add_parser("path", help="attenuation path of a model state")
    p.add_argument("--in", dest="inp", required=True, help="model JSON")
    p.add_argument("--step-db", type=float, default=0.5)
    p.add_argument("--max-db", type=float, default=30.0)
    p.add_argument("--order", "-n", type=int, default=None,
                   help="criterion order (default: the model's merge count)")
    p.add_argument("--channels", "-N", type=int, default=None)
    p.add_argument("--out", required=True)

    p = sub.add_parser("suite", help="verdict/depth table for a model family")
    p.add_argument("--p1", type=float, required=True)
    p.add_argument("--p2", type=float, default=0.0)
    p.add_argument("--efficiency", type=float, default=1.0)
    p.add_argument("--orders", default="1:9", help="inclusive range lo:hi")
    p.add_argument("--out", required=True)
    return ap


def cmd_threshold(args) -> int:
    grid = args.grid if args.grid is not None else default_grid()
    curve = threshold_exact(args.order, grid)
    fmt = args.format or ("json" if args.out.endswith(".json") else "csv")
    if fmt == "json":
        curve.to_json(args.out)
    else:
        curve.to_csv(args.out)
    return 0


def cmd_witness(args) -> int:
    rec = CountRecord.from_json(args.inp)
    curve = _load_curve(args.curve)
    verdict = classify(rec, curve)
    est = estimate_rates(rec)
    _emit(
        {
            "format": "qng-verdict",
            "version": PACKAGE_VERSION,
            "config_hash": config_hash({"in": rec.to_json_obj()}),
            "record": rec.to_json_obj(),
            "rates": {
                "r_n": [est.r_n.point, est.r_n.lo, est.r_n.hi],
                "r_n1": [est.r_n1.point, est.r_n1.lo, est.r_n1.hi],
            },
            "verdict": verdict.to_json_obj(),
        },
        args.out,
    )
    return 0


def _sniff_model(obj: dict) -> bool:
    return "p1" in obj


def cmd_depth(args) -> int:
    with open(args.inp, encoding="utf-8") as fh:
        obj = json.load(fh)
    curve = _load_curve(args.curve)
    if _sniff_model(obj):
        model = ExperimentModel.from_json_obj(obj)
        n = curve.order
        dist = merged_state(model)
        depth = qng_depth(dist, n, n + 1, curve)
        src = {"model": model.to_json_obj()}
    else:
        rec = CountRecord.from_json_obj(obj)
        est = estimate_rates(rec)
        depth = qng_depth_from_point(
            est.r_n.point, est.r_n1.point, rec.order, rec.order + 1, curve
        )
        src = {"record": rec.to_json_obj()}
    if math.isinf(depth):
        depth_out = "unbounded" if depth > 0 else "not-qng-at-source"
    else:
        depth_out = depth
    _emit(
        {
            "format": "qng-depth",
            "version": PACKAGE_VERSION,
            "order": curve.order,
            "depth_db": depth_out,
            **src,
        },
        args.out,
    )
    return 0


def cmd_simulate(args) -> int:
    model = ExperimentModel.from_json(args.inp)
    rec = simulate_counts(model, args.seed)
    payload = {
        "format": "qng-counts",
        "version": PACKAGE_VERSION,
        "seed": args.seed,
        **rec.to_json_obj(),
    }
    _emit(payload, args.out)
    return 0


def cmd_verify(args) -> int:
    report = verify(args.order, args.modes, args.runs, args.seed)
    sys.stderr.write(
        f"verify n={args.order} modes={args.modes} runs={args.runs}: "
        f"{report.violations} violations\n"
    )
    _emit(report.to_json_obj(), args.out)
    return 0


def cmd_path(args) -> int:
    model = ExperimentModel.from_json(args.inp)
    n = args.order if args.order is not None else model.merge_count
    N = args.channels if args.channels is not None else n + 1
    dist = merged_state(model)
    pairs = attenuation_path(dist, n, N, step_db=args.step_db, max_db=args.max_db)
    lines = [
        f"# version: {PACKAGE_VERSION}",
        f"# config_hash: {config_hash({'model': model.to_json_obj(), 'step_db': args.step_db, 'n': n, 'N': N})}",
        "step,attenuation_db,eta,r_n,r_n1",
    ]
    for k, cp in enumerate(pairs):
        db = k * args.step_db
        lines.append(
            f"{k},{db:.6f},{10.0 ** (-db / 10.0):.12e},{cp.r_n:.12e},{cp.r_n1:.12e}"
        )
    atomic_write_text(args.out, "\n".join(lines) + "\n")
    return 0


def cmd_suite(args) -> int:
    from .sources import reproduce_experiment_suite

    lo, hi = (int(x) for x in args.orders.split(":"))
    entries = reproduce_experiment_suite(
        args.p1, args.p2, args.efficiency, range(lo, hi + 1)
    )
    suite_to_csv(entries, args.out)
    return 0


_COMMANDS = {
    "threshold": cmd_threshold,
    "witness": cmd_witness,
    "depth": cmd_depth,
    "simulate": cmd_simulate,
    "verify": cmd_verify,
    "path": cmd_path,
    "suite": cmd_suite,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (QngError, OSError, json.JSONDecodeError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_NUMERICAL if isinstance(exc, QngError) else EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())