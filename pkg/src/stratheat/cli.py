"""Command-line experiment runner.

``stratheat <simulate|converge|moments|roughness|couple> [--config PATH]
[--seed U64] [--out DIR] [--threads INT]`` writes ``results.csv``,
``manifest.json`` and PNG figures into ``--out``.  Exit status is 0 when
every verdict passes, 1 when one fails and 2 for an invalid configuration.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, experiments as ex
from .config import ConfigError, ExperimentConfig
from .plotting import render

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def table_csv(res: ex.ExperimentResult) -> str:
    """CSV text: ``#`` lines give each column's meaning, then a ``name [unit]`` header."""
    buf = io.StringIO()
    for c in res.columns:
        buf.write(f"# {c.name} [{c.unit}]: {c.meaning}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([f"{c.name} [{c.unit}]" for c in res.columns])
    for r in res.rows:
        w.writerow([_fmt(r.get(c.name, "")) for c in res.columns])
    return buf.getvalue()


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else None
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    return x


def _write(path: Path, text: str):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def run_command(args, cfg: ExperimentConfig) -> list[ex.ExperimentResult]:
    cmd = args.command
    if cmd == "simulate":
        return [ex.simulate(cfg)]
    if cmd == "converge":
        if args.family == "wong-zakai":
            return [ex.wong_zakai_convergence(cfg)]
        return [ex.weak_convergence(cfg, args.family)]
    if cmd == "moments":
        fam = args.family
        if args.which == "i":
            return [ex.moments_tightness(cfg, fam)]
        if args.which == "ii":
            return [ex.coupling_rates(cfg, fam)]
        if args.which == "interp":
            return [ex.interpolation_bound(cfg, "kac" if fam == "kac-stroock" else fam)]
        return [ex.weighted_sums(cfg)]
    if cmd == "roughness":
        return [ex.roughness(cfg), ex.chen_relation(cfg)]
    if cmd == "couple":
        return [ex.couple(cfg, runs=args.runs)]
    raise ValueError(cmd)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON configuration file")
    common.add_argument("--seed", type=int, help="base seed (unsigned 64-bit)")
    common.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    common.add_argument("--threads", type=int, help="worker threads for path ensembles")
    common.add_argument("--no-plots", action="store_true", help="skip PNG figures")

    p = argparse.ArgumentParser(prog="stratheat", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="one solution path, coefficient snapshots")
    c = sub.add_parser("converge", parents=[common], help="strong or weak convergence table")
    c.add_argument("--family", choices=["wong-zakai", "donsker", "kac-stroock"],
                   default="wong-zakai")
    m = sub.add_parser("moments", parents=[common], help="moment conditions and weighted sums")
    m.add_argument("--which", choices=["i", "ii", "interp", "rosenthal"], default="i")
    m.add_argument("--family", choices=["donsker", "kac-stroock"], default="donsker")
    sub.add_parser("roughness", parents=[common], help="remainder exponents and Chen residuals")
    cp = sub.add_parser("couple", parents=[common], help="Skorokhod couplings, both routes")
    cp.add_argument("--runs", type=int, default=200, help="fine-grid coupled paths per n")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
        over = {}
        if args.seed is not None:
            over["seed"] = args.seed
        if args.threads is not None:
            over["threads"] = args.threads
        if over:
            cfg = cfg.replace(**over)
        cfg.validate()
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    try:
        results = run_command(args, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    wall = time.perf_counter() - t0

    files = {}
    for k, res in enumerate(results):
        name = "results.csv" if k == 0 else f"{res.name}.csv"
        _write(out / name, table_csv(res))
        files[res.name] = {"table": name}
        if not args.no_plots:
            files[res.name]["figures"] = render(res.plots, out)

    verdicts = {f"{r.name}.{k}": bool(v) for r in results for k, v in r.verdicts.items()}
    ok = all(verdicts.values())
    manifest = {
        "command": args.command,
        "options": {k: v for k, v in (("family", getattr(args, "family", None)),
                                      ("which", getattr(args, "which", None)),
                                      ("runs", getattr(args, "runs", None))) if v is not None},
        "version": __version__,
        "config": cfg.to_dict(),
        "seeds": {r.name: r.seeds for r in results},
        "wall_clock_seconds": {"total": wall, **{r.name: r.wall_clock for r in results}},
        "metrics": {r.name: r.summary for r in results},
        "columns": {r.name: [{"name": c.name, "unit": c.unit, "meaning": c.meaning}
                             for c in r.columns] for r in results},
        "files": files,
        "verdict": {"criteria": {k: "PASS" if v else "FAIL" for k, v in verdicts.items()},
                    "pass": ok},
    }
    _write(out / "manifest.json", json.dumps(_jsonable(manifest), indent=2) + "\n")
    for k, v in verdicts.items():
        print(f"{'PASS' if v else 'FAIL'}  {k}")
    for r in results:
        for w in r.summary.get("warnings", []):
            print(w)
    return EXIT_PASS if ok else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
