"""Command-line runner: subcommands, key-value configs and provenance.

Exit codes: 0 success, 2 usage error, 3 invariant breach, 4 fit failure.
Every artifact embeds the resolved config, the seed and the package
version; wall times are only written with ``--timing`` so that reruns are
byte-identical.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import io
import json
import math
import sys
import time
from dataclasses import asdict
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__
from .analytics import enumerate_color_minweight, enumerate_surface_minweight
from .decoder import ContractBreach
from .estimators import GROUPS, SAMPLES, WALKERS, FitFailure, Problem, fit_threshold, monte_carlo, splitting_run
from .graphs import DEFAULT_STITCH, STITCH_RULES, build_restricted_graph, build_unified_graph
from .lattices import SurfaceLayout, build_color_code, build_surface_code
from .unfold import build_map, verify_stabilizer_relations

EXIT_OK, EXIT_USAGE, EXIT_BREACH, EXIT_FIT = 0, 2, 3, 4
CSV_FIELDS = ("experiment", "code", "d", "decoder", "w_A", "w_B", "p", "trials/steps", "P_fail", "stderr", "seed",
              "wall_time")
EXPERIMENTS = ("dump-code", "verify-map", "enumerate", "montecarlo", "splitting", "threshold")


class UsageError(ValueError):
    pass


# --------------------------------------------------------------------------
# Parsing helpers


def parse_grid(text: str) -> list[float]:
    """Rates from ``a,b,c``, ``start:end:count`` (linear) or ``start:end:count:log``."""
    text = str(text).strip()
    if ":" not in text:
        try:
            vals = [float(t) for t in text.split(",") if t.strip()]
        except ValueError as exc:
            raise UsageError(f"bad rate list {text!r}") from exc
    else:
        parts = text.split(":")
        if len(parts) not in (3, 4) or (len(parts) == 4 and parts[3] not in ("lin", "log")):
            raise UsageError(f"bad rate grid {text!r}; use start:end:count[:lin|log]")
        try:
            a, b, k = float(parts[0]), float(parts[1]), int(parts[2])
        except ValueError as exc:
            raise UsageError(f"bad rate grid {text!r}") from exc
        if k < 1:
            raise UsageError("grid count must be positive")
        if len(parts) == 4 and parts[3] == "log":
            if a <= 0 or b <= 0:
                raise UsageError("geometric grids need positive endpoints")
            vals = list(np.geomspace(a, b, k))
        else:
            vals = list(np.linspace(a, b, k))
    vals = [round(float(v), 12) for v in vals]
    if not vals or any(not 0 < v < 1 for v in vals):
        raise UsageError(f"rates must lie in (0, 1): {text!r}")
    return vals


def parse_ints(text: str) -> list[int]:
    try:
        return [int(t) for t in str(text).split(",") if t.strip()]
    except ValueError as exc:
        raise UsageError(f"bad integer list {text!r}") from exc


def parse_weight(text: str) -> Fraction:
    try:
        w = Fraction(str(text))
    except (ValueError, ZeroDivisionError) as exc:
        raise UsageError(f"bad weight {text!r}") from exc
    if w <= 0:
        raise UsageError(f"weights must be positive, got {text!r}")
    return w


def read_config(path: str) -> list[str]:
    """Turn ``key = value`` lines into command-line tokens."""
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"config file {path!r} not found")
    tokens = []
    for no, raw in enumerate(p.read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{no}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("_", "-")
        if key == "experiment":
            tokens.insert(0, value)
        elif value.lower() in ("true", "yes", "on"):
            tokens.append(f"--{key}")
        elif value.lower() in ("false", "no", "off"):
            continue
        else:
            tokens += [f"--{key}", value]
    if not tokens or tokens[0] not in EXPERIMENTS:
        raise UsageError(f"{path}: 'experiment' must be one of {', '.join(EXPERIMENTS)}")
    return tokens


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="unimatch", description="Unified and restricted matching on the unfolded color code.")
    ap.add_argument("--version", action="version", version=f"unimatch {__version__}")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, distances=True):
        p.add_argument("--config", help="key = value file; command-line flags override it")
        p.add_argument("--code", choices=("surface", "color"), default="surface")
        if distances:
            p.add_argument("--d", default="4", help="distance or comma list (color: color distance)")
        p.add_argument("--decoder", choices=("unified", "restricted"), default="unified")
        p.add_argument("--wA", default="1", help="weight of sheets R_g and R_b")
        p.add_argument("--wB", default="1", help="weight of sheet R_r")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", help="output path (default: stdout)")
        p.add_argument("--timing", action="store_true", help="record wall times (breaks byte identity)")

    p = sub.add_parser("dump-code", help="layout or matching graph as JSON")
    common(p)
    p.add_argument("--graph", choices=("none", "restricted", "unified"), default="none")
    p.add_argument("--sheet", choices=("r", "g", "b"), default="g", help="excluded color of a restricted graph")
    p.add_argument("--stitch", choices=sorted(STITCH_RULES), default=DEFAULT_STITCH)

    p = sub.add_parser("verify-map", help="map table and stabilizer relations as JSON")
    common(p)

    p = sub.add_parser("enumerate", help="exhaustive least-weight failure counts")
    common(p)
    p.add_argument("--M", default=None, help="color code: squares per major row (comma list)")
    p.add_argument("--off-row", action="store_true", help="color code: also decode off-row patterns")
    p.add_argument("--log-out", help="write failing patterns as JSON")
    p.add_argument("--allow-long", action="store_true", help="permit surface distances above 6")

    p = sub.add_parser("montecarlo", help="direct sampling of the logical failure rate")
    common(p)
    p.add_argument("--p", required=False, help="rates: list or start:end:count[:log]")
    p.add_argument("--trials", type=int, default=10000)
    p.add_argument("--engine", choices=("exact", "matching"), default="exact")
    p.add_argument("--coin", choices=("half", "fair"), default="half")

    p = sub.add_parser("splitting", help="failure-rate curve by the splitting method")
    common(p)
    p.add_argument("--p-start", type=float, default=0.05)
    p.add_argument("--p-end", type=float, default=1e-3)
    p.add_argument("--samples", type=int, default=SAMPLES, help="kept walker samples per rung before extension")
    p.add_argument("--walkers", type=int, default=WALKERS, help=f"population size, a multiple of {GROUPS}")
    p.add_argument("--rel-target", type=float, default=0.05)
    p.add_argument("--anchor-trials", type=int, default=100000)
    p.add_argument("--anchor-engine", choices=("exact", "matching"), default="exact")
    p.add_argument("--checkpoint-dir", help="save chains after every rung and resume from them")
    p.add_argument("--chain-out", help="write the full chain record as JSON")

    p = sub.add_parser("threshold", help="Monte Carlo sweep and finite-size fit")
    common(p)
    p.add_argument("--p", required=False, help="rates: list or start:end:count[:log]")
    p.add_argument("--trials", type=int, default=60000)
    p.add_argument("--engine", choices=("exact", "matching"), default="matching")

    p = sub.add_parser("run", help="run an experiment described by a config file")
    p.add_argument("--config", required=True)

    p = sub.add_parser("verify", help="always-on invariant suite")
    p.add_argument("--seed", type=int, default=7)
    return ap


def resolve(argv: list[str]) -> argparse.Namespace:
    """Parse argv, folding in a config file so that explicit flags win."""
    ap = build_parser()
    args, extra = ap.parse_known_args(argv)
    if args.command == "run":
        # remaining flags override the config of the named experiment
        tokens = read_config(args.config)
        return ap.parse_args(tokens + extra)
    if extra:
        ap.parse_args(argv)  # reports the unrecognised arguments
    if getattr(args, "config", None):
        tokens = read_config(args.config)
        if tokens[0] != args.command:
            raise UsageError(f"config experiment {tokens[0]!r} does not match {args.command!r}")
        rest = argv[argv.index(args.command) + 1:]
        args = ap.parse_args([args.command] + tokens[1:] + rest)
    return args


def config_of(args: argparse.Namespace) -> dict:
    skip = {"config", "out", "log_out", "chain_out", "checkpoint_dir"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def _problem_args(args):
    ds = parse_ints(args.d)
    w_A, w_B = parse_weight(args.wA), parse_weight(args.wB)
    for d in ds:
        if d % 2 or d < (2 if args.code == "surface" else 4):
            raise UsageError(f"distance {d} must be even and >= {2 if args.code == 'surface' else 4}")
    return ds, w_A, w_B


def cell_seed(seed: int, *key: int) -> int:
    """Seed of one (distance, rate) cell, independent of scheduling."""
    return int(np.random.SeedSequence(seed, spawn_key=tuple(int(k) for k in key)).generate_state(1)[0])


# --------------------------------------------------------------------------
# Emission


def _fmt(x) -> str:
    if isinstance(x, Fraction):
        return str(x) if x.denominator != 1 else str(x.numerator)
    if isinstance(x, float):
        return repr(x)
    return str(x)


def render_csv(rows: list[dict], config: dict, fields=CSV_FIELDS) -> str:
    buf = io.StringIO()
    buf.write(f"# unimatch {__version__}\n")
    buf.write(f"# config: {json.dumps(config, sort_keys=True, default=str)}\n")
    w = csv.DictWriter(buf, fieldnames=list(fields), lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: _fmt(r.get(k, "")) for k in fields})
    return buf.getvalue()


def render_json(payload: dict, config: dict) -> str:
    body = {"version": __version__, "config": config, "seed": config.get("seed"), **payload}
    return json.dumps(body, indent=2, sort_keys=True, default=str) + "\n"


def write_out(path: str | None, text: str) -> None:
    """Write atomically, or to stdout when no path is given."""
    if not path:
        sys.stdout.write(text)
        return
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    tmp = p.with_name(p.name + ".tmp")
    tmp.write_text(text)
    tmp.replace(p)


def _wall(args, t0):
    return round(time.perf_counter() - t0, 3) if args.timing else ""


# --------------------------------------------------------------------------
# Commands


def layout_dict(layout) -> dict:
    if isinstance(layout, SurfaceLayout):
        return {
            "code": "surface",
            "distance": layout.distance,
            "qubits": [list(q.coord) for q in layout.qubits],
            "stabilizers": [{"type": s.pauli_type, "coord": list(s.coord), "support": list(s.support)}
                            for s in layout.stabilizers],
            "logical_X": np.flatnonzero(layout.logical_X).tolist(),
            "logical_Z": np.flatnonzero(layout.logical_Z).tolist(),
        }
    return {
        "code": "color",
        "distance": layout.distance,
        "qubits": [list(q.coord) for q in layout.qubits],
        "faces": [{"color": f.color, "coord": list(f.coord), "support": list(f.support)} for f in layout.faces],
        "boundary_colors": dict(sorted(layout.boundary_colors.items())),
        "logical_X": {k: np.flatnonzero(v).tolist() for k, v in sorted(layout.logical_X.items())},
        "logical_Z": {k: np.flatnonzero(v).tolist() for k, v in sorted(layout.logical_Z.items())},
    }


def cmd_dump_code(args) -> int:
    ds, w_A, w_B = _problem_args(args)
    payload = {}
    for d in ds:
        if args.graph == "none":
            layout = build_surface_code(d) if args.code == "surface" else build_color_code(d)
            payload[str(d)] = layout_dict(layout)
            continue
        D = 2 * d if args.code == "surface" else d
        color = build_color_code(D)
        if args.graph == "unified":
            g = build_unified_graph(color, w_A, w_B, args.stitch)
        else:
            g = build_restricted_graph(color, args.sheet)
        payload[str(d)] = g.to_dict()
    write_out(args.out, render_json({"layouts" if args.graph == "none" else "graphs": payload}, config_of(args)))
    return EXIT_OK


def cmd_verify_map(args) -> int:
    if args.code != "surface":
        raise UsageError("verify-map takes the surface distance (--code surface)")
    ds, _, _ = _problem_args(args)
    payload, ok = {}, True
    for d in ds:
        emap = build_map(build_surface_code(d))
        rep = verify_stabilizer_relations(emap)
        ok &= rep.ok
        payload[str(d)] = {"map": emap.to_dict(), "report": asdict(rep)}
    write_out(args.out, render_json({"maps": payload}, config_of(args)))
    return EXIT_OK if ok else EXIT_BREACH


ENUM_FIELDS = ("experiment", "code", "size", "decoder", "w_A", "w_B", "analytic", "enumerated", "match",
               "success", "failure", "coin_flip", "off_row", "seed", "wall_time")


def cmd_enumerate(args) -> int:
    w_A, w_B = parse_weight(args.wA), parse_weight(args.wB)
    rows, logs = [], {}
    if args.code == "surface":
        sizes = parse_ints(args.d)
        for d in sizes:
            if d % 2 or d < 2:
                raise UsageError(f"surface distance {d} must be even")
            if d > 6 and not args.allow_long:
                raise UsageError("surface distances above 6 need --allow-long")
    else:
        sizes = parse_ints(args.M) if args.M else [d // 2 for d in parse_ints(args.d)]
        if any(m < 2 for m in sizes):
            raise UsageError("M must be at least 2")
    for s in sizes:
        t0 = time.perf_counter()
        if args.code == "surface":
            rep = enumerate_surface_minweight(s, args.decoder, w_A, w_B, log=bool(args.log_out),
                                              allow_long=args.allow_long)
        else:
            rep = enumerate_color_minweight(s, args.decoder, w_A, w_B, off_row=args.off_row, log=bool(args.log_out))
        rows.append({
            "experiment": "enumerate", "code": args.code, "size": s, "decoder": args.decoder,
            "w_A": float(w_A), "w_B": float(w_B), "analytic": rep.analytic, "enumerated": rep.enumerated,
            "match": rep.match, "success": rep.counts["success"], "failure": rep.counts["failure"],
            "coin_flip": rep.counts["coin-flip"], "off_row": json.dumps(rep.off_row, sort_keys=True) if rep.off_row else "",
            "seed": args.seed, "wall_time": _wall(args, t0),
        })
        if args.log_out:
            logs[str(s)] = [{"error": [list(map(_jsonable, x)) if isinstance(x, tuple) else x for x in pat],
                             "outcome": res} for pat, res in rep.failing]
    write_out(args.out, render_csv(rows, config_of(args), ENUM_FIELDS))
    if args.log_out:
        write_out(args.log_out, render_json({"failing": logs}, config_of(args)))
    return EXIT_OK


def _jsonable(x):
    if isinstance(x, tuple):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.integer):
        return int(x)
    return x


def _mc_rows(args, experiment: str):
    ds, w_A, w_B = _problem_args(args)
    if not args.p:
        raise UsageError("--p is required")
    rates = parse_grid(args.p)
    if args.trials < 1:
        raise UsageError("--trials must be positive")
    rows = []
    for d in ds:
        pb = Problem(args.code, d, args.decoder, w_A, w_B)
        for i, p in enumerate(rates):
            t0 = time.perf_counter()
            s = cell_seed(args.seed, d, i)
            kw = {"coin": args.coin} if hasattr(args, "coin") else {}
            r = monte_carlo(pb, p, args.trials, s, engine=args.engine, **kw)
            rows.append({
                "experiment": experiment, "code": args.code, "d": d, "decoder": args.decoder,
                "w_A": float(w_A), "w_B": float(w_B), "p": p, "trials/steps": r.trials,
                "P_fail": r.p_fail, "stderr": r.stderr, "seed": s, "wall_time": _wall(args, t0),
            })
    return rows


def cmd_montecarlo(args) -> int:
    rows = _mc_rows(args, "montecarlo")
    write_out(args.out, render_csv(rows, config_of(args)))
    return EXIT_OK


def cmd_splitting(args) -> int:
    ds, w_A, w_B = _problem_args(args)
    if not (0 < args.p_end < 1 and 0 < args.p_start < 1):
        raise UsageError("rates must lie in (0, 1)")
    if args.samples < 10 or args.anchor_trials < 1:
        raise UsageError("--samples must be >= 10 and --anchor-trials positive")
    if args.walkers < 2 * GROUPS or args.walkers % GROUPS:
        raise UsageError(f"--walkers must be a multiple of {GROUPS} and at least {2 * GROUPS}")
    rows, chains = [], {}
    for d in ds:
        t0 = time.perf_counter()
        pb = Problem(args.code, d, args.decoder, w_A, w_B)
        s = cell_seed(args.seed, d)
        ck = None
        if args.checkpoint_dir:
            ck = Path(args.checkpoint_dir) / f"{args.code}_{args.decoder}_d{d}_wA{float(w_A)}_wB{float(w_B)}_s{s}.json"
            ck.parent.mkdir(parents=True, exist_ok=True)
        ch = splitting_run(pb, args.p_start, args.p_end, s, samples=args.samples,
                           anchor_trials=args.anchor_trials, anchor_engine=args.anchor_engine, checkpoint=ck,
                           rel_target=args.rel_target, walkers=args.walkers)
        chains[str(d)] = json.loads(ch.to_json())
        steps = [ch.anchor["trials"]] + [r.steps for r in ch.rungs]
        for (p, P, lse), n in zip(ch.curve, steps):
            rows.append({
                "experiment": "splitting", "code": args.code, "d": d, "decoder": args.decoder,
                "w_A": float(w_A), "w_B": float(w_B), "p": p, "trials/steps": n, "P_fail": P,
                "stderr": P * lse if math.isfinite(lse) else math.inf, "seed": s,
                "wall_time": _wall(args, t0),
            })
    write_out(args.out, render_csv(rows, config_of(args)))
    if args.chain_out:
        write_out(args.chain_out, render_json({"chains": chains}, config_of(args)))
    return EXIT_OK


def cmd_threshold(args) -> int:
    ds, _, _ = _problem_args(args)
    if len(ds) < 3:
        raise UsageError("threshold needs at least three distances")
    rows = _mc_rows(args, "threshold")
    config = config_of(args)
    records = [(r["p"], r["d"], r["P_fail"], r["stderr"]) for r in rows]
    status, fit, err = EXIT_OK, None, ""
    try:
        f = fit_threshold(records)
        fit = {k: v for k, v in asdict(f).items() if k != "data"}
    except FitFailure as exc:
        status, err = EXIT_FIT, str(exc)
    fit_json = render_json({"fit": fit, "fit_error": err, "provenance": {"rows": len(rows)}}, config)
    if args.out:
        write_out(args.out, render_csv(rows, config))
        write_out(args.out + ".fit.json", fit_json)
    else:
        write_out(None, render_csv(rows, config))
        write_out(None, fit_json)
    return status


def cmd_verify(args) -> int:
    from .verification import verify_suite

    checks = verify_suite(seed=args.seed)
    for c in checks:
        sys.stdout.write(f"{'PASS' if c.ok else 'FAIL'}  {c.name}{'  ' + c.detail if c.detail else ''}\n")
    bad = sum(not c.ok for c in checks)
    sys.stdout.write(f"{len(checks) - bad}/{len(checks)} checks passed\n")
    return EXIT_OK if not bad else EXIT_BREACH


COMMANDS = {
    "dump-code": cmd_dump_code,
    "verify-map": cmd_verify_map,
    "enumerate": cmd_enumerate,
    "montecarlo": cmd_montecarlo,
    "splitting": cmd_splitting,
    "threshold": cmd_threshold,
    "verify": cmd_verify,
}


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = resolve(argv)
        return COMMANDS[args.command](args)
    except UsageError as exc:
        sys.stderr.write(f"usage error: {exc}\n")
        return EXIT_USAGE
    except ContractBreach as exc:
        sys.stderr.write(f"invariant breach: {exc}\n")
        return EXIT_BREACH
    except SystemExit as exc:  # --help and --version
        return int(exc.code or 0)


def main_to_string(argv: list[str]) -> str:
    """Run a command and return what it wrote to stdout."""
    buf = io.StringIO()
    with contextlib.redirect_stdout(buf):
        code = main(argv)
    if code:
        raise RuntimeError(f"command failed with status {code}")
    return buf.getvalue()
