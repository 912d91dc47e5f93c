"""Command-line interface.

Every run writes its artifacts (CSV with a header row, JSON objects carrying
tool_version, seed and params) into the output directory and appends one
record to ``runs.jsonl`` there. Timestamps live only in that log, so artifacts
are byte-identical across reruns with the same seed.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import time
from dataclasses import asdict, dataclass, field
from importlib import metadata
from pathlib import Path

import numpy as np

from . import certification as cert
from . import enumeration as en
from . import kac_rice as kr
from . import landscape as ls
from . import random_matrix as rm
from . import special_functions as sf
from .errors import DomainError

OUT_ENV = "PSPIN_OUT"
EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def tool_version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "0+unknown"


@dataclass
class RunRecord:
    command: str
    params: dict
    seed: int | None
    tool_version: str
    started: str
    finished: str = ""
    outputs: list[str] = field(default_factory=list)
    summary: dict = field(default_factory=dict)


# --- config --------------------------------------------------------------------

def load_config(path) -> dict[str, str]:
    """Read ``key = value`` lines; ``#`` starts a comment. Keys may use dashes or underscores.

    A missing file yields an empty map, so runs given entirely by flags still work.
    """
    out: dict[str, str] = {}
    if not os.path.exists(path):
        print(f"note: config {path} not found; using flags only", file=sys.stderr)
        return out
    with open(path, encoding="utf-8") as fh:
        for no, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, val = line.partition("=")
            key = key.strip().replace("-", "_")
            if not sep or not key or not key.replace("_", "").isalnum():
                raise UsageError(f"{path}:{no}: expected 'key = value', got {raw.strip()!r}")
            out[key] = val.strip()
    return out


# --- output helpers ------------------------------------------------------------

class Writer:
    def __init__(self, out: Path, seed, params: dict):
        self.out = out
        self.seed = seed
        self.params = params
        self.paths: list[str] = []
        out.mkdir(parents=True, exist_ok=True)

    def json(self, name: str, payload: dict) -> None:
        doc = {"tool_version": tool_version(), "seed": self.seed, "params": self.params, **payload}
        p = self.out / name
        p.write_text(json.dumps(_clean(doc), indent=2, sort_keys=True, allow_nan=True) + "\n", encoding="utf-8")
        self.paths.append(str(p))

    def csv(self, name: str, header: list[str], rows) -> None:
        p = self.out / name
        with open(p, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in row])
        self.paths.append(str(p))


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def _floats(text: str) -> list[float]:
    return [float(t) for t in text.split(",") if t.strip()]


def _ints(text: str) -> list[int]:
    return [int(t) for t in text.split(",") if t.strip()]


# --- subcommands ---------------------------------------------------------------

def cmd_thresholds(a, w: Writer) -> tuple[int, dict]:
    rows = [sf.thresholds(p).as_dict() for p in range(a.p_min, a.p_max + 1)]
    w.json("thresholds.json", {"thresholds": rows})
    w.csv("thresholds.csv", ["p", "e_inf", "e_zero", "u_th", "e_zero_residual"],
          [[r["p"], r["e_inf"], r["e_zero"], r["u_th"], r["e_zero_residual"]] for r in rows])
    return EXIT_OK, {"count": len(rows)}


EVAL = {
    "omega": lambda a: sf.omega(a.x),
    "omega-prime": lambda a: sf.omega_prime(a.x),
    "theta": lambda a: sf.theta(a.p, a.u),
    "resolvent": lambda a: sf.resolvent_s(a.p, a.u),
    "zeta": lambda a: ls.zeta(a.p, a.u),
    "psi": lambda a: ls.psi(a.p, a.r, a.u, a.u2 if a.u2 is not None else a.u),
    "psi-bar": lambda a: ls.psi_bar(a.p, a.u, a.r),
    "q": lambda a: ls.q_fn(a.p, a.u, a.r),
    "g0": lambda a: ls.g0(a.p, a.r),
}


def cmd_eval(a, w: Writer):
    val = float(EVAL[a.function](a))
    w.json("eval.json", {"function": a.function, "value": val})
    print(repr(val))
    return EXIT_OK, {"value": val}


def cmd_landscape(a, w: Writer):
    rows = []
    for p in a.p:
        uth = sf.u_th(p)
        for fct in a.u_factors:
            m = ls.landscape_argmax(p, fct * uth, grid=a.grid)
            rows.append([p, fct, m.u, m.r_star, m.psi_max, m.margin])
    w.csv("landscape.csv", ["p", "u_factor", "u", "r_star", "psi_max", "margin"], rows)
    if a.curve_u is not None:
        r = np.linspace(-1, 1, a.points)
        w.csv("psi_bar_curve.csv", ["p", "r", "psi_bar"],
              [[p, x, ls.psi_bar(p, a.curve_u, float(x))] for p in a.p for x in r])
    return EXIT_OK, {"rows": len(rows)}


def cmd_certify(a, w: Writer):
    if a.target == "q-profile":
        certs = [cert.certify_q_negativity(p, t0=a.t0, mesh_points=a.mesh) for p in a.p]
    elif a.target == "tilde-q10":
        certs = [cert.certify_tilde_q10(mesh_points=a.mesh, t0=a.t0)]
    else:
        chain = cert.tau_chain(a.p_max)
        vals = [t for _, t in chain]
        ok = vals[[p for p, _ in chain].index(10)] < 0 if a.p_max >= 10 else True
        ok = ok and all(b < c for c, b in zip(vals, vals[1:]))
        w.json("tau.json", {"tau": [{"p": p, "tau": t} for p, t in chain], "verdict": "pass" if ok else "fail"})
        return (EXIT_OK if ok else EXIT_FAIL), {"verdict": ok}
    docs = [c.to_json() for c in certs]
    w.json(f"certificate_{a.target}.json", {"certificates": docs})
    ok = all(c.passed for c in certs)
    return (EXIT_OK if ok else EXIT_FAIL), {"verdicts": [d["verdict"] for d in docs]}


def cmd_figures(a, w: Writer):
    if a.figure == "q-curves":
        qc = cert.q_curves_table((3, 10), a.points)
        w.csv("q_curves.csv", ["r", "p", "Q"], qc.rows())
        return EXIT_OK, {"violations": len(qc.violations)}
    r = np.linspace(a.left, 1.0, a.points)[:-1]
    w.csv("q_tilde_10.csv", ["r", "Q_tilde"], zip(r, cert.tilde_q(10, r)))
    return EXIT_OK, {}


def cmd_rmt(a, w: Writer, rng):
    if a.task == "ghat":
        g = rm.ghat_curve(a.n, a.shift, a.rho, a.samples, rng, threads=a.threads)
        w.csv("ghat.csv", ["rho", "mean", "se"], g.rows())
        w.json("ghat.json", {"rho": g.rho, "mean": g.mean, "se": g.se, "cov": g.cov, "n_samples": g.n_samples})
        return EXIT_OK, {}
    if a.task == "det-moment":
        e = rm.det_abs_moment(a.n, a.shift, a.power, a.samples, rng, threads=a.threads)
        w.json("det_moment.json", {"estimate": e.as_dict()})
        return EXIT_OK, e.as_dict()
    if a.task == "perturb":
        r = rm.det_perturb_check(a.n, a.d, a.trials, rng)
        w.json("perturb.json", asdict(r))
        return (EXIT_OK if r.violations == 0 else EXIT_FAIL), asdict(r)
    if a.task == "tail":
        r = rm.tail_check(a.n, a.m, a.samples, rng)
        w.json("tail.json", {**asdict(r), "within_bound": r.within_bound})
        return EXIT_OK, {"within_bound": r.within_bound}
    s = rm.spectral_summary(rm.goe_sample(a.n, rng))
    w.csv("spectrum.csv", ["eigenvalue"], [[x] for x in s.eigenvalues])
    w.json("spectrum.json", {"n": s.n, "max_abs": s.max_abs, "semicircle_distance": s.semicircle_distance})
    return EXIT_OK, {"semicircle_distance": s.semicircle_distance}


def cmd_kacrice(a, w: Writer, rng):
    if a.task == "first":
        r = kr.first_moment(a.p, a.N, a.u, a.samples, rng, threads=a.threads)
        w.json("first_moment.json", r.as_dict())
        return EXIT_OK, {"log_per_n": r.log_per_n}
    if a.task == "second":
        r = kr.second_moment(a.p, a.N, (-math.inf, a.u), (a.r_min, a.r_max), a.samples, rng, threads=a.threads)
        w.json("second_moment.json", r.as_dict())
        return EXIT_OK, {"log_per_n": r.log_per_n}
    rows = kr.asymptote_report(a.p, a.u, a.N_list, a.samples, rng, threads=a.threads)
    cols = ["N", "first_ln_per_n", "theta", "first_abs_error", "second_ln_per_n", "two_theta", "ratio_ln"]
    w.csv("asymptote.csv", cols, [["" if r[c] is None else r[c] for c in cols] for r in rows])
    return EXIT_OK, {"rows": len(rows)}


def cmd_enumerate(a, w: Writer, rng):
    if a.task == "points":
        H = en.sample_hamiltonian(a.p, a.N, rng)
        cps = en.critical_points(H, a.starts, rng)
        w.json("critical_points.json", cps.to_json())
        return EXIT_OK, {"count": len(cps)}
    if a.task == "concentration":
        rep = en.concentration_experiment(a.p, a.N, a.u, a.reps, rng, n_starts=a.starts, threads=a.threads)
        w.json("concentration.json", rep)
        return EXIT_OK, {"ratio": rep["ratio"]}
    rows = en.ground_state_experiment(a.p, a.N_list, a.reps, rng, n_starts=a.starts, threads=a.threads)
    w.csv("ground_state.csv", ["N", "mean", "std", "se", "target", "gap"],
          [[r["N"], r["mean"], r["std"], r["se"], r["target"], r["gap"]] for r in rows])
    return EXIT_OK, {"rows": len(rows)}


STOCHASTIC = {"rmt": cmd_rmt, "kacrice": cmd_kacrice, "enumerate": cmd_enumerate}
DETERMINISTIC = {"thresholds": cmd_thresholds, "eval": cmd_eval, "landscape": cmd_landscape,
                 "certify": cmd_certify, "figures": cmd_figures}


# --- parser --------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_help(sys.stderr)
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", default=None, help=f"output directory (default ${OUT_ENV} or .)")
    common.add_argument("--config", default=None, help="key = value file; flags override it")
    common.add_argument("--seed", type=int, default=None, help="64-bit seed (random if omitted, always recorded)")
    common.add_argument("--threads", type=int, default=os.cpu_count() or 1)

    ap = _Parser(prog="pspin", description="Complexity landscape of the spherical pure p-spin model")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("thresholds", parents=[common], help="E_inf, E_0 and u_th per p")
    s.add_argument("--p-min", type=int, default=3)
    s.add_argument("--p-max", type=int, default=10)

    s = sub.add_parser("eval", parents=[common], help="evaluate one scalar function")
    s.add_argument("function", choices=sorted(EVAL))
    s.add_argument("--p", type=int, default=3)
    s.add_argument("--x", type=float, default=0.0)
    s.add_argument("--u", type=float, default=0.0)
    s.add_argument("--u2", type=float, default=None)
    s.add_argument("--r", type=float, default=0.0)

    s = sub.add_parser("landscape", parents=[common], help="maximizers of the diagonal two-point exponent")
    s.add_argument("--p", type=_ints, default=[3, 4, 5, 10])
    s.add_argument("--u-factors", type=_floats, default=[0.5, 0.9, 0.99, 1.01, 1.5])
    s.add_argument("--grid", type=int, default=2001)
    s.add_argument("--curve-u", type=float, default=None)
    s.add_argument("--points", type=int, default=401)

    s = sub.add_parser("certify", parents=[common], help="mesh-plus-derivative negativity certificates")
    s.add_argument("target", choices=["q-profile", "tilde-q10", "tau"])
    s.add_argument("--p", type=_ints, default=list(range(3, 11)))
    s.add_argument("--t0", type=float, default=0.01)
    s.add_argument("--mesh", type=int, default=10_000)
    s.add_argument("--p-max", type=int, default=40)

    s = sub.add_parser("figures", parents=[common], help="tabulated curve data")
    s.add_argument("figure", choices=["q-curves", "q-tilde"])
    s.add_argument("--points", type=int, default=1001)
    s.add_argument("--left", type=float, default=0.6)

    s = sub.add_parser("rmt", parents=[common], help="random-matrix experiments")
    s.add_argument("task", choices=["ghat", "det-moment", "perturb", "tail", "spectrum"])
    s.add_argument("--n", type=int, default=6)
    s.add_argument("--shift", type=float, default=2.5)
    s.add_argument("--rho", type=_floats, default=[-1, -0.75, -0.5, -0.25, 0, 0.25, 0.5, 0.75, 1])
    s.add_argument("--power", type=int, default=1)
    s.add_argument("--samples", type=int, default=100_000)
    s.add_argument("--d", type=int, default=2)
    s.add_argument("--trials", type=int, default=10_000)
    s.add_argument("--m", type=float, default=2.5)

    s = sub.add_parser("kacrice", parents=[common], help="finite-N moment estimates")
    s.add_argument("task", choices=["first", "second", "asymptote"])
    s.add_argument("--p", type=int, default=3)
    s.add_argument("--N", type=int, default=10)
    s.add_argument("--N-list", type=_ints, default=[10, 20, 40])
    s.add_argument("--u", type=float, default=-1.6)
    s.add_argument("--r-min", type=float, default=-0.99)
    s.add_argument("--r-max", type=float, default=0.99)
    s.add_argument("--samples", type=int, default=20_000)

    s = sub.add_parser("enumerate", parents=[common], help="direct critical-point enumeration")
    s.add_argument("task", choices=["points", "concentration", "ground-state"])
    s.add_argument("--p", type=int, default=3)
    s.add_argument("--N", type=int, default=3)
    s.add_argument("--N-list", type=_ints, default=[4, 6, 8])
    s.add_argument("--u", type=float, default=-0.5)
    s.add_argument("--reps", type=int, default=100)
    s.add_argument("--starts", type=int, default=300)
    return ap


def _explicit_dests(parser: argparse.ArgumentParser, command: str, argv: list[str]) -> set[str]:
    sp = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction)).choices[command]
    opts = {s: act.dest for act in sp._actions for s in act.option_strings}
    return {opts[t.split("=", 1)[0]] for t in argv if t.split("=", 1)[0] in opts}


def _apply_config(parser, args, argv) -> None:
    if not args.config:
        return
    sp = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction)).choices[args.command]
    acts = {act.dest: act for act in sp._actions}
    given = _explicit_dests(parser, args.command, argv)
    for key, raw in load_config(args.config).items():
        if key not in acts or key in ("config", "help"):
            raise UsageError(f"unknown config key {key!r} for {args.command}")
        if key in given:
            continue  # flag wins
        conv = acts[key].type or str
        try:
            setattr(args, key, conv(raw))
        except ValueError as exc:
            raise UsageError(f"bad value for {key}: {raw!r}") from exc


def run(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        _apply_config(parser, args, argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE

    out = Path(args.out or os.environ.get(OUT_ENV) or ".")
    stochastic = args.command in STOCHASTIC
    if stochastic and args.seed is None:
        args.seed = int(np.random.SeedSequence().generate_state(1, np.uint64)[0])
    params = {k: v for k, v in sorted(vars(args).items()) if k not in ("out", "config", "threads", "seed")}
    seed = args.seed if stochastic else None
    rec = RunRecord(args.command, params, seed, tool_version(), time.strftime("%Y-%m-%dT%H:%M:%S%z"))
    w = Writer(out, seed, params)
    try:
        if stochastic:
            code, summary = STOCHASTIC[args.command](args, w, np.random.default_rng(args.seed))
        else:
            code, summary = DETERMINISTIC[args.command](args, w)
    except DomainError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    rec.finished = time.strftime("%Y-%m-%dT%H:%M:%S%z")
    rec.outputs = w.paths
    rec.summary = _clean(summary)
    with open(out / "runs.jsonl", "a", encoding="utf-8") as fh:
        fh.write(json.dumps(_clean(asdict(rec)), sort_keys=True) + "\n")
    return code


def main() -> None:
    sys.exit(run())
