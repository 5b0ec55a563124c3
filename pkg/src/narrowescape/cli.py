"""Command-line entry point.

Every subcommand writes a CSV (``--output``, default ``narrowescape-<cmd>.csv``)
whose first line is a comment with the format version and a hash of the
resolved configuration, followed by a ``# config`` line with the
configuration itself, then the header row. A short summary goes to stdout.

Exit codes: 0 success, 2 usage error, 3 validation failure, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import os
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import asymptotics, geometry, greens, helmholtz, validation
from .errors import InvalidInput, NarrowEscapeError, UsageError
from .mcsim import engine

FORMAT_VERSION = "narrowescape-csv v1"
EXIT_OK, EXIT_USAGE, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 2, 3, 4
FORMULAS = ("net", "net-ball", "eigenvalue", "leak", "leak-multi", "singular")
FORMULA_REQUIRES = {
    "net": ("volume", "a", "D", "kappa_sum"),
    "net-ball": ("R", "a", "D"),
    "eigenvalue": ("volume", "a", "D", "kappa_sum"),
    "leak": ("a", "density", "D"),
    "leak-multi": ("leak", "D"),
    "singular": ("distance", "kappa_sum"),
}


@dataclass(frozen=True)
class RunConfig:
    subcommand: str
    params: dict
    output: Optional[str]
    seed: int
    format_version: str = FORMAT_VERSION

    def record(self) -> dict:
        return {"subcommand": self.subcommand, "params": self.params, "output": self.output,
                "seed": self.seed, "format_version": self.format_version}

    def config_hash(self) -> str:
        blob = json.dumps(self.record(), sort_keys=True, default=str)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


# ------------------------------------------------------------------ parsing


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _positive(kind=float):
    def conv(s):
        try:
            v = kind(s)
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected a {kind.__name__}, got {s!r}")
        if not (math.isfinite(v) and v > 0):
            raise argparse.ArgumentTypeError(f"must be positive, got {s}")
        return v
    conv.__name__ = f"positive {kind.__name__}"
    return conv


def _finite(s):
    try:
        v = float(s)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {s!r}")
    if not math.isfinite(v):
        raise argparse.ArgumentTypeError(f"must be finite, got {s}")
    return v


def _float_list(s):
    try:
        return [float(v) for v in s.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {s!r}")


def _seed(s):
    try:
        v = int(s)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {s!r}")
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError(f"must be a 64-bit unsigned integer, got {s}")
    return v


def _mc_flags(p):
    p.add_argument("--domain", required=True, help="ball:R=1, box:1,1,1 or implicit:<path>")
    p.add_argument("--window", action="append", help="cap:role=escape,center=x,y,z,a=r or face:role=target,face=+z (repeatable)")
    p.add_argument("--start", default="uniform", help="uniform, point:x,y,z, face:+z or cap:center=x,y,z,a=r")
    p.add_argument("--D", type=_positive(), default=1.0)
    p.add_argument("--dt", type=_positive())
    p.add_argument("--trajectories", type=_positive(int), default=1000)
    p.add_argument("--max-time", type=_positive())
    p.add_argument("--workers", type=_positive(int), default=os.cpu_count() or 1)
    p.add_argument("--allow-large-dt", action="store_true", default=None)
    p.add_argument("--richardson", action="store_true", default=None, help="also run dt/2 and extrapolate")


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="key=value file; flags override its entries")
    common.add_argument("--output", help="CSV path")
    common.add_argument("--seed", type=_seed)

    top = _Parser(prog="narrowescape", description="Narrow escape asymptotics, solvers and simulations.")
    sub = top.add_subparsers(dest="subcommand", required=True, parser_class=_Parser)

    p = sub.add_parser("asymptotics", parents=[common], help="closed-form expansions")
    p.add_argument("--formula", choices=FORMULAS, required=True)
    p.add_argument("--R", type=_positive())
    p.add_argument("--a", type=_positive())
    p.add_argument("--D", type=_positive())
    p.add_argument("--volume", type=_positive())
    p.add_argument("--kappa-sum", type=_finite)
    p.add_argument("--density", type=_finite, help="unperturbed density at the leak")
    p.add_argument("--leak", action="append", help="a=<radius>,p=<density> (repeatable)")
    p.add_argument("--distance", type=_positive())

    p = sub.add_parser("patch-v0", parents=[common], help="log singularity over a quadratic patch")
    p.add_argument("--kappa1", type=_finite, required=True)
    p.add_argument("--kappa2", type=_finite, required=True)
    p.add_argument("--patch-radius", type=_positive(), default=0.1)
    p.add_argument("--offsets", type=_float_list)

    p = sub.add_parser("ball-log-slope", parents=[common], help="boundary log coefficient of the ball")
    p.add_argument("--R", type=_positive(), default=1.0)
    p.add_argument("--truncation", type=_positive(int), default=64)

    p = sub.add_parser("helmholtz", parents=[common], help="disk integral equation and NET")
    p.add_argument("--a", type=_positive(), required=True)
    p.add_argument("--kappa-sum", type=_finite, required=True)
    p.add_argument("--volume", type=_positive(), default=4 * math.pi / 3)
    p.add_argument("--D", type=_positive(), default=1.0)
    p.add_argument("--nodes", type=_positive(int), default=16)

    for name, text in (("escape-mc", "mean first passage time"), ("survival-mc", "survival decay rate"),
                       ("leakage-mc", "capture fractions")):
        p = sub.add_parser(name, parents=[common], help=text)
        _mc_flags(p)
        if name == "survival-mc":
            p.add_argument("--fit-window", type=_float_list, help="t_lo,t_hi (default: NET, 4 NET)")
        if name == "leakage-mc":
            p.add_argument("--injection-rate", type=_positive(), default=1.0)

    p = sub.add_parser("validate", parents=[common], help="run the cross-validation suite")
    p.add_argument("--suite", choices=("quick", "full"), default="quick")
    p.add_argument("--tolerance", type=float, help="replace every relative tolerance")
    return top


def _read_config_file(path: str) -> list[str]:
    """Turn ``key = value`` lines into ``--key value`` tokens."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"--config: cannot read {path}: {exc}") from exc
    tokens = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise UsageError(f"--config {path}:{lineno}: expected key=value, got {raw!r}")
        if key in ("config", "subcommand"):
            raise UsageError(f"--config {path}:{lineno}: key {key!r} is not allowed in a config file")
        flag = "--" + key.replace("_", "-")
        if value.lower() == "true":
            tokens.append(flag)
        else:
            tokens += [flag, value]
    return tokens


_APPEND_FLAGS = ("--window", "--leak")


def _splice_config(argv: list[str]) -> list[str]:
    """Insert ``--config`` file tokens right after the subcommand.

    Later flags win in argparse, so command-line values override the file;
    repeatable flags given on the command line replace the file's list.
    """
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv[1:])
    if not known.config:
        return argv
    tokens = _read_config_file(known.config)
    for flag in _APPEND_FLAGS:
        if any(a == flag or a.startswith(flag + "=") for a in argv):
            kept = []
            it = iter(tokens)
            for t in it:
                if t == flag:
                    next(it, None)
                else:
                    kept.append(t)
            tokens = kept
    return argv[:1] + tokens + argv[1:]


def parse_args(argv: Optional[Sequence[str]] = None) -> RunConfig:
    argv = list(sys.argv[1:] if argv is None else argv)
    if argv and not argv[0].startswith("-"):
        argv = _splice_config(argv)
    params = vars(build_parser().parse_args(argv))
    cmd = params.pop("subcommand")
    params.pop("config", None)
    output = params.pop("output", None)
    seed = params.pop("seed", None)
    if seed is None:
        env = os.environ.get("NE_SEED")
        try:
            seed = _seed(env) if env is not None else 0
        except argparse.ArgumentTypeError as exc:
            raise UsageError(f"NE_SEED: {exc}") from exc

    if cmd == "asymptotics":
        for key in FORMULA_REQUIRES[params["formula"]]:
            if params.get(key) is None:
                raise UsageError(f"--{key.replace('_', '-')} is required for --formula {params['formula']}")
    if cmd in ("escape-mc", "survival-mc", "leakage-mc") and not params.get("window"):
        raise UsageError("--window is required (at least one)")
    if cmd == "survival-mc" and params.get("fit_window") is not None and len(params["fit_window"]) != 2:
        raise UsageError("--fit-window needs exactly two numbers t_lo,t_hi")
    for key in ("allow_large_dt", "richardson"):
        if key in params:
            params[key] = bool(params[key])
    return RunConfig(cmd, params, output or f"narrowescape-{cmd}.csv", seed)


# ------------------------------------------------------- window grammar


def _keyvals(text: str, flag: str) -> dict:
    """``k=v,k=x,y,z`` with bare tokens continuing the previous value."""
    out: dict[str, list[str]] = {}
    key = None
    for tok in text.split(","):
        tok = tok.strip()
        if "=" in tok:
            key, _, val = tok.partition("=")
            out[key.strip()] = [val.strip()]
        elif key is not None and tok:
            out[key].append(tok)
        else:
            raise UsageError(f"{flag}: cannot parse {text!r}")
    return {k: ",".join(v) for k, v in out.items()}


def _point(s: str, flag: str) -> tuple:
    try:
        v = tuple(float(x) for x in s.split(","))
    except ValueError:
        raise UsageError(f"{flag}: expected x,y,z, got {s!r}")
    if len(v) != 3:
        raise UsageError(f"{flag}: expected x,y,z, got {s!r}")
    return v


def parse_window(domain, text: str):
    kind, _, rest = text.partition(":")
    kv = _keyvals(rest, "--window")
    role = kv.pop("role", None)
    try:
        if kind == "cap":
            w = geometry.make_window(domain, _point(kv.pop("center", ""), "--window center"),
                                     float(kv.pop("a")), role or "escape")
        elif kind == "face":
            w = geometry.face_window(domain, kv.pop("face"), role or "target")
        else:
            raise UsageError(f"--window: unknown kind {kind!r}; expected cap: or face:")
    except KeyError as exc:
        raise UsageError(f"--window {text!r}: missing key {exc.args[0]!r}") from exc
    except ValueError as exc:
        raise UsageError(f"--window {text!r}: {exc}") from exc
    if kv:
        raise UsageError(f"--window {text!r}: unknown keys {sorted(kv)}")
    return w


def parse_start(domain, text: str):
    kind, _, rest = text.partition(":")
    if kind == "uniform" and not rest:
        return engine.UniformVolume()
    if kind == "point":
        return engine.FixedPoint(_point(rest, "--start"))
    if kind in ("face", "cap"):
        return engine.SourceSurface(parse_window(domain, f"{kind}:face={rest}" if kind == "face" else text))
    raise UsageError(f"--start: expected uniform, point:, face: or cap:, got {text!r}")


def _sim_config(cfg: RunConfig) -> engine.SimConfig:
    p = cfg.params
    domain = geometry.parse_domain(p["domain"])
    return engine.SimConfig(
        domain, [parse_window(domain, w) for w in p["window"]], p["D"], dt=p["dt"],
        trajectories=p["trajectories"], seed=cfg.seed, start=parse_start(domain, p["start"]),
        max_time=p["max_time"], allow_large_dt=p["allow_large_dt"], workers=p["workers"],
    )


# --------------------------------------------------------------- output


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "%.17e" % v
    return str(v)


def write_csv(path: str, cfg: RunConfig, header: Sequence[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# {cfg.format_version} config_hash={cfg.config_hash()}\n")
        fh.write(f"# config {json.dumps(cfg.record(), sort_keys=True, default=str)}\n")
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(header)
        out.writerows([_fmt(v) for v in row] for row in rows)


def _leaks(specs: Sequence[str]) -> list:
    out = []
    for s in specs:
        kv = _keyvals(s, "--leak")
        try:
            out.append(asymptotics.LeakSpec(float(kv["a"]), float(kv["p"])))
        except (KeyError, ValueError) as exc:
            raise UsageError(f"--leak {s!r}: expected a=<radius>,p=<density>") from exc
    return out


def cmd_asymptotics(cfg: RunConfig) -> int:
    p = cfg.params
    f = p["formula"]
    if f in ("net", "net-ball", "eigenvalue"):
        if f == "net":
            e = asymptotics.net_general(p["volume"], p["a"], p["D"], p["kappa_sum"])
        elif f == "net-ball":
            e = asymptotics.net_ball(p["R"], p["a"], p["D"])
        else:
            e = asymptotics.eigenvalue_small_window(p["volume"], p["a"], p["D"], p["kappa_sum"])
        header = ["formula", "leading", "log_correction", "value", "epsilon", "regime_ok", "form"]
        row = [f, e.leading, e.log_correction, e.value, e.epsilon, e.regime_ok, e.form]
        print(f"{f}: value {e.value:.10g} (leading {e.leading:.10g}), regime_ok={e.regime_ok}")
    else:
        if f == "leak":
            v = asymptotics.leakage_flux(asymptotics.LeakSpec(p["a"], p["density"]), p["D"])
        elif f == "leak-multi":
            v = asymptotics.leakage_flux_multi(_leaks(p["leak"]), p["D"])
        else:
            v = asymptotics.neumann_singular_part(p["distance"], p["kappa_sum"])
        header, row = ["formula", "value"], [f, v]
        print(f"{f}: {v:.10g}")
    write_csv(cfg.output, cfg, header, [row])
    return EXIT_OK


def cmd_patch_v0(cfg: RunConfig) -> int:
    p = cfg.params
    try:
        spec = greens.PatchSpec(p["kappa1"], p["kappa2"], p["patch_radius"],
                                *(() if p["offsets"] is None else (tuple(p["offsets"]),)))
    except InvalidInput as exc:
        raise UsageError(f"--offsets/--patch-radius: {exc}") from exc
    fit, values = greens.patch_log_slope(spec)
    ref = (p["kappa1"] + p["kappa2"]) / (8 * math.pi)
    write_csv(cfg.output, cfg, ["offset", "v0"], zip(spec.probe_offsets, values))
    print(f"log slope {fit.slope:.10g} (reference {ref:.10g}), fit residual {fit.residual:.3g}")
    return EXIT_OK


def cmd_ball_log_slope(cfg: RunConfig) -> int:
    R = cfg.params["R"]
    fit = greens.boundary_log_coefficient_ball(R, cfg.params["truncation"])
    ref = 1 / (4 * math.pi * R)
    write_csv(cfg.output, cfg, ["R", "slope", "intercept", "residual", "reference"],
              [[R, fit.slope, fit.intercept, fit.residual, ref]])
    print(f"log slope {fit.slope:.10g} (reference {ref:.10g})")
    return EXIT_OK


def cmd_helmholtz(cfg: RunConfig) -> int:
    p = cfg.params
    V, a, D, k = p["volume"], p["a"], p["D"], p["kappa_sum"]
    ell = V ** (1 / 3)
    if not a < ell:
        raise UsageError(f"--a must be below volume^(1/3) = {ell:.6g}")
    grid = helmholtz.solve_disk(helmholtz.HelmholtzProblem(a / ell, -k * ell / (8 * math.pi), -1.0, p["nodes"]))
    net = helmholtz.net_from_solver(V, a, D, k, p["nodes"])
    ref = asymptotics.net_general(V, a, D, k).value
    r = grid.nodes * ell
    write_csv(cfg.output, cfg, ["r", "bounded_part", "g"],
              zip(r, grid.weights_values, grid(grid.nodes)))
    print(f"scaled C = 1, total flux {helmholtz.total_flux(grid):.10g}")
    print(f"NET {net:.10g}, closed form {ref:.10g}, relative difference {(net - ref) / ref:.3e}")
    return EXIT_OK


def _trajectory_rows(stats: engine.EscapeStats, dt: float):
    for i, (t, w) in enumerate(zip(stats.times, stats.window_ids)):
        yield [dt, i, t, int(w)]


def _run_pair(cfg: RunConfig, run):
    sc = _sim_config(cfg)
    first = run(sc)
    second = run(engine.halved(sc)) if cfg.params["richardson"] else None
    return sc, first, second


def cmd_escape_mc(cfg: RunConfig) -> int:
    sc, s1, s2 = _run_pair(cfg, engine.estimate_net)
    rows = list(_trajectory_rows(s1, sc.dt))
    if s2 is not None:
        rows += _trajectory_rows(s2, sc.dt / 2)
    write_csv(cfg.output, cfg, ["dt", "trajectory", "fpt", "window"], rows)
    for s in filter(None, (s1, s2)):
        print(f"dt {s.dt_used:.4g}: mean FPT {s.mean_fpt:.6g} +- {s.std_error:.3g}, censored {s.censored}/{s.n}")
    if s2 is not None:
        ext = engine.richardson_extrapolate(s1, s2)
        print(f"extrapolated mean FPT {ext.value:.6g} +- {ext.std_error:.3g}")
    pred = engine.predicted_net(sc)
    if pred is not None:
        print(f"small-window prediction {pred:.6g}")
    return EXIT_OK


def cmd_survival_mc(cfg: RunConfig) -> int:
    sc, s1, s2 = _run_pair(cfg, engine.estimate_net)
    pred = engine.predicted_net(sc)
    window = cfg.params["fit_window"]
    if window is None:
        if pred is None:
            raise UsageError("--fit-window is required when no NET prediction is available")
        window = (pred, 4 * pred)
    rows = list(_trajectory_rows(s1, sc.dt))
    if s2 is not None:
        rows += _trajectory_rows(s2, sc.dt / 2)
    write_csv(cfg.output, cfg, ["dt", "trajectory", "fpt", "window"], rows)
    for s in filter(None, (s1, s2)):
        lam, se = engine.fit_survival_rate(s, window, pred)
        print(f"dt {s.dt_used:.4g}: decay rate {lam:.6g} +- {se:.3g} on [{window[0]:.4g}, {window[1]:.4g}]")
    if s2 is not None:
        ext = engine.extrapolate_rate(s1, s2, window, pred)
        print(f"extrapolated decay rate {ext.value:.6g} +- {ext.std_error:.3g}")
    if pred is not None:
        print(f"small-window prediction {1 / pred:.6g}")
    return EXIT_OK


def cmd_leakage_mc(cfg: RunConfig) -> int:
    rate = cfg.params["injection_rate"]
    sc, r1, r2 = _run_pair(cfg, lambda c: engine.leakage_experiment(c, rate))
    rows = list(_trajectory_rows(r1.stats, sc.dt))
    if r2 is not None:
        rows += _trajectory_rows(r2.stats, sc.dt / 2)
    write_csv(cfg.output, cfg, ["dt", "trajectory", "fpt", "window"], rows)
    for r in filter(None, (r1, r2)):
        parts = ", ".join(f"{i}:{r.roles[i].value}={r.fractions[i]:.5g}" for i in sorted(r.fractions))
        print(f"dt {r.stats.dt_used:.4g}: {parts}; leak total {r.role_fraction('leak'):.5g} "
              f"+- {r.role_std_error('leak'):.2g}, censored {r.censored_fraction:.3g}")
    if r2 is not None:
        ext = engine.extrapolate_fraction(r1, r2)
        print(f"extrapolated leak fraction {ext.value:.6g} +- {ext.std_error:.3g}")
    return EXIT_OK


def cmd_validate(cfg: RunConfig) -> int:
    p = cfg.params
    report = validation.run_validation(p["suite"], cfg.seed, p["tolerance"],
                                       progress=lambda m: print(m, file=sys.stderr))
    write_csv(cfg.output, cfg,
              ["experiment", "reference", "provenance", "computed", "relative_error", "tolerance", "passed", "kind"],
              ([r.experiment, r.reference, r.provenance, r.computed, r.relative_error, r.tolerance, r.passed, r.kind]
               for r in report.rows))
    for r in report.rows:
        status = "PASS" if r.passed else "FAIL"
        if r.kind == "relative":
            print(f"{status}  {r.experiment}: {r.computed:.6g} vs {r.reference:.6g} ({r.provenance}), "
                  f"rel err {r.relative_error:+.3e}, tol {r.tolerance:.3g}")
        else:
            print(f"{status}  {r.experiment}: {r.computed:.6g} (threshold {r.reference:.6g}, {r.provenance})")
    n_fail = sum(not r.passed for r in report.rows)
    print(f"{len(report.rows) - n_fail}/{len(report.rows)} rows passed")
    return EXIT_OK if report.passed else EXIT_VALIDATION


COMMANDS = {
    "asymptotics": cmd_asymptotics,
    "patch-v0": cmd_patch_v0,
    "ball-log-slope": cmd_ball_log_slope,
    "helmholtz": cmd_helmholtz,
    "escape-mc": cmd_escape_mc,
    "survival-mc": cmd_survival_mc,
    "leakage-mc": cmd_leakage_mc,
    "validate": cmd_validate,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        cfg = parse_args(argv)
        return COMMANDS[cfg.subcommand](cfg)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except InvalidInput as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NarrowEscapeError as exc:
        print(f"numerical failure ({type(exc).__name__}): {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
