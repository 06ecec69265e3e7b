"""Command-line front end.

Every command writes its result to ``--out`` (or standard output) and,
when ``--out`` is given, a ``<out>.meta.json`` sidecar holding the full
resolved configuration, seeds, error certificates and wall-clock time.
The sidecar can be passed back through ``--config`` to rerun the command.

Exit status: 0 on success, 1 if ``verify`` finds a failing check, 2 for
an invalid configuration, 3 if a requested tolerance cannot be met.
"""

from __future__ import annotations

import argparse
import hashlib
import io
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .charlier import (
    CharlierOverflowError,
    DivergentInputError,
    ModelParams,
    TruncationPolicy,
    charlier_q,
    poisson_mass,
)
from .spectral import (
    ToleranceUnreachableError,
    autocovariance,
    solve_backward,
    solve_forward,
    transition_pmf,
)
from .stochastic import mc_autocovariance, mc_mean, mc_transition_pmf

COMMANDS = ("solve-backward", "solve-forward", "transition", "simulate", "covariance", "verify")

# keys that do not change the computed result
_NON_RESULT_KEYS = {"out", "config", "command"}


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# parsing


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="flat key=value file or a .meta.json sidecar")
    p.add_argument("--a", type=float, help="immigration rate")
    p.add_argument("--b", type=float, help="per-capita death rate")
    p.add_argument("--nu", type=float, help="fractional order in (0, 1]")
    p.add_argument("--t", type=float, help="single time")
    p.add_argument("--t-grid", dest="t_grid",
                   help="comma list, or start:stop:count for an even grid")
    p.add_argument("--s", type=float, help="earlier time for covariance")
    p.add_argument("--x-max", dest="x_max", type=int, help="largest state reported")
    p.add_argument("--x0", type=int, help="initial state for transition and simulate")
    p.add_argument("--datum",
                   help="constant[:c], identity, delta@k, poisson, mode@n, "
                        "tabulated:v0,v1,... or tabulated:@file")
    p.add_argument("--tol", type=float, help="target absolute truncation error")
    p.add_argument("--n-max", dest="n_max", type=int, help="cap on retained modes")
    p.add_argument("--quad-tol", dest="quad_tol", type=float, help="covariance quadrature tolerance")
    p.add_argument("--method", choices=("quadrature", "mc"), help="covariance estimator")
    p.add_argument("--paths", type=int, help="Monte Carlo paths")
    p.add_argument("--seed", type=int, help="Monte Carlo seed")
    p.add_argument("--out", help="result file (default: standard output)")
    p.add_argument("--format", choices=("csv", "json"), help="result format")


DEFAULTS = {
    "a": 1.0, "b": 1.0, "nu": 1.0, "t": None, "t_grid": None, "s": None,
    "x_max": 20, "x0": 0, "datum": "identity", "tol": 1e-10, "n_max": 200,
    "quad_tol": 1e-10, "method": "quadrature", "paths": 100_000, "seed": 0,
    "out": None, "format": None,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fracid",
        description="Fractional immigration-death process: spectral solutions and simulation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "solve-backward": "backward equation surface u(t, x) for a datum g",
        "solve-forward": "forward equation surface u(t, x) for a datum f",
        "transition": "transition mass p(t, x; x0) over x",
        "simulate": "Monte Carlo law (csv) or mean (json) of N(t) from x0",
        "covariance": "stationary autocovariance Cov(N(t), N(s))",
        "verify": "run the invariant suite and print a pass/fail table",
    }
    for name in COMMANDS:
        _add_common(sub.add_parser(name, help=helps[name]))
    return parser


def _read_config(path: str) -> dict:
    text = Path(path).read_text()
    if path.endswith(".json"):
        data = json.loads(text)
        return dict(data.get("config", data))
    out = {}
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config line without '=': {raw!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = val
    return out


def _coerce(key: str, value):
    if value is None:
        return None
    if key in ("a", "b", "nu", "t", "s", "tol", "quad_tol"):
        return float(value)
    if key in ("x_max", "x0", "n_max", "paths", "seed"):
        f = float(value)
        if f != int(f):
            raise ConfigError(f"{key} must be an integer, got {value!r}")
        return int(f)
    return str(value)


def resolve_config(args: argparse.Namespace) -> dict:
    cfg = dict(DEFAULTS)
    if args.config:
        try:
            file_cfg = _read_config(args.config)
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
        unknown = set(file_cfg) - set(DEFAULTS) - {"command"}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        file_cfg.pop("command", None)
        cfg.update(file_cfg)
    for key in DEFAULTS:
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    try:
        cfg = {k: _coerce(k, v) for k, v in cfg.items()}
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    cfg["command"] = args.command
    if cfg["format"] is None:
        cfg["format"] = "json" if args.command == "covariance" else "csv"
    _validate(cfg)
    return cfg


def _validate(cfg: dict):
    if not (cfg["a"] > 0 and cfg["b"] > 0 and math.isfinite(cfg["a"]) and math.isfinite(cfg["b"])):
        raise ConfigError("a and b must be positive and finite")
    if not 0 < cfg["nu"] <= 1:
        raise ConfigError("nu must lie in (0, 1]")
    if cfg["x_max"] < 0 or cfg["x0"] < 0:
        raise ConfigError("x-max and x0 must be non-negative")
    if not cfg["tol"] > 0 or not cfg["quad_tol"] > 0:
        raise ConfigError("tolerances must be positive")
    if cfg["n_max"] < 1:
        raise ConfigError("n-max must be at least 1")
    if cfg["paths"] < 1:
        raise ConfigError("paths must be positive")
    if cfg["command"] in ("solve-backward", "solve-forward", "transition", "simulate"):
        times = parse_times(cfg)
        if cfg["command"] in ("transition", "simulate") and np.any(times <= 0):
            raise ConfigError("times must be positive for this command")
        if cfg["command"] == "simulate" and cfg["format"] == "csv" and cfg["paths"] < 1000:
            raise ConfigError("an empirical law needs at least 1000 paths")
    if cfg["command"] == "covariance":
        if cfg["t"] is None or cfg["s"] is None:
            raise ConfigError("covariance needs --t and --s")
        if not 0 < cfg["s"] <= cfg["t"]:
            raise ConfigError("covariance needs 0 < s <= t")
        if cfg["format"] != "json":
            raise ConfigError("covariance is a scalar; use --format json")
    if cfg["command"] in ("solve-backward", "solve-forward"):
        parse_datum(cfg["datum"], cfg["a"] / cfg["b"])


def parse_times(cfg: dict) -> np.ndarray:
    if cfg["t_grid"] is not None:
        spec = cfg["t_grid"]
        try:
            if ":" in spec:
                lo, hi, num = spec.split(":")
                times = np.linspace(float(lo), float(hi), int(num))
            else:
                times = np.array([float(v) for v in spec.split(",") if v.strip()])
        except ValueError as exc:
            raise ConfigError(f"bad --t-grid {spec!r}") from exc
    elif cfg["t"] is not None:
        times = np.array([cfg["t"]])
    else:
        raise ConfigError("a time (--t) or time grid (--t-grid) is required")
    if times.size == 0 or not np.all(np.isfinite(times)) or np.any(times < 0):
        raise ConfigError("times must be finite and non-negative")
    if np.any(np.diff(times) < 0):
        raise ConfigError("time grid must be sorted")
    return times


def parse_datum(spec: str, alpha: float):
    """Return ``(callable_or_table, is_pmf)`` for a named preset."""
    name, _, arg = spec.partition("@") if "@" in spec else spec.partition(":")
    try:
        if name == "constant":
            c = float(arg) if arg else 1.0
            return (lambda z: np.full(np.shape(z), c)), False
        if name == "identity":
            return (lambda z: np.asarray(z, dtype=float)), False
        if name == "delta":
            k = int(arg)
            if k < 0:
                raise ValueError
            table = np.zeros(k + 1)
            table[k] = 1.0
            return table, True
        if name == "poisson":
            return (lambda z: poisson_mass(z, alpha)), True
        if name == "mode":
            n = int(arg)
            if n < 0:
                raise ValueError
            return (lambda z: _mode_values(n, z, alpha)), False
        if name == "tabulated":
            if arg.startswith("@"):
                arg = Path(arg[1:]).read_text().replace("\n", ",")
            table = np.array([float(v) for v in arg.split(",") if v.strip()])
            if table.size == 0 or not np.all(np.isfinite(table)):
                raise ValueError
            return table, bool(np.all(table >= 0) and abs(table.sum() - 1.0) < 1e-12)
    except (ValueError, OSError) as exc:
        raise ConfigError(f"bad datum {spec!r}") from exc
    raise ConfigError(f"unknown datum {spec!r}")


def _mode_values(n, z, alpha):
    z = np.asarray(z)
    out = [charlier_q(n, int(v), alpha) for v in z.ravel()]
    return np.array(out, dtype=float).reshape(z.shape)


def config_hash(cfg: dict) -> str:
    core = {k: v for k, v in sorted(cfg.items()) if k not in _NON_RESULT_KEYS}
    core["command"] = cfg["command"]
    blob = json.dumps(core, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# running


def _fmt(v) -> str:
    return "%.17g" % v


def _csv(rows) -> str:
    buf = io.StringIO()
    buf.write("t,x,value,err_bound\n")
    for t, x, v, e in rows:
        buf.write(f"{_fmt(t)},{int(x)},{_fmt(v)},{_fmt(e)}\n")
    return buf.getvalue()


def _surface_rows(surface):
    for i, t in enumerate(surface.times):
        for j, x in enumerate(surface.states):
            yield t, x, surface.values[i, j], surface.err_bound[i, j]


def _params(cfg):
    return ModelParams(cfg["a"], cfg["b"], cfg["nu"])


def _policy(cfg):
    return TruncationPolicy(tol=cfg["tol"], n_max_cap=cfg["n_max"])


def _run_solve(cfg, meta):
    params = _params(cfg)
    datum, is_pmf = parse_datum(cfg["datum"], params.alpha)
    times = parse_times(cfg)
    xs = np.arange(cfg["x_max"] + 1)
    if cfg["command"] == "solve-backward":
        surf = solve_backward(datum, times, xs, params, _policy(cfg))
    else:
        surf = solve_forward(datum, times, xs, params, _policy(cfg), pmf=is_pmf)
    meta["certificate"] = {
        "max_err_bound": float(surf.err_bound.max()),
        "n_terms": surf.n_terms.tolist(),
    }
    if cfg["format"] == "json":
        return json.dumps({"value": surf.values.tolist(), "err_bound": surf.err_bound.tolist(),
                           "times": times.tolist(), "states": xs.tolist(),
                           "config_hash": meta["config_hash"]}, indent=1) + "\n"
    return _csv(_surface_rows(surf))


def _run_transition(cfg, meta):
    params = _params(cfg)
    rows, worst, tails = [], 0.0, []
    for t in parse_times(cfg):
        pmf = transition_pmf(t, cfg["x0"], params, _policy(cfg), x_max=cfg["x_max"])
        rows += [(t, x, p, e) for x, p, e in zip(pmf.support, pmf.probs, pmf.err_bound)]
        worst = max(worst, float(pmf.err_bound.max()))
        tails.append(pmf.tail_mass_bound)
    meta["certificate"] = {"max_err_bound": worst, "tail_mass_bound": tails}
    if cfg["format"] == "json":
        return json.dumps({"value": [r[2] for r in rows], "err_bound": [r[3] for r in rows],
                           "config_hash": meta["config_hash"]}, indent=1) + "\n"
    return _csv(rows)


def _run_simulate(cfg, meta):
    params = _params(cfg)
    times = parse_times(cfg)
    meta["seeds"] = {"seed": cfg["seed"], "paths": cfg["paths"]}
    if cfg["format"] == "json":
        est = mc_mean(cfg["x0"], float(times[-1]), params, cfg["paths"], cfg["seed"])
        return json.dumps({"value": est.value, "std_error": est.std_error,
                           "config_hash": meta["config_hash"]}, indent=1) + "\n"
    rows = []
    for t in times:
        mc = mc_transition_pmf(cfg["x0"], float(t), params, cfg["paths"], cfg["seed"])
        top = max(cfg["x_max"], int(mc.support[-1]))
        probs = np.pad(mc.probs, (0, top + 1 - mc.probs.size))
        ses = np.pad(mc.std_errors, (0, top + 1 - mc.std_errors.size))
        rows += [(t, x, probs[x], ses[x]) for x in range(top + 1)]
    return _csv(rows)


def _run_covariance(cfg, meta):
    params = _params(cfg)
    if cfg["method"] == "mc":
        est = mc_autocovariance(cfg["t"], cfg["s"], params, cfg["paths"], cfg["seed"])
        meta["seeds"] = {"seed": cfg["seed"], "paths": cfg["paths"]}
        payload = {"value": est.value, "std_error": est.std_error}
    else:
        val, err = autocovariance(cfg["t"], cfg["s"], params, cfg["quad_tol"], return_error=True)
        meta["certificate"] = {"err_bound": err}
        payload = {"value": val, "err_bound": err}
    payload["config_hash"] = meta["config_hash"]
    return json.dumps(payload, indent=1) + "\n"


def _run_verify(cfg, meta):
    from .verify import run_checks

    results = run_checks()
    width = max(len(r.name) for r in results)
    lines = [f"{'check':<{width}}  result  detail"]
    for r in results:
        lines.append(f"{r.name:<{width}}  {'PASS' if r.passed else 'FAIL':<6}  {r.detail}")
    meta["all_passed"] = all(r.passed for r in results)
    meta["checks"] = [{"name": r.name, "passed": r.passed, "detail": r.detail} for r in results]
    return "\n".join(lines) + "\n"


_RUNNERS = {
    "solve-backward": _run_solve,
    "solve-forward": _run_solve,
    "transition": _run_transition,
    "simulate": _run_simulate,
    "covariance": _run_covariance,
    "verify": _run_verify,
}


def run(cfg: dict) -> int:
    meta = {"config": cfg, "config_hash": config_hash(cfg), "version": __version__}
    t0 = time.perf_counter()
    try:
        text = _RUNNERS[cfg["command"]](cfg, meta)
    except ToleranceUnreachableError as exc:
        print(f"fracid: tolerance unreachable: {exc}", file=sys.stderr)
        print(json.dumps({"achieved_bound": exc.achieved, "n_max_cap": exc.n_max_cap,
                          "requested_tol": cfg["tol"]}), file=sys.stderr)
        return 3
    except (DivergentInputError, CharlierOverflowError) as exc:
        print(f"fracid: invalid input: {exc}", file=sys.stderr)
        return 2
    meta["wall_clock_seconds"] = time.perf_counter() - t0
    if cfg["out"]:
        Path(cfg["out"]).write_text(text)
        Path(cfg["out"] + ".meta.json").write_text(json.dumps(meta, indent=1, sort_keys=True) + "\n")
    else:
        sys.stdout.write(text)
    if cfg["command"] == "verify":
        return 0 if meta["all_passed"] else 1
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args)
    except ConfigError as exc:
        print(f"fracid: invalid configuration: {exc}", file=sys.stderr)
        return 2
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
