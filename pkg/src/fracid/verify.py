"""Quick invariant suite behind ``fracid verify``.

Sizes are kept small so the whole table runs in well under a minute; the
test suite exercises the same properties at full scale.
"""

from __future__ import annotations

import math
import time
from fractions import Fraction
from dataclasses import dataclass

import numpy as np
from scipy import special
from scipy.linalg import expm

from .charlier import ModelParams, charlier_c, orthonormal_table, poisson_mass
from .mlf import mittag_leffler
from .operators import apply_forward, apply_generator, dim_for_tail, truncated_matrix
from .spectral import (
    autocovariance,
    fundamental_solution,
    limit_distribution,
    solve_backward,
    solve_forward,
)
from .stochastic import mc_transition_pmf, tv_distance


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float


def _orthogonality():
    worst = 0.0
    for alpha in (0.5, 1.0, 2.0, 4.0):
        q = orthonormal_table(20, 400, alpha)
        worst = max(worst, np.abs(q @ q.T - np.eye(21)).max())
    return worst <= 1e-8, f"max defect {worst:.2e}"


def exact_charlier_rows(n_max: int, x: int, alpha: Fraction) -> list[Fraction]:
    """``C_0(x), ..., C_n_max(x)`` from the three-term recurrence in exact arithmetic."""
    rows = [Fraction(1), 1 - Fraction(x) / alpha]
    for n in range(1, n_max):
        rows.append(((n + alpha - x) * rows[n] - n * rows[n - 1]) / alpha)
    return rows[: n_max + 1]


def _self_duality():
    alpha = Fraction(3, 2)
    worst = 0.0
    for x in range(31):
        exact = exact_charlier_rows(30, x, alpha)
        for n in range(31):
            # C_n(x) from the degree recurrence against C_x(n)
            c = charlier_c(x, n, float(alpha))
            worst = max(worst, abs(c - float(exact[n])) / max(abs(float(exact[n])), 1e-300))
    return worst <= 1e-9, f"max relative gap {worst:.2e}"


def _nu_one():
    p = ModelParams(1.0, 1.0, 1.0)
    d = dim_for_tail(p, 1e-12) + 10
    lmat = truncated_matrix("forward", d, p).matrix
    worst = 0.0
    for t in (0.1, 1.0):
        ref = expm(t * lmat)
        for x in range(8):
            for y in range(8):
                worst = max(worst, abs(fundamental_solution(t, x, y, p) - ref[x, y]))
    return worst <= 1e-8, f"max entry gap {worst:.2e}"


def _mlf():
    z = np.linspace(0.0, 100.0, 201)
    e_half = np.abs(mittag_leffler(0.5, -z) - special.erfcx(z)).max()
    z1 = np.linspace(0.0, 50.0, 201)
    e_one = np.abs(mittag_leffler(1.0, -z1) - np.exp(-z1)).max()
    return e_half <= 1e-10 and e_one <= 1e-13, f"erfc {e_half:.1e}, exp {e_one:.1e}"


def _operators():
    p = ModelParams(2.0, 0.7, 0.5)
    m = poisson_mass(np.arange(61), p.alpha)
    x = np.arange(50)
    pearson = np.abs(apply_forward(m, x, p)).max()
    q = orthonormal_table(6, 60, p.alpha)[6] / np.sqrt(m)
    gen = np.abs(apply_generator(q, x[:30], p) + 6 * p.b * q[:30]).max() / np.abs(q[:30]).max()
    return pearson <= 1e-15 and gen <= 1e-10, f"L m = {pearson:.1e}, G Q_6 rel {gen:.1e}"


def _backward_identity():
    p = ModelParams(1.0, 2.0, 1.0)
    ts = np.array([0.0, 0.3, 1.0])
    s = solve_backward(lambda z: z, ts, range(10), p)
    ref = s.states[None, :] * np.exp(-p.b * ts[:, None]) + p.alpha * (1 - np.exp(-p.b * ts[:, None]))
    err = np.abs(s.values - ref).max()
    return err <= 1e-8, f"max gap {err:.1e}"


def _stationarity():
    p = ModelParams(2.0, 1.0, 0.6)
    s = solve_forward(lambda z: poisson_mass(z, p.alpha), [0.5, 2.0, 10.0], range(15), p, pmf=True)
    err = np.abs(s.values - poisson_mass(s.states, p.alpha)).max()
    return err <= 1e-10, f"max gap {err:.1e}"


def _limit():
    lim = limit_distribution(ModelParams(3.0, 2.0, 0.5))
    ok = abs(lim.mean() - 1.5) <= 1e-10 and abs(lim.var() - 1.5) <= 1e-10
    return ok, f"mean {lim.mean():.12f}, var {lim.var():.12f}"


def _covariance():
    p = ModelParams(1.0, 1.0, 0.5)
    v = autocovariance(1.5, 1.5, p)
    c1 = autocovariance(2.0, 1.0, ModelParams(1.0, 1.0, 1.0))
    ok = abs(v - 1.0) <= 1e-8 and abs(c1 - math.exp(-1.0)) <= 1e-8
    return ok, f"var {v:.10f}, nu=1 cov gap {abs(c1 - math.exp(-1)):.1e}"


def _boundedness():
    rng = np.random.default_rng(0)
    g = rng.uniform(-1.0, 1.0, 25)
    g[rng.integers(25)] = 1.0
    s = solve_backward(g, [0.1, 1.0, 5.0], range(25), ModelParams(1.5, 1.0, 0.7))
    top = np.abs(s.values).max()
    return top <= 1.0 + 1e-9, f"sup |u| = {top:.12f}"


def _monte_carlo():
    p = ModelParams(1.0, 1.0, 0.5)
    mc = mc_transition_pmf(3, 1.0, p, 20_000, 12345)
    ref = [fundamental_solution(1.0, x, 3, p) for x in range(mc.support.size + 5)]
    tv = tv_distance(mc.probs, ref)
    return tv <= 0.02, f"TV {tv:.4f} at 2e4 paths"


CHECKS = [
    ("charlier orthogonality", _orthogonality),
    ("charlier self-duality", _self_duality),
    ("nu=1 matrix exponential", _nu_one),
    ("mittag-leffler accuracy", _mlf),
    ("pearson and eigen-relations", _operators),
    ("backward identity datum", _backward_identity),
    ("forward stationarity", _stationarity),
    ("limit distribution moments", _limit),
    ("covariance anchors", _covariance),
    ("bounded datum", _boundedness),
    ("monte carlo transition law", _monte_carlo),
]


def run_checks() -> list[CheckResult]:
    out = []
    for name, fn in CHECKS:
        t0 = time.perf_counter()
        try:
            ok, detail = fn()
        except Exception as exc:  # a crashing check is a failing check
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        out.append(CheckResult(name, bool(ok), detail, time.perf_counter() - t0))
    return out
