"""Spectral solutions of the fractional immigration-death equations.

Every solution is a Charlier expansion whose n-th mode relaxes with the
factor ``E_nu(-b n t^nu)``.  Series are summed from the highest retained
mode down to mode 0 with Neumaier compensation.

Truncation error is certified with a Cauchy-Schwarz bound on the omitted
modes.  The relaxation factors are bounded by the Simon-type estimate
``E_nu(-lam) <= 1 / (1 + lam / Gamma(1 + nu))`` and the Charlier tails by
:func:`~fracid.charlier.degree_tail_bound`.  The bound holds for every
``t > 0``; it is loosest at small ``t``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import integrate

from .charlier import (
    ModelParams,
    SpectralCoefficients,
    TruncationPolicy,
    _evaluate,
    _log_mass,
    decompose,
    degree_tail_bound,
    orthonormal_table,
    poisson_mass,
    poisson_tail_bound,
    support_for_tail,
)
from .mlf import mittag_leffler, mlf
from .operators import apply_forward, apply_generator, caputo_derivative_numeric

__all__ = [
    "PmfVector",
    "SolutionSurface",
    "ToleranceUnreachableError",
    "TruncationPolicy",
    "autocovariance",
    "caputo_residual",
    "conditional_mean",
    "fundamental_solution",
    "limit_distribution",
    "solve_backward",
    "solve_forward",
    "transition_pmf",
]

_EPS = np.finfo(float).eps


class ToleranceUnreachableError(RuntimeError):
    """Raised when no truncation within ``n_max_cap`` meets the tolerance.

    ``achieved`` holds the best certified bound that was available.
    """

    def __init__(self, msg, achieved: float, n_max_cap: int):
        super().__init__(msg)
        self.achieved = achieved
        self.n_max_cap = n_max_cap


@dataclass
class PmfVector:
    support: np.ndarray
    probs: np.ndarray
    tail_mass_bound: float
    err_bound: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    @property
    def total(self) -> float:
        return math.fsum(self.probs)

    def mean(self) -> float:
        return math.fsum(self.support * self.probs)

    def var(self) -> float:
        mu = self.mean()
        return math.fsum((self.support - mu) ** 2 * self.probs)


@dataclass
class SolutionSurface:
    """Values ``u(t, x)`` on a time grid and a set of states.

    ``values[i, j]`` is the solution at ``times[i]`` and ``states[j]``;
    ``err_bound`` has the same shape.  ``n_terms[i]`` is the number of modes
    retained at ``times[i]``.
    """

    times: np.ndarray
    states: np.ndarray
    values: np.ndarray
    err_bound: np.ndarray
    problem: str
    params: ModelParams
    datum: object = None
    n_terms: np.ndarray | None = None
    meta: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# helpers


def _simon(nu: float, lam):
    return 1.0 / (1.0 + np.asarray(lam, dtype=float) / math.gamma(1.0 + nu))


def _neumaier(terms: np.ndarray) -> np.ndarray:
    """Compensated sum over axis 0, highest index first."""
    total = np.zeros(terms.shape[1:])
    comp = np.zeros(terms.shape[1:])
    for row in terms[::-1]:
        s = total + row
        big = np.abs(total) >= np.abs(row)
        comp += np.where(big, (total - s) + row, (row - s) + total)
        total = s
    return total + comp


def _relaxation(nu: float, b: float, t: float, n_max: int):
    """``E_nu(-b n t^nu)`` for ``n = 0..n_max`` with error bounds."""
    z = -b * np.arange(n_max + 1) * t**nu
    return mittag_leffler(nu, z, return_error=True)


def _q_tails(q: np.ndarray, log_m: np.ndarray, xs: np.ndarray, alpha: float) -> np.ndarray:
    """``tails[N, j] >= sum_{n > N} q_n(x_j)**2`` for ``N = -1..K``, row ``N + 1``.

    Sums the tabulated squares exactly and bounds what lies beyond ``K``.
    """
    k = q.shape[0] - 1
    sq = q**2
    after = np.cumsum(sq[::-1], axis=0)[::-1]  # after[N] = sum_{n >= N}
    beyond = np.exp(log_m + degree_tail_bound(xs, k, alpha, log=True))
    tails = np.vstack([after, np.zeros((1, sq.shape[1]))]) + beyond
    return np.minimum(tails, 1.0)


def _check_times(t_grid):
    t = np.atleast_1d(np.asarray(t_grid, dtype=float))
    if t.ndim != 1 or np.any(~np.isfinite(t)) or np.any(t < 0):
        raise ValueError("times must be finite and non-negative")
    if np.any(np.diff(t) < 0):
        raise ValueError("times must be sorted")
    return t


def _check_states(x_grid):
    x = np.atleast_1d(np.asarray(x_grid))
    if np.any(x < 0) or np.any(x != np.floor(x)):
        raise ValueError("states must be non-negative integers")
    return x.astype(int)


def _pick_n(bound_by_n: np.ndarray, policy: TruncationPolicy, what: str) -> int:
    """Index N such that the bound for truncating after mode N is acceptable."""
    cap = len(bound_by_n) - 1
    if policy.strategy == "fixed_n":
        return cap
    ok = np.nonzero(bound_by_n <= policy.tol)[0]
    if ok.size == 0:
        best = float(bound_by_n[-1])
        raise ToleranceUnreachableError(
            f"{what}: truncation bound {best:.3g} after {cap} modes exceeds tol={policy.tol:g}",
            achieved=best,
            n_max_cap=cap,
        )
    return int(ok[0])


def _mode_sum(nu, b, t, weights, q_x, tails_w, tails_x, scale, policy, what):
    """Evaluate ``scale_j * sum_n E_n w_n q_n(x_j)`` with a certified bound.

    ``tails_w[N+1]`` bounds ``sum_{n>N} w_n**2`` and ``tails_x[N+1, j]``
    bounds ``sum_{n>N} q_n(x_j)**2``.
    """
    k = len(weights) - 1
    ns = np.arange(k + 2)
    # sup_{n > N} E_n for N = -1..K; mode 0 never relaxes
    sup_e = np.where(ns == 0, 1.0, _simon(nu, b * np.maximum(ns, 1) * t**nu))
    trunc = sup_e[:, None] * np.sqrt(tails_w[:, None] * tails_x) * scale[None, :]
    trunc_max = trunc.max(axis=1)
    n_keep = _pick_n(trunc_max[1:], policy, what)
    e, e_err = _relaxation(nu, b, t, n_keep)
    terms = (e * weights[: n_keep + 1])[:, None] * q_x[: n_keep + 1]
    vals = _neumaier(terms) * scale
    mag = np.abs(terms).sum(axis=0) * scale
    mlf_err = (e_err * np.abs(weights[: n_keep + 1])) @ np.abs(q_x[: n_keep + 1]) * scale
    err = trunc[n_keep + 1] + mlf_err + 4.0 * _EPS * (n_keep + 1) * mag
    return vals, err, n_keep + 1


# ---------------------------------------------------------------------------
# fundamental solution


def _fundamental_block(t, xs, ys, params, policy):
    alpha = params.alpha
    k = int(policy.n_max_cap)
    z_max = int(max(xs.max(), ys.max()))
    q = orthonormal_table(k, z_max, alpha)
    zs = np.arange(z_max + 1)
    log_m = _log_mass(zs, alpha)
    tails = _q_tails(q, log_m, zs, alpha)
    return q, log_m, tails


def fundamental_solution(
    t: float,
    x: int,
    y: int,
    params: ModelParams,
    policy: TruncationPolicy | None = None,
    return_error: bool = False,
):
    """Transition mass ``p_nu(t, x; y)`` of reaching ``x`` from ``y``.

    ``p = m(x) sum_n E_nu(-b n t^nu) Q_n(x) Q_n(y)``, truncated with a
    certified bound at most ``policy.tol``.

    Raises
    ------
    ToleranceUnreachableError
        If ``policy.n_max_cap`` modes are not enough.
    """
    if not t > 0:
        raise ValueError("t must be positive")
    policy = policy or TruncationPolicy()
    xs = _check_states(x)
    ys = _check_states(y)
    if xs.size != 1 or ys.size != 1:
        raise ValueError("x and y must be scalars; use transition_pmf for vectors")
    xi, yi = int(xs[0]), int(ys[0])
    q, log_m, tails = _fundamental_block(t, xs, ys, params, policy)
    scale = np.array([math.exp(0.5 * (log_m[xi] - log_m[yi]))])
    val, err, n_used = _mode_sum(
        params.nu, params.b, t, q[:, yi], q[:, [xi]], tails[:, yi], tails[:, [xi]],
        scale, policy, "fundamental_solution",
    )
    v = float(min(max(val[0], 0.0), 1.0))
    e = float(err[0]) + abs(v - float(val[0]))
    return (v, e) if return_error else v


def transition_pmf(
    t: float,
    y: int,
    params: ModelParams,
    policy: TruncationPolicy | None = None,
    x_max: int | None = None,
    tail: float = 1e-12,
) -> PmfVector:
    """Law of ``N_nu(t)`` started at ``y``, on ``0..x_max``.

    The default ``x_max`` keeps the mass beyond it below ``tail``.  The
    reported ``tail_mass_bound`` uses that, for every internal time, the
    state is a thinned copy of ``y`` plus a Poisson variable with mean at
    most ``alpha``.
    """
    if not t > 0:
        raise ValueError("t must be positive")
    policy = policy or TruncationPolicy()
    y = int(_check_states(y)[0])
    alpha = params.alpha
    if x_max is None:
        x_max = y + support_for_tail(alpha, tail)
    xs = np.arange(x_max + 1)
    q, log_m, tails = _fundamental_block(t, xs, np.array([y]), params, policy)
    scale = np.exp(0.5 * (log_m[xs] - log_m[y]))
    vals, err, n_used = _mode_sum(
        params.nu, params.b, t, q[:, y], q[:, xs], tails[:, y], tails[:, xs],
        scale, policy, "transition_pmf",
    )
    probs = np.clip(vals, 0.0, 1.0)
    err = err + np.abs(probs - vals)
    tail_mass = poisson_tail_bound(x_max - y, alpha) if x_max >= y else 1.0
    return PmfVector(
        support=xs,
        probs=probs,
        tail_mass_bound=tail_mass,
        err_bound=err,
        meta={"t": t, "y": y, "n_terms": n_used},
    )


# ---------------------------------------------------------------------------
# Cauchy problems


def _as_coefficients(datum, params, policy) -> SpectralCoefficients:
    if isinstance(datum, SpectralCoefficients):
        return datum
    return decompose(datum, params, policy)


def _coef_tails(c: SpectralCoefficients) -> np.ndarray:
    """``tails[N+1] >= sum_{n>N} g_n**2`` for ``N = -1..K``."""
    sq = c.coeffs**2
    after = np.cumsum(sq[::-1])[::-1]
    # the Parseval defect carries the rounding of norm_sq
    beyond = c.norm_sq_tail + 4.0 * _EPS * (c.support_max + 1) * c.norm_sq
    return np.concatenate([after, [0.0]]) + beyond


def _solve(coeffs, t_grid, x_grid, params, policy, problem, datum_values):
    alpha = params.alpha
    ts = _check_times(t_grid)
    xs = _check_states(x_grid)
    k = coeffs.n_max
    q_all = orthonormal_table(k, int(xs.max()), alpha)
    zs = np.arange(int(xs.max()) + 1)
    log_m = _log_mass(zs, alpha)
    q_x = q_all[:, xs]
    tails_x = _q_tails(q_all, log_m, zs, alpha)[:, xs]
    tails_w = _coef_tails(coeffs)
    if problem == "backward":
        scale = np.exp(-0.5 * log_m[xs])
    else:
        scale = np.exp(0.5 * log_m[xs])
    values = np.empty((ts.size, xs.size))
    errs = np.empty_like(values)
    n_terms = np.zeros(ts.size, dtype=int)
    for i, t in enumerate(ts):
        if t == 0.0:
            values[i] = datum_values
            errs[i] = 0.0
            continue
        v, e, n = _mode_sum(
            params.nu, params.b, t, coeffs.coeffs, q_x, tails_w, tails_x, scale,
            policy, f"solve_{problem} at t={t:g}",
        )
        values[i], errs[i], n_terms[i] = v, e, n
    return ts, xs, values, errs, n_terms


def _clip(ts, vals, errs, lo, hi):
    """Project rows with ``t > 0`` onto ``[lo, hi]``, known to hold the exact values."""
    if not np.isfinite(lo) or not np.isfinite(hi):
        return vals, errs
    live = ts > 0
    vals, errs = vals.copy(), errs.copy()
    vals[live] = np.clip(vals[live], lo, hi)
    errs[live] = np.minimum(errs[live], hi - lo)
    return vals, errs


def solve_backward(
    g,
    t_grid,
    x_grid,
    params: ModelParams,
    policy: TruncationPolicy | None = None,
) -> SolutionSurface:
    """Solve the backward equation ``D_t^nu u = G u``, ``u(0) = g``.

    ``u(t, x) = sum_n E_nu(-b n t^nu) g_n Q_n(x)`` with ``g_n`` the Charlier
    coefficients of ``g``.

    Parameters
    ----------
    g : callable, array_like or SpectralCoefficients
        Initial datum; arrays are read as values on ``0..len-1``, zero beyond.
    t_grid, x_grid : array_like
        Sorted non-negative times and non-negative integer states.
    """
    policy = policy or TruncationPolicy()
    coeffs = _as_coefficients(g, params, policy)
    xs = _check_states(x_grid)
    if isinstance(g, SpectralCoefficients):
        from .charlier import reconstruct

        g0 = np.atleast_1d(reconstruct(g, xs, params))
    else:
        g0 = _evaluate(g, xs.astype(float))
    ts, xs, vals, errs, n_terms = _solve(coeffs, t_grid, xs, params, policy, "backward", g0)
    # maximum principle: the exact solution stays within sup |g|, which
    # tames rounding at states deep in the Poisson tail
    vals, errs = _clip(ts, vals, errs, -coeffs.sup_abs, coeffs.sup_abs)
    return SolutionSurface(ts, xs, vals, errs, "backward", params, g, n_terms,
                           meta={"norm_sq": coeffs.norm_sq, "sup_abs": coeffs.sup_abs})


def _ratio_to_mass(f, alpha):
    """Callable or table ``f`` turned into ``f / m``."""
    if callable(f):
        def h(z):
            z = np.asarray(z, dtype=float)
            fz = np.asarray(f(z), dtype=float)
            with np.errstate(divide="ignore", invalid="ignore"):
                out = fz / np.exp(_log_mass(z, alpha))
            return np.where(fz == 0, 0.0, out)
        return h
    arr = np.asarray(f, dtype=float)
    z = np.arange(arr.size)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = arr / np.exp(_log_mass(z, alpha))
    return np.where(arr == 0, 0.0, out)


def solve_forward(
    f,
    t_grid,
    x_grid,
    params: ModelParams,
    policy: TruncationPolicy | None = None,
    pmf: bool = False,
) -> SolutionSurface:
    """Solve the forward equation ``D_t^nu u = L u``, ``u(0) = f``.

    ``u(t, x) = m(x) sum_n E_nu(-b n t^nu) f_n Q_n(x)`` where ``f_n`` are the
    Charlier coefficients of ``f / m``.  With ``pmf=True`` the datum must
    have ``f_0 = sum f = 1``.
    """
    policy = policy or TruncationPolicy()
    alpha = params.alpha
    h = _ratio_to_mass(f, alpha)
    coeffs = decompose(h, params, policy)
    if pmf:
        if not np.all(_evaluate(f, np.arange(coeffs.support_max + 1.0)) >= 0):
            raise ValueError("pmf datum has negative entries")
        if abs(coeffs.coeffs[0] - 1.0) > 1e-9:
            raise ValueError(f"pmf datum has total mass {coeffs.coeffs[0]!r}, not 1")
    xs = _check_states(x_grid)
    f0 = _evaluate(f, xs.astype(float))
    ts, xs, vals, errs, n_terms = _solve(coeffs, t_grid, xs, params, policy, "forward", f0)
    if pmf:
        vals, errs = _clip(ts, vals, errs, 0.0, 1.0)
    return SolutionSurface(ts, xs, vals, errs, "forward", params, f, n_terms,
                           meta={"norm_sq": coeffs.norm_sq, "mass": float(coeffs.coeffs[0])})


def limit_distribution(params: ModelParams, tail: float = 1e-14) -> PmfVector:
    """Poisson(alpha) law, the long-time limit of every transition mass."""
    alpha = params.alpha
    x_max = support_for_tail(alpha, tail)
    xs = np.arange(x_max + 1)
    return PmfVector(
        support=xs,
        probs=np.asarray(poisson_mass(xs, alpha)),
        tail_mass_bound=poisson_tail_bound(x_max, alpha),
        err_bound=np.zeros(xs.size),
    )


def conditional_mean(x0, t, params: ModelParams):
    """``E[N_nu(t) | N_nu(0) = x0] = alpha + (x0 - alpha) E_nu(-b t^nu)``."""
    t = np.asarray(t, dtype=float)
    e = mittag_leffler(params.nu, -params.b * t**params.nu)
    return params.alpha + (np.asarray(x0, dtype=float) - params.alpha) * e


# ---------------------------------------------------------------------------
# covariance


def autocovariance(t: float, s: float, params: ModelParams, quad_tol: float = 1e-10,
                   return_error: bool = False):
    """Stationary autocovariance ``Cov(N_nu(t), N_nu(s))`` for ``0 < s <= t``.

    With ``lam = b t^nu`` and the substitution ``w = z^nu`` that removes the
    endpoint singularity,

        Cov = alpha (E_nu(-lam) + lam / Gamma(1 + nu) *
                     int_0^{(s/t)^nu} E_nu(-lam (1 - w^(1/nu))^nu) dw).

    Raises
    ------
    RuntimeError
        If the quadrature error estimate exceeds ``quad_tol``.
    """
    if not (0 < s <= t):
        raise ValueError("need 0 < s <= t")
    nu, b, alpha = params.nu, params.b, params.alpha
    lam = b * t**nu
    upper = (s / t) ** nu
    inv_nu = 1.0 / nu

    def f(w):
        r = max(1.0 - w**inv_nu, 0.0)
        return mlf(nu, -lam * r**nu).value

    val, qerr = integrate.quad(f, 0.0, upper, epsabs=quad_tol / (10 * alpha * max(lam, 1)),
                               epsrel=1e-13, limit=200)
    pref = lam / math.gamma(1.0 + nu)
    head = mlf(nu, -lam)
    total = alpha * (head.value + pref * val)
    # pointwise mlf accuracy integrates to at most its sup over the range
    err = alpha * (head.abs_err_bound + pref * (qerr + upper * 1e-12))
    if err > quad_tol:
        raise RuntimeError(f"covariance quadrature error {err:.3g} exceeds {quad_tol:g}")
    return (total, err) if return_error else total


# ---------------------------------------------------------------------------
# residual check


def caputo_residual(surface: SolutionSurface, params: ModelParams | None = None,
                    t_min: float = 0.0, return_field: bool = False):
    """Max of ``|D_t^nu u - A u|`` over interior grid points.

    ``A`` is the generator for backward surfaces and the forward operator
    otherwise.  Only states whose neighbours are on the surface and times
    ``t >= t_min`` (and ``t > 0``) are compared.  The time grid must be
    uniform and start at 0.
    """
    params = params or surface.params
    ts, xs = surface.times, surface.states
    if ts[0] != 0.0:
        raise ValueError("surface time grid must start at 0")
    if not 0 < params.nu < 1:
        raise ValueError("residual needs 0 < nu < 1")
    if not np.array_equal(xs, np.arange(xs[0], xs[0] + xs.size)):
        raise ValueError("surface states must be consecutive")
    d = caputo_derivative_numeric(surface.values, params.nu, t=ts)
    lo = int(xs[0])
    inner = np.arange(lo if lo == 0 else lo + 1, int(xs[-1]))
    op = apply_generator if surface.problem == "backward" else apply_forward
    rhs = np.empty((ts.size - 1, inner.size))
    for i in range(1, ts.size):
        row = np.zeros(int(xs[-1]) + 1)
        row[lo:] = surface.values[i]
        rhs[i - 1] = op(row, inner, params)
    res = d[:, inner - lo] - rhs
    keep = ts[1:] >= t_min
    out = float(np.max(np.abs(res[keep]))) if keep.any() else 0.0
    return (out, res) if return_field else out
