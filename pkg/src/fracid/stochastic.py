"""Simulation of the immigration-death chain, the stable subordinator, its
inverse, and the time-changed chain ``N_nu(t) = N_1(L_nu(t))``, with Monte
Carlo estimators.

Random streams are Philox generators keyed by ``(seed, block)`` where a
block holds :data:`BLOCK` consecutive paths, so results are reproducible
bit for bit and blocks can be produced in any order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .charlier import ModelParams

__all__ = [
    "BLOCK",
    "CtmcPath",
    "FidPaths",
    "InversePath",
    "McEstimate",
    "McPmf",
    "SubordinatorPath",
    "UnreliableSeriesError",
    "chi_square_gof",
    "ctmc_states_at",
    "inverse_density",
    "inverse_subordinator",
    "mc_autocovariance",
    "mc_mean",
    "mc_transition_pmf",
    "rng_for_block",
    "sample_stable",
    "simulate_ctmc",
    "simulate_fid",
    "simulate_subordinator",
    "stable_density",
    "tv_distance",
]

BLOCK = 8192


class UnreliableSeriesError(ValueError):
    """The stable density series cannot be summed accurately at this point."""


def rng_for_block(seed: int, block: int = 0) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(block),))
    return np.random.Generator(np.random.Philox(ss))


def _blocks(n_paths: int):
    for blk, start in enumerate(range(0, n_paths, BLOCK)):
        yield blk, start, min(start + BLOCK, n_paths)


# ---------------------------------------------------------------------------
# path types


@dataclass(frozen=True)
class CtmcPath:
    """Right-continuous path of the immigration-death chain on ``[0, horizon]``."""

    jump_times: np.ndarray
    states: np.ndarray  # states[0] is the initial state, states[i] holds after jump i
    initial_state: int
    horizon: float

    def state_at(self, s):
        s = np.asarray(s, dtype=float)
        if np.any(s < 0) or np.any(s > self.horizon):
            raise ValueError("query outside [0, horizon]")
        idx = np.searchsorted(self.jump_times, s, side="right")
        out = self.states[idx]
        return int(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class SubordinatorPath:
    """Stable subordinator sampled on a uniform internal-time grid."""

    s: np.ndarray
    sigma: np.ndarray


@dataclass(frozen=True)
class InversePath:
    """Inverse subordinator ``L_nu`` on a time grid, one row per path.

    ``sigma_before`` and ``sigma_after`` are ``sigma(L-)`` and ``sigma(L)``,
    which bracket each grid time.  ``resolution`` is the internal-time
    granularity (zero for the exact sampler).
    """

    times: np.ndarray
    values: np.ndarray
    sigma_before: np.ndarray
    sigma_after: np.ndarray
    resolution: float = 0.0


@dataclass(frozen=True)
class FidPaths:
    """Time-changed chain ``N_nu`` observed on ``times``; one row per path."""

    times: np.ndarray
    states: np.ndarray
    internal_times: np.ndarray
    x0: np.ndarray
    seed: int


@dataclass(frozen=True)
class McEstimate:
    value: float
    std_error: float
    n_paths: int
    seed: int


@dataclass
class McPmf:
    support: np.ndarray
    probs: np.ndarray
    std_errors: np.ndarray
    counts: np.ndarray
    n_paths: int
    seed: int

    def estimates(self) -> list[McEstimate]:
        return [McEstimate(float(p), float(e), self.n_paths, self.seed)
                for p, e in zip(self.probs, self.std_errors)]


# ---------------------------------------------------------------------------
# immigration-death chain


def simulate_ctmc(x0: int, horizon: float, params: ModelParams, rng_seed: int) -> CtmcPath:
    """One path by the jump-chain construction, stopped at ``horizon``."""
    if not horizon > 0:
        raise ValueError("horizon must be positive")
    if int(x0) != x0 or x0 < 0:
        raise ValueError("x0 must be a non-negative integer")
    rng = rng_for_block(rng_seed)
    a, b = params.a, params.b
    x, clock = int(x0), 0.0
    times, states = [], [x]
    while True:
        rate = a + b * x
        clock += rng.exponential(1.0 / rate)
        if clock > horizon:
            break
        x += 1 if rng.random() < a / rate else -1
        times.append(clock)
        states.append(x)
    return CtmcPath(np.array(times), np.array(states, dtype=np.int64), int(x0), float(horizon))


def ctmc_states_at(x0, targets, params: ModelParams, rng: np.random.Generator) -> np.ndarray:
    """States of independent chains at per-path internal times.

    Parameters
    ----------
    x0 : array_like of int, shape (n,)
    targets : array_like, shape (n, k)
        Non-decreasing internal times per row.
    """
    x = np.array(x0, dtype=np.int64, copy=True)
    targets = np.asarray(targets, dtype=float)
    n, k = targets.shape
    out = np.empty((n, k), dtype=np.int64)
    clock = np.zeros(n)
    nxt = np.zeros(n, dtype=np.int64)
    a, b = params.a, params.b
    active = np.arange(n)
    while active.size:
        rate = a + b * x[active]
        jump_at = clock[active] + rng.exponential(1.0 / rate)
        # record every target reached before the next jump
        pending = active
        horizon = jump_at
        while pending.size:
            j = nxt[pending]
            hit = targets[pending, j] < horizon
            if not hit.any():
                break
            p = pending[hit]
            out[p, nxt[p]] = x[p]
            nxt[p] += 1
            keep = nxt[pending] < k
            keep &= hit
            pending, horizon = pending[keep], horizon[keep]
        up = rng.random(active.size) * rate < a
        x[active] += np.where(up, 1, -1)
        clock[active] = jump_at
        active = active[nxt[active] < k]
    return out


# ---------------------------------------------------------------------------
# stable subordinator and its inverse


def _kanter(u, nu):
    """``A(U)`` with ``sigma(1) = A(U) E^{-(1-nu)/nu}`` in distribution."""
    return (np.sin(nu * u) / np.sin(u) ** (1.0 / nu)
            * np.sin((1.0 - nu) * u) ** ((1.0 - nu) / nu))


def _stable_draws(nu, size, rng):
    u = rng.uniform(0.0, math.pi, size)
    e = rng.exponential(1.0, size)
    return _kanter(u, nu) * e ** (-(1.0 - nu) / nu)


def sample_stable(nu: float, rng_seed: int, size: int | None = None):
    """Draws of ``sigma_nu(1)``, Laplace transform ``exp(-s^nu)``.

    Uses the Chambers-Mallows-Stuck transform of one uniform and one
    exponential variable.
    """
    if not 0 < nu < 1:
        raise ValueError("nu must lie in (0, 1)")
    if size is None:
        return float(_stable_draws(nu, 1, rng_for_block(rng_seed))[0])
    out = np.empty(size)
    for blk, lo, hi in _blocks(size):
        out[lo:hi] = _stable_draws(nu, hi - lo, rng_for_block(rng_seed, blk))
    return out


def _tilted_angle(nu, size, rng):
    """``U`` on (0, pi) with density proportional to ``A(U)^(-nu)``.

    The weight is decreasing with limit ``nu^-nu (1-nu)^-(1-nu)`` at 0,
    which serves as the rejection envelope.
    """
    wmax = nu ** (-nu) * (1.0 - nu) ** (nu - 1.0)
    out = np.empty(size)
    todo = np.arange(size)
    while todo.size:
        u = rng.uniform(0.0, math.pi, todo.size)
        w = np.sin(nu * u) ** (-nu) * np.sin(u) * np.sin((1.0 - nu) * u) ** (nu - 1.0)
        acc = rng.random(todo.size) * wmax < w
        out[todo[acc]] = u[acc]
        todo = todo[~acc]
    return out


def _passage(d, nu, rng):
    """Exact first passage of a fresh subordinator over distances ``d``.

    Returns ``(elapsed internal time, gap, overshoot)`` where the undershoot
    is ``d - gap`` with ``gap = d B``, ``B ~ Beta(1 - nu, nu)``.  Given the
    undershoot ``u`` the elapsed time is ``u^nu Z^-nu`` with ``Z`` the
    ``z^-nu``-tilted stable law, and the jump is a Levy-measure draw beyond
    ``gap``.  Working with the gap keeps the bracket exact in floating point.
    """
    m = d.size
    gap = d * rng.beta(1.0 - nu, nu, m)
    u = _tilted_angle(nu, m, rng)
    g = rng.gamma(2.0 - nu, 1.0, m)
    z_pow = _kanter(u, nu) ** (-nu) * g ** (1.0 - nu)  # Z^-nu
    elapsed = (d - gap) ** nu * z_pow
    overshoot = gap * (rng.random(m) ** (-1.0 / nu) - 1.0)
    return elapsed, gap, overshoot


def _inverse_exact(times, nu, n, rng):
    k = times.size
    vals = np.empty((n, k))
    lo = np.empty((n, k))
    hi = np.empty((n, k))
    level = np.zeros(n)  # sigma at the current passage
    clock = np.zeros(n)  # internal time of the current passage
    before = np.zeros(n)
    for j, t in enumerate(times):
        need = t >= level
        if need.any():
            idx = np.nonzero(need)[0]
            el, gap, over = _passage(t - level[idx], nu, rng)
            clock[idx] += el
            before[idx] = np.minimum(t - gap, t)
            level[idx] = t + over
        vals[:, j] = clock
        lo[:, j] = before
        hi[:, j] = level
    return vals, lo, hi


def _inverse_grid(times, nu, n, rng, resolution, max_steps):
    k = times.size
    vals = np.empty((n, k))
    lo = np.empty((n, k))
    hi = np.empty((n, k))
    inc_scale = resolution ** (1.0 / nu)
    for p in range(n):
        sig = [0.0]
        while sig[-1] <= times[-1]:
            if len(sig) > max_steps:
                raise RuntimeError("grid inverse exceeded max_steps; coarsen resolution")
            step = _stable_draws(nu, 1024, rng) * inc_scale
            sig.extend((sig[-1] + np.cumsum(step)).tolist())
        sig = np.asarray(sig)
        i = np.searchsorted(sig, times, side="right")  # first index with sigma > t
        vals[p] = i * resolution
        lo[p] = sig[i - 1]
        hi[p] = sig[i]
    return vals, lo, hi


def inverse_subordinator(
    t_grid,
    nu: float,
    rng_seed: int,
    n_paths: int = 1,
    method: str = "exact",
    resolution: float = 1e-4,
    max_steps: int = 10_000_000,
) -> InversePath:
    """Paths of ``L_nu(t) = inf{s > 0 : sigma_nu(s) > t}`` on a time grid.

    ``method="exact"`` samples successive first passages exactly (no
    discretisation).  ``method="grid"`` walks ``sigma`` on an internal grid
    of step ``resolution`` and returns the first grid point past each time,
    which overestimates ``L`` by less than ``resolution``.
    """
    if not 0 < nu <= 1:
        raise ValueError("nu must lie in (0, 1]")
    times = np.atleast_1d(np.asarray(t_grid, dtype=float))
    if np.any(times <= 0) or np.any(np.diff(times) < 0):
        raise ValueError("t_grid must be positive and sorted")
    if nu == 1.0:
        vals = np.broadcast_to(times, (n_paths, times.size)).copy()
        return InversePath(times, vals, vals.copy(), vals.copy(), 0.0)
    if method not in ("exact", "grid"):
        raise ValueError(f"unknown method {method!r}")
    parts = []
    for blk, lo, hi in _blocks(n_paths):
        rng = rng_for_block(rng_seed, blk)
        if method == "exact":
            parts.append(_inverse_exact(times, nu, hi - lo, rng))
        else:
            parts.append(_inverse_grid(times, nu, hi - lo, rng, resolution, max_steps))
    vals, lo_s, hi_s = (np.vstack([p[i] for p in parts]) for i in range(3))
    return InversePath(times, vals, lo_s, hi_s, 0.0 if method == "exact" else resolution)


def simulate_subordinator(s_max: float, nu: float, rng_seed: int, n_steps: int = 1000) -> SubordinatorPath:
    """``sigma_nu`` on a uniform grid of ``[0, s_max]`` from i.i.d. stable increments."""
    if not 0 < nu < 1:
        raise ValueError("nu must lie in (0, 1)")
    rng = rng_for_block(rng_seed)
    ds = s_max / n_steps
    inc = _stable_draws(nu, n_steps, rng) * ds ** (1.0 / nu)
    return SubordinatorPath(np.linspace(0.0, s_max, n_steps + 1), np.concatenate([[0.0], np.cumsum(inc)]))


# ---------------------------------------------------------------------------
# densities


def stable_density(nu: float, x: float, series_terms: int = 400, rel_tol: float = 1e-8,
                   return_error: bool = False):
    """Density of ``sigma_nu(1)`` from its series in ``x^-nu``.

        g(x) = 1/pi sum_{k>=1} (-1)^(k+1) Gamma(nu k + 1) / k! sin(pi nu k) x^(-nu k - 1)

    The error estimate is the remainder bound (terms without the sine
    factor, bounded geometrically once their ratio drops below 1) plus the
    rounding of the partial sum.

    Raises
    ------
    UnreliableSeriesError
        If the estimate exceeds ``rel_tol`` times the value, or the series
        does not settle in ``series_terms`` terms.  This happens for small
        ``x``, where the terms first grow enormously.
    """
    if not 0 < nu < 1:
        raise ValueError("nu must lie in (0, 1)")
    if not x > 0:
        raise ValueError("x must be positive")
    lx = math.log(x)
    total = comp = abs_sum = 0.0
    prev_lb = math.inf
    for k in range(1, series_terms + 1):
        lb = math.lgamma(nu * k + 1.0) - math.lgamma(k + 1.0) - (nu * k + 1.0) * lx
        term = (-1) ** (k + 1) * math.sin(math.pi * nu * k) * math.exp(lb) / math.pi
        abs_sum += abs(term)
        s = total + term
        comp += (total - s) + term if abs(total) >= abs(term) else (term - s) + total
        total = s
        lb_next = math.lgamma(nu * (k + 1) + 1.0) - math.lgamma(k + 2.0) - (nu * (k + 1) + 1.0) * lx
        ratio = math.exp(lb_next - lb)
        if lb < prev_lb and ratio < 0.5 and math.exp(lb_next) / math.pi / (1 - ratio) < 1e-17 * max(abs_sum, 1e-300):
            remainder = math.exp(lb_next) / math.pi / (1.0 - ratio)
            break
        prev_lb = lb
    else:
        raise UnreliableSeriesError(f"series did not settle in {series_terms} terms at x={x}")
    value = total + comp
    err = remainder + 4.0 * k * np.finfo(float).eps * abs_sum
    if err > rel_tol * abs(value):
        raise UnreliableSeriesError(
            f"series unreliable at x={x}: error estimate {err:.3g} vs value {value:.3g}"
        )
    return (value, err) if return_error else value


def inverse_density(y: float, t: float, nu: float, return_error: bool = False):
    """Density of ``L_nu(t)`` at ``y``: ``t/nu y^(-1-1/nu) g_nu(t y^(-1/nu))``."""
    if not (y > 0 and t > 0):
        raise ValueError("y and t must be positive")
    arg = t * y ** (-1.0 / nu)
    g, e = stable_density(nu, arg, return_error=True)
    c = t / nu * y ** (-1.0 - 1.0 / nu)
    return (c * g, c * e) if return_error else c * g


# ---------------------------------------------------------------------------
# time-changed chain


def _initial_states(x0, n, params, rng):
    if isinstance(x0, str):
        if x0 != "stationary":
            raise ValueError(f"unknown initial state {x0!r}")
        return rng.poisson(params.alpha, n).astype(np.int64)
    arr = np.asarray(x0)
    if np.any(arr < 0) or np.any(arr != np.floor(arr)):
        raise ValueError("initial states must be non-negative integers")
    return np.broadcast_to(arr.astype(np.int64), (n,)).copy()


def simulate_fid(x0, t_grid, params: ModelParams, rng_seed: int, n_paths: int = 1) -> FidPaths:
    """Paths of ``N_nu(t) = N_1(L_nu(t))`` with independent ``N_1`` and ``L_nu``.

    Parameters
    ----------
    x0 : int, array_like of shape (n_paths,), or "stationary"
        Initial state(s); "stationary" draws them from Poisson(alpha).
    """
    times = np.atleast_1d(np.asarray(t_grid, dtype=float))
    if np.any(times <= 0) or np.any(np.diff(times) < 0):
        raise ValueError("t_grid must be positive and sorted")
    arr_x0 = None if isinstance(x0, str) else np.asarray(x0)
    if arr_x0 is not None and arr_x0.ndim == 1 and arr_x0.size != n_paths:
        raise ValueError("per-path x0 must have n_paths entries")
    states = np.empty((n_paths, times.size), dtype=np.int64)
    internal = np.empty((n_paths, times.size))
    starts = np.empty(n_paths, dtype=np.int64)
    for blk, lo, hi in _blocks(n_paths):
        rng = rng_for_block(rng_seed, blk)
        n = hi - lo
        sub_x0 = x0 if arr_x0 is None or arr_x0.ndim == 0 else arr_x0[lo:hi]
        init = _initial_states(sub_x0, n, params, rng)
        if params.nu == 1.0:
            lt = np.broadcast_to(times, (n, times.size))
        else:
            lt = _inverse_exact(times, params.nu, n, rng)[0]
        states[lo:hi] = ctmc_states_at(init, lt, params, rng)
        internal[lo:hi] = lt
        starts[lo:hi] = init
    return FidPaths(times, states, internal, starts, int(rng_seed))


# ---------------------------------------------------------------------------
# Monte Carlo estimators and statistics


def _mean_se(v: np.ndarray):
    n = v.size
    mean = math.fsum(v) / n
    var = math.fsum((v - mean) ** 2) / (n - 1)
    return mean, math.sqrt(var / n)


def mc_mean(x0, t: float, params: ModelParams, n_paths: int, rng_seed: int) -> McEstimate:
    """Monte Carlo estimate of ``E[N_nu(t) | N_nu(0) = x0]``."""
    paths = simulate_fid(x0, [t], params, rng_seed, n_paths)
    m, se = _mean_se(paths.states[:, 0].astype(float))
    return McEstimate(m, se, n_paths, rng_seed)


def mc_transition_pmf(x0, t: float, params: ModelParams, n_paths: int, rng_seed: int) -> McPmf:
    """Empirical law of ``N_nu(t)`` with binomial standard errors."""
    if n_paths < 1000:
        raise ValueError("n_paths must be at least 1000")
    paths = simulate_fid(x0, [t], params, rng_seed, n_paths)
    counts = np.bincount(paths.states[:, 0])
    probs = counts / n_paths
    se = np.sqrt(probs * (1.0 - probs) / n_paths)
    return McPmf(np.arange(counts.size), probs, se, counts, n_paths, int(rng_seed))


def mc_autocovariance(t: float, s: float, params: ModelParams, n_paths: int,
                      rng_seed: int) -> McEstimate:
    """Sample ``Cov(N_nu(t), N_nu(s))`` from a Poisson(alpha) start, ``s <= t``."""
    if not 0 < s <= t:
        raise ValueError("need 0 < s <= t")
    grid = [s] if s == t else [s, t]
    paths = simulate_fid("stationary", grid, params, rng_seed, n_paths)
    xs = paths.states[:, 0].astype(float)
    xt = paths.states[:, -1].astype(float)
    prod = (xs - math.fsum(xs) / n_paths) * (xt - math.fsum(xt) / n_paths)
    m, se = _mean_se(prod)
    return McEstimate(m * n_paths / (n_paths - 1), se, n_paths, int(rng_seed))


def tv_distance(p, q) -> float:
    """Half the l1 distance between two mass vectors (zero-padded)."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    n = max(p.size, q.size)
    p = np.pad(p, (0, n - p.size))
    q = np.pad(q, (0, n - q.size))
    return 0.5 * math.fsum(np.abs(p - q))


def chi_square_gof(counts, probs, min_expected: float = 5.0):
    """Pearson goodness of fit of ``counts`` to ``probs``.

    Cells with expected count below ``min_expected`` are pooled from the
    right, together with any mass outside the table.

    Returns
    -------
    (statistic, dof, p_value)
    """
    counts = np.asarray(counts, dtype=float)
    probs = np.asarray(probs, dtype=float)
    n = counts.sum()
    size = max(counts.size, probs.size)
    counts = np.pad(counts, (0, size - counts.size))
    probs = np.pad(probs, (0, size - probs.size))
    exp = n * probs
    obs_cells, exp_cells = [], []
    acc_o = acc_e = 0.0
    for o, e in zip(counts, exp):
        acc_o += o
        acc_e += e
        if acc_e >= min_expected:
            obs_cells.append(acc_o)
            exp_cells.append(acc_e)
            acc_o = acc_e = 0.0
    # leftovers and missing mass go into the last cell
    acc_e = n - sum(exp_cells)
    if obs_cells:
        obs_cells[-1] += acc_o
        exp_cells[-1] += acc_e
    obs = np.array(obs_cells)
    ex = np.array(exp_cells)
    stat = float(((obs - ex) ** 2 / ex).sum())
    dof = len(obs) - 1
    return stat, dof, float(stats.chi2.sf(stat, dof)) if dof > 0 else 1.0
