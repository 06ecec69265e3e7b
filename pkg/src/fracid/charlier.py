"""Charlier polynomials, the Poisson spectral measure and projections in l2(m).

Conventions
-----------
``C_n(x, alpha)`` follows the three-term recurrence

    -x C_n = alpha C_{n+1} - (n + alpha) C_n + n C_{n-1},   C_0 = 1, C_{-1} = 0,

which gives ``C_1(x) = 1 - x/alpha`` and the self-dual family
``C_n(x) = C_x(n)``.  The orthonormal system is ``Q_n = C_n / d_n`` with
``d_n**2 = n! / alpha**n``.

Internally most work is done on the doubly normalised table

    q_n(x) = sqrt(m(x)) * Q_n(x),

which is symmetric in ``(n, x)`` and bounded by one in absolute value, so it
never overflows.  Each entry is produced by running the orthonormal
recurrence in the smaller of the two indices, which keeps the recursion on
the numerically stable side.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import gammaln

__all__ = [
    "CharlierOverflowError",
    "DivergentInputError",
    "ModelParams",
    "SpectralCoefficients",
    "SpectralMeasure",
    "TruncationPolicy",
    "charlier_c",
    "charlier_q",
    "decompose",
    "degree_tail_bound",
    "orthonormal_table",
    "poisson_mass",
    "poisson_tail_bound",
    "reconstruct",
    "support_for_tail",
]

_LOG_MAX = math.log(np.finfo(float).max)


class CharlierOverflowError(OverflowError):
    """Raised when ``C_n(x, alpha)`` does not fit in a double."""


class DivergentInputError(ValueError):
    """Raised when a datum does not look square summable against m."""


@dataclass(frozen=True)
class ModelParams:
    """Rates of the immigration-death process and the fractional order.

    Parameters
    ----------
    a : float
        Immigration rate.
    b : float
        Per-capita death rate.
    nu : float
        Fractional order in (0, 1]; ``nu = 1`` is the classical chain.
    """

    a: float
    b: float
    nu: float = 1.0

    def __post_init__(self):
        for name in ("a", "b", "nu"):
            v = getattr(self, name)
            if not isinstance(v, (int, float, np.floating, np.integer)) or not math.isfinite(v):
                raise ValueError(f"{name} must be a finite real number, got {v!r}")
        if self.a <= 0 or self.b <= 0:
            raise ValueError(f"rates must be positive, got a={self.a}, b={self.b}")
        if not 0 < self.nu <= 1:
            raise ValueError(f"nu must lie in (0, 1], got {self.nu}")

    @property
    def alpha(self) -> float:
        return self.a / self.b

    def with_nu(self, nu: float) -> "ModelParams":
        return ModelParams(self.a, self.b, nu)


@dataclass(frozen=True)
class TruncationPolicy:
    """How spectral series and inner-product sums are cut off.

    ``strategy="certified_tail"`` picks the smallest number of modes whose
    a-priori tail bound is below ``tol`` and fails if that needs more than
    ``n_max_cap`` modes.  ``strategy="fixed_n"`` always uses ``n_max_cap``
    modes and only reports the bound.
    """

    tol: float = 1e-10
    n_max_cap: int = 200
    strategy: str = "certified_tail"
    support_cap: int = 5000

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if int(self.n_max_cap) < 1:
            raise ValueError("n_max_cap must be a positive integer")
        if self.strategy not in ("certified_tail", "fixed_n"):
            raise ValueError(f"unknown truncation strategy {self.strategy!r}")
        if int(self.support_cap) < 2:
            raise ValueError("support_cap must be at least 2")


# ---------------------------------------------------------------------------
# Poisson measure


def _log_mass(x, alpha):
    x = np.asarray(x, dtype=float)
    return -alpha + x * math.log(alpha) - gammaln(x + 1.0)


def poisson_mass(x, alpha: float):
    """Poisson(alpha) mass ``e^{-alpha} alpha^x / x!`` evaluated in log space."""
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    out = np.exp(_log_mass(x, alpha))
    return float(out) if np.ndim(out) == 0 else out


def poisson_tail_bound(x_max: int, alpha: float) -> float:
    """Chernoff bound on ``P(N > x_max)`` for ``N ~ Poisson(alpha)``.

    For ``k = x_max + 1 > alpha`` this is ``e^{-alpha} (e alpha / k)^k``;
    below the mean the trivial bound 1 is returned.
    """
    k = x_max + 1
    if k <= alpha:
        return 1.0
    return math.exp(-alpha + k * (1.0 + math.log(alpha) - math.log(k)))


def support_for_tail(alpha: float, tail: float = 1e-14) -> int:
    """Smallest ``X`` whose Chernoff tail bound is below ``tail``."""
    x = max(int(math.ceil(alpha)), 1)
    while poisson_tail_bound(x, alpha) > tail:
        x += 1
    return x


@dataclass(frozen=True)
class SpectralMeasure:
    """The Poisson(alpha) measure m, evaluated lazily."""

    alpha: float

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")

    def mass(self, x):
        return poisson_mass(x, self.alpha)

    def log_mass(self, x):
        return _log_mass(x, self.alpha)

    def tail_bound(self, x_max: int) -> float:
        return poisson_tail_bound(x_max, self.alpha)

    def support(self, tail: float = 1e-14) -> int:
        return support_for_tail(self.alpha, tail)


# ---------------------------------------------------------------------------
# Polynomial values


def _scaled_q_column(k_max: int, z: int, alpha: float) -> tuple[np.ndarray, np.ndarray]:
    """Run the orthonormal recurrence in degree at the fixed point ``z``.

    Returns mantissas and log scales so that
    ``q_k(z) = mant[k] * exp(logs[k])`` for ``k = 0..k_max``.
    """
    mant = np.empty(k_max + 1)
    logs = np.empty(k_max + 1)
    log_scale = 0.5 * float(_log_mass(z, alpha))
    prev, cur = 0.0, 1.0
    mant[0], logs[0] = cur, log_scale
    for k in range(k_max):
        nxt = ((k + alpha - z) * cur - math.sqrt(alpha * k) * prev) / math.sqrt(alpha * (k + 1))
        prev, cur = cur, nxt
        if abs(cur) > 1e150:
            s = abs(cur)
            cur /= s
            prev /= s
            log_scale += math.log(s)
        mant[k + 1], logs[k + 1] = cur, log_scale
    return mant, logs


def charlier_c(n: int, x: int, alpha: float) -> float:
    """Charlier polynomial ``C_n(x, alpha)`` at a lattice point.

    The recurrence is advanced in the smaller of ``n`` and ``x`` (using
    self-duality to swap them), which keeps it stable.

    Raises
    ------
    CharlierOverflowError
        If the value does not fit in a double.
    """
    n, x = _check_index(n, "n"), _check_index(x, "x")
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    k, z = min(n, x), max(n, x)
    mant, logs = _scaled_q_column(k, z, alpha)
    # C_k(z) = q_k(z) / sqrt(m(z) * alpha^k / k!)
    log_norm = 0.5 * float(_log_mass(z, alpha)) + 0.5 * (k * math.log(alpha) - math.lgamma(k + 1))
    m = mant[k]
    if m == 0.0:
        return 0.0
    log_abs = math.log(abs(m)) + logs[k] - log_norm
    if log_abs > _LOG_MAX:
        raise CharlierOverflowError(f"C_{n}({x}, {alpha}) exceeds the floating range")
    return math.copysign(math.exp(log_abs), m)


def charlier_q(n: int, x: int, alpha: float) -> float:
    """Orthonormal Charlier polynomial ``Q_n(x) = C_n(x, alpha) / d_n``."""
    n, x = _check_index(n, "n"), _check_index(x, "x")
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    k, z = min(n, x), max(n, x)
    mant, logs = _scaled_q_column(k, z, alpha)
    m = mant[k]
    if m == 0.0:
        return 0.0
    # mant * exp(logs) is q_n(x) = sqrt(m(x)) Q_n(x)
    log_abs = math.log(abs(m)) + logs[k] - 0.5 * float(_log_mass(x, alpha))
    if log_abs > _LOG_MAX:
        raise CharlierOverflowError(f"Q_{n}({x}) exceeds the floating range")
    return math.copysign(math.exp(log_abs), m)


def orthonormal_table(n_max: int, x_max: int, alpha: float) -> np.ndarray:
    """Table ``q[n, x] = sqrt(m(x)) * Q_n(x)`` for ``n <= n_max``, ``x <= x_max``.

    The table is symmetric where both indices are in range and every entry
    has absolute value at most one.
    """
    size = max(n_max, x_max) + 1
    z = np.arange(size, dtype=float)
    table = np.empty((size, size))
    log_scale = 0.5 * _log_mass(z, alpha)
    prev = np.zeros(size)
    cur = np.ones(size)
    table[0] = np.exp(log_scale)
    with np.errstate(over="ignore", invalid="ignore"):
        _fill_rows(table, alpha, z, prev, cur, log_scale)
    # rows are degrees; only entries with degree <= point are trusted
    lower = np.tril_indices(size, -1)
    table[lower] = table.T[lower]
    return table[: n_max + 1, : x_max + 1]


def _fill_rows(table, alpha, z, prev, cur, log_scale):
    for k in range(len(z) - 1):
        nxt = ((k + alpha - z) * cur - math.sqrt(alpha * k) * prev) / math.sqrt(alpha * (k + 1))
        prev, cur = cur, nxt
        big = np.abs(cur) > 1e150
        if big.any():
            s = np.where(big, np.abs(cur), 1.0)
            cur = cur / s
            prev = prev / s
            log_scale = log_scale + np.log(s)
        table[k + 1] = cur * np.exp(log_scale)


def degree_tail_bound(x, n: int, alpha: float, log: bool = False) -> np.ndarray:
    """Upper bound on ``sum_{k > n} Q_k(x)**2``.

    Uses ``|C_k(x)| <= (1 + k/alpha)**x`` so each term is at most
    ``T_k = alpha^k / k! * (1 + k/alpha)^(2x)``.  The ratio
    ``T_{k+1}/T_k`` decreases in ``k``; terms are summed explicitly until
    it drops below one half and the rest is bounded geometrically.  With
    ``log=True`` the natural log of the bound is returned.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    la = math.log(alpha)
    log_terms = []
    k = n + 1
    while True:
        lt = k * la - math.lgamma(k + 1) + 2.0 * x * math.log1p(k / alpha)
        log_ratio = la - math.log(k + 1) + 2.0 * x * (
            math.log1p((k + 1) / alpha) - math.log1p(k / alpha)
        )
        if np.all(log_ratio < math.log(0.5)):
            log_terms.append(lt - np.log1p(-np.exp(log_ratio)))
            break
        log_terms.append(lt)
        k += 1
    out = np.logaddexp.reduce(np.array(log_terms), axis=0)
    return out if log else np.exp(out)


# ---------------------------------------------------------------------------
# Projections


@dataclass
class SpectralCoefficients:
    """Projections ``g_n = <g, Q_n>`` of a datum onto the Charlier basis.

    ``norm_sq`` is the l2(m) norm squared of the datum on the summation
    support and ``norm_sq_tail`` is the Parseval defect
    ``norm_sq - sum(coeffs**2)`` (clipped at zero), i.e. the energy not
    captured by the returned coefficients.
    """

    coeffs: np.ndarray
    alpha: float
    norm_sq: float
    norm_sq_tail: float
    support_max: int
    sup_abs: float = math.nan
    meta: dict = field(default_factory=dict)

    @property
    def n_max(self) -> int:
        return len(self.coeffs) - 1

    def tail_sq(self) -> np.ndarray:
        """``tail[N] = sum_{n > N} g_n**2`` plus the Parseval defect."""
        sq = self.coeffs**2
        after = np.concatenate([np.cumsum(sq[::-1])[::-1][1:], [0.0]])
        return after + self.norm_sq_tail


def _evaluate(g, xs: np.ndarray) -> np.ndarray:
    if callable(g):
        vals = g(xs)
        return np.broadcast_to(np.asarray(vals, dtype=float), xs.shape).copy()
    arr = np.asarray(g, dtype=float)
    out = np.zeros(xs.shape)
    inside = xs < len(arr)
    out[inside] = arr[xs[inside].astype(int)]
    return out


def _support_for_degrees(n_max: int, alpha: float, tol: float, cap: int) -> int:
    """Support size so that ``sum_{z > X} q_n(z)**2 <= tol`` for all ``n <= n_max``."""
    x = max(support_for_tail(alpha, tol), n_max + 1)
    ns = np.arange(n_max + 1, dtype=float)
    log_m = _log_mass(ns, alpha)
    while x < cap:
        # q_n(z) = q_z(n), so the z-tail at degree n is m(n) * degree tail at n
        log_bound = log_m + degree_tail_bound(ns, x, alpha, log=True)
        if np.all(log_bound <= math.log(tol)):
            return x
        x = int(x * 1.25) + 1
    return cap


def decompose(
    g: Callable | Sequence[float],
    params: ModelParams | float,
    policy: TruncationPolicy | None = None,
    growth: str = "polynomial",
) -> SpectralCoefficients:
    """Project a datum on the orthonormal Charlier system.

    Parameters
    ----------
    g : callable or array_like
        Either a vectorised callable on non-negative integers or a table of
        values on ``0..len(g)-1`` (zero beyond).
    params : ModelParams or float
        Model parameters, or ``alpha`` directly.
    policy : TruncationPolicy, optional
        ``n_max_cap`` fixes how many coefficients are returned and
        ``support_cap`` bounds the summation support.
    growth : {"bounded", "polynomial"}
        Declared growth class of a callable datum.

    Raises
    ------
    DivergentInputError
        If the l2(m) norm has not settled within ``policy.support_cap``.
    """
    policy = policy or TruncationPolicy()
    alpha = params.alpha if isinstance(params, ModelParams) else float(params)
    if growth not in ("bounded", "polynomial"):
        raise ValueError(f"unknown growth class {growth!r}")
    n_cap = int(policy.n_max_cap)
    cap = int(policy.support_cap)

    x_max = _support_for_degrees(n_cap, alpha, 1e-15, cap)
    if not callable(g):
        x_max = max(x_max, len(np.asarray(g)) - 1)
    if x_max >= cap:
        raise DivergentInputError(
            f"support needed for {n_cap} modes exceeds support_cap={cap}"
        )

    while True:
        xs = np.arange(x_max + 1, dtype=float)
        vals = _evaluate(g, xs)
        if not np.all(np.isfinite(vals)):
            raise DivergentInputError("datum is not finite on the summation support")
        log_m = _log_mass(xs, alpha)
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            w = np.exp(log_m + 2.0 * np.log(np.abs(vals)))
        w = np.where(vals == 0, 0.0, w)
        if not np.all(np.isfinite(w)):
            raise DivergentInputError("m(x) g(x)^2 is not finite on the support")
        norm_sq = float(math.fsum(w))
        tail_block = w[-min(10, len(w)):]
        settled = norm_sq == 0.0 or float(tail_block.sum()) <= 1e-16 * norm_sq
        if not callable(g) and len(np.asarray(g)) <= x_max + 1:
            settled = True
        if settled:
            break
        if x_max >= cap - 1:
            raise DivergentInputError(
                f"l2(m) norm of the datum did not settle within support_cap={cap}"
            )
        x_max = min(cap - 1, int(x_max * 1.5) + 10)

    q = orthonormal_table(n_cap, x_max, alpha)
    weighted = np.exp(0.5 * log_m) * vals
    coeffs = q @ weighted
    defect = max(norm_sq - float(math.fsum(coeffs**2)), 0.0)
    sup_abs = float(np.max(np.abs(vals))) if len(vals) else 0.0
    return SpectralCoefficients(
        coeffs=coeffs,
        alpha=alpha,
        norm_sq=norm_sq,
        norm_sq_tail=defect,
        support_max=x_max,
        sup_abs=sup_abs,
        meta={"growth": growth},
    )


def reconstruct(coeffs: SpectralCoefficients | Sequence[float], x, params: ModelParams | float):
    """Evaluate ``sum_n coeffs[n] * Q_n(x)``."""
    if isinstance(coeffs, SpectralCoefficients):
        c = coeffs.coeffs
    else:
        c = np.asarray(coeffs, dtype=float)
    alpha = params.alpha if isinstance(params, ModelParams) else float(params)
    xs = np.atleast_1d(np.asarray(x))
    if np.any(xs < 0) or np.any(xs != np.floor(xs)):
        raise ValueError("x must be non-negative integers")
    xs = xs.astype(int)
    q = orthonormal_table(len(c) - 1, int(xs.max()), alpha)[:, xs]
    scale = np.exp(-0.5 * _log_mass(xs, alpha))
    out = (c @ q) * scale
    return float(out[0]) if np.ndim(x) == 0 else out


def _check_index(v, name):
    if isinstance(v, (bool, np.bool_)) or int(v) != v or v < 0:
        raise ValueError(f"{name} must be a non-negative integer, got {v!r}")
    return int(v)
