"""Lattice difference operators, the immigration-death generator and its
adjoint, truncated tridiagonal matrices, and an L1 Caputo derivative."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import toeplitz

from .charlier import ModelParams, poisson_tail_bound

__all__ = [
    "LatticeFunction",
    "OutOfSupportError",
    "TruncatedOperatorMatrix",
    "apply_forward",
    "apply_generator",
    "caputo_derivative_numeric",
    "delta",
    "dim_for_tail",
    "l1_weights",
    "nabla_minus",
    "nabla_plus",
    "truncated_matrix",
]


class OutOfSupportError(IndexError):
    """Read of a lattice function beyond its last stored state."""


class LatticeFunction:
    """Real function on ``{0, ..., X}`` with the convention ``f(-1) = 0``.

    Parameters
    ----------
    values : array_like
        ``f(0), ..., f(X)``.
    """

    def __init__(self, values):
        v = np.asarray(values, dtype=float)
        if v.ndim != 1 or v.size == 0:
            raise ValueError("values must be a non-empty 1-d sequence")
        if not np.all(np.isfinite(v)):
            raise ValueError("values must be finite")
        self.values = v
        self.values.flags.writeable = False

    @classmethod
    def from_callable(cls, f, x_max: int) -> "LatticeFunction":
        xs = np.arange(x_max + 1)
        try:
            vals = np.asarray(f(xs), dtype=float)
            if vals.shape != xs.shape:
                raise TypeError
        except Exception:
            vals = np.array([f(int(x)) for x in xs], dtype=float)
        return cls(vals)

    @property
    def x_max(self) -> int:
        return self.values.size - 1

    def __len__(self):
        return self.values.size

    def __call__(self, x):
        x = np.asarray(x)
        if np.any(x < -1) or np.any(x > self.x_max):
            raise OutOfSupportError(
                f"lattice function defined on 0..{self.x_max}, read at {x}"
            )
        padded = np.concatenate([[0.0], self.values])
        out = padded[x + 1]
        return float(out) if out.ndim == 0 else out

    def __repr__(self):
        return f"LatticeFunction(x_max={self.x_max})"


def _as_lattice(f) -> LatticeFunction:
    return f if isinstance(f, LatticeFunction) else LatticeFunction(f)


def _points(x):
    x = np.asarray(x)
    if not np.issubdtype(x.dtype, np.integer):
        if np.any(x != np.round(x)):
            raise ValueError("lattice points must be integers")
        x = x.astype(int)
    if np.any(x < 0):
        raise ValueError("lattice points must be non-negative")
    return x


def nabla_plus(f, x):
    """Forward difference ``f(x+1) - f(x)``."""
    f, x = _as_lattice(f), _points(x)
    return f(x + 1) - f(x)


def nabla_minus(f, x):
    """Backward difference ``f(x) - f(x-1)``, with ``f(-1) = 0``."""
    f, x = _as_lattice(f), _points(x)
    return f(x) - f(x - 1)


def delta(f, x):
    """Second difference ``f(x+1) - 2 f(x) + f(x-1)``."""
    f, x = _as_lattice(f), _points(x)
    return f(x + 1) - 2.0 * f(x) + f(x - 1)


def apply_generator(f, x, params: ModelParams, form: str = "split"):
    """Backward generator of the immigration-death chain.

    ``form="split"`` evaluates ``a nabla_plus f - b x nabla_minus f`` and
    ``form="diffusion"`` the equivalent ``(a - b x) nabla_minus f + a delta f``.
    """
    f, x = _as_lattice(f), _points(x)
    a, b = params.a, params.b
    if form == "split":
        return a * nabla_plus(f, x) - b * x * nabla_minus(f, x)
    if form == "diffusion":
        return (a - b * x) * nabla_minus(f, x) + a * delta(f, x)
    raise ValueError(f"unknown form {form!r}")


def apply_forward(f, x, params: ModelParams, form: str = "matrix"):
    """Forward (adjoint) operator acting on a mass function.

    ``form="matrix"`` evaluates ``a f(x-1) - (a + b x) f(x) + b (x+1) f(x+1)``
    and ``form="divergence"`` the equivalent
    ``-nabla_plus[(a - b z) f(z)](x) + a delta f(x)``.
    """
    f, x = _as_lattice(f), _points(x)
    a, b = params.a, params.b
    if form == "matrix":
        return a * f(x - 1) - (a + b * x) * f(x) + b * (x + 1) * f(x + 1)
    if form == "divergence":
        drift_next = (a - b * (x + 1)) * f(x + 1)
        drift_here = (a - b * x) * f(x)
        return -(drift_next - drift_here) + a * delta(f, x)
    raise ValueError(f"unknown form {form!r}")


@dataclass(frozen=True)
class TruncatedOperatorMatrix:
    """Tridiagonal section of the generator or forward operator on ``0..dim-1``.

    The last row drops the coupling to ``dim`` but keeps the full diagonal,
    so mass leaving the box is lost rather than reflected.  ``leak_bound``
    is the stationary Poisson mass at or beyond ``dim``.
    """

    kind: str
    dim: int
    matrix: np.ndarray
    leak_bound: float

    def transpose_of(self, other: "TruncatedOperatorMatrix") -> bool:
        return self.dim == other.dim and np.array_equal(self.matrix, other.matrix.T)


def truncated_matrix(kind: str, dim: int, params: ModelParams) -> TruncatedOperatorMatrix:
    if dim < 2:
        raise ValueError("dim must be at least 2")
    if kind not in ("generator", "forward"):
        raise ValueError(f"kind must be 'generator' or 'forward', got {kind!r}")
    a, b = params.a, params.b
    x = np.arange(dim, dtype=float)
    m = np.diag(-(a + b * x))
    if kind == "generator":
        m[np.arange(dim - 1), np.arange(1, dim)] = a
        m[np.arange(1, dim), np.arange(dim - 1)] = b * x[1:]
    else:
        m[np.arange(1, dim), np.arange(dim - 1)] = a
        m[np.arange(dim - 1), np.arange(1, dim)] = b * x[1:]
    m.flags.writeable = False
    leak = poisson_tail_bound(dim - 1, params.alpha)
    return TruncatedOperatorMatrix(kind, dim, m, leak)


def dim_for_tail(params: ModelParams, tail: float = 1e-12, start: int = 0) -> int:
    """Smallest ``dim > start`` with stationary mass beyond ``dim - 1`` below ``tail``."""
    d = max(2, start + 1)
    while poisson_tail_bound(d - 1, params.alpha) >= tail:
        d += 1
    return d


def l1_weights(m: int, nu: float) -> np.ndarray:
    """``b_k = (k+1)^(1-nu) - k^(1-nu)`` for ``k = 0..m-1``."""
    k = np.arange(m, dtype=float)
    return (k + 1.0) ** (1.0 - nu) - k ** (1.0 - nu)


def caputo_derivative_numeric(u, nu: float, t=None, h: float | None = None):
    """L1 approximation of the Caputo derivative of order ``nu``.

    Parameters
    ----------
    u : array_like, shape (M+1,) or (M+1, k)
        Samples at ``t_0 = 0, t_1, ..., t_M`` on a uniform grid; ``u[0]`` is
        the known initial value.  Extra axes are treated as independent series.
    nu : float
        Order in (0, 1).
    t : array_like, optional
        Grid; checked for uniformity and used for the step.
    h : float, optional
        Step, if ``t`` is not given.

    Returns
    -------
    ndarray, shape (M,) or (M, k)
        Approximations at ``t_1, ..., t_M``.
    """
    if not 0 < nu < 1:
        raise ValueError("nu must lie in (0, 1)")
    u = np.asarray(u, dtype=float)
    if u.shape[0] < 3:
        raise ValueError("need at least M = 2 steps")
    if t is not None:
        t = np.asarray(t, dtype=float)
        if t.shape[0] != u.shape[0]:
            raise ValueError("t and u lengths differ")
        steps = np.diff(t)
        h = steps.mean()
        if h <= 0 or np.max(np.abs(steps - h)) > 1e-9 * h:
            raise ValueError("time grid must be uniform and increasing")
    if h is None or not h > 0:
        raise ValueError("a uniform step h > 0 or grid t is required")
    m = u.shape[0] - 1
    du = np.diff(u, axis=0)
    w = l1_weights(m, nu)
    # row n: sum_k w_k du_{n-k}
    conv = np.tril(toeplitz(w)) @ du.reshape(m, -1)
    scale = h ** (-nu) / math.gamma(2.0 - nu)
    return (scale * conv).reshape(du.shape)
