import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fracid.charlier import ModelParams, orthonormal_table, poisson_mass
from fracid.mlf import mittag_leffler
from fracid.operators import (
    LatticeFunction,
    OutOfSupportError,
    apply_forward,
    apply_generator,
    caputo_derivative_numeric,
    delta,
    dim_for_tail,
    nabla_minus,
    nabla_plus,
    truncated_matrix,
)

int_lists = st.lists(st.integers(-1000, 1000), min_size=52, max_size=52)


def test_difference_examples():
    c = LatticeFunction(np.full(10, 3.5))
    x = np.arange(1, 9)
    assert np.all(nabla_plus(c, x) == 0) and np.all(delta(c, x) == 0)
    ident = LatticeFunction(np.arange(10.0))
    assert nabla_minus(ident, 0) == 0.0
    assert np.all(nabla_plus(ident, np.arange(9)) == 1.0)
    sq = LatticeFunction(np.arange(10.0) ** 2)
    assert np.all(delta(sq, np.arange(1, 9)) == 2.0)


def test_boundary_and_support():
    f = LatticeFunction([5.0, 1.0, 2.0])
    assert f(-1) == 0.0
    assert nabla_minus(f, 0) == 5.0
    assert delta(f, 0) == 1.0 - 10.0
    with pytest.raises(OutOfSupportError):
        nabla_plus(f, 2)
    with pytest.raises(OutOfSupportError):
        f(3)
    with pytest.raises(ValueError):
        nabla_plus(f, -1)


@given(f=int_lists, g=int_lists)
@settings(max_examples=100, deadline=None)
def test_leibniz_rules(f, g):
    f = LatticeFunction(f)
    g = LatticeFunction(g)
    fg = LatticeFunction(f.values * g.values)
    x = np.arange(1, 51)
    fx1, fxm = f(x + 1), f(x - 1)
    assert np.array_equal(nabla_plus(fg, x), fx1 * nabla_plus(g, x) + g(x) * nabla_plus(f, x))
    assert np.array_equal(nabla_minus(fg, x), f(x) * nabla_minus(g, x) + g(x - 1) * nabla_minus(f, x))
    assert np.array_equal(
        delta(fg, x), fx1 * nabla_plus(g, x) - fxm * nabla_minus(g, x) + g(x) * delta(f, x)
    )


@given(f=int_lists)
@settings(max_examples=100, deadline=None)
def test_delta_factorises(f):
    f = LatticeFunction(f)
    x = np.arange(1, 50)
    inner = LatticeFunction(nabla_plus(f, np.arange(51)))
    assert np.array_equal(delta(f, x), nabla_minus(inner, x))
    # at 0 the inner difference reads f(-1) = 0 itself
    assert delta(f, 0) == nabla_plus(f, 0) - (f(0) - f(-1))


@given(f=int_lists, a=st.integers(1, 9), b=st.integers(1, 9))
@settings(max_examples=100, deadline=None)
def test_generator_forms_agree(f, a, b):
    p = ModelParams(float(a), float(b))
    x = np.arange(51)
    assert np.array_equal(apply_generator(f, x, p, "split"), apply_generator(f, x, p, "diffusion"))
    assert np.array_equal(apply_forward(f, x, p, "matrix"), apply_forward(f, x, p, "divergence"))


def test_generator_examples():
    p = ModelParams(1.0, 3.0)
    ident = np.arange(20.0)
    assert apply_generator(ident, 2, p) == -5.0
    assert np.all(apply_generator(np.ones(20), np.arange(19), p) == 0.0)


@pytest.mark.parametrize("alpha_ab", [(1.0, 1.0), (2.0, 0.5), (0.3, 1.7)])
def test_charlier_eigenfunctions(alpha_ab):
    p = ModelParams(*alpha_ab)
    xs = np.arange(61)
    m = poisson_mass(xs, p.alpha)
    q = orthonormal_table(15, 60, p.alpha)
    x = np.arange(40)
    for n in range(16):
        qn = q[n] / np.sqrt(m)
        g = apply_generator(qn, x, p)
        assert np.allclose(g, -p.b * n * qn[:40], rtol=1e-9, atol=1e-9 * np.abs(qn[:40]).max())
        # forward operator on m Q_n gives -b n m Q_n
        mq = m * qn
        lf = apply_forward(mq, x, p)
        assert np.allclose(lf, -p.b * n * mq[:40], atol=1e-12)


def test_forward_examples():
    p = ModelParams(2.0, 1.0)
    m = poisson_mass(np.arange(80), p.alpha)
    assert np.abs(apply_forward(m, np.arange(70), p)).max() <= 1e-15
    ind = np.zeros(5)
    ind[0] = 1.0
    assert apply_forward(ind, 1, p) == 2.0


def test_truncated_examples():
    p = ModelParams(1.0, 1.0)
    assert np.array_equal(truncated_matrix("generator", 2, p).matrix, [[-1, 1], [1, -2]])
    assert np.array_equal(truncated_matrix("forward", 2, p).matrix, [[-1, 1], [1, -2]])
    with pytest.raises(ValueError):
        truncated_matrix("generator", 1, p)
    with pytest.raises(ValueError):
        truncated_matrix("other", 4, p)


def test_truncated_structure():
    p = ModelParams(1.3, 0.6)
    for dim in (2, 3, 17, 200):
        g = truncated_matrix("generator", dim, p)
        f = truncated_matrix("forward", dim, p)
        assert f.transpose_of(g)
        assert np.count_nonzero(np.triu(g.matrix, 2)) == 0 and np.count_nonzero(np.tril(g.matrix, -2)) == 0
        if dim > 2:
            assert np.all(f.matrix[:, 1:-2].sum(axis=0) == pytest.approx(0.0, abs=1e-12))
    # in-range rows act like the operators
    dim = 30
    rng = np.random.default_rng(1)
    v = rng.normal(size=dim)
    x = np.arange(dim - 1)
    g = truncated_matrix("generator", dim, p).matrix
    f = truncated_matrix("forward", dim, p).matrix
    assert np.allclose((g @ v)[:-1], apply_generator(v, x, p), atol=1e-12)
    assert np.allclose((f @ v)[:-1], apply_forward(v, x, p), atol=1e-12)


def test_leak_bound_and_dim():
    p = ModelParams(2.0, 1.0)
    d = dim_for_tail(p, 1e-12)
    assert truncated_matrix("forward", d, p).leak_bound < 1e-12
    assert truncated_matrix("forward", d - 1, p).leak_bound >= 1e-12


def test_caputo_constant_and_linear():
    t = np.linspace(0.0, 1.0, 101)
    assert np.all(caputo_derivative_numeric(np.full(101, 2.5), 0.5, t=t) == 0.0)
    d = caputo_derivative_numeric(t, 0.5, t=t)
    # the scheme is exact on piecewise linear data
    assert d[-1] == pytest.approx(2 * math.sqrt(1 / math.pi), rel=1e-12)
    assert d[-1] == pytest.approx(1.1283792, abs=1e-7)


def test_caputo_order_on_quadratic():
    nu = 0.5
    errs = []
    ms = [40, 80, 160, 320]
    for m in ms:
        t = np.linspace(0.0, 1.0, m + 1)
        d = caputo_derivative_numeric(t**2, nu, t=t)
        exact = 2 / math.gamma(3 - nu) * t[1:] ** (2 - nu)
        errs.append(np.abs(d - exact).max())
    order = np.polyfit(np.log(1 / np.array(ms)), np.log(errs), 1)[0]
    assert order >= 1.4


def test_caputo_mittag_leffler_eigen_relation():
    nu, lam = 0.5, 2.0
    errs = []
    for m in (50, 100, 200, 400):
        t = np.linspace(0.0, 1.0, m + 1)
        u = mittag_leffler(nu, -lam * t**nu)
        d = caputo_derivative_numeric(u, nu, t=t)
        errs.append(np.abs(d + lam * u[1:])[t[1:] >= 0.5].max())
    assert all(e2 < e1 for e1, e2 in zip(errs, errs[1:]))
    assert errs[-1] < 2e-3


def test_caputo_vectorised_columns():
    t = np.linspace(0, 2, 41)
    u = np.stack([t, t**2, np.cos(t)], axis=1)
    d = caputo_derivative_numeric(u, 0.3, t=t)
    for j in range(3):
        assert np.allclose(d[:, j], caputo_derivative_numeric(u[:, j], 0.3, t=t), rtol=1e-13)


def test_caputo_rejects_bad_grids():
    with pytest.raises(ValueError):
        caputo_derivative_numeric([0.0, 1.0, 2.0], 0.5, t=[0.0, 0.1, 0.3])
    with pytest.raises(ValueError):
        caputo_derivative_numeric([0.0, 1.0], 0.5, h=0.1)
    with pytest.raises(ValueError):
        caputo_derivative_numeric([0.0, 1.0, 2.0], 1.0, h=0.1)
