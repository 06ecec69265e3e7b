import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from fracid.charlier import (
    CharlierOverflowError,
    DivergentInputError,
    ModelParams,
    SpectralMeasure,
    TruncationPolicy,
    charlier_c,
    charlier_q,
    decompose,
    degree_tail_bound,
    orthonormal_table,
    poisson_mass,
    poisson_tail_bound,
    reconstruct,
    support_for_tail,
)
from fracid.verify import exact_charlier_rows


def exact_c(n, x, alpha):
    """Explicit hypergeometric sum in exact arithmetic."""
    return sum(
        Fraction(math.comb(n, k) * math.comb(x, k) * math.factorial(k)) * (-1 / alpha) ** k
        for k in range(min(n, x) + 1)
    )


def test_low_degrees():
    assert charlier_c(0, 7, 2.5) == 1.0
    # C_1(x) = 1 - x / alpha
    assert charlier_c(1, 0, 1.0) == pytest.approx(1.0)
    assert charlier_c(1, 3, 2.0) == pytest.approx(-0.5)
    assert charlier_c(2, 3, 1.0) == pytest.approx(1.0)


def test_orthonormal_examples():
    assert abs(charlier_q(1, 4, 4.0)) < 1e-15
    assert charlier_q(2, 0, 1.0) == pytest.approx(1 / math.sqrt(2), rel=1e-14)


@pytest.mark.parametrize("alpha", [Fraction(1, 2), Fraction(1), Fraction(5, 2), Fraction(7)])
def test_against_exact_arithmetic(alpha):
    for x in range(26):
        rows = exact_charlier_rows(25, x, alpha)
        for n in range(26):
            ref = rows[n]
            assert ref == exact_c(n, x, alpha)
            got = charlier_c(n, x, float(alpha))
            assert abs(got - float(ref)) <= 1e-11 * max(1.0, abs(float(ref)))


def test_second_recurrence():
    # C_{n+1}(x) = C_n(x) - (x / alpha) C_n(x - 1)
    for alpha in (0.5, 1.3, 4.0):
        for n in range(25):
            for x in range(1, 26):
                lhs = charlier_c(n + 1, x, alpha)
                rhs = charlier_c(n, x, alpha) - x / alpha * charlier_c(n, x - 1, alpha)
                scale = max(abs(charlier_c(n, x, alpha)), abs(x / alpha * charlier_c(n, x - 1, alpha)), 1.0)
                assert abs(lhs - rhs) <= 1e-10 * scale


@given(n=st.integers(0, 30), x=st.integers(0, 30), alpha=st.floats(0.2, 8.0))
@settings(max_examples=200, deadline=None)
def test_self_duality(n, x, alpha):
    a, b = charlier_c(n, x, alpha), charlier_c(x, n, alpha)
    assert abs(a - b) <= 1e-9 * max(abs(a), 1e-300)


@pytest.mark.parametrize("alpha", [0.5, 1.0, 2.0, 4.0])
def test_orthogonality(alpha):
    x_max = 400
    assert poisson_tail_bound(x_max, alpha) <= 1e-14
    q = orthonormal_table(20, x_max, alpha)
    assert np.abs(q @ q.T - np.eye(21)).max() <= 1e-8


def test_table_symmetric_and_bounded():
    q = orthonormal_table(60, 60, 3.0)
    assert np.array_equal(q, q.T)
    assert np.abs(q).max() <= 1.0 + 1e-12
    cols = orthonormal_table(200, 30, 3.0)
    # columns are complete orthonormal expansions: sum_n q_n(x)^2 = 1
    assert np.allclose((cols**2).sum(axis=0), 1.0, atol=1e-12)


def test_overflow_signalled():
    with pytest.raises(CharlierOverflowError):
        charlier_c(150, 150, 0.01)


def test_invalid_arguments():
    with pytest.raises(ValueError):
        charlier_c(-1, 2, 1.0)
    with pytest.raises(ValueError):
        charlier_c(1.5, 2, 1.0)
    with pytest.raises(ValueError):
        charlier_c(1, 2, 0.0)
    with pytest.raises(ValueError):
        ModelParams(0.0, 1.0)
    with pytest.raises(ValueError):
        ModelParams(1.0, 1.0, 1.2)
    with pytest.raises(ValueError):
        TruncationPolicy(tol=0.0)
    with pytest.raises(ValueError):
        TruncationPolicy(strategy="magic")


def test_poisson_measure():
    m = SpectralMeasure(2.0)
    xs = np.arange(60)
    assert math.fsum(m.mass(xs)) == pytest.approx(1.0, abs=1e-14)
    assert m.mass(0) == pytest.approx(math.exp(-2.0))
    assert poisson_mass(3, 1.0) == pytest.approx(math.exp(-1) / 6)


@given(alpha=st.floats(0.1, 30.0), x=st.integers(0, 120))
@settings(max_examples=200, deadline=None)
def test_poisson_tail_bound_dominates(alpha, x):
    true = stats.poisson.sf(x, alpha)
    assert poisson_tail_bound(x, alpha) >= true * (1 - 1e-9)


def test_support_for_tail():
    x = support_for_tail(4.0, 1e-14)
    assert stats.poisson.sf(x, 4.0) <= 1e-14
    assert poisson_tail_bound(x - 1, 4.0) > 1e-14


def test_degree_tail_bound_dominates():
    for alpha in (Fraction(1, 2), Fraction(2), Fraction(5)):
        for x in (0, 3, 12):
            for n in (0, 5, 20):
                exact = sum(
                    exact_c(k, x, alpha) ** 2 * alpha**k / math.factorial(k) for k in range(n + 1, n + 150)
                )
                assert degree_tail_bound(x, n, float(alpha))[0] >= float(exact) * (1 - 1e-12)


def test_pearson_identity():
    # nabla_plus(b z m(z))(x) = (a - b x) m(x)
    a, b = 3.0, 0.7
    alpha = a / b
    x = np.arange(80)
    m = poisson_mass(np.arange(81), alpha)
    lhs = b * (x + 1) * m[1:] - b * x * m[:-1]
    rhs = (a - b * x) * m[:-1]
    assert np.all(np.abs(lhs - rhs) <= 1e-12 * np.maximum(np.abs(rhs), m[:-1]))


def test_decompose_identity():
    c = decompose(lambda z: z, 2.0)
    assert c.coeffs[0] == pytest.approx(2.0, abs=1e-13)
    assert c.coeffs[1] == pytest.approx(-math.sqrt(2.0), abs=1e-13)
    assert np.abs(c.coeffs[2:]).max() <= 1e-13
    assert c.norm_sq == pytest.approx(6.0, rel=1e-13)
    assert reconstruct(c, 3, 2.0) == pytest.approx(3.0, abs=1e-12)


def test_decompose_constant_and_mode():
    c = decompose(lambda z: np.ones_like(z), ModelParams(4.0, 1.0))
    assert c.coeffs[0] == pytest.approx(1.0, abs=1e-14)
    assert np.abs(c.coeffs[1:]).max() <= 1e-14
    alpha = 1.7
    xs = np.arange(120)
    mode = orthonormal_table(5, 119, alpha)[5] / np.sqrt(poisson_mass(xs, alpha))
    c5 = decompose(mode, alpha)
    assert c5.coeffs[5] == pytest.approx(1.0, abs=1e-12)
    assert np.abs(np.delete(c5.coeffs, 5)).max() <= 1e-12


def test_parseval_defect_small():
    rng = np.random.default_rng(3)
    g = rng.normal(size=30)
    c = decompose(g, 2.5)
    assert c.norm_sq_tail <= 1e-12 * c.norm_sq
    assert np.allclose(reconstruct(c, np.arange(30), 2.5), g, atol=1e-9)


def test_decompose_rejects_divergent():
    def fast(z):
        with np.errstate(over="ignore"):
            return np.exp(np.asarray(z, float) ** 2 / 3.0)

    with pytest.raises(DivergentInputError):
        decompose(fast, 1.0)
    with pytest.raises(DivergentInputError):
        decompose(lambda z: np.where(np.asarray(z) == 3, np.nan, 1.0), 1.0)


@pytest.mark.parametrize("alpha", [0.5, 2.0, 4.0])
def test_norm_identity(alpha):
    xs = np.arange(300)
    m = poisson_mass(xs, alpha)
    for n in (0, 1, 4, 9):
        c = np.array([charlier_c(n, int(x), alpha) for x in xs])
        norm = math.fsum(m * c * c)
        assert norm == pytest.approx(math.factorial(n) / alpha**n, rel=1e-9)


def test_generating_function():
    # sum_n C_n(x) t^n / n! = e^t (1 - t / alpha)^x in the convention C_1 = 1 - x / alpha
    alpha = 1.5
    for x in range(11):
        for t in (-1.0, -0.4, 0.3, 1.0):
            s = math.fsum(charlier_c(n, x, alpha) * t**n / math.factorial(n) for n in range(60))
            assert s == pytest.approx(math.exp(t) * (1 - t / alpha) ** x, rel=1e-10, abs=1e-12)
