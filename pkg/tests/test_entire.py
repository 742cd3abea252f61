import cmath
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dynzeta.entire import (LogHandle, TailModel, TailModelError, argument_principle_count,
                            counting_exponent_fit, elementary_factor, growth_order_fit,
                            jensen_residual, weierstrass_product)
from dynzeta.errors import ContourDegeneracyError


def test_elementary_factor_examples():
    assert elementary_factor(0, 0.3) == pytest.approx(0.7)
    assert elementary_factor(1, 0.5) == pytest.approx(0.5 * math.exp(0.5))
    assert all(elementary_factor(p, 0) == 1 for p in range(6))
    with pytest.raises(ValueError):
        elementary_factor(-1, 0.1)


@settings(max_examples=60, deadline=None)
@given(p=st.integers(0, 5), r=st.floats(0, 0.4), t=st.floats(0, 2 * math.pi))
def test_elementary_factor_series(p, r, t):
    z = r * cmath.exp(1j * t)
    ref = cmath.exp(-sum(z ** k / k for k in range(p + 1, 61)))
    assert abs(elementary_factor(p, z) - ref) < 1e-12


def test_weierstrass_examples():
    lam = [2.0 ** -j for j in range(1, 61)]
    tail = TailModel(2.0, 0.0)
    res = weierstrass_product(lam, 1, tail)
    assert res.value.real == pytest.approx(0.2887880951, abs=1e-10)
    assert res.tail_factor < 1 + 1e-15
    assert weierstrass_product(lam, 0, tail).value == 1
    assert weierstrass_product([1.0], 1).value == 0


def test_weierstrass_rejects_bad_input():
    with pytest.raises(TailModelError):
        weierstrass_product([0.1, 0.5], 1)
    with pytest.raises(TailModelError):
        weierstrass_product([0.5, 0.5, 0.5], 1, TailModel(1.0, 0.0))


@pytest.mark.parametrize("f,r,n", [
    (lambda z: 1 - np.exp(-z), 7, 3),
    (lambda z: np.ones_like(z), 4, 0),
    (lambda z: z ** 2, 1, 2),
])
def test_argument_principle_examples(f, r, n):
    rep = argument_principle_count(f, r)
    assert rep.count == n and rep.reliable


def test_argument_principle_perturbs_off_zero():
    rep = argument_principle_count(lambda z: z - 1, 1.0)
    assert rep.perturbations >= 1 and rep.count == 1 and rep.radius > 1


def test_argument_principle_gives_up():
    # zeros at 1.01**k for every k: the contour cannot be moved off them
    f = lambda z: np.prod([z - 1.01 ** k for k in range(8)], axis=0)
    with pytest.raises(ContourDegeneracyError):
        argument_principle_count(f, 1.0)


def test_counts_are_monotone():
    f = LogHandle(lambda z: np.log(1 - np.exp(-z)))
    counts = [argument_principle_count(f, r).count for r in (3.5, 7, 13, 19)]
    assert counts == sorted(counts) == [1, 3, 5, 7]


@pytest.mark.parametrize("f,zeros,r,tol", [
    (lambda z: 1 - z, [1], 2, 1e-8),
    (lambda z: 5 + 0 * z, [], 3, 1e-12),
    (lambda z: (1 - z) ** 2, [(1, 2)], 2, 1e-8),
])
def test_jensen_examples(f, zeros, r, tol):
    assert jensen_residual(f, zeros, r) < tol


def test_jensen_errors():
    with pytest.raises(ContourDegeneracyError):
        jensen_residual(lambda z: z, [], 1)
    with pytest.raises(ContourDegeneracyError):
        jensen_residual(lambda z: 1 - z, [1], 1)


def test_jensen_detects_missing_zero():
    assert jensen_residual(lambda z: 1 - z, [], 2) > 0.5


def test_growth_examples():
    radii = [2, 3, 4, 5, 6]
    assert growth_order_fit(LogHandle(lambda z: z ** 2), radii).alpha == pytest.approx(2, abs=0.05)
    assert growth_order_fit(np.exp, [4, 6, 8, 10, 12]).alpha == pytest.approx(1, abs=0.05)
    small = growth_order_fit(lambda z: 1 + 0 * z, radii)
    assert math.isnan(small.alpha) and small.note
    with pytest.raises(ValueError):
        growth_order_fit(np.exp, [1, 2, 3])


def test_counting_fit_examples():
    fit = counting_exponent_fit([(r, r ** 3) for r in range(10, 61, 10)])
    assert fit.beta == pytest.approx(3, abs=0.01)
    flat = counting_exponent_fit([(r, 4) for r in range(1, 6)])
    assert flat.degenerate and flat.beta == 0
    with pytest.raises(ValueError):
        counting_exponent_fit([(1, 1), (2, 2)])
