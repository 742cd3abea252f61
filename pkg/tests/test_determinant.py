import cmath
import math

import numpy as np
import pytest

from dynzeta.determinant import (DeterminantHandle, LatticeClosedForm, TraceSeries,
                                 closed_form_det, det_coefficients, evaluate_det,
                                 find_resonances, newton_coefficients, trace_power)
from dynzeta.entire import CallableHandle
from dynzeta.errors import ApplicabilityError
from dynzeta.model import make_uniform_system, system_from_dict, system_to_dict
from dynzeta.orbits import enumerate_fixed_words, group_into_orbits, orbit_data
from dynzeta.single_orbit import OrbitSpectrum, single_orbit_det, single_orbit_resonances

from conftest import exact_two_shift


@pytest.fixture(scope="module")
def series(two_shift):
    return TraceSeries(two_shift, 25)


def test_trace_examples(two_shift):
    assert trace_power(two_shift, 1, 0) == pytest.approx(4.0)
    assert trace_power(two_shift, 2, 0) == pytest.approx(4 / 2.25)
    assert abs(trace_power(two_shift, 1, 800)) == 0


def test_orbit_classes_reproduce_fixed_words(two_shift):
    for m in range(1, 9):
        total = 0j
        for cls in group_into_orbits(enumerate_fixed_words(two_shift.graph, m)):
            rec = orbit_data(two_shift, cls)
            weight = cmath.exp(-(0.3 + 1j) * rec.T) * rec.lift_trace / rec.det_factor
            total += m * rec.T_primitive / rec.T * weight
        ref = trace_power(two_shift, m, 0.3 + 1j)
        assert abs(total - ref) <= 1e-12 * abs(ref)


def test_newton_examples():
    lam, nu = 0.7 + 0.2j, -0.4
    c, _, _ = newton_coefficients([lam ** m for m in range(1, 7)])
    assert c[1] == pytest.approx(-lam) and np.allclose(c[2:], 0, atol=1e-15)
    c, _, _ = newton_coefficients([lam ** m + nu ** m for m in range(1, 7)])
    assert c[2] == pytest.approx(lam * nu)
    c, _, _ = newton_coefficients(np.zeros(5))
    assert np.array_equal(c, [1, 0, 0, 0, 0, 0])


def test_newton_reproduces_characteristic_polynomial():
    rng = np.random.default_rng(0)
    for _ in range(50):
        L = (rng.normal(size=(5, 5)) + 1j * rng.normal(size=(5, 5))) / 3
        sums = [np.trace(np.linalg.matrix_power(L, m)) for m in range(1, 9)]
        c, _, _ = newton_coefficients(sums)
        ref = np.poly(L)
        assert np.max(np.abs(c[:6] - ref)) < 1e-12
        assert np.max(np.abs(c[6:])) < 1e-12


def test_newton_derivatives_match_finite_differences(series):
    z, h = 2 + 1j, 1e-6
    s, ds, _ = series.scaled(np.array([z]), 10)
    _, dc, _ = newton_coefficients(s, ds)
    val = lambda w: det_coefficients(series, 10, w).value()[0]
    fd = (val(z + h) - val(z - h)) / (2 * h)
    assert abs(DeterminantHandle(series, 10).dlog(np.array([z]))[0] * val(z) - fd) < 1e-6


@pytest.mark.parametrize("z", [3, 3 + 2j, 1 - 3j, 4 + 3j, 1])
def test_dual_path(two_shift, series, z):
    cf = LatticeClosedForm.from_system(two_shift)
    closed, bound = closed_form_det(cf, z)
    est = evaluate_det(two_shift, z, 25, series)
    assert abs(est.value - closed) / (1 + abs(closed)) <= 1e-8
    assert abs(closed - exact_two_shift(z)) < 1e-12 + bound * abs(closed) * 2


def test_closed_form_vanishes_at_zero(two_shift, series):
    cf = LatticeClosedForm.from_system(two_shift)
    assert abs(closed_form_det(cf, 0)[0]) < 1e-12
    assert abs(evaluate_det(two_shift, 0, 25, series).value) < 1e-6
    assert abs(closed_form_det(cf, 5)[0] - evaluate_det(two_shift, 5, 25, series).value) < 1e-9


def test_zero_lift_gives_one(two_shift):
    cfg = system_to_dict(two_shift)
    for e in cfg["edges"]:
        e["lift"] = [[0.0]]
    sys = system_from_dict(cfg)
    assert evaluate_det(sys, 1 + 1j, 6).value == 1
    assert closed_form_det(LatticeClosedForm.from_system(sys), 0.5)[0] == 1


def test_edgeless_graph_gives_one():
    sys = make_uniform_system([[0]], np.diag([2.0, 0.5]), split=(1, 1))
    assert evaluate_det(sys, 0.3, 5).value == 1


def test_closed_form_needs_transition_independence(two_shift):
    cfg = system_to_dict(two_shift)
    cfg["edges"][0]["linear"] = [[3.0, 0.0], [0.0, 0.5]]
    with pytest.raises(ApplicabilityError):
        LatticeClosedForm.from_system(system_from_dict(cfg))


def test_self_loop_matches_single_orbit(basic_spectrum):
    sys = make_uniform_system([[1]], np.diag([2.0, 0.5]), split=(1, 1))
    for z in (2, 3 + 1j, 1.5 - 2j):
        ref = single_orbit_det(basic_spectrum, z).value
        assert abs(evaluate_det(sys, z, 25).value - ref) < 1e-10


def test_truncation_increments_shrink(series):
    for z in (2, 2 + 2j, 3 - 1j):
        c = det_coefficients(series, 25, z).coefficients[:, 0]
        gaps = [abs(c[M + 1:].sum() if M + 5 >= 25 else c[M + 1:M + 6].sum())
                for M in (10, 15, 20)]
        assert gaps[0] > gaps[1] > gaps[2]


def test_estimate_reports_error(two_shift, series):
    est = evaluate_det(two_shift, 3 + 1j, 25, series)
    assert est.converged and est.error < 1e-8


def test_find_resonances_two_shift(two_shift, series):
    rs = find_resonances(DeterminantHandle(series, 25), 0.5, M=25)
    assert rs.count == 1 and abs(rs.values()[0]) < 1e-8
    assert rs.multiplicities()[0] == 1


def test_find_resonances_trivial():
    assert find_resonances(CallableHandle(lambda z: np.ones_like(z)), 3.0).count == 0


def test_find_resonances_single_orbit(basic_spectrum):
    sys = make_uniform_system([[1]], np.diag([2.0, 0.5]), split=(1, 1))
    h = LatticeClosedForm.from_system(sys).handle(1e-12)
    rs = find_resonances(h, 4.0)
    ref = single_orbit_resonances(basic_spectrum, 4.0)
    assert rs.count == ref.count == 15
    got = sorted(zip(np.round(rs.values().real, 6), rs.multiplicities()))
    want = sorted(zip(np.round(ref.values().real, 6), ref.multiplicities()))
    assert got == want
