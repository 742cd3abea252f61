import cmath
import math

import numpy as np
import pytest

from dynzeta.entire import argument_principle_count
from dynzeta.errors import SpectrumError
from dynzeta.single_orbit import (OrbitSpectrum, SingleOrbitDeterminant, enumerate_lattice,
                                  lattice_zero_count, single_orbit_det,
                                  single_orbit_resonances)


def cycle_sum(z, pmax=40):
    """Cycle-expansion oracle over repetitions of the basic orbit."""
    s = 0j
    for p in range(1, pmax + 1):
        s += cmath.exp(-z * p) / (p * (2 ** p - 1) * (1 - 2.0 ** -p))
    return cmath.exp(-s)


def test_lattice_examples(basic_spectrum):
    lat = enumerate_lattice(basic_spectrum, 2 ** -4 * 1.01)
    assert [(q.value.real, q.multiplicity) for q in lat] == [(0.5, 1), (0.25, 2), (0.125, 3)]
    only_lam = OrbitSpectrum(1.0, (2.0,), (), 0, (1.0,))
    assert [(q.value.real, q.multiplicity) for q in enumerate_lattice(only_lam, 0.2)] == [
        (0.5, 1), (0.25, 1)]
    flipped = OrbitSpectrum(1.0, (-2.0,), (), 1, (1.0,))
    assert enumerate_lattice(flipped, 0.4)[0].value == pytest.approx(0.5)


def test_lattice_multiplicities_follow_partitions(basic_spectrum):
    for q in enumerate_lattice(basic_spectrum, 2.0 ** -12 * 1.01):
        m = round(-math.log2(q.value.real))
        assert q.multiplicity == m


def test_spectrum_validation():
    with pytest.raises(SpectrumError):
        OrbitSpectrum(1.0, (1.0 + 1e-10,), (), 0, (1.0,))
    with pytest.raises(SpectrumError):
        OrbitSpectrum(1.0, (2.0,), (0.99999999999,), 0, (1.0,))
    with pytest.raises(SpectrumError):
        OrbitSpectrum(0.0, (2.0,), (), 0, (1.0,))
    with pytest.raises(SpectrumError):
        OrbitSpectrum(1.0, (), (0.5,), 0, (1.0,))
    with pytest.raises(SpectrumError):
        OrbitSpectrum.from_matrices(1.0, [[2, 1], [0, 2]], [[1]], (2, 0))


def test_from_matrices_counts_negative_eigenvalues():
    spec = OrbitSpectrum.from_matrices(1.0, np.diag([-3.0, 0.5]), [[1.0]], (1, 1))
    assert spec.q_minus == 1 and spec.sign == -1


@pytest.mark.parametrize("z", [10, 10 + 3j, 2.5 - 1j])
def test_det_matches_cycle_expansion(basic_spectrum, z):
    val = single_orbit_det(basic_spectrum, z).value
    assert abs(val - cycle_sum(z)) <= 1e-10 * abs(cycle_sum(z))


def test_det_trivial_and_limits(basic_spectrum):
    triv = OrbitSpectrum(1.0, (), (), 0, (1.0,))
    assert single_orbit_det(triv, 1j * math.pi).value == pytest.approx(2)
    assert abs(single_orbit_det(basic_spectrum, 40).value - 1) < 1e-15


def test_det_reports_tail_bound(basic_spectrum):
    d = single_orbit_det(basic_spectrum, 3 + 1j, r_min=1e-3)
    full = single_orbit_det(basic_spectrum, 3 + 1j)
    err = abs(cmath.log(d.value) - cmath.log(full.value))
    assert err <= d.tail_bound


def test_resonance_examples(basic_spectrum):
    r1 = single_orbit_resonances(basic_spectrum, 1.0)
    assert r1.count == 1 and r1.values()[0] == pytest.approx(-math.log(2))
    r7 = single_orbit_resonances(basic_spectrum, 7.0)
    vals = r7.values()
    assert any(abs(v - complex(-math.log(2), 2 * math.pi)) < 1e-12 for v in vals)
    reals = {round(v.real / -math.log(2)): m for v, m in zip(vals, r7.multiplicities())
             if abs(v.imag) < 1e-12}
    assert reals == {m: m for m in range(1, 11)}
    triv = OrbitSpectrum(1.0, (), (), 0, (1.0,))
    assert single_orbit_resonances(triv, 7.0).count == 3


def test_resonances_are_zeros(basic_spectrum):
    for q in single_orbit_resonances(basic_spectrum, 8.0):
        if q.multiplicity == 1:
            h = SingleOrbitDeterminant(basic_spectrum, 1e-8)
            assert abs(h(q.z)) < 1e-8


@pytest.mark.parametrize("r", [5, 10, 15])
def test_argument_count_matches_lattice(basic_spectrum, r):
    h = SingleOrbitDeterminant(basic_spectrum, math.exp(-r * 1.2) / 4)
    assert argument_principle_count(h, r).count == lattice_zero_count(basic_spectrum, r)


def test_counting_growth_is_cubic(basic_spectrum):
    ratios = [lattice_zero_count(basic_spectrum, r) / r ** 3 for r in (10, 20, 40, 60)]
    assert max(ratios) < 2 * min(ratios)
