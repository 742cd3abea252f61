"""Acceptance suite: one PASS/FAIL line per criterion, printed in the terminal summary."""

import cmath
import math
import time
from fractions import Fraction as F

import numpy as np
import pytest

from conftest import ACCEPTANCE
from dynzeta.bowen import (Coding, SingletonOracle, TimelineOrbit, kind_tuples,
                           timeline_preimage_counts, verify_counting_identity)
from dynzeta.determinant import (DeterminantHandle, LatticeClosedForm, TraceSeries,
                                 closed_form_det, evaluate_det, find_resonances,
                                 newton_coefficients)
from dynzeta.entire import (argument_principle_count, counting_exponent_fit,
                            growth_order_fit, jensen_residual)
from dynzeta.frames import (FrameConfig, assemble_operator, convergence_sweep,
                            decay_profile)
from dynzeta.orbits import enumerate_fixed_words, group_into_orbits
from dynzeta.single_orbit import (SingleOrbitDeterminant, lattice_zero_count,
                                  single_orbit_det, single_orbit_resonances)

LOG2 = math.log(2)


def report(n, ok, detail):
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE[n] = line
    print(line)
    return ok


def cycle_expansion(z, pmax=40):
    s = sum(cmath.exp(-z * p) / (p * (2 ** p - 1) * (1 - 2.0 ** -p)) for p in range(1, pmax + 1))
    return cmath.exp(-s)


def test_criterion_1_single_orbit(basic_spectrum):
    t = time.perf_counter()
    worst = 0.0
    for x in np.linspace(2, 6, 5):
        for y in np.linspace(-4, 4, 5):
            z = complex(x, y)
            ref = cycle_expansion(z)
            worst = max(worst, abs(single_orbit_det(basic_spectrum, z).value - ref) / abs(ref))
    dt = time.perf_counter() - t
    ok = worst <= 1e-10 and dt < 1
    assert report(1, ok, f"max rel err {worst:.2e} (tol 1e-10), {dt:.2f}s (limit 1s)")


def test_criterion_2_dual_path(two_shift):
    t = time.perf_counter()
    series = TraceSeries(two_shift, 25)
    cf = LatticeClosedForm.from_system(two_shift)
    worst = 0.0
    for x in np.linspace(1, 4, 7):
        for y in np.linspace(-3, 3, 7):
            closed, _ = closed_form_det(cf, complex(x, y))
            est = evaluate_det(two_shift, complex(x, y), 25, series).value
            worst = max(worst, abs(est - closed) / (1 + abs(closed)))
    # |z| <= 1 also contains the double zero at -log 2, so the leading zero
    # is isolated on the disk of radius 1/2
    rs = find_resonances(DeterminantHandle(series, 25), 0.5, M=25)
    lead = rs.values()[0] if rs.count else complex("nan")
    dt = time.perf_counter() - t
    ok = (worst <= 1e-8 and rs.count == 1 and abs(lead) < 1e-8
          and rs.multiplicities()[0] == 1 and dt < 10)
    assert report(2, ok, f"max rel diff {worst:.2e} (tol 1e-8); leading zero |z|={abs(lead):.1e}"
                         f" mult {rs.multiplicities().tolist()}; {dt:.1f}s (limit 10s)")


def test_criterion_3_newton_identities():
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(50):
        while True:
            L = rng.normal(size=(5, 5)) + 1j * rng.normal(size=(5, 5))
            if np.linalg.cond(np.linalg.eig(L)[1]) < 1e6:
                break
        sums = [np.trace(np.linalg.matrix_power(L, m)) for m in range(1, 6)]
        c, _, _ = newton_coefficients(sums)
        worst = max(worst, float(np.max(np.abs(c - np.poly(L)))))
    assert report(3, worst <= 1e-12, f"max coefficient error {worst:.2e} over 50 matrices "
                                      "(tol 1e-12)")


def _single_coding(word):
    n = len(word)
    return TimelineOrbit(F(n), (Coding(tuple((F(i), s) for i, s in enumerate(word))),))


OVERLAPS = {
    "two codings": TimelineOrbit(F(2), (
        Coding(((F(0), "a"), (F(1), "b"))),
        Coding(((F(1, 2), "c"), (F(3, 2), "d"))))),
    "shifted twin": TimelineOrbit(F(4), (
        Coding(((F(0), "a"), (F(3, 2), "b"), (F(5, 2), "c"), (F(3), "d"))),
        Coding(((F(1, 2), "c"), (F(1), "d"), (F(2), "a"), (F(7, 2), "b"))))),
    "three codings": TimelineOrbit(F(3), (
        Coding(((F(0), "a"), (F(1), "b"), (F(2), "c"))),
        Coding(((F(1, 2), "d"), (F(5, 2), "e"))),
        Coding(((F(3, 4), "f"), (F(7, 4), "g"))))),
}


def test_criterion_4_counting_identity(two_shift):
    assert kind_tuples(two_shift.graph.symbols, SingletonOracle()) == [(1,)]
    singles = [tuple(c.letters) for m in range(1, 7)
               for c in group_into_orbits(enumerate_fixed_words(two_shift.graph, m))]
    single_ok = all(verify_counting_identity(timeline_preimage_counts(_single_coding(w))) == 1
                    for w in singles)
    results = {name: verify_counting_identity(timeline_preimage_counts(o))
               for name, o in OVERLAPS.items()}
    ok = single_ok and all(v == 1 for v in results.values())
    assert report(4, ok, f"singleton oracle on {len(singles)} orbits: "
                         f"{'all 1' if single_ok else 'mismatch'}; overlap instances {results}")


def _margin_ok(values, r):
    return np.all(np.abs(np.abs(values) - r) > 0.01 * r)


def test_criterion_5_zero_counts(basic_spectrum, two_shift):
    cf = LatticeClosedForm.from_system(two_shift)
    bad, strict, loose = [], 0, 0
    for name, spec in (("single orbit", basic_spectrum), ("2-shift", cf.spectrum)):
        for r in range(5, 31, 5):
            exact = single_orbit_resonances(spec, r * 1.02)
            h = SingleOrbitDeterminant(spec, math.exp(-1.05 * r * spec.t0) / 4)
            got = argument_principle_count(h, r).count
            want = lattice_zero_count(spec, r)
            # beyond r ~ 16 the zero moduli are closer than 2% apart, so no
            # radius has the full margin; those are compared but do not gate
            if _margin_ok(exact.values(), r):
                strict += 1
                if got != want:
                    bad.append(f"{name} r={r}: {got} vs {want}")
            else:
                loose += 1
                if got != want:
                    bad.append(f"(reduced margin) {name} r={r}: {got} vs {want}")
    gating = [b for b in bad if not b.startswith("(")]
    ok = strict > 0 and not gating
    detail = (f"{strict} radii with 1% margin equal" if not gating else "; ".join(gating))
    detail += f"; {loose} reduced-margin radii " + ("also equal" if len(bad) == len(gating)
                                                   else "differ: " + "; ".join(bad))
    assert report(5, ok, detail)


def test_criterion_6_counting_exponent(two_shift):
    t = time.perf_counter()
    spec = LatticeClosedForm.from_system(two_shift).spectrum
    counts = [(r, lattice_zero_count(spec, r)) for r in range(10, 61, 10)]
    fit = counting_exponent_fit(counts)
    dt = time.perf_counter() - t
    ok = abs(fit.beta - 3) <= 0.3 and fit.beta <= 5 and dt < 60
    assert report(6, ok, f"beta={fit.beta:.3f} (target 3 +/- 0.3, bound 5); counts "
                         f"{[n for _, n in counts]}; {dt:.1f}s (limit 60s)")


def test_criterion_7_growth_exponent(two_shift):
    h = LatticeClosedForm.from_system(two_shift).handle(1e-16)
    radii = [5, 10, 15, 20, 25, 30]
    fit = growth_order_fit(h, radii)
    oracle = [r ** 3 / (6 * LOG2 ** 2) for r in radii]
    ok = fit.alpha <= 5 and abs(fit.alpha - 3) <= 0.3
    assert report(7, ok, f"alpha={fit.alpha:.3f} (target 3 +/- 0.3, bound 5); "
                         f"log M(30)={fit.log_max_modulus[-1]:.1f} vs cubic oracle "
                         f"{oracle[-1]:.1f}")


POINTS = [3, 3 + 2j, 4 - 1j, 3.5 + 5j, 5]
SWEEP = [16, 32, 48, 64, 80, 96]


def test_criterion_8_frames(two_shift):
    t = time.perf_counter()
    cfg = FrameConfig(eta=0.1)
    series = TraceSeries(two_shift, 25)
    diag, errs = [], []
    for z in POINTS:
        rep = convergence_sweep(two_shift, z, SWEEP, cfg)
        ref = evaluate_det(two_shift, z, 25, series).value
        err = abs(rep.value - ref) / abs(ref)
        errs.append(err)
        diag.append(f"z={z}: rel err {err:.1e}, last increment {rep.increments[-1]:.1e}")
    fit = decay_profile(assemble_operator(two_shift, 3, L=8, config=cfg))
    default_fit = decay_profile(assemble_operator(two_shift, 3, L=8))
    dt = time.perf_counter() - t
    ok = max(errs) <= 1e-3 and fit.slope < 0 and fit.r2 >= 0.9 and dt < 600
    detail = (f"max rel err {max(errs):.1e} at L={SWEEP[-1]} (tol 1e-3); decay slope "
              f"{fit.slope:.2f}, R2={fit.r2:.3f} (need 0.9; default margin gives "
              f"R2={default_fit.r2:.3f}); {dt:.0f}s")
    report(8, ok, detail)
    assert ok, "frame diagnostic report:\n  " + "\n  ".join(diag + [detail])


def test_criterion_9_jensen(basic_spectrum):
    cases = {
        "1-z": (lambda z: 1 - z, [1], 2.0),
        "const": (lambda z: 5 + 0 * z, [], 3.0),
        "(1-z)^2": (lambda z: (1 - z) ** 2, [(1, 2)], 2.0),
    }
    worst = {}
    for name, (f, zeros, r) in cases.items():
        assert argument_principle_count(f, r).count == sum(
            m if isinstance(m, int) else m[1] for m in
            [(z if isinstance(z, tuple) else (z, 1)) for z in zeros])
        worst[name] = jensen_residual(f, zeros, r)
    h = SingleOrbitDeterminant(basic_spectrum, 1e-6)
    rs = find_resonances(h, 3.0)
    worst["single-orbit det"] = jensen_residual(h, [(q.z, q.multiplicity) for q in rs], 3.0)
    ok = max(worst.values()) < 1e-6
    assert report(9, ok, "residuals " + ", ".join(f"{k}: {v:.1e}" for k, v in worst.items())
                         + " (tol 1e-6)")
