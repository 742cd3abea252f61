import math

import numpy as np
import pytest

from dynzeta.determinant import evaluate_det
from dynzeta.errors import FrameConfigError, InsufficientDataError, QuadratureError
from dynzeta.frames import (EscapeWeight, FrameAtom, FrameConfig, assemble_operator,
                            build_frame, convergence_sweep, decay_profile, det_lu,
                            escape_G, escape_decay_constant, galerkin_det, kn_distance,
                            matrix_entry, reconstruction_residual)
from dynzeta.model import make_uniform_system


@pytest.fixture(scope="module")
def slow_loop():
    # weak expansion so that the row window lands inside the column plateau
    return make_uniform_system([[1]], [[1.05]], split=(1, 0))


def test_escape_examples():
    assert escape_G([0], [8], 3) == pytest.approx(2)
    assert escape_G([0, 0], [0], 2) == 0
    assert escape_G([8], [8], 3) == pytest.approx(0)
    with pytest.raises(FrameConfigError):
        escape_G([1], [1], 1.0)
    w = EscapeWeight(0.25, 2.0, (1, 1))
    assert np.allclose(w.G([[4, 9], [0, 0], [16, 0]]), [2 - 3, 0, 4])


def test_config_validation():
    for bad in (dict(delta=0.8), dict(L=-1), dict(eta=0), dict(varpi=0), dict(window_s=1)):
        with pytest.raises(FrameConfigError):
            FrameConfig(**bad)


def test_high_dimensional_sections_rejected():
    sys = make_uniform_system([[1]], np.diag([2.0, 3.0, 0.5]), split=(2, 1))
    with pytest.raises(FrameConfigError):
        build_frame(sys)


def test_partition_of_unity(two_shift):
    cfg = FrameConfig(delta=0.3, boxes={"0": ([-0.5, -0.2], [0.5, 0.4]),
                                        "1": ([0, 0], [0, 0])})
    fr = build_frame(two_shift, cfg)
    sf = fr.symbols["0"]
    assert sf.shape[0] > 3 and sf.shape[1] > 2
    assert sf.partition_residual() < 1e-10
    lo, hi = sf.covered()
    x = np.linspace(lo[0], hi[0], 801)
    th = sf.theta_1d(0, x)
    for a, c in enumerate(sf.centers[0]):
        on = th[a] > 0
        assert np.allclose(sf.theta_tilde_1d(c, x[on]), 1)
    assert fr.symbols["1"].n_centers == 1


def test_entry_with_disjoint_supports_vanishes(two_shift):
    cfg = FrameConfig(L=2, boxes={"0": ([-1, 0], [1, 0]), "1": ([-1, 0], [1, 0])})
    fr = build_frame(two_shift, cfg)
    cs = fr.symbols["0"].centers[0]
    col = FrameAtom("0", (cs[0], 0.0), (0, 0), 0)
    row = FrameAtom("0", (cs[-1], 0.0), (0, 0), 0)
    assert matrix_entry(two_shift, ("0", "0"), 0, col, row, frame=fr).value == 0


def test_entry_with_nested_windows_is_window_integral(slow_loop):
    fr = build_frame(slow_loop, FrameConfig(L=0, eta=math.inf))
    atom = FrameAtom("0", (0.0,), (0,), 0)
    val = matrix_entry(slow_loop, ("0", "0"), 0, atom, atom, frame=fr).value
    # a single window normalized by its two ghosts integrates to the spacing
    assert val == pytest.approx(fr.config.delta / 2, abs=1e-10)


def test_entries_decay_off_diagonal(two_shift):
    fr = build_frame(two_shift, FrameConfig(L=32))
    col = FrameAtom("0", (0.0, 0.0), (0, 0), 0)
    ls = np.array([8, 12, 16, 24, 32])
    vals = [abs(matrix_entry(two_shift, ("0", "0"), 3, col,
                             FrameAtom("0", (0.0, 0.0), (int(l), 0), 0), frame=fr).value)
            for l in ls]
    slope = np.polyfit(np.sqrt(ls), np.log(vals), 1)[0]
    assert slope < -1 and all(a > b for a, b in zip(vals, vals[1:]))


def test_entry_matches_assembled_matrix(two_shift):
    gm = assemble_operator(two_shift, 3 + 1j, L=2, weight=EscapeWeight(0.0, 2.0, (1, 1)))
    fr = build_frame(two_shift, FrameConfig(L=2))
    rng = np.random.default_rng(4)
    for _ in range(6):
        r, c = rng.integers(0, len(gm.index), size=2)
        row, col = gm.index[r], gm.index[c]
        ev = matrix_entry(two_shift, (row.symbol, col.symbol), 3 + 1j, col, row, frame=fr)
        assert abs(ev.value - gm.matrix[r, c]) < 1e-10


def test_quadrature_failure_carries_values(two_shift):
    fr = build_frame(two_shift, FrameConfig(L=8))
    a = FrameAtom("0", (0.0, 0.0), (3, 2), 0)
    with pytest.raises(QuadratureError) as info:
        matrix_entry(two_shift, ("0", "0"), 3, a, a, frame=fr, tol=1e-300)
    assert len(info.value.values) == 2


def test_nested_operator_at_L0(slow_loop):
    gm = assemble_operator(slow_loop, 0, L=0, config=FrameConfig(eta=math.inf))
    assert gm.matrix.shape == (1, 1)
    assert gm.matrix[0, 0] == pytest.approx(0.35, abs=1e-10)


def test_edgeless_system_gives_zero_matrix():
    sys = make_uniform_system([[0, 0], [0, 0]], np.diag([2.0, 0.5]), split=(1, 1))
    gm = assemble_operator(sys, 2, L=2)
    assert not gm.matrix.any()
    assert galerkin_det(sys, 2, L=2) == 1 and det_lu(gm.matrix) == 1


def test_zero_epsilon_gives_raw_entries(two_shift):
    gm = assemble_operator(two_shift, 3, L=3)
    flat = assemble_operator(two_shift, 3, L=3, weight=EscapeWeight(0.0, 2.0, (1, 1)))
    assert np.allclose(flat.matrix, gm.raw, atol=1e-14)
    assert det_lu(gm.matrix) == pytest.approx(det_lu(flat.matrix), rel=1e-12)


def test_row_norm_bound_reduces_epsilon(two_shift):
    gm = assemble_operator(two_shift, 3, L=3,
                           config=FrameConfig(epsilon=4.0, row_norm_bound=1.0))
    assert gm.weight.epsilon == 2.0 and len(gm.warnings) == 1
    assert gm.row_norm() <= 1.0


@pytest.mark.parametrize("L", [2, 4])
def test_factored_and_lu_agree(two_shift, L):
    z = 3 + 2j
    a = galerkin_det(two_shift, z, L=L, method="lu")
    b = galerkin_det(two_shift, z, L=L, method="factored")
    assert abs(a - b) < 1e-12


def test_factored_requires_structure():
    offs = {("0", "1"): np.array([0.1, 0.0])}
    sys = make_uniform_system([[1, 1], [1, 1]], np.diag([2.0, 0.5]), split=(1, 1),
                              offsets=offs)
    with pytest.raises(FrameConfigError):
        galerkin_det(sys, 3, L=2, method="factored")
    assert np.isfinite(galerkin_det(sys, 3, L=2))


def test_sweep_is_cauchy(two_shift):
    rep = convergence_sweep(two_shift, 4, [2, 4, 6, 8])
    assert all(a > b for a, b in zip(rep.increments, rep.increments[1:]))


def test_galerkin_matches_trace_determinant(two_shift):
    z = 4 + 1j
    ref = evaluate_det(two_shift, z, 25).value
    assert abs(galerkin_det(two_shift, z, L=48) - ref) < 1e-3 * abs(ref)


def test_decay_synthetic_and_control():
    m = np.arange(1, 200)
    fit = decay_profile(np.diag(np.exp(-np.sqrt(m))), s=2, dim=1)
    assert fit.slope == pytest.approx(-1, abs=1e-6) and fit.r2 == pytest.approx(1, abs=1e-12)
    rng = np.random.default_rng(0)
    ctrl = decay_profile(rng.normal(size=(100, 100)), s=2, dim=1)
    assert 0 <= ctrl.r2 <= 1 and ctrl.used == 100
    with pytest.raises(InsufficientDataError):
        decay_profile(np.eye(5), s=2, dim=1)
    with pytest.raises(FrameConfigError):
        decay_profile(np.eye(30))


def test_decay_on_two_shift(two_shift):
    fit = decay_profile(assemble_operator(two_shift, 3, L=8, config=FrameConfig(eta=0.1)))
    assert fit.slope < 0 and fit.exponent == 0.25 and fit.r2 > 0.8


def test_kn_distance():
    assert kn_distance([0], [0], [0.3], [0]) == pytest.approx(0.3)
    assert kn_distance([0], [0], [0], [1]) == pytest.approx(math.asinh(1), rel=1e-6)
    # equal frequency steps shrink at high frequency
    assert kn_distance([0], [100], [0], [101]) < 0.011


def test_escape_decay_holds_for_close_pairs(two_shift):
    gm = assemble_operator(two_shift, 3, L=8)
    assert escape_decay_constant(gm, two_shift, varpi=0.05) > 0.2


def test_reconstruction_improves_with_L():
    sys = make_uniform_system([[1]], [[2.0]], split=(1, 0))
    gauss = lambda X: np.exp(-np.sum(X ** 2, axis=1) / (2 * 0.1 ** 2))
    res = []
    for L in (8, 16, 32):
        fr = build_frame(sys, FrameConfig(L=L, boxes={"0": ([-0.5], [0.5])}))
        res.append(reconstruction_residual(fr, "0", gauss))
    assert res[0] > res[1] > res[2] and res[2] < 1e-4
