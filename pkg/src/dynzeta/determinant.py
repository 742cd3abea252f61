"""Dynamical determinants from periodic-orbit traces, closed forms and zero finding."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .entire import (EntireHandle, Resonance, ResonanceSet, argument_principle_count,
                     as_handle, winding_on_circle)
from .errors import ApplicabilityError, UnresolvedClusterError
from .model import FlowSystem
from .orbits import DEFAULT_MAX_WORDS, FixedWordTable, fixed_word_table
from .single_orbit import OrbitSpectrum, SingleOrbitDeterminant


# --------------------------------------------------------------------------
# traces


class TraceSeries:
    """Fixed-word tables for orders 1..max_order; s_m(z) is a finite exponential sum."""

    def __init__(self, sys: FlowSystem, max_order: int, max_words: int = DEFAULT_MAX_WORDS):
        if max_order < 0:
            raise ValueError("max_order must be nonnegative")
        self.system = sys
        self.max_order = int(max_order)
        self.tables: list[FixedWordTable] = [
            fixed_word_table(sys, m, max_words) for m in range(1, max_order + 1)
        ]
        with np.errstate(divide="ignore"):
            self._logabs = [np.log(np.abs(t.amplitude)) if t.T.size else np.zeros(0)
                            for t in self.tables]

    def table(self, m: int) -> FixedWordTable:
        return self.tables[m - 1]

    def s(self, m: int, z):
        return self.table(m).evaluate(z)

    def scaled(self, z, P=None):
        """Scaled sums s_m e^{-mR}, their z-derivatives, and the scale R(z).

        R is chosen so that every summand of every scaled sum has modulus
        at most 1, which keeps the Newton recursion free of overflow.
        """
        P = self.max_order if P is None else P
        z = np.atleast_1d(np.asarray(z, dtype=complex))
        nz = z.size
        peaks = np.full((P, nz), -np.inf)
        with np.errstate(divide="ignore"):
            for m in range(1, P + 1):
                t = self.table(m)
                if t.T.size:
                    expo = -np.multiply.outer(z.real, t.T) + self._logabs[m - 1]
                    peaks[m - 1] = np.max(expo, axis=1)
        ms = np.arange(1, P + 1)[:, None]
        per = np.where(np.isfinite(peaks), peaks / ms, -np.inf)
        R = np.max(per, axis=0) if P else np.zeros(nz)
        R = np.where(np.isfinite(R), R, 0.0)
        s = np.zeros((P, nz), dtype=complex)
        ds = np.zeros((P, nz), dtype=complex)
        for m in range(1, P + 1):
            t = self.table(m)
            if not t.T.size:
                continue
            e = np.exp(-np.multiply.outer(z, t.T) - m * R[:, None])
            s[m - 1] = e @ t.amplitude
            ds[m - 1] = e @ (-t.T * t.amplitude)
        return s, ds, R


def trace_power(sys: FlowSystem, m: int, z, series: TraceSeries | None = None):
    """s_m(z): sum over fixed words of length m of e^{-zT} tr(Phi)/|det(I-P)|."""
    if series is not None and series.system is sys and m <= series.max_order:
        tab = series.table(m)
    else:
        tab = fixed_word_table(sys, m)
    out = tab.evaluate(z)
    return complex(out) if np.ndim(out) == 0 else out


# --------------------------------------------------------------------------
# Plemelj-Smithies coefficients


def newton_coefficients(power_sums, dpower_sums=None):
    """c_0..c_P of det(I - wL) from s_1..s_P via p c_p = -sum_m s_m c_{p-m}.

    Works along the first axis, so columns may hold independent problems.
    Returns (c, dc, noise) where dc propagates derivatives of the s_m and
    noise estimates the rounding level of each c_p.
    """
    s = np.asarray(power_sums, dtype=complex)
    P = s.shape[0]
    shape = (P + 1,) + s.shape[1:]
    c = np.zeros(shape, dtype=complex)
    noise = np.zeros(shape)
    c[0] = 1
    dc = None
    if dpower_sums is not None:
        ds = np.asarray(dpower_sums, dtype=complex)
        dc = np.zeros(shape, dtype=complex)
    for p in range(1, P + 1):
        terms = s[:p][::-1] * c[:p]  # s_{p-j} c_j for j = 0..p-1
        c[p] = -terms.sum(axis=0) / p
        noise[p] = 1e-15 * np.max(np.abs(terms), axis=0) / p * p
        if dc is not None:
            dc[p] = -(ds[:p][::-1] * c[:p] + s[:p][::-1] * dc[:p]).sum(axis=0) / p
    return c, dc, noise


@dataclass
class DetCoefficients:
    order: int
    z: np.ndarray
    coefficients: np.ndarray  # shape (order+1, nz): actual c_p(z)

    def value(self):
        return self.coefficients.sum(axis=0)


def det_coefficients(series: TraceSeries, P: int, z) -> DetCoefficients:
    if P > series.max_order:
        raise ValueError(f"series holds orders up to {series.max_order}, not {P}")
    z = np.atleast_1d(np.asarray(z, dtype=complex))
    s, _, R = series.scaled(z, P)
    c, _, _ = newton_coefficients(s)
    scale = np.exp(np.multiply.outer(np.arange(P + 1), R))
    return DetCoefficients(P, z, c * scale)


# --------------------------------------------------------------------------
# truncated determinant


@dataclass
class DetEstimate:
    value: complex
    log_value: complex
    error: float
    converged: bool
    log_abs_coefficients: np.ndarray = field(repr=False, default=None)
    warning: str = ""


def _logsum(logs):
    """log(sum exp(logs)) along axis 0 for complex logs, ignoring -inf."""
    re = np.where(np.isfinite(logs.real), logs.real, -np.inf)
    mx = np.max(re, axis=0)
    mx = np.where(np.isfinite(mx), mx, 0.0)
    with np.errstate(invalid="ignore"):
        tot = np.where(np.isfinite(re), np.exp(logs - mx), 0).sum(axis=0)
    with np.errstate(divide="ignore"):
        return mx + np.log(tot)


class DeterminantHandle(EntireHandle):
    """Truncated series sum_{p<=M} c_p(z) as an entire-function handle."""

    def __init__(self, series: TraceSeries, M: int | None = None, chunk: int = 4096):
        self.series = series
        self.M = series.max_order if M is None else int(M)
        if self.M > series.max_order:
            raise ValueError("truncation exceeds the trace series order")
        self.chunk = chunk

    def _parts(self, z):
        s, ds, R = self.series.scaled(z, self.M)
        c, dc, noise = newton_coefficients(s, ds)
        return c, dc, noise, R

    def _apply(self, z, fn):
        z = np.asarray(z, dtype=complex)
        flat = z.reshape(-1)
        out = np.empty(flat.shape, dtype=complex)
        for i in range(0, flat.size, self.chunk):
            out[i:i + self.chunk] = fn(flat[i:i + self.chunk])
        return out.reshape(z.shape)

    def log(self, z):
        def fn(zz):
            c, _, _, R = self._parts(zz)
            with np.errstate(divide="ignore"):
                lc = np.log(c) + np.multiply.outer(np.arange(self.M + 1), R)
            return _logsum(lc)
        return self._apply(z, fn)

    def dlog(self, z, h=None):
        def fn(zz):
            c, dc, _, R = self._parts(zz)
            k = np.multiply.outer(np.arange(self.M + 1), R)
            mx = np.max(k, axis=0)
            w = np.exp(k - mx)
            return (dc * w).sum(axis=0) / (c * w).sum(axis=0)
        return self._apply(z, fn)

    def estimate(self, z) -> DetEstimate:
        z = complex(z)
        c, _, noise, R = self._parts(np.array([z]))
        c, noise, R = c[:, 0], noise[:, 0], float(R[0])
        P = np.arange(self.M + 1)
        with np.errstate(divide="ignore"):
            logc = np.log(np.abs(c)) + P * R
            lognoise = np.log(noise + 1e-300) + P * R
            logval = complex(_logsum((np.log(c.astype(complex)) + P * R)[:, None])[0])
        gamma = 1 + 1 / (self.series.system.gevrey_s * max(1, self.series.system.section_dim))
        err, converged, warn = _tail_estimate(logc, lognoise, gamma)
        return DetEstimate(complex(np.exp(logval)), logval, err, converged, logc, warn)


def _tail_estimate(logc, lognoise, gamma):
    """Fit log|c_p| = a + b p - k p^gamma on reliable coefficients and sum the tail."""
    M = logc.size - 1
    floor = float(np.max(lognoise[1:])) if M else -np.inf
    floor_abs = math.exp(floor) if np.isfinite(floor) else 0.0
    if M < 3:
        return floor_abs, True, ""
    p = np.arange(M + 1)
    ok = np.isfinite(logc) & (logc > lognoise + math.log(100)) & (p >= 1)
    ok &= p >= M // 2
    idx = np.nonzero(ok)[0]
    if idx.size < 3:
        # coefficients reached the rounding floor: the tail is below it too
        return floor_abs, True, ""
    X = np.column_stack([np.ones(idx.size), idx, -idx.astype(float) ** gamma])
    coef, *_ = np.linalg.lstsq(X, logc[idx], rcond=None)
    a, b, k = coef
    slope_at_M = b - k * gamma * M ** (gamma - 1)
    q = np.arange(M + 1, M + 400)
    model = a + b * q - k * q.astype(float) ** gamma
    top = float(np.max(model))
    tail = math.exp(top) * float(np.sum(np.exp(model - top))) if top < 700 else math.inf
    if slope_at_M >= 0 or not np.isfinite(tail):
        return max(tail, floor_abs), False, "fitted coefficient tail is not decreasing at p=M"
    return max(tail, floor_abs), True, ""


def evaluate_det(sys: FlowSystem, z, M: int, series: TraceSeries | None = None) -> DetEstimate:
    """sum_{p=0}^{M} c_p(z) with a fitted tail estimate."""
    if series is None or series.system is not sys or series.max_order < M:
        series = TraceSeries(sys, M)
    return DeterminantHandle(series, M).estimate(z)


# --------------------------------------------------------------------------
# closed form for transition-independent systems


@dataclass(frozen=True)
class LatticeClosedForm:
    adjacency_eigs: tuple
    lift_eigs: tuple
    spectrum: OrbitSpectrum  # zetas = products a*b
    tau: float
    cutoff: float

    @classmethod
    def from_system(cls, sys: FlowSystem, cutoff: float = 1e-14) -> "LatticeClosedForm":
        if not sys.edges:
            raise ApplicabilityError("system has no edges", "closed_form")
        if not sys.is_transition_independent():
            raise ApplicabilityError(
                "closed form needs identical linear parts, lifts and constant roofs",
                "closed_form")
        e = next(iter(sys.edges.values()))
        a = np.linalg.eigvals(sys.graph.adjacency.astype(float))
        a = a[np.abs(a) > 1e-12 * max(1.0, float(np.max(np.abs(a))))]
        b = np.linalg.eigvals(e.lift)
        base = OrbitSpectrum.from_matrices(e.t0, e.linear, e.lift, sys.split)
        zetas = tuple(complex(x) * complex(y) for x in a for y in b if x * y != 0) or (0j,)
        spec = OrbitSpectrum(e.t0, base.lambdas, base.mus, base.q_minus, zetas)
        return cls(tuple(a), tuple(b), spec, e.t0, float(cutoff))

    @property
    def applicable(self) -> bool:
        return True

    def handle(self, cutoff: float | None = None) -> SingleOrbitDeterminant:
        return SingleOrbitDeterminant(self.spectrum, self.cutoff if cutoff is None else cutoff)


def closed_form_det(cf: LatticeClosedForm, z):
    """Truncated lattice product; returns (value, tail bound on |log d - log d_trunc|)."""
    h = cf.handle()
    return complex(h(complex(z))), h.tail_bound(z)


# --------------------------------------------------------------------------
# zero finding


@dataclass
class _Square:
    x0: float
    y0: float
    h: float
    winding: int

    @property
    def center(self):
        return complex(self.x0 + self.h / 2, self.y0 + self.h / 2)

    def contains(self, z, margin=0.0):
        return (self.x0 - margin <= z.real <= self.x0 + self.h + margin
                and self.y0 - margin <= z.imag <= self.y0 + self.h + margin)

    def describe(self):
        return f"[{self.x0:.6g},{self.x0 + self.h:.6g}]x[{self.y0:.6g},{self.y0 + self.h:.6g}]"


def _square_windings(f: EntireHandle, xs, ys, q):
    """Winding numbers of all grid cells from phase increments along grid lines."""
    nx, ny = len(xs) - 1, len(ys) - 1
    t = np.arange(q) / q
    # horizontal edges: along y = ys[j], from xs[i] to xs[i+1]
    hx = xs[:-1, None] + np.diff(xs)[:, None] * t  # (nx, q)
    hpts = np.concatenate([hx.reshape(-1), xs[-1:]])
    H = np.empty((ny + 1, nx))
    V = np.empty((nx + 1, ny))
    worst = 0.0
    for j, y in enumerate(ys):
        lg = f.log(hpts + 1j * y)
        if not np.all(np.isfinite(lg)):
            return None, None, np.inf
        d = np.diff(lg.imag)
        d = (d + np.pi) % (2 * np.pi) - np.pi
        worst = max(worst, float(np.max(np.abs(d))))
        H[j] = d.reshape(nx, q).sum(axis=1)
    vy = ys[:-1, None] + np.diff(ys)[:, None] * t
    vpts = np.concatenate([vy.reshape(-1), ys[-1:]])
    for i, x in enumerate(xs):
        lg = f.log(x + 1j * vpts)
        if not np.all(np.isfinite(lg)):
            return None, None, np.inf
        d = np.diff(lg.imag)
        d = (d + np.pi) % (2 * np.pi) - np.pi
        worst = max(worst, float(np.max(np.abs(d))))
        V[i] = d.reshape(ny, q).sum(axis=1)
    # counterclockwise: bottom (+H[j]), right (+V[i+1]), top (-H[j+1]), left (-V[i])
    W = (H[:-1, :] + V[1:, :].T - H[1:, :] - V[:-1, :].T) / (2 * np.pi)
    return W, np.rint(W).astype(int), worst


def _newton(f: EntireHandle, z0, mult, box: _Square, iters=60):
    z = complex(z0)
    for _ in range(iters):
        dl = complex(f.dlog(np.array([z]))[0])
        if not np.isfinite(dl) or dl == 0:
            break
        step = mult / dl
        if abs(step) > box.h:
            step *= box.h / abs(step)
        z -= step
        if abs(step) <= 1e-14 * max(1.0, abs(z)):
            break
    return z


def _certify(f: EntireHandle, z, radius):
    cnt, resid, _ = winding_on_circle(f, radius, center=z, nodes=64, max_nodes=1 << 14)
    return cnt if np.isfinite(resid) else -1


def _cluster(f: EntireHandle, sq: _Square):
    """Zeros of a square as one cluster: total multiplicity and mean position.

    Uses a circle enclosing the square; the first moment of f'/f on it
    gives the sum of the enclosed zeros.
    """
    c = sq.center
    rad = 0.75 * sq.h
    cnt, resid, n = winding_on_circle(f, rad, center=c, nodes=64, max_nodes=1 << 14)
    if not np.isfinite(resid) or cnt != sq.winding:
        return None
    pts = c + rad * np.exp(2j * np.pi * np.arange(n) / n)
    total = np.mean(pts * f.dlog(pts) * (pts - c))
    return complex(total / cnt)


def _resolve(f, sq: _Square, depth, found, unresolved, max_depth=10):
    """Locate the zeros of one square; returns False if they could not be separated."""
    z = _newton(f, sq.center, sq.winding, sq)
    rad = min(sq.h / 4, 1e-3 * max(1.0, abs(z)))
    if sq.contains(z, margin=1e-9 * sq.h) and _certify(f, z, rad) == sq.winding:
        found.append((z, sq.winding))
        return True
    ok = False
    if depth < max_depth:
        h = sq.h / 2
        xs = np.array([sq.x0, sq.x0 + h, sq.x0 + sq.h])
        ys = np.array([sq.y0, sq.y0 + h, sq.y0 + sq.h])
        Wi = None
        for q in (16, 64, 256):
            _, Wi, worst = _square_windings(f, xs, ys, q)
            if Wi is not None and worst < np.pi / 2:
                break
            Wi = None
        if Wi is not None and Wi.sum() == sq.winding and np.all(Wi >= 0):
            local, bad = [], []
            ok = True
            for j in range(2):
                for i in range(2):
                    if Wi[j, i] > 0:
                        ok &= _resolve(f, _Square(xs[i], ys[j], h, int(Wi[j, i])), depth + 1,
                                       local, bad, max_depth)
            if ok:
                found.extend(local)
                return True
    # noise-limited multiple zeros: report them as one certified cluster
    zc = _cluster(f, sq)
    if zc is not None:
        found.append((zc, sq.winding))
        return True
    if depth == 0:
        unresolved.append(sq.describe())
    return False


def find_resonances(det, r: float, grid: int = 40, M: int | None = None) -> ResonanceSet:
    """Zeros of det in |z| <= r with multiplicities, certified by winding numbers.

    ``M`` is informational (the truncation is fixed by the handle).
    """
    f = as_handle(det)
    if not r > 0:
        raise ValueError("radius must be positive")
    glob = argument_principle_count(f, r)
    r_used = glob.radius
    if glob.count == 0:
        return ResonanceSet([], "zero-finding", r_used)
    h = r_used / grid
    n = 2 * grid + 2
    offset = (0.3141592653589793 * h, 0.2718281828459045 * h)
    for attempt in range(4):
        xs = -r_used - offset[0] * (1 + attempt) + h * np.arange(n + 1)
        ys = -r_used - offset[1] * (1 + attempt) + h * np.arange(n + 1)
        W = None
        q = 4
        prev = None
        while q <= 256:
            _, Wi, worst = _square_windings(f, xs, ys, q)
            if Wi is None:
                break
            if worst < np.pi / 2 and prev is not None and np.array_equal(prev, Wi):
                W = Wi
                break
            prev = Wi
            q *= 2
        if W is not None:
            break
    else:
        raise UnresolvedClusterError("grid winding numbers did not stabilize", "find_resonances",
                                     r)
    found, unresolved = [], []
    # cells that can contain points of the disk
    for j in range(n):
        for i in range(n):
            if W[j, i] <= 0:
                if W[j, i] < 0:
                    unresolved.append(_Square(xs[i], ys[j], h, 0).describe())
                continue
            cx = min(max(0.0, xs[i]), xs[i] + h)
            cy = min(max(0.0, ys[j]), ys[j] + h)
            if math.hypot(cx, cy) > r_used:
                continue
            _resolve(f, _Square(xs[i], ys[j], h, int(W[j, i])), 0, found, unresolved)
    zeros = []
    for z, m in found:
        if abs(z) <= r_used:
            lv = f.log(np.array([z]))[0].real
            res = float(np.exp(lv)) if np.isfinite(lv) or lv < 0 else float("inf")
            zeros.append(Resonance(complex(z), int(m), res))
    total = sum(q.multiplicity for q in zeros)
    if unresolved or total != glob.count:
        raise UnresolvedClusterError(
            f"local counts sum to {total} but the contour winding is {glob.count}",
            "find_resonances", r_used, regions=unresolved)
    return ResonanceSet(zeros, "zero-finding", r_used)
