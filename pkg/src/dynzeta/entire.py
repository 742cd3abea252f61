"""Entire-function toolkit: elementary factors, Weierstrass products,
argument-principle counting, Jensen checks and growth fits.

Functions are passed around as *handles*.  A handle is callable on arrays
of complex numbers and additionally offers ``log(z)`` (a complex logarithm
on any branch) and ``dlog(z)`` (the logarithmic derivative f'/f).  Working
with ``log`` keeps determinants usable far into the left half plane where
their values overflow double precision.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import ContourDegeneracyError, DynzetaError


class TailModelError(DynzetaError):
    module = "entire-analysis"


class EntireHandle:
    """Base class; subclasses override ``log`` and optionally ``dlog``."""

    def __call__(self, z):
        return np.exp(self.log(z))

    def log(self, z):
        raise NotImplementedError

    def dlog(self, z, h=None):
        z = np.asarray(z, dtype=complex)
        if h is None:
            h = 1e-5 * np.maximum(1.0, np.abs(z))
        lp, lm = self.log(z + h), self.log(z - h)
        d = lp - lm
        d = d.real + 1j * _wrap(d.imag)
        return d / (2 * h)


def _wrap(phase):
    return (phase + np.pi) % (2 * np.pi) - np.pi


class CallableHandle(EntireHandle):
    """Wrap a plain vectorized callable returning f(z)."""

    def __init__(self, f: Callable, dlog: Callable | None = None):
        self._f = f
        self._dlog = dlog

    def __call__(self, z):
        return np.asarray(self._f(np.asarray(z, dtype=complex)), dtype=complex)

    def log(self, z):
        with np.errstate(divide="ignore"):
            return np.log(self(z))

    def dlog(self, z, h=None):
        if self._dlog is not None:
            return np.asarray(self._dlog(np.asarray(z, dtype=complex)), dtype=complex)
        return super().dlog(z, h)


class LogHandle(EntireHandle):
    """Handle defined directly through its logarithm."""

    def __init__(self, logf: Callable, dlog: Callable | None = None):
        self._logf = logf
        self._dlog = dlog

    def log(self, z):
        return np.asarray(self._logf(np.asarray(z, dtype=complex)), dtype=complex)

    def dlog(self, z, h=None):
        if self._dlog is not None:
            return np.asarray(self._dlog(np.asarray(z, dtype=complex)), dtype=complex)
        return super().dlog(z, h)


class ProductHandle(EntireHandle):
    """Product of handles raised to integer powers."""

    def __init__(self, factors: Sequence[tuple]):
        self.factors = [(as_handle(h), int(p)) for h, p in factors]

    def __call__(self, z):
        z = np.asarray(z, dtype=complex)
        out = np.ones(z.shape, dtype=complex)
        for h, p in self.factors:
            out = out * np.asarray(h(z), dtype=complex) ** p
        return out

    def log(self, z):
        z = np.asarray(z, dtype=complex)
        out = np.zeros(z.shape, dtype=complex)
        for h, p in self.factors:
            out = out + p * h.log(z)
        return out

    def dlog(self, z, h=None):
        z = np.asarray(z, dtype=complex)
        out = np.zeros(z.shape, dtype=complex)
        for f, p in self.factors:
            out = out + p * f.dlog(z)
        return out


def as_handle(f) -> EntireHandle:
    if isinstance(f, EntireHandle):
        return f
    if callable(f):
        return CallableHandle(f)
    raise TypeError(f"cannot use {type(f).__name__} as a function handle")


# --------------------------------------------------------------------------
# elementary factors and products


def elementary_factor(p: int, z):
    """W_p(z) = (1 - z) exp(z + z^2/2 + ... + z^p/p)."""
    if p < 0:
        raise ValueError("p must be nonnegative")
    z = np.asarray(z, dtype=complex)
    poly = sum(z ** k / k for k in range(1, p + 1)) if p else 0
    out = (1 - z) * np.exp(poly)
    return out.item() if out.ndim == 0 else out


@dataclass(frozen=True)
class TailModel:
    """Majorant sum_{|lam| <= r} |lam| <= C r (1 + |log r|^alpha)."""

    C: float
    alpha: float

    def bound(self, r: float) -> float:
        if r <= 0:
            return 0.0
        return self.C * r * (1 + abs(math.log(r)) ** self.alpha)


@dataclass(frozen=True)
class WeierstrassResult:
    value: complex
    tail_factor: float  # omitted factors have product modulus <= tail_factor
    terms: int


def weierstrass_product(lambdas, z, tail: TailModel | None = None) -> WeierstrassResult:
    """Truncated product of (1 - z lam_j) with a multiplicative tail bound.

    ``lambdas`` must be listed by decreasing modulus and the supplied terms
    must themselves respect ``tail``; otherwise the bound would be
    meaningless and the input is rejected.
    """
    lam = np.asarray(list(lambdas), dtype=complex)
    mods = np.abs(lam)
    if np.any(np.diff(mods) > 1e-15 * np.maximum(1, mods[:-1])):
        raise TailModelError("lambdas must have decreasing modulus", "weierstrass_product")
    z = complex(z)
    tail_sum = 0.0
    if tail is not None and lam.size:
        cums = np.cumsum(mods[::-1])[::-1]  # sum of |lam_i| for i >= j
        for j in range(lam.size):
            if cums[j] > tail.bound(mods[j]) * (1 + 1e-12):
                raise TailModelError(
                    f"supplied terms violate the tail model at |lam|={mods[j]:.3g}",
                    "weierstrass_product", j)
        tail_sum = tail.bound(mods[-1])
    val = complex(np.prod(1 - z * lam)) if lam.size else 1 + 0j
    return WeierstrassResult(val, math.exp(abs(z) * tail_sum), int(lam.size))


# --------------------------------------------------------------------------
# contour integrals


@dataclass(frozen=True)
class ZeroCountReport:
    radius: float
    count: int
    residual: float
    nodes: int
    center: complex = 0j
    reliable: bool = True
    perturbations: int = 0


def _contour_winding(h: EntireHandle, pts):
    """Winding of h along closed polyline pts (last point joins the first)."""
    lg = h.log(pts)
    if not np.all(np.isfinite(lg)):
        return None, np.inf
    ph = np.unwrap(np.concatenate([lg.imag, lg.imag[:1]]))
    steps = np.diff(ph)
    return (ph[-1] - ph[0]) / (2 * np.pi), float(np.max(np.abs(steps)))


def circle_points(center, r, nodes):
    theta = 2 * np.pi * np.arange(nodes) / nodes
    return center + r * np.exp(1j * theta)


def _near_zero_distance(h: EntireHandle, pts):
    if not np.all(np.isfinite(h.log(pts))):
        return 0.0
    # a fine step so that zeros closer than the default difference step still show up
    d = np.abs(h.dlog(pts, 1e-8 * np.maximum(1.0, np.abs(pts))))
    with np.errstate(divide="ignore"):
        return float(np.min(1.0 / d)) if d.size else np.inf


def winding_on_circle(f, r, center=0j, nodes=512, max_nodes=1 << 20):
    """Adaptive phase-unwrapped winding number; returns (count, residual, nodes).

    Node counts double until two successive counts agree, no unwrap step
    exceeds pi/2 and the trapezoidal integral of f'/f is within 0.1 of the
    integer (reported as the residual).
    """
    h = as_handle(f)
    prev = None
    n = nodes
    while True:
        pts = circle_points(center, r, n)
        w, step = _contour_winding(h, pts)
        if w is not None and step < np.pi / 2:
            raw = np.mean(h.dlog(pts) * (pts - center)).real
            cnt = int(round(w))
            resid = abs(raw - round(raw))
            if prev == cnt and resid < 0.1 and int(round(raw)) == cnt:
                return cnt, resid, n
            prev = cnt
        if n >= max_nodes:
            return (int(round(w)) if w is not None else 0), np.inf, n
        n *= 2


def argument_principle_count(f, r: float, nodes: int = 512, center=0j) -> ZeroCountReport:
    h = as_handle(f)
    r0 = float(r)
    for attempt in range(6):
        rr = r0 * 1.01 ** attempt
        probe = circle_points(center, rr, max(nodes, 1024))
        if _near_zero_distance(h, probe) >= 1e-6 * rr:
            cnt, resid, n = winding_on_circle(h, rr, center, nodes)
            return ZeroCountReport(rr, cnt, float(resid), n, complex(center),
                                   reliable=bool(resid < 0.1), perturbations=attempt)
    raise ContourDegeneracyError("zero persistently near the contour", "argument_principle_count",
                                 r0)


def jensen_residual(f, zeros, r: float, nodes: int = 4096) -> float:
    """Discrepancy in Jensen's formula for the disk of radius r.

    ``zeros`` lists the zeros in the open disk, repeated by multiplicity
    (or as (zero, multiplicity) pairs).
    """
    h = as_handle(f)
    zs = []
    for item in zeros:
        if isinstance(item, tuple):
            zs.extend([complex(item[0])] * int(item[1]))
        else:
            zs.append(complex(item))
    zs = np.asarray(zs, dtype=complex)
    log0 = complex(h.log(np.array([0j]))[0]).real
    if not np.isfinite(log0) or log0 < math.log(1e-12):
        raise ContourDegeneracyError("|f(0)| is below 1e-12", "jensen_residual", r)
    if zs.size and np.any(np.abs(np.abs(zs) - r) < 1e-9 * r):
        raise ContourDegeneracyError("a zero lies on the contour", "jensen_residual", r)
    zs = zs[np.abs(zs) < r]
    lhs = log0 + float(np.sum(np.log(r / np.abs(zs)))) if zs.size else log0
    prev = None
    n = nodes
    while True:
        vals = h.log(circle_points(0j, r, n)).real
        if not np.all(np.isfinite(vals)):
            raise ContourDegeneracyError("f vanishes on the contour", "jensen_residual", r)
        mean = float(np.mean(vals))
        if prev is not None and abs(mean - prev) < 1e-12 * max(1.0, abs(mean)):
            break
        if n >= 1 << 20:
            break
        prev = mean
        n *= 2
    return abs(lhs - mean)


# --------------------------------------------------------------------------
# growth and counting fits


@dataclass
class GrowthFit:
    radii: list
    log_max_modulus: list
    alpha: float
    log_C: float
    residual: float
    monotone: bool
    negative_axis_alpha: float = float("nan")
    negative_axis_log_modulus: list = field(default_factory=list)
    note: str = ""

    def to_dict(self):
        return {
            "radii": list(map(float, self.radii)),
            "log_max_modulus": list(map(float, self.log_max_modulus)),
            "alpha": self.alpha,
            "log_C": self.log_C,
            "residual": self.residual,
            "monotone": self.monotone,
            "negative_axis_alpha": self.negative_axis_alpha,
            "negative_axis_log_modulus": list(map(float, self.negative_axis_log_modulus)),
            "note": self.note,
        }


def _loglog_fit(r, logM):
    r = np.asarray(r, float)
    logM = np.asarray(logM, float)
    keep = logM > math.log(2)
    if keep.sum() < 2:
        return float("nan"), float("nan"), float("nan")
    x, y = np.log(r[keep]), np.log(logM[keep])
    slope, icpt = np.polyfit(x, y, 1)
    fitted = slope * x + icpt
    resid = float(np.sqrt(np.mean((y - fitted) ** 2)))
    return float(slope), float(icpt), resid


def growth_order_fit(f, radii, nodes: int = 1024) -> GrowthFit:
    """Fit log log M(r) = log C + alpha log r from max-modulus samples."""
    radii = [float(r) for r in radii]
    if len(radii) < 5:
        raise ValueError("growth_order_fit needs at least 5 radii")
    if any(b <= a for a, b in zip(radii, radii[1:])):
        raise ValueError("radii must be strictly increasing")
    nodes = max(64, int(nodes))
    h = as_handle(f)
    logM, neg = [], []
    for r in radii:
        vals = h.log(circle_points(0j, r, nodes)).real
        logM.append(float(np.max(vals)))
        neg.append(float(h.log(np.array([-r + 0j]))[0].real))
    monotone = all(b >= a - 1e-9 * max(1, abs(a)) for a, b in zip(logM, logM[1:]))
    alpha, lc, resid = _loglog_fit(radii, logM)
    nalpha, _, _ = _loglog_fit(radii, neg)
    note = ""
    if math.isnan(alpha):
        note = "max modulus below 2 on (almost) all radii; nothing to fit"
    elif not monotone:
        note = "max modulus not monotone in r"
    return GrowthFit(radii, logM, alpha, lc, resid, monotone, nalpha, neg, note)


@dataclass(frozen=True)
class CountingFit:
    beta: float
    log_C: float
    residual: float
    degenerate: bool = False


def counting_exponent_fit(counts) -> CountingFit:
    """Fit log N(r) = log C + beta log r."""
    pts = [(float(r), float(n)) for r, n in counts if n >= 1]
    if len(pts) < 5:
        raise ValueError("counting_exponent_fit needs at least 5 radii with N(r) >= 1")
    r = np.log([p[0] for p in pts])
    N = np.log([p[1] for p in pts])
    if np.ptp(N) == 0:
        return CountingFit(0.0, float(N[0]), 0.0, degenerate=True)
    slope, icpt = np.polyfit(r, N, 1)
    resid = float(np.sqrt(np.mean((N - (slope * r + icpt)) ** 2)))
    return CountingFit(float(slope), float(icpt), resid)


# --------------------------------------------------------------------------
# zero sets


@dataclass(frozen=True)
class Resonance:
    z: complex
    multiplicity: int
    residual: float = float("nan")


@dataclass
class ResonanceSet:
    """Zeros with multiplicities, ordered by (Re, Im)."""

    zeros: list
    provenance: str = ""
    radius: float = float("nan")

    def __post_init__(self):
        self.zeros = sorted(self.zeros, key=lambda q: (round(q.z.real, 12), round(q.z.imag, 12)))

    @property
    def count(self) -> int:
        return int(sum(q.multiplicity for q in self.zeros))

    def __len__(self):
        return len(self.zeros)

    def __iter__(self):
        return iter(self.zeros)

    def values(self):
        return np.array([q.z for q in self.zeros], dtype=complex)

    def multiplicities(self):
        return np.array([q.multiplicity for q in self.zeros], dtype=int)
