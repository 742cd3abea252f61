"""Basic sets reduced to one periodic orbit: resonance lattice and product formula."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from .entire import EntireHandle, Resonance, ResonanceSet
from .errors import SpectrumError

UNIT_GAP = 1e-9
MERGE_TOL = 1e-12


@dataclass(frozen=True)
class OrbitSpectrum:
    t0: float
    lambdas: tuple
    mus: tuple
    q_minus: int
    zetas: tuple

    def __post_init__(self):
        lam = tuple(complex(x) for x in self.lambdas)
        mu = tuple(complex(x) for x in self.mus)
        zeta = tuple(complex(x) for x in self.zetas)
        object.__setattr__(self, "lambdas", lam)
        object.__setattr__(self, "mus", mu)
        object.__setattr__(self, "zetas", zeta)
        object.__setattr__(self, "t0", float(self.t0))
        object.__setattr__(self, "q_minus", int(self.q_minus))
        if not self.t0 > 0:
            raise SpectrumError("t0 must be positive", "OrbitSpectrum", self.t0)
        if not lam and mu:
            raise SpectrumError("no expanding eigenvalues but contracting ones given",
                                "OrbitSpectrum", mu)
        for x in lam:
            if abs(x) <= 1 + UNIT_GAP:
                raise SpectrumError("expanding eigenvalue modulus must exceed 1",
                                    "OrbitSpectrum", x)
        for x in mu:
            if abs(x) >= 1 - UNIT_GAP:
                raise SpectrumError("contracting eigenvalue modulus must be below 1",
                                    "OrbitSpectrum", x)
        if not 0 <= self.q_minus <= len(lam) + len(mu):
            raise SpectrumError("q_minus out of range", "OrbitSpectrum", self.q_minus)
        if not zeta:
            raise SpectrumError("at least one lift eigenvalue is required", "OrbitSpectrum")

    @classmethod
    def from_matrices(cls, t0, poincare, lift, split) -> "OrbitSpectrum":
        """Spectrum of a block-diagonal Poincare map and a lift matrix."""
        P = np.atleast_2d(np.asarray(poincare, dtype=float))
        du = int(split[0])
        _require_diagonalizable(P)
        _require_diagonalizable(np.atleast_2d(np.asarray(lift, dtype=complex)))
        ev = np.linalg.eigvals(P) if P.size else np.zeros(0)
        lam = np.linalg.eigvals(P[:du, :du]) if du else np.zeros(0)
        mu = np.linalg.eigvals(P[du:, du:]) if P.shape[0] > du else np.zeros(0)
        q = int(np.sum((np.abs(ev.imag) < 1e-12) & (ev.real < -1)))
        return cls(t0, tuple(lam), tuple(mu), q, tuple(np.linalg.eigvals(np.atleast_2d(lift))))

    @property
    def sign(self) -> int:
        return -1 if self.q_minus % 2 else 1

    @property
    def max_modulus(self) -> float:
        return max(abs(z) for z in self.zetas) * math.prod(1 / abs(x) for x in self.lambdas)

    def total_abs_sum(self) -> float:
        """Sum of |rho| over the whole lattice, counted with multiplicity."""
        s = sum(abs(z) for z in self.zetas)
        for x in self.lambdas:
            a = 1 / abs(x)
            s *= a / (1 - a)
        for x in self.mus:
            s /= 1 - abs(x)
        return s


def _require_diagonalizable(M):
    if M.size == 0:
        return
    w, V = np.linalg.eig(M)
    if np.linalg.cond(V) > 1e10:
        raise SpectrumError("matrix is not diagonalizable", "OrbitSpectrum", M.tolist())


@dataclass(frozen=True)
class LatticeResonance:
    value: complex
    multiplicity: int
    witness: tuple  # (k tuple, l tuple, zeta index)


def _raw_lattice(spec: OrbitSpectrum, r_min: float):
    lam_log = [math.log(abs(x)) for x in spec.lambdas]
    mu_log = [math.log(abs(x)) for x in spec.mus]
    cut = math.log(r_min) - 1e-12
    vals, wits = [], []
    nl, nm = len(spec.lambdas), len(spec.mus)

    for zi, zeta in enumerate(spec.zetas):
        if zeta == 0:
            continue
        base = math.log(abs(zeta))
        exps = [0] * (nl + nm)

        def rec(pos, logmod):
            if pos == nl + nm:
                rho = spec.sign * zeta
                for j in range(nl):
                    rho *= spec.lambdas[j] ** (-exps[j])
                for j in range(nm):
                    rho *= spec.mus[j] ** exps[nl + j]
                vals.append(rho)
                wits.append((tuple(exps[:nl]), tuple(exps[nl:]), zi))
                return
            if pos < nl:
                e, step = 1, -lam_log[pos]
            else:
                e, step = 0, mu_log[pos - nl]
            lm = logmod + e * step
            while lm >= cut:
                exps[pos] = e
                rec(pos + 1, lm)
                e += 1
                lm += step
            exps[pos] = 0

        # every remaining lambda contributes at least one factor 1/|lambda|
        rec(0, base)
    return np.asarray(vals, dtype=complex), wits


def _merge(vals, tol=MERGE_TOL):
    """Connected components of values agreeing to relative tolerance tol."""
    if vals.size == 0:
        return np.zeros(0, int), 0
    mod = np.abs(vals)
    pts = np.column_stack([vals.real / mod, vals.imag / mod, np.log(mod)])
    pairs = cKDTree(pts).query_pairs(tol, output_type="ndarray")
    n = vals.size
    if pairs.size == 0:
        return np.arange(n), n
    g = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n))
    ncomp, labels = connected_components(g, directed=False)
    return labels, ncomp


def enumerate_lattice(spec: OrbitSpectrum, r_min: float):
    """All lattice values with |rho| >= r_min, merged with multiplicity."""
    if not r_min > 0:
        raise SpectrumError("r_min must be positive", "enumerate_lattice", r_min)
    vals, wits = _raw_lattice(spec, r_min)
    labels, ncomp = _merge(vals)
    out = []
    for c in range(ncomp):
        idx = np.nonzero(labels == c)[0]
        out.append(LatticeResonance(complex(vals[idx[0]]), int(idx.size), wits[idx[0]]))
    out.sort(key=lambda q: (-abs(q.value), math.atan2(q.value.imag, q.value.real)))
    return out


class SingleOrbitDeterminant(EntireHandle):
    """Truncated product over the lattice, usable as a function handle."""

    def __init__(self, spec: OrbitSpectrum, r_min: float):
        self.spec = spec
        self.r_min = float(r_min)
        lat = enumerate_lattice(spec, r_min)
        self.rho = np.array([q.value for q in lat], dtype=complex)
        self.mult = np.array([q.multiplicity for q in lat], dtype=float)
        kept = float(np.sum(self.mult * np.abs(self.rho)))
        self.tail_sum = max(0.0, spec.total_abs_sum() - kept)

    def _w(self, z):
        return np.exp(-np.asarray(z, dtype=complex) * self.spec.t0)

    def log(self, z):
        z = np.asarray(z, dtype=complex)
        if self.rho.size == 0:
            return np.zeros(z.shape, dtype=complex)
        x = np.multiply.outer(self._w(z), self.rho)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.log1p(-x) @ self.mult

    def dlog(self, z, h=None):
        z = np.asarray(z, dtype=complex)
        if self.rho.size == 0:
            return np.zeros(z.shape, dtype=complex)
        x = np.multiply.outer(self._w(z), self.rho)
        return (self.spec.t0 * x / (1 - x)) @ self.mult

    def __call__(self, z):
        z = np.asarray(z, dtype=complex)
        if self.rho.size == 0:
            return np.ones(z.shape, dtype=complex)
        x = np.multiply.outer(self._w(z), self.rho)
        return np.prod((1 - x) ** self.mult, axis=-1)

    def tail_bound(self, z) -> float:
        """Bound on |log d - log d_truncated| (inf if the bound does not apply)."""
        w = abs(complex(self._w(z)))
        if w * self.r_min > 0.5:
            return math.inf
        return 2 * w * self.tail_sum


@dataclass(frozen=True)
class DetValue:
    value: complex
    tail_bound: float
    r_min: float


@lru_cache(maxsize=4096)
def _tail_sum(spec: OrbitSpectrum, k: int) -> float:
    """Sum of |rho| below the cutoff max_modulus / 2^k (raw values, no merging)."""
    vals, _ = _raw_lattice(spec, spec.max_modulus / 2.0 ** k)
    return max(0.0, spec.total_abs_sum() - float(np.sum(np.abs(vals))))


def choose_cutoff(spec: OrbitSpectrum, z, tol: float = 1e-15, max_halvings: int = 400) -> float:
    """Largest power-of-two cutoff whose tail bound at z is below tol."""
    w = abs(math.exp(-complex(z).real * spec.t0))
    # the bound only applies once w * r <= 1/2
    k0 = max(1, math.ceil(math.log2(max(2 * w * spec.max_modulus, 1.0))))

    def ok(k):
        return 2 * w * _tail_sum(spec, k) <= tol

    hi = k0
    while not ok(hi):
        if hi >= max_halvings:
            raise SpectrumError("no cutoff reaches the requested tolerance", "choose_cutoff", z)
        hi = min(2 * hi, max_halvings)
    lo = k0 - 1  # ok(lo) is false or out of range
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return spec.max_modulus / 2.0 ** hi


def single_orbit_det(spec: OrbitSpectrum, z, r_min: float | None = None,
                     tol: float = 1e-15) -> DetValue:
    if r_min is None:
        r_min = choose_cutoff(spec, z, tol)
    d = SingleOrbitDeterminant(spec, r_min)
    return DetValue(complex(d(complex(z))), d.tail_bound(z), r_min)


def single_orbit_resonances(spec: OrbitSpectrum, r: float) -> ResonanceSet:
    """All logarithms (log|rho| + i arg rho + 2 pi i k)/t0 of modulus <= r."""
    if not r > 0:
        raise SpectrumError("radius must be positive", "single_orbit_resonances", r)
    t0 = spec.t0
    zeros = []
    r_min = math.exp(-r * t0)
    if r_min >= spec.max_modulus * (1 + 1e-12):
        return ResonanceSet([], "lattice", r)
    for q in enumerate_lattice(spec, r_min * (1 - 1e-12)):
        re = math.log(abs(q.value)) / t0
        if abs(re) > r:
            continue
        im0 = math.atan2(q.value.imag, q.value.real) / t0
        if im0 <= -math.pi / t0:
            im0 += 2 * math.pi / t0
        span = math.sqrt(max(r * r - re * re, 0.0))
        step = 2 * math.pi / t0
        k_lo = math.ceil((-span - im0) / step - 1e-12)
        k_hi = math.floor((span - im0) / step + 1e-12)
        for k in range(k_lo, k_hi + 1):
            z = complex(re, im0 + k * step)
            if abs(z) <= r * (1 + 1e-14):
                zeros.append(Resonance(z, q.multiplicity, 0.0))
    return ResonanceSet(zeros, "lattice", r)


def lattice_zero_count(spec: OrbitSpectrum, r: float) -> int:
    return single_orbit_resonances(spec, r).count
