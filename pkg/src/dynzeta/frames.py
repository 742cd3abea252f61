"""Windowed Fourier frame discretization of the transfer operators.

Each symbol carries a grid of Gevrey windows θ_a (a partition of unity on a
covered box) together with wider plateau windows θ̃_a ≡ 1 on supp θ_a.  Atoms
are e_{a,ℓ,j} = θ_a e^{2πiℓ·x} ⊗ e_j and ẽ_{a,ℓ,j} = θ̃_a e^{2πiℓ·x} ⊗ e_j, with
ℓ on the integer lattice, so reconstruction is a Fourier series on the unit
torus (this needs supp θ̃_a to have diameter below one, i.e. δ < 3/4).

The operator acting on a function on section β and returning one on section α
along the edge α→β is f ↦ χ_α e^{−zτ} N f∘F.  Matrix entries are

    ⟨L ẽ_col, e_row⟩ = ∫ conj(e_row) χ_α e^{−zτ} N ẽ_col∘F dx,

weighted by the escape function as e^{−ε(G(row) − G(col))}.

When the linear part of an edge is diagonal (always the case for n−1 ≤ 2 with
a (1, 1) split) every ingredient is a tensor product and an edge block is a
Kronecker product of one-dimensional matrices.  If in addition all edges and
all symbol frames coincide, the full matrix is A ⊗ K_1 ⊗ … ⊗ N and its
determinant factorizes over eigenvalues; `galerkin_det` uses that when
possible and falls back to an LU factorization otherwise.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
import scipy.linalg

from .errors import FrameConfigError, InsufficientDataError, QuadratureError
from .model import FlowSystem, compose_along_word
from .orbits import enumerate_fixed_words

# window geometry, in units of δ
PSI_RADIUS = 0.45
PLATEAU_RADIUS = 0.5
SUPPORT_RADIUS = 2.0 / 3.0
SPACING = 0.5
GAUSS_NODES = 16
MAX_DELTA = 0.75


# ---------------------------------------------------------------- profiles

def _phi(t, s):
    out = np.zeros_like(t, dtype=float)
    m = t > 0
    out[m] = np.exp(-t[m] ** (-1.0 / (s - 1.0)))
    return out


def gevrey_bump(t, s):
    """exp(−(1−t²)^{−1/(s−1)}) on |t| < 1, zero outside."""
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    m = np.abs(t) < 1
    out[m] = np.exp(-(1 - t[m] ** 2) ** (-1.0 / (s - 1.0)))
    return out


def gevrey_step(u, s):
    """Smooth step: 1 for u ≤ 0, 0 for u ≥ 1."""
    u = np.clip(np.asarray(u, dtype=float), 0.0, 1.0)
    a, b = _phi(1 - u, s), _phi(u, s)
    return a / (a + b)


def plateau(x, inner, outer, s):
    """1 on |x| ≤ inner, 0 on |x| ≥ outer."""
    return gevrey_step((np.abs(x) - inner) / (outer - inner), s)


# ---------------------------------------------------------------- escape function

def escape_G(xi_un, xi_st, s: float) -> float:
    """|ξ_st|^{1/s} − |ξ_un|^{1/s} with Euclidean block norms."""
    if not s > 1:
        raise FrameConfigError("Gevrey exponent must exceed 1", "escape_G", s)
    un = np.linalg.norm(np.atleast_1d(np.asarray(xi_un, dtype=float)))
    st = np.linalg.norm(np.atleast_1d(np.asarray(xi_st, dtype=float)))
    return float(st ** (1 / s) - un ** (1 / s))


@dataclass(frozen=True)
class EscapeWeight:
    """Escape-function weight.

    Frequencies dual to the expanding coordinates (the first d_u entries of ℓ)
    form the stable cotangent block; the remaining entries the unstable one.
    """

    epsilon: float = 0.25
    s: float = 2.0
    split: tuple = (1, 1)

    def __post_init__(self):
        if self.epsilon < 0:
            raise FrameConfigError("epsilon must be non-negative", "EscapeWeight", self.epsilon)
        if not self.s > 1:
            raise FrameConfigError("Gevrey exponent must exceed 1", "EscapeWeight", self.s)

    def G(self, ell) -> np.ndarray:
        ell = np.atleast_2d(np.asarray(ell, dtype=float))
        du = int(self.split[0])
        st = np.linalg.norm(ell[:, :du], axis=1) if du else np.zeros(len(ell))
        un = np.linalg.norm(ell[:, du:], axis=1) if ell.shape[1] > du else np.zeros(len(ell))
        return st ** (1 / self.s) - un ** (1 / self.s)

    def halved(self) -> "EscapeWeight":
        return EscapeWeight(self.epsilon / 2, self.s, self.split)


# ---------------------------------------------------------------- configuration

@dataclass(frozen=True)
class FrameConfig:
    """Discretization parameters.

    ``boxes`` maps a symbol to (lo, hi) corners of the region its windows must
    cover; when omitted the box is the hull of low-period periodic points.
    ``eta`` is the width of the cutoff transition around that box (None: δ/2,
    inf: no cutoff).
    """

    L: int = 8
    delta: float = 0.7
    eta: float | None = None
    boxes: Mapping | None = None
    epsilon: float = 0.25
    varpi: float = 1.0
    row_norm_bound: float = 1e6
    quad_tol: float = 1e-8
    window_s: float | None = None

    def __post_init__(self):
        if int(self.L) != self.L or self.L < 0:
            raise FrameConfigError("L must be a non-negative integer", "FrameConfig", self.L)
        if not 0 < self.delta < MAX_DELTA:
            raise FrameConfigError(f"delta must lie in (0, {MAX_DELTA})", "FrameConfig", self.delta)
        if self.eta is not None and not self.eta > 0:
            raise FrameConfigError("eta must be positive", "FrameConfig", self.eta)
        if self.epsilon < 0:
            raise FrameConfigError("epsilon must be non-negative", "FrameConfig", self.epsilon)
        if not self.varpi > 0:
            raise FrameConfigError("varpi must be positive", "FrameConfig", self.varpi)
        if self.window_s is not None and not self.window_s > 1:
            raise FrameConfigError("window Gevrey index must exceed 1", "FrameConfig",
                                   self.window_s)

    @property
    def margin(self) -> float:
        return self.delta / 2 if self.eta is None else float(self.eta)

    def with_L(self, L: int) -> "FrameConfig":
        return FrameConfig(L, self.delta, self.eta, self.boxes, self.epsilon, self.varpi,
                           self.row_norm_bound, self.quad_tol, self.window_s)


def _check_dimension(sys: FlowSystem):
    if sys.section_dim > 2:
        raise FrameConfigError("frame discretization supports n-1 <= 2 only",
                               "frames", sys.section_dim)
    if sys.section_dim < 1:
        raise FrameConfigError("section dimension must be at least 1", "frames",
                               sys.section_dim)


def periodic_point_box(sys: FlowSystem, symbol, max_len: int = 6, max_words: int = 4096):
    """Bounding box of the periodic points in one section, from short words."""
    pts = []
    for m in range(1, max_len + 1):
        words = [w for w in enumerate_fixed_words(sys.graph, m) if w[0] == symbol]
        if len(pts) + len(words) > max_words:
            break
        for w in words:
            comp = compose_along_word(sys, tuple(w) + (w[0],))
            k = sys.section_dim
            try:
                x = np.linalg.solve(np.eye(k) - comp.linear, comp.offset)
            except np.linalg.LinAlgError:
                continue
            pts.append(x)
    if not pts:
        return np.zeros(sys.section_dim), np.zeros(sys.section_dim)
    P = np.array(pts)
    return P.min(axis=0), P.max(axis=0)


# ---------------------------------------------------------------- frames

@dataclass(frozen=True)
class FrameAtom:
    symbol: object
    center: tuple
    ell: tuple
    channel: int


def _center_grid(lo, hi, delta):
    h = SPACING * delta
    width = hi - lo
    k = 1 if width <= 0.1 * delta else math.ceil((width - 0.1 * delta) / h) + 1
    mid = 0.5 * (lo + hi)
    return mid + (np.arange(k) - (k - 1) / 2) * h


@dataclass
class SymbolFrame:
    """Windows of one symbol: a tensor grid of centers, one array per coordinate."""

    symbol: object
    lo: np.ndarray
    hi: np.ndarray
    delta: float
    s: float
    centers: tuple  # per coordinate

    @property
    def dim(self) -> int:
        return len(self.centers)

    @property
    def shape(self) -> tuple:
        return tuple(len(c) for c in self.centers)

    @property
    def n_centers(self) -> int:
        return int(np.prod(self.shape))

    def covered(self):
        pad = (SPACING - PSI_RADIUS) * self.delta
        return (np.array([c[0] - pad for c in self.centers]),
                np.array([c[-1] + pad for c in self.centers]))

    def theta_1d(self, i, x):
        """Rows θ_a(x) for the centers along coordinate i (ghosts normalize the ends)."""
        c = self.centers[i]
        h = SPACING * self.delta
        allc = np.concatenate([c, [c[0] - h, c[-1] + h]])
        r = PSI_RADIUS * self.delta
        psi = gevrey_bump((np.asarray(x)[None, :] - allc[:, None]) / r, self.s)
        tot = psi.sum(axis=0)
        out = np.zeros((len(c), len(x)))
        m = tot > 0
        out[:, m] = psi[: len(c), m] / tot[m]
        return out

    def theta_tilde_1d(self, a, x):
        return plateau(np.asarray(x) - a, PLATEAU_RADIUS * self.delta,
                       SUPPORT_RADIUS * self.delta, self.s)

    def chi_1d(self, i, x, eta):
        x = np.asarray(x, dtype=float)
        if not math.isfinite(eta):
            return np.ones_like(x)
        d = np.maximum(self.lo[i] - x, x - self.hi[i])
        return gevrey_step(d / eta, self.s)

    def theta(self, idx, X):
        X = np.atleast_2d(X)
        out = np.ones(len(X))
        for i, a in enumerate(idx):
            out *= self.theta_1d(i, X[:, i])[a]
        return out

    def theta_tilde(self, idx, X):
        X = np.atleast_2d(X)
        out = np.ones(len(X))
        for i, a in enumerate(idx):
            out *= self.theta_tilde_1d(self.centers[i][a], X[:, i])
        return out

    def chi(self, X, eta):
        X = np.atleast_2d(X)
        out = np.ones(len(X))
        for i in range(self.dim):
            out *= self.chi_1d(i, X[:, i], eta)
        return out

    def partition_residual(self, points: int = 201) -> float:
        """max |Σ_a θ_a − 1| on a grid over the covered box."""
        lo, hi = self.covered()
        res = 0.0
        for i in range(self.dim):
            x = np.linspace(lo[i], hi[i], points)
            res = max(res, float(np.max(np.abs(self.theta_1d(i, x).sum(axis=0) - 1))))
        return res

    def same_geometry(self, other: "SymbolFrame") -> bool:
        return (self.delta == other.delta and self.s == other.s
                and np.array_equal(self.lo, other.lo) and np.array_equal(self.hi, other.hi)
                and all(np.array_equal(a, b) for a, b in zip(self.centers, other.centers)))


@dataclass
class Frame:
    system: FlowSystem
    config: FrameConfig
    symbols: dict  # symbol -> SymbolFrame

    @property
    def L(self) -> int:
        return int(self.config.L)

    def freqs_1d(self):
        return np.arange(-self.L, self.L + 1)

    def block_size(self, symbol) -> int:
        sf = self.symbols[symbol]
        return sf.n_centers * (2 * self.L + 1) ** sf.dim * self.system.bundle_dim

    def atoms(self, symbol):
        """Atoms of one symbol in storage order (a_1, ℓ_1, a_2, ℓ_2, …, channel)."""
        sf = self.symbols[symbol]
        ls = self.freqs_1d()
        per = [list(itertools.product(range(len(c)), range(len(ls)))) for c in sf.centers]
        out = []
        for combo in itertools.product(*per):
            center = tuple(float(sf.centers[i][a]) for i, (a, _) in enumerate(combo))
            ell = tuple(int(ls[li]) for _, li in combo)
            for j in range(self.system.bundle_dim):
                out.append(FrameAtom(symbol, center, ell, j))
        return out

    def position(self, symbol, cidx, lidx, channel=0) -> int:
        sf = self.symbols[symbol]
        n = 2 * self.L + 1
        p = 0
        for i in range(sf.dim):
            p = p * (len(sf.centers[i]) * n) + cidx[i] * n + lidx[i]
        return p * self.system.bundle_dim + channel


def build_frame(sys: FlowSystem, config: FrameConfig | None = None) -> Frame:
    _check_dimension(sys)
    config = config or FrameConfig()
    s = float(config.window_s or sys.gevrey_s)
    if not s > 1:
        raise FrameConfigError("window Gevrey index must exceed 1", "build_frame", s)
    frames = {}
    for sym in sys.graph.symbols:
        if config.boxes is not None and sym in config.boxes:
            lo, hi = (np.asarray(v, dtype=float).reshape(-1) for v in config.boxes[sym])
        else:
            lo, hi = periodic_point_box(sys, sym)
        if lo.shape != (sys.section_dim,) or hi.shape != lo.shape or np.any(hi < lo):
            raise FrameConfigError("box corners must be (n-1)-vectors with lo <= hi",
                                   "build_frame", sym)
        centers = tuple(_center_grid(lo[i], hi[i], config.delta) for i in range(len(lo)))
        frames[sym] = SymbolFrame(sym, lo, hi, config.delta, s, centers)
    return Frame(sys, config, frames)


# ---------------------------------------------------------------- quadrature

def _gauss_grid(a, b, npan):
    g, w = np.polynomial.legendre.leggauss(GAUSS_NODES)
    edges = np.linspace(a, b, npan + 1)
    half = np.diff(edges)[:, None] / 2
    x = (edges[:-1, None] + (g + 1) * half).ravel()
    return x, (w * half).ravel()


def _panels(width, freq):
    return int(math.ceil(3 * width * (1 + freq))) + 4


def _row_interval(sf: SymbolFrame, i, b, eta):
    r = PSI_RADIUS * sf.delta
    lo, hi = b - r, b + r
    if math.isfinite(eta):
        lo, hi = max(lo, sf.lo[i] - eta), min(hi, sf.hi[i] + eta)
    return lo, hi


def _factor_1d(rowf: SymbolFrame, colf: SymbolFrame, i, lam, off, c, z, L, eta, refine):
    """One-dimensional factor over (center, frequency) pairs; rows on the α side."""
    ls = np.arange(-L, L + 1)
    n = len(ls)
    rb, cb = rowf.centers[i], colf.centers[i]
    K = np.zeros((len(rb) * n, len(cb) * n), dtype=complex)
    tw = SUPPORT_RADIUS * rowf.delta
    for bi, b in enumerate(rb):
        lo, hi = _row_interval(rowf, i, b, eta)
        if hi <= lo:
            continue
        npan = _panels(hi - lo, (1 + L) * (1 + abs(lam))) * (2 if refine else 1)
        x, w = _gauss_grid(lo, hi, npan)
        base = rowf.theta_1d(i, x)[bi] * rowf.chi_1d(i, x, eta) * np.exp(-z * c * x) * w
        Fx = lam * x + off
        Er = np.exp(2j * np.pi * np.outer(x, ls))
        Ec = np.exp(2j * np.pi * np.outer(Fx, ls))
        for ai, a in enumerate(cb):
            if np.min(np.abs(Fx - a)) >= tw:
                continue
            h = base * colf.theta_tilde_1d(a, Fx)
            K[bi * n:(bi + 1) * n, ai * n:(ai + 1) * n] = Er.conj().T @ (h[:, None] * Ec)
    return K


def _checked_factor(rowf, colf, i, lam, off, c, z, L, eta, tol):
    K0 = _factor_1d(rowf, colf, i, lam, off, c, z, L, eta, False)
    K1 = _factor_1d(rowf, colf, i, lam, off, c, z, L, eta, True)
    err = float(np.max(np.abs(K1 - K0))) if K0.size else 0.0
    scale = max(1.0, float(np.max(np.abs(K1))) if K1.size else 0.0)
    if err > tol * scale:
        raise QuadratureError("refinement changed the factor beyond tolerance",
                              "assemble_operator", (i, L), values=(K0, K1))
    return K1, err


def _is_diagonal(M):
    return np.array_equal(M, np.diag(np.diag(M)))


def _edge_factors(frame: Frame, a, b, z, tol):
    """Kronecker factors of the edge block (a→b): scalar, 1D matrices, lift."""
    sys, cfg = frame.system, frame.config
    e = sys.edge(a, b)
    rowf, colf = frame.symbols[a], frame.symbols[b]
    lam = np.diag(e.linear)
    Ks, err = [], 0.0
    for i in range(sys.section_dim):
        K, er = _checked_factor(rowf, colf, i, lam[i], e.offset[i], e.c[i], z, frame.L,
                                cfg.margin, tol)
        Ks.append(K)
        err = max(err, er)
    return complex(np.exp(-z * e.t0)), Ks, e.lift, err


def _edge_block_generic(frame: Frame, a, b, z, refine):
    """Direct tensor quadrature of an edge block for a non-diagonal linear part."""
    sys, cfg = frame.system, frame.config
    e = sys.edge(a, b)
    rowf, colf = frame.symbols[a], frame.symbols[b]
    k, d = sys.section_dim, sys.bundle_dim
    L = frame.L
    ls = np.arange(-L, L + 1)
    n = len(ls)
    lgrid = np.array(list(itertools.product(ls, repeat=k)), dtype=float)
    lidx = list(itertools.product(range(n), repeat=k))
    B = np.zeros((frame.block_size(a), frame.block_size(b)), dtype=complex)
    growth = float(np.max(np.abs(e.linear).sum(axis=1)))
    tw = SUPPORT_RADIUS * colf.delta
    for bidx in itertools.product(*(range(len(c)) for c in rowf.centers)):
        axes = []
        for i in range(k):
            lo, hi = _row_interval(rowf, i, rowf.centers[i][bidx[i]], cfg.margin)
            if hi <= lo:
                break
            npan = _panels(hi - lo, L * (1 + growth)) * (2 if refine else 1)
            axes.append(_gauss_grid(lo, hi, npan))
        if len(axes) < k:
            continue
        X = np.array(list(itertools.product(*(ax[0] for ax in axes))))
        W = np.prod(np.array(list(itertools.product(*(ax[1] for ax in axes)))), axis=1)
        base = (rowf.theta(bidx, X) * rowf.chi(X, cfg.margin)
                * np.exp(-z * (e.t0 + X @ e.c)) * W)
        keep = base != 0
        X, base = X[keep], base[keep]
        if not X.size:
            continue
        FX = X @ e.linear.T + e.offset
        Er = np.exp(2j * np.pi * X @ lgrid.T)
        Ec = np.exp(2j * np.pi * FX @ lgrid.T)
        rows = np.array([frame.position(a, bidx, li) for li in lidx])
        for aidx in itertools.product(*(range(len(c)) for c in colf.centers)):
            ac = np.array([colf.centers[i][aidx[i]] for i in range(k)])
            if np.min(np.max(np.abs(FX - ac), axis=1)) >= tw:
                continue
            h = base * colf.theta_tilde(aidx, FX)
            S = Er.conj().T @ (h[:, None] * Ec)
            cols = np.array([frame.position(b, aidx, li) for li in lidx])
            for p in range(d):
                for q in range(d):
                    if e.lift[p, q] != 0:
                        B[np.ix_(rows + p, cols + q)] = S * e.lift[p, q]
    return B


@dataclass(frozen=True)
class EntryValue:
    value: complex
    error: float


def matrix_entry(sys: FlowSystem, edge, z, col: FrameAtom, row: FrameAtom,
                 config: FrameConfig | None = None, frame: Frame | None = None,
                 tol: float = 1e-8) -> EntryValue:
    """Single entry ⟨L ẽ_col, e_row⟩ for the edge (row symbol → col symbol), unweighted."""
    frame = frame or build_frame(sys, config)
    a, b = edge
    if row.symbol != a or col.symbol != b:
        raise FrameConfigError("atoms must live on the edge's source and target",
                               "matrix_entry", edge)
    e = sys.edge(a, b)
    rowf, colf = frame.symbols[a], frame.symbols[b]
    k = sys.section_dim
    bidx = _center_index(rowf, row.center)
    aidx = _center_index(colf, col.center)
    lr = np.asarray(row.ell, dtype=float)
    lc = np.asarray(col.ell, dtype=float)
    # oscillation of the phase along each axis
    freq = 1 + np.abs(lr) + np.abs(lc) @ np.abs(e.linear)
    z = complex(z)
    eta = frame.config.margin

    def integrate(mult):
        axes = []
        for i in range(k):
            lo, hi = _row_interval(rowf, i, row.center[i], eta)
            if hi <= lo:
                return 0j
            axes.append(_gauss_grid(lo, hi, _panels(hi - lo, freq[i]) * mult))
        X = np.array(list(itertools.product(*(ax[0] for ax in axes))))
        W = np.prod(np.array(list(itertools.product(*(ax[1] for ax in axes)))), axis=1)
        FX = X @ e.linear.T + e.offset
        h = (rowf.theta(bidx, X) * rowf.chi(X, eta) * np.exp(-z * (e.t0 + X @ e.c))
             * colf.theta_tilde(aidx, FX) * W)
        ph = np.exp(2j * np.pi * (FX @ lc - X @ lr))
        return complex(np.sum(h * ph)) * e.lift[row.channel, col.channel]

    v0, v1 = integrate(1), integrate(2)
    err = abs(v1 - v0)
    if err > tol * max(1.0, abs(v1)):
        raise QuadratureError("refinement disagreement", "matrix_entry", (row, col),
                              values=(v0, v1))
    return EntryValue(v1, err)


def _center_index(sf: SymbolFrame, center):
    idx = []
    for i, c in enumerate(np.atleast_1d(np.asarray(center, dtype=float))):
        j = int(np.argmin(np.abs(sf.centers[i] - c)))
        if abs(sf.centers[i][j] - c) > 1e-12:
            raise FrameConfigError("center is not on the frame grid", "matrix_entry", center)
        idx.append(j)
    return tuple(idx)


# ---------------------------------------------------------------- assembly

@dataclass
class GalerkinMatrix:
    index: list
    matrix: np.ndarray  # weighted
    G: np.ndarray
    z: complex
    L: int
    weight: EscapeWeight
    quad_error: float
    dim: int
    offsets: dict = field(default_factory=dict)  # symbol -> slice
    warnings: list = field(default_factory=list)

    @property
    def s(self) -> float:
        return self.weight.s

    @property
    def raw(self) -> np.ndarray:
        e = self.weight.epsilon
        return self.matrix * np.exp(e * (self.G[:, None] - self.G[None, :]))

    def row_norm(self) -> float:
        return float(np.max(np.abs(self.matrix).sum(axis=1))) if self.matrix.size else 0.0


def _symbol_slices(frame: Frame):
    out, start = {}, 0
    for sym in frame.system.graph.symbols:
        n = frame.block_size(sym)
        out[sym] = slice(start, start + n)
        start += n
    return out, start


def assemble_operator(sys: FlowSystem, z, L: int | None = None,
                      weight: EscapeWeight | None = None,
                      config: FrameConfig | None = None) -> GalerkinMatrix:
    """Weighted Galerkin matrix of the transfer operator at z."""
    _check_dimension(sys)
    config = config or FrameConfig()
    if L is not None:
        config = config.with_L(L)
    weight = weight or EscapeWeight(config.epsilon, sys.gevrey_s, sys.split)
    frame = build_frame(sys, config)
    z = complex(z)
    slices, N = _symbol_slices(frame)
    M = np.zeros((N, N), dtype=complex)
    qerr = 0.0
    for (a, b) in sys.graph.edges():
        e = sys.edge(a, b)
        if _is_diagonal(e.linear):
            scal, Ks, lift, err = _edge_factors(frame, a, b, z, config.quad_tol)
            blk = Ks[0]
            for K in Ks[1:]:
                blk = np.kron(blk, K)
            M[slices[a], slices[b]] = scal * np.kron(blk, lift)
        else:
            B0 = _edge_block_generic(frame, a, b, z, False)
            B1 = _edge_block_generic(frame, a, b, z, True)
            err = float(np.max(np.abs(B1 - B0)))
            if err > config.quad_tol * max(1.0, float(np.max(np.abs(B1)))):
                raise QuadratureError("refinement changed the block beyond tolerance",
                                      "assemble_operator", (a, b), values=(B0, B1))
            M[slices[a], slices[b]] = B1
        qerr = max(qerr, err)

    index = [atom for sym in sys.graph.symbols for atom in frame.atoms(sym)]
    ell = np.array([atom.ell for atom in index], dtype=float).reshape(len(index), -1)
    G = weight.G(ell) if index else np.zeros(0)
    warnings = []
    gm = None
    w = weight
    while True:
        D = np.exp(-w.epsilon * G)
        gm = GalerkinMatrix(index, M * D[:, None] / D[None, :], G, z, frame.L, w, qerr,
                            sys.section_dim, slices, warnings)
        if gm.row_norm() <= config.row_norm_bound or w.epsilon == 0:
            break
        w = w.halved() if w.epsilon > 1e-6 else EscapeWeight(0.0, w.s, w.split)
        warnings.append(f"row norm above bound; epsilon reduced to {w.epsilon:g}")
    return gm


# ---------------------------------------------------------------- determinants

def det_lu(matrix) -> complex:
    """det(I − M) from an LU factorization with partial pivoting."""
    M = np.asarray(matrix, dtype=complex)
    if M.size == 0:
        return 1 + 0j
    lu, piv = scipy.linalg.lu_factor(np.eye(len(M)) - M, check_finite=True)
    diag = np.diag(lu)
    if np.any(diag == 0):
        return 0j
    swaps = int(np.sum(piv != np.arange(len(piv))))
    logd = np.sum(np.log(diag)) + (1j * np.pi if swaps % 2 else 0)
    return complex(np.exp(logd))


def _factorizable(sys: FlowSystem, frame: Frame) -> bool:
    maps = list(sys.edges.values())
    if not maps:
        return True
    ref = maps[0]
    if not _is_diagonal(ref.linear):
        return False
    for e in maps[1:]:
        if not (np.array_equal(e.linear, ref.linear) and np.array_equal(e.offset, ref.offset)
                and np.array_equal(e.c, ref.c) and e.t0 == ref.t0
                and np.array_equal(e.lift, ref.lift)):
            return False
    frs = list(frame.symbols.values())
    return all(frs[0].same_geometry(f) for f in frs[1:])


def _factored_det(sys: FlowSystem, frame: Frame, z, tol) -> complex:
    edges = list(sys.graph.edges())
    if not edges:
        return 1 + 0j
    a, b = edges[0]
    scal, Ks, lift, _ = _edge_factors(frame, a, b, z, tol)
    ev = np.linalg.eigvals(sys.graph.adjacency.astype(float)) * scal
    for K in Ks + [lift]:
        ev = np.multiply.outer(ev, np.linalg.eigvals(K)).ravel()
    return complex(np.exp(np.sum(np.log(1 - ev))))


def galerkin_det(sys: FlowSystem, z, L: int | None = None, weight: EscapeWeight | None = None,
                 config: FrameConfig | None = None, method: str = "auto") -> complex:
    """det(I − M) for the Galerkin matrix M at z.

    method: "lu" always assembles and factorizes; "factored" requires a system
    whose matrix is A ⊗ K_1 ⊗ … ⊗ N; "auto" picks the factored path when it
    applies.  The escape weight is a similarity and does not change the result.
    """
    config = config or FrameConfig()
    if L is not None:
        config = config.with_L(L)
    if method not in ("auto", "lu", "factored"):
        raise FrameConfigError("unknown method", "galerkin_det", method)
    _check_dimension(sys)
    if method != "lu":
        frame = build_frame(sys, config)
        if _factorizable(sys, frame):
            return _factored_det(sys, frame, complex(z), config.quad_tol)
        if method == "factored":
            raise FrameConfigError("system does not have Kronecker structure",
                                   "galerkin_det", None)
    return det_lu(assemble_operator(sys, z, weight=weight, config=config).matrix)


@dataclass(frozen=True)
class SweepReport:
    z: complex
    Ls: tuple
    dets: tuple
    increments: tuple  # relative |d_L − d_prev| / |d_L|
    L: int
    value: complex
    converged: bool

    def to_dict(self):
        return {"z": [self.z.real, self.z.imag], "L": list(self.Ls),
                "det": [[d.real, d.imag] for d in self.dets],
                "increments": list(self.increments), "chosen_L": self.L,
                "converged": self.converged}


def convergence_sweep(sys: FlowSystem, z, Ls, config: FrameConfig | None = None,
                      tol: float = 1e-3, method: str = "auto") -> SweepReport:
    """Galerkin determinants over increasing L; reports the last value."""
    config = config or FrameConfig()
    Ls = tuple(sorted(int(L) for L in Ls))
    dets = tuple(galerkin_det(sys, z, config=config.with_L(L), method=method) for L in Ls)
    inc = tuple(abs(dets[i] - dets[i - 1]) / max(abs(dets[i]), 1e-300)
                for i in range(1, len(dets)))
    conv = bool(inc) and inc[-1] < tol
    return SweepReport(complex(z), Ls, dets, inc, Ls[-1], dets[-1], conv)


# ---------------------------------------------------------------- decay of singular values

@dataclass(frozen=True)
class DecayFit:
    slope: float
    intercept: float
    r2: float
    exponent: float
    used: int
    singular_values: np.ndarray

    def to_dict(self):
        return {"slope": self.slope, "intercept": self.intercept, "r2": self.r2,
                "exponent": self.exponent, "used": self.used,
                "singular_values": [float(v) for v in self.singular_values]}


def decay_profile(matrix, s: float | None = None, dim: int | None = None,
                  floor: float = 1e-13, min_count: int = 20) -> DecayFit:
    """Fit log σ_m ≈ intercept + slope · m^{1/(s·dim)} over the singular values."""
    if isinstance(matrix, GalerkinMatrix):
        s = matrix.s if s is None else s
        dim = matrix.dim if dim is None else dim
        M = matrix.matrix
    else:
        M = np.asarray(matrix)
        if s is None or dim is None:
            raise FrameConfigError("s and dim are required for a plain matrix",
                                   "decay_profile", None)
    sv = np.linalg.svd(M, compute_uv=False) if M.size else np.zeros(0)
    sv = np.sort(sv)[::-1]
    if not sv.size or sv[0] == 0:
        raise InsufficientDataError("matrix has no nonzero singular values", "decay_profile")
    keep = sv > floor * sv[0]
    k = int(np.sum(keep))
    if k < min_count:
        raise InsufficientDataError(f"only {k} singular values above the floor",
                                    "decay_profile", k)
    p = 1.0 / (s * dim)
    x = np.arange(1, k + 1) ** p
    y = np.log(sv[:k])
    slope, icpt = np.polyfit(x, y, 1)
    resid = y - (slope * x + icpt)
    tot = np.sum((y - y.mean()) ** 2)
    r2 = 1.0 - float(np.sum(resid ** 2) / tot) if tot > 0 else 1.0
    return DecayFit(float(slope), float(icpt), r2, p, k, sv)


# ---------------------------------------------------------------- phase-space proximity

def kn_distance(x, xi, y, eta, nodes: int = 8) -> float:
    """Length of the straight path between (x, ξ) and (y, η) in dx² + dξ²/(1+|ξ|²).

    An upper bound for the geodesic distance, sharp when the two frequencies
    are comparable.
    """
    x, xi, y, eta = (np.atleast_1d(np.asarray(v, dtype=float)) for v in (x, xi, y, eta))
    g, w = np.polynomial.legendre.leggauss(nodes)
    t = (g + 1) / 2
    path = xi[None, :] + t[:, None] * (eta - xi)[None, :]
    dxi = np.linalg.norm(eta - xi) * np.sum(w / 2 / np.sqrt(1 + np.sum(path ** 2, axis=1)))
    return float(np.hypot(np.linalg.norm(x - y), dxi))


def _kn_matrix(X, XI, Y, ETA, nodes=8):
    g, w = np.polynomial.legendre.leggauss(nodes)
    t = (g + 1) / 2
    dx = np.linalg.norm(X[:, None, :] - Y[None, :, :], axis=2)
    diff = ETA[None, :, :] - XI[:, None, :]
    acc = np.zeros(dx.shape)
    for tk, wk in zip(t, w):
        p = XI[:, None, :] + tk * diff
        acc += wk / 2 / np.sqrt(1 + np.sum(p ** 2, axis=2))
    return np.hypot(dx, np.linalg.norm(diff, axis=2) * acc)


def near_pairs(gm: GalerkinMatrix, sys: FlowSystem, varpi: float = 1.0):
    """Index pairs (row, col) on admissible blocks whose mapped atoms are KN-close.

    The column atom (a, ℓ) transported by the edge map sits at (F⁻¹a, Fᵀℓ);
    the pair is near when that point lies within ϖ of the row atom (b, ℓ').
    """
    out = []
    atoms = gm.index
    for (a, b) in sys.graph.edges():
        e = sys.edge(a, b)
        rs, cs = gm.offsets[a], gm.offsets[b]
        R = atoms[rs]
        C = atoms[cs]
        X = np.array([r.center for r in R], dtype=float)
        XI = np.array([r.ell for r in R], dtype=float)
        Y = np.linalg.solve(e.linear, (np.array([c.center for c in C], dtype=float)
                                       - e.offset).T).T
        ETA = np.array([c.ell for c in C], dtype=float) @ e.linear
        D = _kn_matrix(X, XI, Y, ETA)
        i, j = np.nonzero(D <= varpi)
        out.extend(zip((i + rs.start).tolist(), (j + cs.start).tolist()))
    return out


def escape_decay_constant(gm: GalerkinMatrix, sys: FlowSystem, varpi: float = 1.0,
                          min_freq: int = 4) -> float:
    """min over near pairs with |ℓ_row| ≥ min_freq of (G_row − G_col)/|ℓ_row|^{1/s}."""
    pairs = near_pairs(gm, sys, varpi)
    best = math.inf
    for r, c in pairs:
        lr = np.linalg.norm(gm.index[r].ell)
        if lr < min_freq:
            continue
        best = min(best, (gm.G[r] - gm.G[c]) / lr ** (1 / gm.s))
    return best


def reconstruction_residual(frame: Frame, symbol, f, points: int = 401) -> float:
    """sup |Σ_{a,|ℓ|≤L} ⟨f, e_a,ℓ⟩ ẽ_a,ℓ − f| over the covered box (scalar f, n−1 = 1 or 2).

    ``f`` takes an array of points of shape (N, n−1).
    """
    sf = frame.symbols[symbol]
    L = frame.L
    ls = np.arange(-L, L + 1)
    lo, hi = sf.covered()
    axes = [np.linspace(lo[i], hi[i], points if sf.dim == 1 else max(41, points // 8))
            for i in range(sf.dim)]
    T = np.array(list(itertools.product(*axes)))
    rec = np.zeros(len(T), dtype=complex)
    lgrid = np.array(list(itertools.product(ls, repeat=sf.dim)), dtype=float)
    for cidx in itertools.product(*(range(len(c)) for c in sf.centers)):
        qa = []
        for i in range(sf.dim):
            a = sf.centers[i][cidx[i]]
            r = PSI_RADIUS * sf.delta
            qa.append(_gauss_grid(a - r, a + r, _panels(2 * r, L) * 2))
        X = np.array(list(itertools.product(*(q[0] for q in qa))))
        W = np.prod(np.array(list(itertools.product(*(q[1] for q in qa)))), axis=1)
        h = sf.theta(cidx, X) * f(X) * W
        coef = np.exp(-2j * np.pi * lgrid @ X.T) @ h
        rec += sf.theta_tilde(cidx, T) * (np.exp(2j * np.pi * T @ lgrid.T) @ coef)
    return float(np.max(np.abs(rec - f(T))))
