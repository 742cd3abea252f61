"""Symbolic transition structure and affine edge data of a suspension system."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import ConfigError, InadmissibleWordError

UNIT_CIRCLE_GAP = 1e-9


def _frozen(a, dtype):
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class TransitionGraph:
    symbols: tuple
    adjacency: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "symbols", tuple(self.symbols))
        A = np.asarray(self.adjacency)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ConfigError("adjacency must be a square matrix", "TransitionGraph", A.shape)
        if A.shape[0] != len(self.symbols):
            raise ConfigError(
                f"adjacency side {A.shape[0]} does not match {len(self.symbols)} symbols",
                "TransitionGraph",
            )
        if len(set(self.symbols)) != len(self.symbols):
            raise ConfigError("duplicate symbols", "TransitionGraph", self.symbols)
        if not np.all((A == 0) | (A == 1)):
            raise ConfigError("adjacency entries must be 0 or 1", "TransitionGraph")
        object.__setattr__(self, "adjacency", _frozen(A, np.int64))

    @property
    def size(self) -> int:
        return len(self.symbols)

    def index(self, symbol) -> int:
        try:
            return self.symbols.index(symbol)
        except ValueError:
            raise InadmissibleWordError("unknown symbol", "index", symbol) from None

    def allows(self, a, b) -> bool:
        return bool(self.adjacency[self.index(a), self.index(b)])

    def edges(self):
        """Admissible (from, to) pairs in row-major order."""
        rows, cols = np.nonzero(self.adjacency)
        return [(self.symbols[i], self.symbols[j]) for i, j in zip(rows, cols)]

    def is_irreducible(self) -> bool:
        n = self.size
        if n == 0:
            return False
        A = self.adjacency
        for start in range(n):
            seen = {start}
            queue = deque([start])
            while queue:
                i = queue.popleft()
                for j in np.nonzero(A[i])[0]:
                    if j not in seen:
                        seen.add(int(j))
                        queue.append(int(j))
            if len(seen) != n:
                return False
        # a single symbol without a self loop has no infinite paths
        return bool(n > 1 or A[0, 0])


@dataclass(frozen=True)
class EdgeMap:
    """Affine section map x -> linear @ x + offset with affine roof and constant lift."""

    linear: np.ndarray
    offset: np.ndarray
    t0: float
    c: np.ndarray
    lift: np.ndarray

    def __post_init__(self):
        lin = np.atleast_2d(np.asarray(self.linear, dtype=float))
        k = lin.shape[0]
        if lin.shape != (k, k):
            raise ConfigError("linear part must be square", "EdgeMap", lin.shape)
        off = np.asarray(self.offset, dtype=float).reshape(-1)
        c = np.asarray(self.c, dtype=float).reshape(-1)
        if off.shape != (k,) or c.shape != (k,):
            raise ConfigError("offset and roof covector must have length n-1", "EdgeMap", k)
        lift = np.atleast_2d(np.asarray(self.lift, dtype=complex))
        if lift.shape[0] != lift.shape[1]:
            raise ConfigError("lift must be square", "EdgeMap", lift.shape)
        object.__setattr__(self, "linear", _frozen(lin, float))
        object.__setattr__(self, "offset", _frozen(off, float))
        object.__setattr__(self, "c", _frozen(c, float))
        object.__setattr__(self, "lift", _frozen(lift, complex))
        object.__setattr__(self, "t0", float(self.t0))

    @property
    def dim(self) -> int:
        return self.linear.shape[0]

    def __call__(self, x):
        return self.linear @ np.asarray(x, dtype=float) + self.offset

    def roof(self, x) -> float:
        return self.t0 + float(self.c @ np.asarray(x, dtype=float))


@dataclass(frozen=True)
class FlowSystem:
    graph: TransitionGraph
    edges: Mapping
    section_dim: int
    bundle_dim: int
    gevrey_s: float
    split: tuple

    def __post_init__(self):
        object.__setattr__(self, "edges", dict(self.edges))
        object.__setattr__(self, "split", tuple(int(v) for v in self.split))

    @property
    def n(self) -> int:
        return self.section_dim + 1

    def edge(self, a, b) -> EdgeMap:
        try:
            return self.edges[(a, b)]
        except KeyError:
            raise InadmissibleWordError(
                f"transition {a!r}->{b!r} is not admissible", "edge", (a, b)
            ) from None

    def is_transition_independent(self, atol=0.0) -> bool:
        """True when every edge shares linear part, lift and a constant roof."""
        maps = list(self.edges.values())
        if not maps:
            return True
        ref = maps[0]
        for e in maps:
            if np.any(e.c != 0):
                return False
            if not (
                np.allclose(e.linear, ref.linear, rtol=0, atol=atol)
                and np.allclose(e.lift, ref.lift, rtol=0, atol=atol)
                and abs(e.t0 - ref.t0) <= atol
            ):
                return False
        return True


@dataclass
class ValidationReport:
    violations: list = field(default_factory=list)
    warnings: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def summary(self) -> str:
        return f"{len(self.violations)} violations, {len(self.warnings)} warnings"


def validate_system(sys: FlowSystem) -> ValidationReport:
    report = ValidationReport()
    v, w = report.violations, report.warnings
    g = sys.graph
    du, ds = (sys.split + (0, 0))[:2] if len(sys.split) >= 2 else (None, None)
    if len(sys.split) != 2:
        v.append(f"split must have two entries, got {sys.split}")
    elif du + ds != sys.section_dim:
        v.append(f"split {sys.split} does not sum to section_dim {sys.section_dim}")
    if sys.section_dim < 1:
        v.append("section_dim must be positive")
    if sys.bundle_dim < 1:
        v.append("bundle_dim must be positive")
    if not sys.gevrey_s > 1:
        v.append(f"Gevrey exponent s must exceed 1, got {sys.gevrey_s}")

    admissible = set(g.edges())
    present = set(sys.edges)
    for pair in sorted(admissible - present, key=str):
        v.append(f"missing edge map for admissible transition {pair}")
    for pair in sorted(present - admissible, key=str):
        v.append(f"edge map given for inadmissible transition {pair}")

    for pair in sorted(present & admissible, key=str):
        e = sys.edges[pair]
        if e.dim != sys.section_dim:
            v.append(f"edge {pair}: linear part has size {e.dim}, expected {sys.section_dim}")
            continue
        if e.lift.shape != (sys.bundle_dim, sys.bundle_dim):
            v.append(f"edge {pair}: lift has shape {e.lift.shape}, expected d={sys.bundle_dim}")
        if not np.all(np.isfinite(e.linear)) or not np.all(np.isfinite(e.offset)):
            v.append(f"edge {pair}: non-finite map data")
            continue
        if e.t0 <= 0:
            v.append(f"edge {pair}: roof t0 must be positive, got {e.t0}")
        if du is None or du + ds != e.dim:
            continue
        L = e.linear
        if np.any(L[:du, du:] != 0) or np.any(L[du:, :du] != 0):
            v.append(f"edge {pair}: linear part is not block diagonal for split {sys.split}")
        if du:
            ev = np.abs(np.linalg.eigvals(L[:du, :du]))
            if np.any(ev <= 1 + UNIT_CIRCLE_GAP):
                v.append(f"edge {pair}: expanding eigenvalue modulus <= 1 ({ev.min():.6g})")
            elif np.linalg.svd(L[:du, :du], compute_uv=False).min() <= 1:
                w.append(f"edge {pair}: expanding block is not norm-expanding")
        if ds:
            ev = np.abs(np.linalg.eigvals(L[du:, du:]))
            if np.any(ev >= 1 - UNIT_CIRCLE_GAP):
                v.append(f"edge {pair}: contracting eigenvalue modulus >= 1 ({ev.max():.6g})")
            elif np.linalg.svd(L[du:, du:], compute_uv=False).max() >= 1:
                w.append(f"edge {pair}: contracting block is not norm-contracting")

    if g.size and not g.is_irreducible():
        w.append("adjacency matrix is not irreducible")
    return report


def trace_adjacency_power(graph: TransitionGraph, m: int) -> int:
    """Exact tr(A^m); Python integers cannot overflow."""
    if m < 1:
        raise ValueError("m must be >= 1")
    A = [[int(x) for x in row] for row in graph.adjacency]
    n = len(A)
    result = [[int(i == j) for j in range(n)] for i in range(n)]
    base = A
    e = m
    while e:
        if e & 1:
            result = _matmul(result, base)
        base = _matmul(base, base)
        e >>= 1
    return sum(result[i][i] for i in range(n))


def _matmul(X, Y):
    n = len(X)
    return [[sum(X[i][k] * Y[k][j] for k in range(n)) for j in range(n)] for i in range(n)]


@dataclass(frozen=True)
class AffineMapData:
    """Composite of edge maps along a word.

    The total roof accumulated along the word is affine in the starting
    point: ``roof_sum(x) = roof_constant + roof_covector @ x``.
    """

    linear: np.ndarray
    offset: np.ndarray
    lift: np.ndarray
    roof_constant: float
    roof_covector: np.ndarray
    word: tuple = ()
    steps: tuple = ()

    def __call__(self, x):
        return self.linear @ np.asarray(x, dtype=float) + self.offset

    def roof_sum(self, x) -> float:
        return self.roof_constant + float(self.roof_covector @ np.asarray(x, dtype=float))

    def points(self, x):
        """Images of x under the first k edge maps, k = 0..len(steps)-1."""
        pts = []
        y = np.asarray(x, dtype=float)
        for e in self.steps:
            pts.append(y)
            y = e(y)
        return pts

    def roofs(self, x):
        return [e.roof(p) for e, p in zip(self.steps, self.points(x))]

    def then(self, other: "AffineMapData") -> "AffineMapData":
        """Apply self first, then other."""
        if self.word and other.word and self.word[-1] != other.word[0]:
            raise InadmissibleWordError("words do not share a junction symbol", "then",
                                        (self.word, other.word))
        word = self.word + other.word[1:] if self.word else other.word
        return AffineMapData(
            linear=other.linear @ self.linear,
            offset=other.linear @ self.offset + other.offset,
            lift=self.lift @ other.lift,
            roof_constant=self.roof_constant + other.roof_constant
            + float(other.roof_covector @ self.offset),
            roof_covector=self.roof_covector + other.roof_covector @ self.linear,
            word=word,
            steps=self.steps + other.steps,
        )


def identity_map(sys: FlowSystem, symbol=None) -> AffineMapData:
    k, d = sys.section_dim, sys.bundle_dim
    return AffineMapData(
        linear=np.eye(k),
        offset=np.zeros(k),
        lift=np.eye(d, dtype=complex),
        roof_constant=0.0,
        roof_covector=np.zeros(k),
        word=() if symbol is None else (symbol,),
        steps=(),
    )


def edge_as_map(sys: FlowSystem, a, b) -> AffineMapData:
    e = sys.edge(a, b)
    return AffineMapData(e.linear, e.offset, e.lift, e.t0, e.c, (a, b), (e,))


def compose_along_word(sys: FlowSystem, word: Sequence) -> AffineMapData:
    """Compose edge maps along alpha_0 ... alpha_m.

    Lifts multiply in word order, B(a0,a1) @ B(a1,a2) @ ...; traces are
    invariant under the transpose convention so only this order matters.
    """
    word = tuple(word)
    out = identity_map(sys, word[0] if word else None)
    for a, b in zip(word, word[1:]):
        if not sys.graph.allows(a, b):
            raise InadmissibleWordError(
                f"transition {a!r}->{b!r} is not admissible", "compose_along_word", (a, b)
            )
        out = out.then(edge_as_map(sys, a, b))
    return out


# --------------------------------------------------------------------------
# declarative system files

_SYSTEM_KEYS = {"symbols", "adjacency", "edges", "edge_defaults", "n", "d", "s", "split"}
_EDGE_KEYS = {"from", "to", "linear", "offset", "roof", "lift"}
_ROOF_KEYS = {"t0", "c"}


def _reject_unknown(d, allowed, where):
    if not isinstance(d, Mapping):
        raise ConfigError(f"{where} must be a mapping", "parse", type(d).__name__)
    extra = set(d) - allowed
    if extra:
        raise ConfigError(f"unknown keys in {where}: {sorted(extra)}", "parse", sorted(extra))


def _complex_matrix(rows, where):
    out = []
    for row in rows:
        r = []
        for x in row:
            if isinstance(x, (list, tuple)):
                if len(x) != 2:
                    raise ConfigError(f"{where}: complex entries are [re, im] pairs", "parse", x)
                r.append(complex(float(x[0]), float(x[1])))
            else:
                r.append(complex(float(x)))
        out.append(r)
    return np.array(out, dtype=complex)


def system_from_dict(cfg: Mapping) -> FlowSystem:
    """Build a FlowSystem from the declarative schema, rejecting unknown keys."""
    _reject_unknown(cfg, _SYSTEM_KEYS, "system")
    for key in ("symbols", "adjacency", "n", "d", "s", "split"):
        if key not in cfg:
            raise ConfigError(f"missing key {key!r}", "parse", key)
    symbols = tuple(str(s) for s in cfg["symbols"])
    graph = TransitionGraph(symbols, np.array(cfg["adjacency"], dtype=np.int64))
    k = int(cfg["n"]) - 1
    d = int(cfg["d"])
    defaults = cfg.get("edge_defaults", {}) or {}
    _reject_unknown(defaults, _EDGE_KEYS - {"from", "to"}, "edge_defaults")

    given = {}
    for i, raw in enumerate(cfg.get("edges", []) or []):
        _reject_unknown(raw, _EDGE_KEYS, f"edges[{i}]")
        if "from" not in raw or "to" not in raw:
            raise ConfigError(f"edges[{i}] needs 'from' and 'to'", "parse", raw)
        pair = (str(raw["from"]), str(raw["to"]))
        if pair in given:
            raise ConfigError(f"duplicate edge {pair}", "parse", pair)
        given[pair] = raw

    edges = {}
    pairs = list(dict.fromkeys(graph.edges() + list(given)))
    for pair in pairs:
        block = {**defaults, **given.get(pair, {})}
        if pair not in given and not defaults:
            continue
        missing = {"linear", "roof", "lift"} - set(block)
        if missing:
            raise ConfigError(f"edge {pair} lacks {sorted(missing)}", "parse", pair)
        roof = block["roof"]
        _reject_unknown(roof, _ROOF_KEYS, f"roof of edge {pair}")
        if "t0" not in roof:
            raise ConfigError(f"roof of edge {pair} lacks t0", "parse", pair)
        edges[pair] = EdgeMap(
            linear=np.array(block["linear"], dtype=float).reshape(k, k),
            offset=np.array(block.get("offset", [0.0] * k), dtype=float),
            t0=float(roof["t0"]),
            c=np.array(roof.get("c", [0.0] * k), dtype=float),
            lift=_complex_matrix(block["lift"], f"lift of edge {pair}").reshape(d, d),
        )
    return FlowSystem(
        graph=graph,
        edges=edges,
        section_dim=k,
        bundle_dim=d,
        gevrey_s=float(cfg["s"]),
        split=tuple(int(v) for v in cfg["split"]),
    )


def system_to_dict(sys: FlowSystem) -> dict:
    edges = []
    for (a, b), e in sys.edges.items():
        edges.append({
            "from": a,
            "to": b,
            "linear": e.linear.tolist(),
            "offset": e.offset.tolist(),
            "roof": {"t0": e.t0, "c": e.c.tolist()},
            "lift": [[[z.real, z.imag] for z in row] for row in e.lift],
        })
    return {
        "symbols": list(sys.graph.symbols),
        "adjacency": sys.graph.adjacency.tolist(),
        "n": sys.n,
        "d": sys.bundle_dim,
        "s": sys.gevrey_s,
        "split": list(sys.split),
        "edges": edges,
    }


def make_uniform_system(adjacency, linear, t0=1.0, lift=((1.0,),), s=2.0, split=None,
                        symbols=None, offsets=None) -> FlowSystem:
    """Convenience builder: every admissible edge shares linear part, roof and lift.

    ``offsets`` optionally maps (from, to) pairs to per-edge offsets.
    """
    A = np.asarray(adjacency, dtype=np.int64)
    symbols = tuple(symbols) if symbols is not None else tuple(str(i) for i in range(len(A)))
    graph = TransitionGraph(symbols, A)
    L = np.atleast_2d(np.asarray(linear, dtype=float))
    k = L.shape[0]
    if split is None:
        split = (k, 0)
    offsets = offsets or {}
    edges = {}
    for pair in graph.edges():
        edges[pair] = EdgeMap(L, offsets.get(pair, np.zeros(k)), t0, np.zeros(k),
                              np.asarray(lift, dtype=complex))
    return FlowSystem(graph, edges, k, np.atleast_2d(lift).shape[0], s, tuple(split))
