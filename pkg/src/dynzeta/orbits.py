"""Periodic words of the subshift and exact data of the corresponding orbits."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (EnumerationCapError, HyperbolicityError, InadmissibleWordError,
                     RoofPositivityError)
from .model import FlowSystem, TransitionGraph, compose_along_word, trace_adjacency_power

COND_LIMIT = 1e12
DEFAULT_MAX_WORDS = 2 ** 26


@dataclass(frozen=True)
class CyclicWord:
    letters: tuple
    minimal_period: int

    @property
    def m(self) -> int:
        return len(self.letters)

    @property
    def repetitions(self) -> int:
        return self.m // self.minimal_period

    def rotations(self):
        m = self.minimal_period
        return [self.letters[i:] + self.letters[:i] for i in range(m)]

    def __str__(self):
        return "".join(map(str, self.letters)) if all(len(str(a)) == 1 for a in self.letters) \
            else "-".join(map(str, self.letters))


def minimal_period(letters) -> int:
    letters = tuple(letters)
    m = len(letters)
    for p in range(1, m + 1):
        if m % p == 0 and letters[p:] + letters[:p] == letters:
            return p
    return m


@dataclass(frozen=True)
class PeriodicOrbitRecord:
    word: CyclicWord
    fixed_point: np.ndarray
    T: float
    T_primitive: float
    poincare: np.ndarray
    lift: np.ndarray
    det_factor: float
    lift_trace: complex
    roofs: tuple = field(default=())

    @property
    def amplitude(self) -> complex:
        """Per fixed word weight tr(Phi)/|det(I-P)|."""
        return self.lift_trace / self.det_factor


def enumerate_fixed_words(graph: TransitionGraph, m: int):
    """All cyclically admissible words of length m, lexicographic in symbol order."""
    if m < 1:
        raise ValueError("m must be >= 1")
    A = graph.adjacency
    n = graph.size
    succ = [list(np.nonzero(A[i])[0]) for i in range(n)]
    out = []
    path = []

    def dfs(i, depth):
        path.append(i)
        if depth == m:
            if A[i, path[0]]:
                out.append(tuple(graph.symbols[j] for j in path))
        else:
            for j in succ[i]:
                dfs(j, depth + 1)
        path.pop()

    for start in range(n):
        dfs(start, 1)
    return out


def group_into_orbits(words):
    """Rotation classes, each represented by its least rotation in input order."""
    words = [tuple(w) for w in words]
    if not words:
        return []
    m = len(words[0])
    if any(len(w) != m for w in words):
        raise InadmissibleWordError("words must share one length", "group_into_orbits")
    # least rotation under the order induced by first appearance of letters
    rank = {}
    for w in words:
        for a in w:
            rank.setdefault(a, len(rank))
    try:
        rank = {a: i for i, a in enumerate(sorted(rank))}
    except TypeError:
        pass
    seen = set()
    classes = []
    for w in words:
        rots = [w[i:] + w[:i] for i in range(m)]
        canon = min(rots, key=lambda r: [rank[a] for a in r])
        if canon in seen:
            continue
        seen.add(canon)
        classes.append(CyclicWord(canon, minimal_period(canon)))
    return classes


def _check_cyclic(graph, letters):
    m = len(letters)
    for i in range(m):
        a, b = letters[i], letters[(i + 1) % m]
        if not graph.allows(a, b):
            raise InadmissibleWordError(
                f"transition {a!r}->{b!r} is not admissible", "orbit_data", (a, b))


def orbit_data(sys: FlowSystem, word) -> PeriodicOrbitRecord:
    if not isinstance(word, CyclicWord):
        word = CyclicWord(tuple(word), minimal_period(word))
    letters = word.letters
    _check_cyclic(sys.graph, letters)
    comp = compose_along_word(sys, letters + (letters[0],))
    k = sys.section_dim
    M = np.eye(k) - comp.linear
    cond = np.linalg.cond(M)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise HyperbolicityError(f"I - P is numerically singular (cond={cond:.3g})",
                                 "orbit_data", str(word))
    x = np.linalg.solve(M, comp.offset)
    roofs = tuple(comp.roofs(x))
    for i, t in enumerate(roofs):
        if not t > 0:
            raise RoofPositivityError(f"roof value {t:.6g} <= 0 at step {i}", "orbit_data",
                                      str(word))
    T = float(sum(roofs))
    det = abs(np.linalg.det(M))
    tr = complex(np.trace(comp.lift))
    return PeriodicOrbitRecord(
        word=word,
        fixed_point=x,
        T=T,
        T_primitive=T * word.minimal_period / word.m,
        poincare=comp.linear,
        lift=comp.lift,
        det_factor=float(det),
        lift_trace=tr,
        roofs=roofs,
    )


# --------------------------------------------------------------------------
# batched enumeration of all fixed words of a given length


@dataclass(frozen=True)
class FixedWordTable:
    """Fixed words of length m merged by orbit length.

    ``s_m(z) = sum(amplitude * exp(-z * T))``; ``count`` records how many
    words were merged into each entry, so ``count.sum() == tr(A^m)``.
    """

    m: int
    T: np.ndarray
    amplitude: np.ndarray
    count: np.ndarray

    @property
    def n_words(self) -> int:
        return int(self.count.sum())

    def evaluate(self, z):
        z = np.asarray(z, dtype=complex)
        if self.T.size == 0:
            return np.zeros(z.shape, dtype=complex)
        return np.exp(-np.multiply.outer(z, self.T)) @ self.amplitude


class _Paths:
    """Struct of arrays describing composed edge paths."""

    __slots__ = ("start", "end", "lin", "off", "lift", "T0", "g", "count", "letters")

    def __init__(self, **kw):
        for k, v in kw.items():
            setattr(self, k, v)

    def take(self, idx):
        return _Paths(**{k: (None if getattr(self, k) is None else getattr(self, k)[idx])
                         for k in self.__slots__})

    def __len__(self):
        return len(self.start)


def _quantize(cols):
    """Integer keys equal for values agreeing to ~1e-11 relative per column."""
    scale = np.max(np.abs(cols), axis=0)
    scale[scale == 0] = 1.0
    return np.round(cols / (1e-11 * scale)).astype(np.int64)


class _EdgeArrays:
    def __init__(self, sys: FlowSystem):
        g = sys.graph
        self.pairs = [(g.index(a), g.index(b)) for (a, b) in g.edges()]
        maps = [sys.edges[p] for p in g.edges()]
        k, d = sys.section_dim, sys.bundle_dim
        self.L = np.array([e.linear for e in maps]).reshape(-1, k, k)
        self.b = np.array([e.offset for e in maps]).reshape(-1, k)
        self.B = np.array([e.lift for e in maps]).reshape(-1, d, d)
        self.t0 = np.array([e.t0 for e in maps], dtype=float)
        self.c = np.array([e.c for e in maps]).reshape(-1, k)
        self.index = -np.ones((g.size, g.size), dtype=np.int64)
        for i, (u, v) in enumerate(self.pairs):
            self.index[u, v] = i
        self.affine_roof = bool(np.any(self.c != 0))


def _initial_paths(sys, track):
    n, k, d = sys.graph.size, sys.section_dim, sys.bundle_dim
    idx = np.arange(n)
    return _Paths(
        start=idx.copy(), end=idx.copy(),
        lin=np.broadcast_to(np.eye(k), (n, k, k)).copy(),
        off=np.zeros((n, k)),
        lift=np.broadcast_to(np.eye(d, dtype=complex), (n, d, d)).copy(),
        T0=np.zeros(n), g=np.zeros((n, k)),
        count=np.ones(n, dtype=np.int64),
        letters=idx[:, None].copy() if track else None,
    )


def _extend(p: _Paths, E: _EdgeArrays) -> _Paths:
    parts = []
    for e, (u, v) in enumerate(E.pairs):
        sel = np.nonzero(p.end == u)[0]
        if sel.size == 0:
            continue
        q = p.take(sel)
        L, c = E.L[e], E.c[e]
        parts.append(_Paths(
            start=q.start, end=np.full(sel.size, v),
            lin=L @ q.lin, off=q.off @ L.T + E.b[e], lift=q.lift @ E.B[e],
            T0=q.T0 + E.t0[e] + q.off @ c, g=q.g + c @ q.lin,
            count=q.count,
            letters=None if q.letters is None else np.column_stack([q.letters, np.full(sel.size, v)]),
        ))
    if not parts:
        return _Paths(**{k: (None if getattr(p, k) is None else getattr(p, k)[:0])
                         for k in _Paths.__slots__})
    return _Paths(**{k: (None if getattr(parts[0], k) is None
                         else np.concatenate([getattr(q, k) for q in parts]))
                     for k in _Paths.__slots__})


def _dedupe(p: _Paths) -> _Paths:
    """Merge paths with identical amplitude-relevant data (constant roofs only)."""
    if len(p) <= 1:
        return p
    N = len(p)
    cols = np.column_stack([
        p.lin.reshape(N, -1), p.lift.real.reshape(N, -1), p.lift.imag.reshape(N, -1),
        p.T0[:, None],
    ])
    key = np.column_stack([p.start, p.end, _quantize(cols)])
    _, first, inv = np.unique(key, axis=0, return_index=True, return_inverse=True)
    inv = inv.reshape(-1)
    out = p.take(first)
    cnt = np.zeros(len(first), dtype=np.int64)
    np.add.at(cnt, inv, p.count)
    out.count = cnt
    return out


def _paths_to_length(sys, E, h, track):
    levels = [_initial_paths(sys, track)]
    for _ in range(h):
        nxt = _extend(levels[-1], E)
        if not track:
            nxt = _dedupe(nxt)
        levels.append(nxt)
    return levels


def fixed_word_table(sys: FlowSystem, m: int, max_words: int = DEFAULT_MAX_WORDS,
                     chunk: int = 1 << 19) -> FixedWordTable:
    """Exact trace data for all fixed words of length m.

    Every cycle is split into two halves whose composed maps are combined
    pairwise.  With constant roofs only the linear parts, lifts and roof
    sums matter, so identical half paths are merged before combining.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    total = trace_adjacency_power(sys.graph, m)
    if total > max_words:
        raise EnumerationCapError(
            f"tr(A^{m}) = {total} fixed words exceeds the cap {max_words}",
            "fixed_word_table", m)
    if total == 0 or not sys.edges:
        return FixedWordTable(m, np.zeros(0), np.zeros(0, complex), np.zeros(0, np.int64))
    E = _EdgeArrays(sys)
    track = E.affine_roof
    h1 = m // 2
    levels = _paths_to_length(sys, E, m - h1, track)
    first, second = levels[h1], levels[m - h1]
    k = sys.section_dim
    eye = np.eye(k)

    Ts, amps, cnts = [], [], []
    n = sys.graph.size
    for a in range(n):
        for b in range(n):
            F = first.take(np.nonzero((first.start == a) & (first.end == b))[0])
            S = second.take(np.nonzero((second.start == b) & (second.end == a))[0])
            if len(F) == 0 or len(S) == 0:
                continue
            rows = max(1, chunk // len(S))
            for r0 in range(0, len(F), rows):
                Fi = F.take(slice(r0, r0 + rows))
                i = np.repeat(np.arange(len(Fi)), len(S))
                j = np.tile(np.arange(len(S)), len(Fi))
                T, amp, cnt = _combine(Fi.take(i), S.take(j), eye, E, m)
                Ts.append(T)
                amps.append(amp)
                cnts.append(cnt)
    T = np.concatenate(Ts)
    amp = np.concatenate(amps)
    cnt = np.concatenate(cnts)
    if int(cnt.sum()) != total:
        raise AssertionError("fixed word count mismatch")
    return _merge_by_length(m, T, amp, cnt)


def _combine(F: _Paths, S: _Paths, eye, E: _EdgeArrays, m):
    lin = S.lin @ F.lin
    lift = F.lift @ S.lift
    M = eye - lin
    sv = np.linalg.svd(M, compute_uv=False)
    bad = (sv[:, -1] <= 0) | (sv[:, 0] > COND_LIMIT * sv[:, -1])
    if np.any(bad):
        raise HyperbolicityError("I - P is numerically singular for some fixed word",
                                 "fixed_word_table", m)
    det = np.abs(np.linalg.det(M))
    amp = np.trace(lift, axis1=1, axis2=2) / det
    if E.affine_roof:
        off = np.einsum("nij,nj->ni", S.lin, F.off) + S.off
        T0 = F.T0 + S.T0 + np.einsum("ni,ni->n", S.g, F.off)
        g = F.g + np.einsum("ni,nij->nj", S.g, F.lin)
        x = np.linalg.solve(M, off[..., None])[..., 0]
        T = T0 + np.einsum("ni,ni->n", g, x)
        letters = np.column_stack([F.letters, S.letters[:, 1:]])
        _check_roofs(letters, x, E, m)
    else:
        T = F.T0 + S.T0
    if np.any(T <= 0):
        raise RoofPositivityError("non-positive orbit length", "fixed_word_table", m)
    return T, amp, F.count * S.count


def _check_roofs(letters, x, E: _EdgeArrays, m):
    for step in range(m):
        e = E.index[letters[:, step], letters[:, step + 1]]
        roof = E.t0[e] + np.einsum("ni,ni->n", E.c[e], x)
        if np.any(roof <= 0):
            raise RoofPositivityError(f"non-positive roof value at step {step}",
                                      "fixed_word_table", m)
        x = np.einsum("nij,nj->ni", E.L[e], x) + E.b[e]


def _merge_by_length(m, T, amp, cnt) -> FixedWordTable:
    weights = amp * cnt
    tol = 1e-12 * max(1.0, float(np.max(np.abs(T))))
    order = np.argsort(T, kind="stable")
    T, weights, cnt = T[order], weights[order], cnt[order]
    new_group = np.concatenate([[True], np.diff(T) > tol])
    gid = np.cumsum(new_group) - 1
    G = int(gid[-1]) + 1
    cnt_out = np.zeros(G, dtype=np.int64)
    np.add.at(cnt_out, gid, cnt)
    w_out = np.zeros(G, dtype=complex)
    np.add.at(w_out, gid, weights)
    T_out = np.zeros(G)
    np.add.at(T_out, gid, T * cnt)
    T_out /= cnt_out
    return FixedWordTable(m, T_out, w_out, cnt_out)


def trace_power_reference(sys: FlowSystem, m: int, z) -> complex:
    """Slow word-by-word evaluation of s_m(z), used for cross-checks."""
    z = complex(z)
    total = 0j
    for w in enumerate_fixed_words(sys.graph, m):
        rec = orbit_data(sys, w)
        total += rec.amplitude * np.exp(-z * rec.T)
    return total
