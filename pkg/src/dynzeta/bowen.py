"""Multi-index subshifts correcting non-injective symbolic codings.

For a kind tuple k = (k_1, ..., k_l) the vertices are pairs (V, i) where
V = (V_1, ..., V_l) are disjoint symbol sets with #V_j = k_j and i is one
of their symbols.  Which vertices exist depends on which rectangles can
be visited simultaneously; that geometric information is supplied by a
co-occurrence oracle.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .entire import EntireHandle, ProductHandle, as_handle, winding_on_circle
from .errors import InadmissibleWordError, OracleError, PoleProximityError
from .model import TransitionGraph

KindTuple = tuple


def length(k: KindTuple) -> int:
    return len(k)


# --------------------------------------------------------------------------
# Q_k and I_k


@dataclass(frozen=True, order=True)
class QkElement:
    subsets: tuple  # tuple of sorted symbol tuples

    def union(self) -> frozenset:
        return frozenset(itertools.chain.from_iterable(self.subsets))

    def __str__(self):
        return "(" + ", ".join("{" + ",".join(map(str, s)) + "}" for s in self.subsets) + ")"


@dataclass(frozen=True)
class IkVertex:
    tuple_part: QkElement
    symbol: object

    def __str__(self):
        return f"({self.tuple_part}, {self.symbol})"


def build_Qk(I: Sequence, k: KindTuple) -> list:
    """Ordered tuples of pairwise disjoint subsets with sizes k, lexicographic."""
    I = list(I)
    k = tuple(int(x) for x in k)
    if any(x < 1 for x in k):
        raise ValueError("kind tuple entries must be positive")
    if sum(k) > len(I):
        return []
    out = []

    def rec(j, used, acc):
        if j == len(k):
            out.append(QkElement(tuple(acc)))
            return
        free = [i for i in range(len(I)) if i not in used]
        for comb in itertools.combinations(free, k[j]):
            rec(j + 1, used | set(comb), acc + [tuple(I[c] for c in comb)])

    rec(0, frozenset(), [])
    return out


class CoOccurrenceOracle:
    """Decides whether symbol i can be current while all symbols of J are."""

    def __call__(self, J: frozenset, i) -> bool:
        raise NotImplementedError


class SingletonOracle(CoOccurrenceOracle):
    """Injective coding: rectangles never overlap."""

    def __call__(self, J, i):
        return len(J) == 1 and i in J


class TableOracle(CoOccurrenceOracle):
    """Accepts (J, i) when J lies inside a listed set containing i.

    Singletons ({i}, i) are always accepted and the table is closed under
    shrinking J, so both oracle requirements hold by construction.
    """

    def __init__(self, entries: Iterable):
        self.entries = []
        for subset, symbol in entries:
            s = frozenset(subset)
            if symbol not in s:
                raise OracleError("table symbol must belong to its subset", "TableOracle",
                                  (sorted(map(str, s)), symbol))
            self.entries.append((s, symbol))

    def __call__(self, J, i):
        J = frozenset(J)
        if i not in J:
            return False
        if len(J) == 1:
            return True
        return any(i == sym and J <= s for s, sym in self.entries)


class FunctionOracle(CoOccurrenceOracle):
    def __init__(self, fn: Callable):
        self.fn = fn

    def __call__(self, J, i):
        return bool(self.fn(frozenset(J), i))


def check_oracle(oracle, I: Sequence, sample_limit: int = 4096):
    """Spot-check purity, the singleton rule and monotonicity."""
    I = list(I)
    for i in I:
        if not oracle(frozenset([i]), i):
            raise OracleError("oracle rejects a singleton", "build_Ik", i)
    count = 0
    for size in range(2, len(I) + 1):
        for J in itertools.combinations(I, size):
            J = frozenset(J)
            for i in J:
                a = oracle(J, i)
                if a != oracle(J, i):
                    raise OracleError("oracle is not deterministic", "build_Ik", (sorted(J), i))
                if a:
                    for x in J - {i}:
                        if not oracle(J - {x}, i):
                            raise OracleError("oracle is not monotone under shrinking",
                                              "build_Ik", (sorted(map(str, J)), i))
                count += 1
                if count >= sample_limit:
                    return


def build_Ik(Qk: Sequence[QkElement], oracle, symbols: Sequence | None = None,
             check: bool = True) -> list:
    if check:
        syms = symbols if symbols is not None else sorted(
            {a for q in Qk for a in q.union()}, key=str)
        check_oracle(oracle, syms)
    out = []
    for q in Qk:
        U = q.union()
        order = (lambda a: list(symbols).index(a)) if symbols is not None else str
        for i in sorted(U, key=order):
            if oracle(U, i):
                out.append(IkVertex(q, i))
    return out


# --------------------------------------------------------------------------
# A_k


@dataclass
class AkGraph:
    k: KindTuple
    vertices: list
    adjacency: np.ndarray

    @property
    def n_edges(self) -> int:
        return int(self.adjacency.sum())

    def index(self, v: IkVertex) -> int:
        return self._index[v]

    def __post_init__(self):
        self._index = {v: n for n, v in enumerate(self.vertices)}

    def as_transition_graph(self) -> TransitionGraph:
        return TransitionGraph(tuple(str(v) for v in self.vertices), self.adjacency)

    def has_cycle(self) -> bool:
        A = self.adjacency.astype(bool)
        n = len(A)
        if n == 0:
            return False
        # repeatedly drop vertices without successors; a cycle survives
        alive = np.ones(n, bool)
        while True:
            out = (A[alive][:, alive]).any(axis=1)
            if out.all():
                return bool(alive.any())
            idx = np.nonzero(alive)[0]
            alive[idx[~out]] = False
            if not alive.any():
                return False


def ak_edge(U: IkVertex, V: IkVertex, graph: TransitionGraph, strict: bool = False) -> bool:
    """Adjacency rule between two vertices of I_k.

    Exactly one block may change: U_{j0} = W + {i'} and V_{j0} = W + {j}
    with A(i', j) = 1.  With ``strict`` the departing symbol i' must be
    the symbol i carried by U.
    """
    Us, Vs = U.tuple_part.subsets, V.tuple_part.subsets
    if len(Us) != len(Vs):
        return False
    j = V.symbol
    diff = [m for m in range(len(Us)) if set(Us[m]) != set(Vs[m])]
    if len(diff) > 1:
        return False
    candidates = diff if diff else [m for m in range(len(Vs)) if j in Vs[m]]
    for j0 in candidates:
        Uj, Vj = set(Us[j0]), set(Vs[j0])
        if j not in Vj:
            continue
        for W in (Vj - {j}, Vj):
            rest = Uj - W
            if W <= Uj and len(rest) == 1:
                choices = rest
            elif Uj == W:
                choices = W
            else:
                continue
            for ip in choices:
                if strict and ip != U.symbol:
                    continue
                if Uj == W | {ip} and graph.allows(ip, j):
                    return True
    return False


def build_Ak(Ik: Sequence[IkVertex], A: TransitionGraph, k: KindTuple | None = None,
             strict: bool = False) -> AkGraph:
    n = len(Ik)
    M = np.zeros((n, n), dtype=np.int64)
    for a, U in enumerate(Ik):
        for b, V in enumerate(Ik):
            if ak_edge(U, V, A, strict):
                M[a, b] = 1
    if k is None:
        k = tuple(len(s) for s in Ik[0].tuple_part.subsets) if Ik else ()
    return AkGraph(tuple(k), list(Ik), M)


def project_pk(path: Sequence[IkVertex], ak: AkGraph | None = None) -> tuple:
    """Componentwise (V, i) -> i."""
    path = list(path)
    if ak is not None:
        for U, V in zip(path, path[1:]):
            if U not in ak._index or V not in ak._index or not ak.adjacency[
                    ak.index(U), ak.index(V)]:
                raise InadmissibleWordError("path is not admissible in A_k", "project_pk",
                                            (str(U), str(V)))
    return tuple(v.symbol for v in path)


def kind_tuples(symbols: Sequence, oracle) -> list:
    """All kind tuples with nonempty I_k, graded by total then lexicographic."""
    n = len(symbols)
    out = []
    for total in range(1, n + 1):
        for ell in range(1, total + 1):
            for parts in _compositions(total, ell):
                if build_Ik(build_Qk(symbols, parts), oracle, symbols, check=False):
                    out.append(parts)
    out.sort(key=lambda k: (sum(k), k))
    return out


def _compositions(total, ell):
    if ell == 1:
        yield (total,)
        return
    for first in range(1, total - ell + 2):
        for rest in _compositions(total - first, ell - 1):
            yield (first,) + rest


def verify_counting_identity(preimage_counts: Mapping) -> int:
    """sum_k (-1)^{length(k)+1} count(k); equals 1 when the correction is exact."""
    return int(sum((-1) ** (len(k) + 1) * int(c) for k, c in preimage_counts.items()))


# --------------------------------------------------------------------------
# alternating assembly


@dataclass
class AlternatingAssembly:
    f: EntireHandle
    g: EntireHandle
    odd: list
    even: list
    tolerance: float = 1e-10
    radius: float = 1e-3

    def quotient_handle(self) -> EntireHandle:
        return ProductHandle([(self.f, 1), (self.g, -1)])

    def zero_multiplicity(self, z, radius=None) -> int:
        """Order of f/g at z from winding numbers on a small circle (negative for poles)."""
        rad = radius or self.radius * max(1.0, abs(z))
        wf, _, _ = winding_on_circle(self.f, rad, center=complex(z), nodes=256)
        wg, _, _ = winding_on_circle(self.g, rad, center=complex(z), nodes=256)
        return wf - wg

    def __call__(self, z):
        z = complex(z)
        gz = complex(self.g(np.array([z]))[0])
        if abs(gz) >= self.tolerance:
            return complex(self.f(np.array([z]))[0]) / gz
        order = self.zero_multiplicity(z)
        if order < 0:
            raise PoleProximityError(f"f/g has a pole of order {-order} near z", "evaluate", z)
        # removable singularity: Cauchy mean value over a small circle
        rad = self.radius * max(1.0, abs(z))
        pts = z + rad * np.exp(2j * np.pi * np.arange(256) / 256)
        return complex(np.mean(self.f(pts) / self.g(pts)))


def assemble_alternating(dets: Mapping, tolerance: float = 1e-10) -> AlternatingAssembly:
    """f = product over odd-length kind tuples, g = product over even-length ones."""
    odd = [k for k in dets if len(k) % 2 == 1]
    even = [k for k in dets if len(k) % 2 == 0]
    f = ProductHandle([(as_handle(dets[k]), 1) for k in odd])
    g = ProductHandle([(as_handle(dets[k]), 1) for k in even])
    return AlternatingAssembly(f, g, odd, even, tolerance)


# --------------------------------------------------------------------------
# brute-force preimage counts for overlapping codings


@dataclass(frozen=True)
class Coding:
    """One symbolic coding of a periodic orbit of length T.

    ``events`` lists (time, symbol): at that time the coding enters the
    rectangle of ``symbol``.  Times lie in [0, T) and are strictly increasing.
    """

    events: tuple

    def current(self, t, T):
        t = t % T
        cur = self.events[-1][1]
        for time, sym in self.events:
            if time <= t:
                cur = sym
        return cur

    def transitions(self):
        syms = [s for _, s in self.events]
        return {(a, b) for a, b in zip(syms, syms[1:] + syms[:1])}


@dataclass(frozen=True)
class TimelineOrbit:
    """A periodic orbit of length T together with all of its codings."""

    T: Fraction
    codings: tuple

    def __post_init__(self):
        times = [t for c in self.codings for t, _ in c.events]
        if len(set(times)) != len(times):
            raise ValueError("event times of distinct codings must differ")
        for t in times:
            cur = [c.current(t, self.T) for c in self.codings]
            if len(set(cur)) != len(cur):
                raise ValueError("codings must occupy distinct rectangles at every time")


def timeline_word(orbit: TimelineOrbit, blocks: Sequence[Sequence[int]]):
    """Cyclic (vertex, gap) word seen by a choice of coding blocks."""
    T = orbit.T
    events = sorted((t, r, s) for b in blocks for r in b
                    for (t, s) in orbit.codings[r].events)
    word = []
    for n, (t, r, s) in enumerate(events):
        V = tuple(tuple(sorted((orbit.codings[q].current(t, T) for q in b), key=str))
                  for b in blocks)
        nxt = events[(n + 1) % len(events)][0]
        gap = (nxt - t) % T or T
        word.append((IkVertex(QkElement(V), s), gap))
    return tuple(word)


def _canonical_rotation(word):
    key = [(str(v), g) for v, g in word]
    best = min(range(len(word)), key=lambda i: key[i:] + key[:i])
    return word[best:] + word[:best]


def timeline_preimage_counts(orbit: TimelineOrbit) -> dict:
    """For each kind tuple, the number of distinct k-orbits lying over the orbit.

    Every ordered choice of disjoint coding blocks with sizes k yields a
    periodic (vertex, gap) word; choices giving the same word up to
    rotation describe the same orbit and are counted once.
    """
    q = len(orbit.codings)
    counts = {}
    for total in range(1, q + 1):
        for ell in range(1, total + 1):
            for k in _compositions(total, ell):
                words = set()
                for blocks in _ordered_blocks(range(q), k):
                    words.add(_canonical_rotation(timeline_word(orbit, blocks)))
                if words:
                    counts[k] = len(words)
    return counts


def _ordered_blocks(items, k):
    items = list(items)
    if not k:
        yield ()
        return
    for comb in itertools.combinations(items, k[0]):
        rest = [x for x in items if x not in comb]
        for tail in _ordered_blocks(rest, k[1:]):
            yield (comb,) + tail
