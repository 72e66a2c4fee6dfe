"""Exact minimum-weight perfect matching decoders.

Matching is solved on the complete defect graph whose pair distances come
from shortest paths on a matching graph.  To detect degenerate minima that
differ in logical class, distances are resolved by class: the graph is
lifted to a cover with one copy per value of the tracked crossing parities,
so ``dist[c, i, j]`` is the shortest ``i``-``j`` path whose crossings sum to
``c``.  The matching solver then returns, for every class, the least weight
of a perfect matching realising it.

The solver is an exact subset dynamic program restricted to pairs that can
appear in some optimal matching (an upper bound from a greedy matching plus
2-opt and a per-node lower bound prune the rest), run separately on each
connected component of the surviving pairs.  It is compiled with numba.
Defect sets too large for it fall back to a minimum-weight matching that
cannot report degeneracy: networkx blossom when the correction itself is
needed, PyMatching when only its logical class is.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache

import numba
import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra

from .graphs import BOUNDARY, DEFAULT_STITCH, MatchingGraph, build_restricted_graph, build_unified_graph
from .lattices import ColorLayout, PauliError, SurfaceLayout, build_color_code, class_bits, logical_class, syndrome
from .unfold import build_map, map_error_to_color, unmap_bitflips

INF = np.int64(1 << 60)
# default tracked logical: the first class bit (horizontal logical strings)
DEFAULT_TRACKED = (0,)
EXACT_LIMIT = 40
# batched decoding hands larger defect sets to PyMatching: the subset DP
# grows steeply past about two dozen defects
BATCH_LIMIT = 24


class ContractBreach(RuntimeError):
    """Raised when a decoder invariant fails (e.g. residual syndrome)."""


# --------------------------------------------------------------------------
# numba matching kernels


@numba.njit(cache=True)
def _probe(keys, mask):
    cap = keys.shape[0]
    h = mask ^ (mask >> 29) ^ (mask >> 47)
    h = h * np.int64(0x45D9F3B)
    h = (h ^ (h >> 16)) & (cap - 1)
    while keys[h] != -1 and keys[h] != mask:
        h = (h + 1) & (cap - 1)
    return h


@numba.njit(cache=True)
def _dp(mask, dist, bd, allow, allow_b, keys, vals, used, counter):
    h = _probe(keys, mask)
    if keys[h] == mask:
        return h
    cap = keys.shape[0]
    if counter[0] * 2 >= cap:
        return -1
    K = dist.shape[0]
    m = dist.shape[1]
    i = 0
    while not (mask >> i) & 1:
        i += 1
    rest = mask & ~(np.int64(1) << i)
    best = np.full(K, INF, dtype=np.int64)
    for j in range(i + 1, m):
        if not (rest >> j) & 1:
            continue
        sub = -2
        for c in range(K):
            if not allow[c, i, j]:
                continue
            if sub == -2:
                sub = _dp(rest & ~(np.int64(1) << j), dist, bd, allow, allow_b, keys, vals, used, counter)
                if sub == -1:
                    return -1
            dd = dist[c, i, j]
            for c2 in range(K):
                v = vals[sub, c2]
                if v < INF and dd + v < best[c ^ c2]:
                    best[c ^ c2] = dd + v
    sub = -2
    for c in range(K):
        if not allow_b[c, i]:
            continue
        if sub == -2:
            sub = _dp(rest, dist, bd, allow, allow_b, keys, vals, used, counter)
            if sub == -1:
                return -1
        dd = bd[c, i]
        for c2 in range(K):
            v = vals[sub, c2]
            if v < INF and dd + v < best[c ^ c2]:
                best[c ^ c2] = dd + v
    h = _probe(keys, mask)
    keys[h] = mask
    for c in range(K):
        vals[h, c] = best[c]
    used[counter[0]] = h
    counter[0] += 1
    return h


@numba.njit(cache=True)
def _min_row(vals, h):
    out = INF
    for c in range(vals.shape[1]):
        if vals[h, c] < out:
            out = vals[h, c]
    return out


@numba.njit(cache=True)
def _greedy_upper(dmin, bmin, has_b):
    """Greedy matching improved by 2-opt moves; returns its weight."""
    m = dmin.shape[0]
    partner = np.full(m, -2, dtype=np.int64)
    for _ in range(m):
        best = INF
        bi = -1
        bj = -1
        for i in range(m):
            if partner[i] != -2:
                continue
            if has_b and bmin[i] < best:
                best = bmin[i]
                bi = i
                bj = -1
            for j in range(i + 1, m):
                if partner[j] == -2 and dmin[i, j] < best:
                    best = dmin[i, j]
                    bi = i
                    bj = j
        if bi == -1:
            break
        partner[bi] = bj
        if bj >= 0:
            partner[bj] = bi
    for i in range(m):
        if partner[i] == -2:
            return INF
    improved = True
    while improved:
        improved = False
        for a in range(m):
            for c in range(a + 1, m):
                b = partner[a]
                d = partner[c]
                if b == c:
                    continue
                wab = bmin[a] if b == -1 else dmin[a, b]
                wcd = bmin[c] if d == -1 else dmin[c, d]
                old = wab + wcd
                # pair a with c, and b with d (or the survivors to boundary)
                if b == -1 and d == -1:
                    new = dmin[a, c]
                    if new < old:
                        partner[a] = c
                        partner[c] = a
                        improved = True
                    continue
                if b == -1 or d == -1:
                    other = d if b == -1 else b
                    new = dmin[a, c] + bmin[other]
                    if has_b and new < old:
                        partner[a] = c
                        partner[c] = a
                        partner[other] = -1
                        improved = True
                    continue
                new1 = dmin[a, c] + dmin[b, d]
                new2 = dmin[a, d] + dmin[b, c]
                new3 = bmin[a] + bmin[b] + dmin[c, d] if has_b else INF
                if new1 < old and new1 <= new2:
                    partner[a] = c
                    partner[c] = a
                    partner[b] = d
                    partner[d] = b
                    improved = True
                elif new2 < old:
                    partner[a] = d
                    partner[d] = a
                    partner[b] = c
                    partner[c] = b
                    improved = True
                elif new3 < old:
                    partner[a] = -1
                    partner[b] = -1
                    improved = True
    total = 0
    for i in range(m):
        j = partner[i]
        if j == -1:
            total += bmin[i]
        elif j > i:
            total += dmin[i, j]
    return total


@numba.njit(cache=True)
def _find_root(parent, i):
    while parent[i] != i:
        parent[i] = parent[parent[i]]
        i = parent[i]
    return i


@numba.njit(cache=True)
def solve_kernel(dist, bd, has_b, keys, vals, used):
    """Exact class-resolved matching of ``m`` defects.

    ``dist[c, i, j]``: least weight of an i-j path of class c; ``bd[c, i]``:
    same to the boundary.  Returns ``(mins, partner, pclass, status)`` where
    ``mins[c]`` is the least weight of a perfect matching of class c,
    ``partner[i]`` the lexicographically least optimal matching (``-1`` for
    the boundary) and ``pclass[i]`` the class of the path used by ``i``.
    ``status`` is 0 on success, 1 if the memo table overflowed and 2 if no
    perfect matching exists.
    """
    K = dist.shape[0]
    m = dist.shape[1]
    mins = np.full(K, INF, dtype=np.int64)
    partner = np.full(m, -2, dtype=np.int64)
    pclass = np.zeros(m, dtype=np.int64)
    if m == 0:
        mins[0] = 0
        return mins, partner, pclass, 0
    if not has_b and m % 2:
        return mins, partner, pclass, 2
    dmin = np.full((m, m), INF, dtype=np.int64)
    bmin = np.full(m, INF, dtype=np.int64)
    for i in range(m):
        for j in range(m):
            for c in range(K):
                if i != j and dist[c, i, j] < dmin[i, j]:
                    dmin[i, j] = dist[c, i, j]
        if has_b:
            for c in range(K):
                if bd[c, i] < bmin[i]:
                    bmin[i] = bd[c, i]
    ub = _greedy_upper(dmin, bmin, has_b)
    if ub >= INF:
        return mins, partner, pclass, 2
    lb = np.empty(m, dtype=np.int64)
    total_lb = 0
    for i in range(m):
        v = bmin[i]
        for j in range(m):
            if j != i and dmin[i, j] < v:
                v = dmin[i, j]
        lb[i] = v
        total_lb += v
    # pair (i, j) of class c survives if it can sit in a matching of weight <= ub
    allow = np.zeros((K, m, m), dtype=np.bool_)
    allow_b = np.zeros((K, m), dtype=np.bool_)
    parent = np.arange(m)
    for i in range(m):
        for j in range(i + 1, m):
            for c in range(K):
                if dist[c, i, j] < INF and 2 * dist[c, i, j] + total_lb - lb[i] - lb[j] <= 2 * ub:
                    allow[c, i, j] = True
                    allow[c, j, i] = True
                    ri = _find_root(parent, i)
                    rj = _find_root(parent, j)
                    if ri != rj:
                        parent[max(ri, rj)] = min(ri, rj)
        if has_b:
            for c in range(K):
                if bd[c, i] < INF and 2 * bd[c, i] + total_lb - lb[i] <= 2 * ub:
                    allow_b[c, i] = True
    for i in range(m):
        parent[i] = _find_root(parent, i)
    mins[0] = 0
    counter = np.zeros(1, dtype=np.int64)
    for root in range(m):
        if parent[root] != root:
            continue
        members = np.empty(m, dtype=np.int64)
        k = 0
        for i in range(m):
            if parent[i] == root:
                members[k] = i
                k += 1
        if k > 62:
            return mins, partner, pclass, 1
        ld = np.empty((K, k, k), dtype=np.int64)
        lbd = np.empty((K, k), dtype=np.int64)
        la = np.zeros((K, k, k), dtype=np.bool_)
        lab = np.zeros((K, k), dtype=np.bool_)
        for c in range(K):
            for a in range(k):
                lbd[c, a] = bd[c, members[a]] if has_b else INF
                lab[c, a] = allow_b[c, members[a]]
                for b in range(k):
                    ld[c, a, b] = dist[c, members[a], members[b]]
                    la[c, a, b] = allow[c, members[a], members[b]]
        # memo entry for the empty set
        h0 = _probe(keys, np.int64(0))
        keys[h0] = 0
        for c in range(K):
            vals[h0, c] = INF
        vals[h0, 0] = 0
        used[counter[0]] = h0
        counter[0] += 1
        full = (np.int64(1) << k) - 1
        hf = _dp(full, ld, lbd, la, lab, keys, vals, used, counter)
        if hf == -1:
            for t in range(counter[0]):
                keys[used[t]] = -1
            return mins, partner, pclass, 1
        comp = np.empty(K, dtype=np.int64)
        for c in range(K):
            comp[c] = vals[hf, c]
        # combine with previous components by xor-convolution
        new = np.full(K, INF, dtype=np.int64)
        for c1 in range(K):
            if mins[c1] >= INF:
                continue
            for c2 in range(K):
                if comp[c2] < INF and mins[c1] + comp[c2] < new[c1 ^ c2]:
                    new[c1 ^ c2] = mins[c1] + comp[c2]
        mins[:] = new
        # lexicographically least optimal matching of this component
        target = _min_row(vals, hf)
        if target >= INF:
            for t in range(counter[0]):
                keys[used[t]] = -1
            return mins, partner, pclass, 2
        mask = full
        while mask:
            i = 0
            while not (mask >> i) & 1:
                i += 1
            rest = mask & ~(np.int64(1) << i)
            done = False
            for j in range(i + 1, k):
                if done:
                    break
                if not (rest >> j) & 1:
                    continue
                sub_mask = rest & ~(np.int64(1) << j)
                for c in range(K):
                    if not la[c, i, j]:
                        continue
                    hs = _probe(keys, sub_mask)
                    if keys[hs] == sub_mask and ld[c, i, j] + _min_row(vals, hs) == target:
                        partner[members[i]] = members[j]
                        partner[members[j]] = members[i]
                        pclass[members[i]] = c
                        pclass[members[j]] = c
                        target -= ld[c, i, j]
                        mask = sub_mask
                        done = True
                        break
            if not done:
                for c in range(K):
                    if not lab[c, i]:
                        continue
                    hs = _probe(keys, rest)
                    if keys[hs] == rest and lbd[c, i] + _min_row(vals, hs) == target:
                        partner[members[i]] = -1
                        pclass[members[i]] = c
                        target -= lbd[c, i]
                        mask = rest
                        done = True
                        break
            if not done:
                for t in range(counter[0]):
                    keys[used[t]] = -1
                return mins, partner, pclass, 2
        for t in range(counter[0]):
            keys[used[t]] = -1
        counter[0] = 0
    return mins, partner, pclass, 0


@numba.njit(cache=True)
def batch_kernel(D, bidx, indptr, indices, keys, vals, used, limit):
    """Solve many defect sets against one distance table.

    ``D[c, u, v]`` are class-resolved node distances, ``bidx`` the boundary
    node (``-1`` if none); defect sets are given in CSR form.  Returns the
    per-class minima, the class of the lexicographically least optimal
    matching and a status per shot (3 when the set exceeds ``limit``).
    """
    K = D.shape[0]
    shots = indptr.shape[0] - 1
    out = np.full((shots, K), INF, dtype=np.int64)
    chosen = np.zeros(shots, dtype=np.int64)
    status = np.zeros(shots, dtype=np.int64)
    has_b = bidx >= 0
    for s in range(shots):
        a = indptr[s]
        m = indptr[s + 1] - a
        if m > limit:
            status[s] = 3
            continue
        dist = np.empty((K, m, m), dtype=np.int64)
        bd = np.empty((K, m), dtype=np.int64)
        for c in range(K):
            for i in range(m):
                u = indices[a + i]
                for j in range(m):
                    dist[c, i, j] = D[c, u, indices[a + j]]
                bd[c, i] = D[c, u, bidx] if has_b else INF
        mins, partner, pclass, st = solve_kernel(dist, bd, has_b, keys, vals, used)
        status[s] = st
        out[s, :] = mins
        cls = 0
        for i in range(m):
            if partner[i] == -1 or partner[i] > i:
                cls ^= pclass[i]
        chosen[s] = cls
    return out, chosen, status


class Workspace:
    """Memo table reused across solver calls (not thread safe)."""

    def __init__(self, K: int, log2cap: int = 18):
        cap = 1 << log2cap
        self.keys = np.full(cap, -1, dtype=np.int64)
        self.vals = np.full((cap, K), INF, dtype=np.int64)
        self.used = np.zeros(cap, dtype=np.int64)


@lru_cache(maxsize=None)
def _workspace(K: int) -> Workspace:
    return Workspace(K)


# --------------------------------------------------------------------------
# Matching results


@dataclass
class Matching:
    pairs: list  # (node, node) with BOUNDARY standing for the boundary
    weight: Fraction
    paths: list = field(default_factory=list)  # per pair: edge ids
    classes: list = field(default_factory=list)  # per pair: packed class


@dataclass
class DecodeOutcome:
    correction: np.ndarray
    logical_flip: tuple[int, ...]
    degenerate: bool
    matching: Matching
    flip_classes: frozenset = frozenset()
    exact: bool = True


def _pack(bits) -> int:
    return sum(int(b) << k for k, b in enumerate(bits))


def _unpack(c: int, k: int) -> tuple[int, ...]:
    return tuple((c >> t) & 1 for t in range(k))


# --------------------------------------------------------------------------
# Compiled graph: integer weights, lifted distances, canonical paths


def _weight_scale(weights) -> int:
    return math.lcm(*(Fraction(w).denominator for w in weights)) if weights else 1


class CompiledGraph:
    """Integer-weight, class-lifted view of a :class:`MatchingGraph`."""

    def __init__(self, graph: MatchingGraph, tracked=DEFAULT_TRACKED):
        self.graph = graph
        self.tracked = tuple(tracked)
        self.k = len(self.tracked)
        self.K = 1 << self.k
        self.scale = _weight_scale([e.weight for e in graph.edges])
        n = len(graph.nodes)
        self.n = n
        self.eu = np.array([e.u for e in graph.edges], dtype=np.int64)
        self.ev = np.array([e.v for e in graph.edges], dtype=np.int64)
        self.ew = np.array([int(e.weight * self.scale) for e in graph.edges], dtype=np.int64)
        self.ecls = np.array(
            [_pack([e.crossing[t] for t in self.tracked]) for e in graph.edges], dtype=np.int64
        )
        b = graph.boundary_nodes
        self.bidx = b[0] if b else -1
        K = self.K
        rows, cols, data = [], [], []
        for a, bb, w, c in zip(self.eu, self.ev, self.ew, self.ecls):
            for x in range(K):
                rows += [a * K + x, bb * K + (x ^ c)]
                cols += [bb * K + (x ^ c), a * K + x]
                data += [w, w]
        # zero weights would vanish from a sparse matrix; shift by a tiny epsilon-free trick
        if (self.ew == 0).any():
            raise ValueError("zero edge weights are not supported by the path store")
        self.lifted = csr_matrix((np.array(data, dtype=float), (rows, cols)), shape=(n * K, n * K))
        self._edge_of = {}
        for idx, (a, bb) in enumerate(zip(self.eu, self.ev)):
            self._edge_of[(int(a), int(bb))] = idx
            self._edge_of[(int(bb), int(a))] = idx
        self._table = None

    @property
    def table(self) -> np.ndarray:
        """``table[c, u, v]``: least weight of a u-v path of class c."""
        if self._table is None:
            K, n = self.K, self.n
            raw = dijkstra(self.lifted, directed=False, indices=np.arange(n) * K)
            raw = np.where(np.isinf(raw), INF, raw).astype(np.int64)
            self._raw = raw
            self._table = np.ascontiguousarray(raw.reshape(n, n, K).transpose(2, 0, 1))
        return self._table

    def path(self, u: int, v: int, c: int) -> list[int]:
        """Canonical shortest u-v path of class c as edge ids.

        Walks back from the target choosing the smallest-index predecessor
        that lies on a shortest path.
        """
        self.table
        K = self.K
        row = self._raw[u]
        if row[v * K + c] >= INF:
            raise ValueError(f"nodes {u} and {v} are not connected")
        cur = v * K + c
        out = []
        lifted = self.lifted
        while cur != u * K:
            start, stop = lifted.indptr[cur], lifted.indptr[cur + 1]
            best = None
            for nb, w in zip(lifted.indices[start:stop], lifted.data[start:stop]):
                if row[nb] + int(w) == row[cur] and (best is None or nb < best):
                    best = nb
            out.append(self._edge_of[(int(best // K), int(cur // K))])
            cur = best
        return out[::-1]

    def defect_distances(self, defects):
        """Distance tensor among defects and to the boundary node."""
        t = self.table
        d = np.ascontiguousarray(t[:, defects][:, :, defects])
        if self.bidx >= 0:
            bd = np.ascontiguousarray(t[:, defects, self.bidx])
        else:
            bd = np.full((self.K, len(defects)), INF, dtype=np.int64)
        return d, bd


def all_pairs_defect_distances(graph, defects, tracked=DEFAULT_TRACKED):
    """Exact distances between defects (and to the boundary when present).

    Returns ``(dist, boundary, store)`` where ``dist[i, j]`` is the least
    path weight over all classes, ``boundary[i]`` the distance to the
    boundary node (``None`` without one) and ``store(i, j)`` returns the
    canonical least-weight path as edge ids.
    """
    cg = graph if isinstance(graph, CompiledGraph) else compile_graph(graph, tuple(tracked))
    defects = np.asarray(defects, dtype=np.int64)
    d, bd = cg.defect_distances(defects)
    dmin = d.min(axis=0)
    if (dmin >= INF).any():
        raise ValueError("defects lie in different components")
    scale = Fraction(1, cg.scale)
    dist = np.array([[Fraction(int(x)) * scale for x in row] for row in dmin], dtype=object)
    boundary = None
    if cg.bidx >= 0:
        boundary = np.array([Fraction(int(x)) * scale for x in bd.min(axis=0)], dtype=object)

    def store(i, j=None):
        u = int(defects[i])
        v = cg.bidx if j is None else int(defects[j])
        c = int(np.argmin(cg.table[:, u, v]))
        return cg.path(u, v, c)

    return dist, boundary, store


_COMPILED = {}


def compile_graph(graph: MatchingGraph, tracked=DEFAULT_TRACKED) -> CompiledGraph:
    key = (id(graph), tuple(tracked))
    cg = _COMPILED.get(key)
    if cg is None or cg.graph is not graph:
        cg = CompiledGraph(graph, tracked)
        _COMPILED[key] = cg
    return cg


# --------------------------------------------------------------------------
# Public matching entry point


def solve_mwpm(dist, boundary=None):
    """Exact minimum-weight perfect matching on a complete defect graph.

    ``dist`` is a symmetric ``m x m`` matrix (or a ``K x m x m`` tensor of
    class-resolved distances) of nonnegative numbers; ``boundary`` optional
    per-defect boundary distances.  Weights are converted to exact integers.
    Ties are broken towards the lexicographically least sorted pair list,
    with boundary pairs sorting last.  Returns a :class:`Matching` whose
    ``classes`` list per-pair classes and ``weight`` the exact total; the
    attribute ``class_minima`` maps classes to least weights.  It is exact
    for every class attaining the optimum; pairs that cannot occur in an
    optimal matching are pruned, so other classes are omitted or carry an
    upper bound.
    """
    dist = np.asarray(dist, dtype=object)
    if dist.ndim == 2:
        dist = dist[None]
    K, m, _ = dist.shape
    has_b = boundary is not None
    bnd = np.asarray(boundary, dtype=object).reshape(K, m) if has_b else None
    if not has_b and m % 2:
        raise ValueError("odd number of defects and no boundary")
    fracs = [Fraction(x) for x in dist.ravel() if x is not None and x != math.inf]
    if has_b:
        fracs += [Fraction(x) for x in bnd.ravel() if x is not None and x != math.inf]
    if any(f < 0 for f in fracs):
        raise ValueError("distances must be nonnegative")
    scale = math.lcm(*(f.denominator for f in fracs)) if fracs else 1

    def to_int(x):
        if x is None or x == math.inf:
            return INF
        return int(Fraction(x) * scale)

    di = np.array([[[to_int(x) for x in row] for row in mat] for mat in dist], dtype=np.int64).reshape(K, m, m)
    bi = (
        np.array([[to_int(x) for x in row] for row in bnd], dtype=np.int64)
        if has_b
        else np.full((K, m), INF, dtype=np.int64)
    )
    ws = _workspace(K)
    mins, partner, pclass, status = solve_kernel(di, bi, has_b, ws.keys, ws.vals, ws.used)
    if status == 2:
        raise ValueError("no perfect matching exists")
    if status == 1:
        raise OverflowError("defect set too large for the exact solver")
    pairs, classes = [], []
    for i in range(m):
        j = int(partner[i])
        if j == -1:
            pairs.append((i, BOUNDARY))
            classes.append(int(pclass[i]))
        elif j > i:
            pairs.append((i, j))
            classes.append(int(pclass[i]))
    best = int(mins.min())
    out = Matching(pairs, Fraction(best, scale), [], classes)
    out.class_minima = {c: Fraction(int(v), scale) for c, v in enumerate(mins) if v < INF}
    return out


# --------------------------------------------------------------------------
# Decoders


def _lift(layout: ColorLayout, parts) -> np.ndarray:
    """Bit flips on red squares reproducing the side parities of edges.

    ``parts`` is a sequence of ``(graph, edge ids)``; the blue sides of a
    square come from R_g edges and the green sides from R_b edges, so both
    sheets must be lifted together.
    """
    side_par = {}
    for graph, edge_ids in parts:
        for e in edge_ids:
            for sq, side in graph.edges[e].incidences:
                key = (sq, side)
                side_par[key] = side_par.get(key, 0) ^ 1
    flips = np.zeros(layout.n, dtype=bool)
    by_square = {}
    for (sq, side), p in side_par.items():
        if p:
            by_square.setdefault(sq, set()).add(side)
    for sq, sides in by_square.items():
        x, y = layout.faces[sq].coord
        a = {s: int(s in sides) for s in "LRDU"}
        for corners in _LIFT_TABLE[(a["L"], a["R"], a["D"], a["U"])]:
            cx, cy = corners
            flips[layout.index[(2 * x + cx, 2 * y + cy)]] ^= True
    return flips


def _build_lift_table():
    # corners TL, TR, BL, BR as (cx, cy) with their sides
    corners = ((0, 1), (1, 1), (0, 0), (1, 0))
    table = {}
    for subset in range(16):
        chosen = [corners[t] for t in range(4) if (subset >> t) & 1]
        a = [0, 0, 0, 0]  # L R D U
        for cx, cy in chosen:
            a[0 if cx == 0 else 1] ^= 1
            a[2 if cy == 0 else 3] ^= 1
        key = tuple(a)
        if key not in table or len(chosen) < len(table[key]):
            table[key] = tuple(chosen)
    return table


_LIFT_TABLE = _build_lift_table()


def _decode_graph(cg: CompiledGraph, color_syndrome, limit=EXACT_LIMIT):
    """Match one graph's defects; returns (edges, pairs, classes, weight, minima, exact)."""
    graph = cg.graph
    defects = graph.defects(color_syndrome)
    if len(defects) == 0:
        return [], Matching([], Fraction(0)), {0: 0}, True
    d, bd = cg.defect_distances(defects)
    has_b = cg.bidx >= 0
    exact = len(defects) <= limit
    status = 1
    if exact:
        ws = _workspace(cg.K)
        mins, partner, pclass, status = solve_kernel(d, bd, has_b, ws.keys, ws.vals, ws.used)
        if status == 2:
            raise ContractBreach("defects cannot be perfectly matched")
    if status == 1:
        exact = False
        partner, pclass = _fallback_match(d, bd, has_b)
        mins = None
    pairs, classes, paths = [], [], []
    used = {}
    total = 0
    for i in range(len(defects)):
        j = int(partner[i])
        if j != -1 and j < i:
            continue
        u = int(defects[i])
        v = cg.bidx if j == -1 else int(defects[j])
        c = int(pclass[i])
        p = cg.path(u, v, c)
        total += int(d[c, i, j]) if j != -1 else int(bd[c, i])
        pairs.append((u, BOUNDARY if j == -1 else v))
        classes.append(c)
        paths.append(p)
        for e in p:
            used[e] = used.get(e, 0) ^ 1
    matching = Matching(pairs, Fraction(total, cg.scale), paths, classes)
    edges = [e for e, par in used.items() if par]
    if mins is None:
        chosen = 0
        for c in classes:
            chosen ^= c
        minima = {chosen: total}
    else:
        minima = {c: int(v) for c, v in enumerate(mins) if v < INF}
    return edges, matching, minima, exact


def _fallback_match(d, bd, has_b):
    """Exact minimum weight (no degeneracy information) via networkx blossom."""
    import networkx as nx

    K, m, _ = d.shape
    dmin = d.min(axis=0)
    cmin = d.argmin(axis=0)
    g = nx.Graph()
    big = int(dmin[dmin < INF].max(initial=0)) + (int(bd.min(axis=0).max()) if has_b else 0) + 1
    for i in range(m):
        for j in range(i + 1, m):
            if dmin[i, j] < INF:
                g.add_edge(i, j, weight=big - int(dmin[i, j]))
    if has_b:
        bmin = bd.min(axis=0)
        bcls = bd.argmin(axis=0)
        for i in range(m):
            g.add_edge(i, m + i, weight=big - int(bmin[i]))
            for j in range(i + 1, m):
                g.add_edge(m + i, m + j, weight=big)
    mate = nx.max_weight_matching(g, maxcardinality=True)
    partner = np.full(m, -2, dtype=np.int64)
    pclass = np.zeros(m, dtype=np.int64)
    for a, b in mate:
        a, b = min(a, b), max(a, b)
        if b < m:
            partner[a], partner[b] = b, a
            pclass[a] = pclass[b] = cmin[a, b]
        elif a < m:
            partner[a] = -1
            pclass[a] = bcls[a]
    return partner, pclass


def _combine(minima_list, K):
    total = {0: 0}
    for mins in minima_list:
        new = {}
        for c1, v1 in total.items():
            for c2, v2 in mins.items():
                c = c1 ^ c2
                if c not in new or v1 + v2 < new[c]:
                    new[c] = v1 + v2
        total = new
    best = min(total.values())
    return frozenset(c for c, v in total.items() if v == best), best


def _outcome(graphs_results, cgs, n):
    pairs, paths, classes = [], [], []
    weight = Fraction(0)
    exact = True
    chosen = 0
    for (edges, matching, minima, ex), cg in zip(graphs_results, cgs):
        pairs += matching.pairs
        paths += matching.paths
        classes += matching.classes
        weight += matching.weight
        exact &= ex
        for c in matching.classes:
            chosen ^= c
    correction = _lift(cgs[0].graph.layout, [(cg.graph, r[0]) for r, cg in zip(graphs_results, cgs)])
    k = cgs[0].k
    if len({cg.scale for cg in cgs}) != 1:
        raise ValueError("graphs decoded together must share a weight scale")
    tied, _ = _combine([r[2] for r in graphs_results], cgs[0].K)
    if chosen not in tied:
        raise ContractBreach("chosen matching is not of minimum weight")
    return DecodeOutcome(
        correction,
        _unpack(chosen, k),
        len(tied) > 1,
        Matching(pairs, weight, paths, classes),
        frozenset(_unpack(c, k) for c in tied),
        exact,
    )


@lru_cache(maxsize=None)
def _color(D: int) -> ColorLayout:
    return build_color_code(D)


@lru_cache(maxsize=None)
def restricted_graphs(D: int, weight=Fraction(1), tracked=DEFAULT_TRACKED):
    layout = _color(D)
    return tuple(CompiledGraph(build_restricted_graph(layout, u, weight), tracked) for u in ("g", "b"))


@lru_cache(maxsize=None)
def unified_graph(D: int, w_A=Fraction(1), w_B=Fraction(1), tracked=DEFAULT_TRACKED, stitch=DEFAULT_STITCH):
    return CompiledGraph(build_unified_graph(_color(D), w_A, w_B, stitch), tracked)


def _frac(w) -> Fraction:
    return Fraction(str(w)) if isinstance(w, float) else Fraction(w)


def _color_syndrome(layout, syn):
    syn = np.asarray(syn, dtype=bool)
    if syn.shape != (len(layout.faces),):
        raise ValueError("syndrome length must equal the number of color-code faces")
    return syn


def decode_restricted(layout: ColorLayout, color_syndrome, weight=1, tracked=DEFAULT_TRACKED, limit=EXACT_LIMIT):
    """Match independently on R_g and R_b and sum the lifted corrections."""
    syn = _color_syndrome(layout, color_syndrome)
    cgs = restricted_graphs(layout.distance, _frac(weight), tuple(tracked))
    results = [_decode_graph(cg, syn, limit) for cg in cgs]
    return _outcome(results, cgs, layout.n)


def decode_unified(layout: ColorLayout, color_syndrome, w_A=1, w_B=1, tracked=DEFAULT_TRACKED, limit=EXACT_LIMIT):
    """Match on the stitched unified graph."""
    syn = _color_syndrome(layout, color_syndrome)
    cg = unified_graph(layout.distance, _frac(w_A), _frac(w_B), tuple(tracked))
    return _outcome([_decode_graph(cg, syn, limit)], [cg], layout.n)


SUCCESS, FAILURE, COIN_FLIP = "success", "failure", "coin-flip"


def assess_failure(layout, true_error, outcome: DecodeOutcome, tracked=DEFAULT_TRACKED) -> str:
    """Classify a decode against the true error.

    For a surface-code error the color correction is translated back to a
    surface Pauli and the residual is classified on the surface code;
    otherwise the residual is classified on the color code.  Only the
    tracked logical bits decide success.
    """
    tracked = tuple(tracked)
    if isinstance(layout, SurfaceLayout):
        emap = _map(layout.distance)
        try:
            corr = unmap_bitflips(emap, outcome.correction)
        except ValueError as exc:
            raise ContractBreach(str(exc)) from exc
        residual = true_error ^ corr
        err_bits = class_bits(layout, true_error)
    else:
        residual = np.asarray(true_error, dtype=bool) ^ outcome.correction
        err_bits = class_bits(layout, true_error)
    try:
        cls = logical_class(layout, residual)
    except ValueError as exc:
        raise ContractBreach("residual has a nonempty syndrome") from exc
    want = tuple(err_bits[t] for t in tracked)
    got = tuple(cls[t] for t in tracked)
    if tuple(a ^ b for a, b in zip(want, outcome.logical_flip)) != got:
        raise ContractBreach("crossing parity disagrees with the residual class")
    if outcome.degenerate:
        return COIN_FLIP if want in outcome.flip_classes else FAILURE
    return SUCCESS if not any(got) else FAILURE


def failure_weight(status: str, ties: int = 2) -> float:
    if status == FAILURE:
        return 1.0
    if status == COIN_FLIP:
        return 1.0 - 1.0 / ties
    return 0.0


@lru_cache(maxsize=None)
def _map(d: int):
    from .lattices import build_surface_code

    return build_map(build_surface_code(d), _color(2 * d))


def decode_surface_error(d: int, error: PauliError, decoder="unified", w_A=1, w_B=1, tracked=DEFAULT_TRACKED):
    """Map a surface-code error, decode it on the color code and assess it."""
    emap = _map(d)
    flips = map_error_to_color(emap, error)
    syn = syndrome(emap.color, flips)
    if decoder == "unified":
        out = decode_unified(emap.color, syn, w_A, w_B, tracked)
    elif decoder == "restricted":
        out = decode_restricted(emap.color, syn, 1, tracked)
    else:
        raise ValueError(f"unknown decoder {decoder!r}")
    return out, assess_failure(emap.surface, error, out, tracked)


# --------------------------------------------------------------------------
# Batched class-level decoding


def _xor_min(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Row-wise (min, +) XOR convolution of per-class minima."""
    K = a.shape[1]
    out = np.full_like(a, INF)
    for c1 in range(K):
        for c2 in range(K):
            out[:, c1 ^ c2] = np.minimum(out[:, c1 ^ c2], np.minimum(a[:, c1] + b[:, c2], INF))
    return out


class BatchDecoder:
    """Class-level decoding of many errors at once.

    Only the logical class of the correction matters for assessment: the
    residual class is the true class XOR the chosen one, so a batch decode
    returns per-class minima and the chosen class without building paths.
    ``code`` is ``"surface"`` (depolarising errors coded 0..3 for I, X, Y, Z
    on surface distance ``d``) or ``"color"`` (bit flips on distance ``d``).
    """

    def __init__(self, code: str, d: int, decoder: str = "unified", w_A=1, w_B=1,
                 tracked=DEFAULT_TRACKED, limit: int = BATCH_LIMIT, stitch: str = DEFAULT_STITCH):
        if code not in ("surface", "color"):
            raise ValueError(f"unknown code {code!r}")
        if decoder not in ("unified", "restricted"):
            raise ValueError(f"unknown decoder {decoder!r}")
        self.code, self.d, self.decoder = code, d, decoder
        self.tracked = tuple(tracked)
        self.limit = limit
        if code == "surface":
            self.emap = _map(d)
            self.surface = self.emap.surface
            self.color = self.emap.color
            self.n = self.surface.n
            tab = np.array([[self.emap.pair(q, p) for p in "XYZ"] for q in range(self.n)])
            self._pairs = tab  # (n, 3, 2) color qubits per Pauli
        else:
            self.color = _color(d)
            self.n = self.color.n
        if decoder == "unified":
            self.cgs = (unified_graph(self.color.distance, _frac(w_A), _frac(w_B), self.tracked, stitch),)
        else:
            self.cgs = restricted_graphs(self.color.distance, Fraction(1), self.tracked)
        self.K = self.cgs[0].K
        self._node_maps = []
        for cg in self.cgs:
            m = np.zeros((len(self.color.faces), cg.n), dtype=np.uint8)
            for f, ids in enumerate(cg.graph.instances):
                m[f, list(ids)] = 1
            self._node_maps.append(m)

    # errors ------------------------------------------------------------

    def color_flips(self, errors: np.ndarray) -> np.ndarray:
        errors = np.atleast_2d(errors)
        if self.code == "color":
            return errors.astype(bool)
        out = np.zeros((errors.shape[0], self.color.n), dtype=np.uint8)
        for k in range(3):
            rows, qs = np.nonzero(errors == k + 1)
            for j in range(2):
                np.add.at(out, (rows, self._pairs[qs, k, j]), 1)
        return (out % 2).astype(bool)

    def true_class(self, errors: np.ndarray) -> np.ndarray:
        """Packed tracked class of each error in its own picture."""
        errors = np.atleast_2d(errors)
        if self.code == "surface":
            x = (errors == 1) | (errors == 2)
            z = (errors == 2) | (errors == 3)
            bits = [
                (z.astype(np.int64) @ self.surface.logical_X.astype(np.int64)) % 2,
                (x.astype(np.int64) @ self.surface.logical_Z.astype(np.int64)) % 2,
            ]
        else:
            e = errors.astype(np.int64)
            bits = [
                (e @ self.color.logical_Z["b"].astype(np.int64)) % 2,
                (e @ self.color.logical_Z["g"].astype(np.int64)) % 2,
            ]
        out = np.zeros(errors.shape[0], dtype=np.int64)
        for k, t in enumerate(self.tracked):
            out |= bits[t].astype(np.int64) << k
        return out

    def syndromes(self, errors: np.ndarray) -> np.ndarray:
        flips = self.color_flips(errors).astype(np.uint8)
        return ((flips @ self.color.h.T) % 2).astype(bool)

    # decoding ------------------------------------------------------------

    def class_minima(self, errors: np.ndarray):
        """Per-class least matching weights, chosen class and exactness.

        Returns ``(minima, chosen, exact)`` with ``minima`` of shape
        ``(shots, K)``; for shots beyond the exact solver ``minima`` holds
        only the chosen class and ``exact`` is False.
        """
        syn = self.syndromes(errors).astype(np.uint8)
        shots = syn.shape[0]
        total = np.full((shots, self.K), INF, dtype=np.int64)
        total[:, 0] = 0
        chosen = np.zeros(shots, dtype=np.int64)
        exact = np.ones(shots, dtype=bool)
        ws = _workspace(self.K)
        for cg, nmap in zip(self.cgs, self._node_maps):
            mask = (syn @ nmap) > 0
            rows, cols = np.nonzero(mask)
            indptr = np.zeros(shots + 1, dtype=np.int64)
            np.cumsum(np.bincount(rows, minlength=shots), out=indptr[1:])
            mins, ch, status = batch_kernel(
                cg.table, np.int64(cg.bidx), indptr, cols.astype(np.int64),
                ws.keys, ws.vals, ws.used, self.limit,
            )
            if (status == 2).any():
                raise ContractBreach("defects cannot be perfectly matched")
            over = np.flatnonzero((status == 1) | (status == 3))
            if len(over):
                # a single known class shifts every combined minimum equally,
                # so its weight is irrelevant to tie detection
                c = _predict_classes(self._matcher(cg), mask[over], len(self.tracked))
                mins[over, :] = INF
                mins[over, c] = 0
                ch[over] = c
                exact[over] = False
            total = _xor_min(total, mins)
            chosen ^= ch
        return total, chosen, exact

    def _matcher(self, cg: CompiledGraph):
        if not hasattr(self, "_matchers"):
            self._matchers = {}
        if id(cg) not in self._matchers:
            self._matchers[id(cg)] = pymatching_graph(cg, self.tracked)
        return self._matchers[id(cg)]

    def assess(self, errors: np.ndarray) -> np.ndarray:
        """Status per error: 0 success, 1 failure, 2 coin-flip."""
        errors = np.atleast_2d(errors)
        minima, chosen, _ = self.class_minima(errors)
        truth = self.true_class(errors)
        best = minima.min(axis=1, keepdims=True)
        tied = minima == best
        if not tied[np.arange(len(chosen)), chosen].all():
            raise ContractBreach("chosen matching is not of minimum weight")
        degenerate = tied.sum(axis=1) > 1
        truth_tied = tied[np.arange(len(truth)), truth]
        status = np.where(chosen != truth, 1, 0)
        status = np.where(degenerate, np.where(truth_tied, 2, 1), status)
        return status


class MatchingEngine:
    """PyMatching decoding of the same graphs, for large defect sets.

    Exact in weight, but ties are broken by PyMatching's own choice, so the
    outcome is a plain success or failure with no coin-flip status.
    """

    def __init__(self, bd: BatchDecoder):
        self.bd = bd
        self.matchers = [bd._matcher(cg) for cg in bd.cgs]

    def predict(self, errors: np.ndarray) -> np.ndarray:
        """Packed class of the correction chosen for each error."""
        syn = self.bd.syndromes(errors).astype(np.uint8)
        out = np.zeros(syn.shape[0], dtype=np.int64)
        for m, nmap in zip(self.matchers, self.bd._node_maps):
            out ^= _predict_classes(m, (syn @ nmap) > 0, len(self.bd.tracked))
        return out

    def assess(self, errors: np.ndarray) -> np.ndarray:
        """Status per error: 0 success, 1 failure."""
        errors = np.atleast_2d(errors)
        return (self.predict(errors) != self.bd.true_class(errors)).astype(np.int64)


def pymatching_graph(cg: CompiledGraph, tracked):
    """PyMatching copy of a compiled graph; fault ids are tracked crossings."""
    import pymatching

    m = pymatching.Matching()
    for e in cg.graph.edges:
        faults = {k for k, t in enumerate(tracked) if e.crossing[t]}
        m.add_edge(e.u, e.v, fault_ids=faults, weight=float(e.weight))
    if cg.bidx >= 0:
        m.set_boundary_nodes({int(cg.bidx)})
    return m


def _predict_classes(matcher, detectors: np.ndarray, k: int) -> np.ndarray:
    pred = matcher.decode_batch(np.asarray(detectors, dtype=np.uint8))
    out = np.zeros(pred.shape[0], dtype=np.int64)
    for t in range(min(k, pred.shape[1])):
        out ^= pred[:, t].astype(np.int64) << t
    return out
