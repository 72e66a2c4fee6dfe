"""Restricted lattices and the stitched unified matching graph.

A node is a face copy ``(face_id, sheet)``; sheet ``u`` is the restricted
lattice that excludes faces of color ``u``.  Restricted graphs also carry a
boundary node ``(-1, u)``.

Every single-qubit bit flip contributes a "bundle" of edges whose endpoints
are exactly the face copies it violates.  A bulk qubit touches one face of
each color and gives three edges, one per sheet.  On the unified graph the
lone copies created by boundary qubits are joined across sheets by stitch
edges instead of going to a boundary node:

* blue-boundary qubit (red + green faces): green on R_r to red on R_g;
* green-boundary qubit (red + blue faces): blue on R_r to red on R_b;
* corner qubit (red face only): red on R_b to red on R_g.

Edges that touch a red-face copy on R_g or R_b remember which side of the
red square they leave through ("incidences").  The decoder lifts those side
parities back to bit flips on the square; logical crossing parities are
attached to incidences as well.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .lattices import COLORS, ColorLayout, GF2Span

BOUNDARY = -1
SHEET_NAMES = {"r": "R_r", "g": "R_g", "b": "R_b"}

# corner (cx, cy) -> its two sides
_SIDE_CORNERS = {"L": {(0, 0), (0, 1)}, "R": {(1, 0), (1, 1)}, "D": {(0, 0), (1, 0)}, "U": {(0, 1), (1, 1)}}
_SIDE_STEP = {"L": (-1, 0), "R": (1, 0), "D": (0, -1), "U": (0, 1)}


def _corner_sides(corner):
    cx, cy = corner
    return ("L" if cx == 0 else "R"), ("D" if cy == 0 else "U")


@dataclass(frozen=True)
class Edge:
    u: int
    v: int
    weight: Fraction
    qubits: tuple[int, ...]
    crossing: tuple[int, int]  # parity against (Z_b, Z_g)
    incidences: tuple[tuple[int, str], ...]  # (red face id, side)
    kind: str


@dataclass(frozen=True, eq=False)
class MatchingGraph:
    layout: ColorLayout
    sheets: tuple[str, ...]
    nodes: tuple[tuple[int, str], ...]
    edges: tuple[Edge, ...]
    w_A: Fraction
    w_B: Fraction
    bundles: tuple[tuple[int, ...], ...] = field(repr=False)  # qubit -> edge ids

    @cached_property
    def node_index(self) -> dict:
        return {nd: i for i, nd in enumerate(self.nodes)}

    @property
    def boundary_nodes(self) -> tuple[int, ...]:
        return tuple(i for i, (f, _) in enumerate(self.nodes) if f == BOUNDARY)

    @cached_property
    def instances(self) -> tuple[tuple[int, ...], ...]:
        """Face id -> node ids of its copies on this graph's sheets."""
        out = [[] for _ in self.layout.faces]
        for i, (f, _) in enumerate(self.nodes):
            if f != BOUNDARY:
                out[f].append(i)
        return tuple(tuple(v) for v in out)

    def defects(self, color_syndrome) -> np.ndarray:
        """Node ids of the violated face copies, sorted."""
        ids = [i for f in np.flatnonzero(color_syndrome) for i in self.instances[f]]
        return np.array(sorted(ids), dtype=np.int64)

    def is_connected(self) -> bool:
        n = len(self.nodes)
        u = [e.u for e in self.edges]
        v = [e.v for e in self.edges]
        adj = coo_matrix((np.ones(len(u)), (u, v)), shape=(n, n))
        return connected_components(adj, directed=False)[0] == 1

    def to_dict(self) -> dict:
        return {
            "sheets": list(self.sheets),
            "w_A": str(self.w_A),
            "w_B": str(self.w_B),
            "nodes": [{"face": f, "sheet": s} for f, s in self.nodes],
            "edges": [
                {
                    "u": e.u,
                    "v": e.v,
                    "weight": str(e.weight),
                    "qubits": list(e.qubits),
                    "crossing": list(e.crossing),
                    "kind": e.kind,
                }
                for e in self.edges
            ],
        }


@dataclass(frozen=True, eq=False)
class RestrictedLattice:
    layout: ColorLayout
    excluded: str

    @property
    def faces(self):
        return tuple(f for f in self.layout.faces if f.color != self.excluded)

    @cached_property
    def boundary_support(self) -> np.ndarray:
        """Support of the boundary operator: product of all member faces."""
        out = np.zeros(self.layout.n, dtype=bool)
        for f in self.faces:
            out[list(f.support)] ^= True
        return out

    def symmetry_set(self) -> list[np.ndarray]:
        sets = []
        for f in self.faces:
            v = np.zeros(self.layout.n, dtype=bool)
            v[list(f.support)] = True
            sets.append(v)
        sets.append(self.boundary_support.copy())
        return sets


def verify_symmetry(layout: ColorLayout, symmetry_set) -> bool:
    """True iff the GF(2) product of the supports is the identity."""
    acc = np.zeros(layout.n, dtype=bool)
    for s in symmetry_set:
        s = np.asarray(s)
        if s.dtype != bool:
            v = np.zeros(layout.n, dtype=bool)
            v[list(s)] = True
            s = v
        acc ^= s
    return not acc.any()


# --------------------------------------------------------------------------


class _Touch:
    """Faces touched by one qubit, split by color, plus the absent sides."""

    def __init__(self, layout: ColorLayout, q: int):
        sq, corner = layout.qubit_square[q]
        self.red = sq
        x, y = layout.faces[sq].coord
        self.by_color = {"r": sq}
        self.side_to = {}
        self.missing = {}
        for side in _corner_sides(corner):
            dx, dy = _SIDE_STEP[side]
            color = "b" if (x + dx) % 2 else "g"
            f = layout.face_index.get((x + dx, y + dy))
            if f is None:
                self.missing[color] = side
            else:
                self.by_color[color] = f
                self.side_to[color] = side


def _crossing(layout: ColorLayout, sq: int, side: str) -> tuple[int, int]:
    """Parity that an odd side-incidence on ``sq`` contributes per logical."""
    x, y = layout.faces[sq].coord

    def qubits(corners):
        return {layout.index[(2 * x + cx, 2 * y + cy)] for cx, cy in corners}

    square = set(layout.faces[sq].support)
    out = []
    for key in ("b", "g"):
        on = {int(i) for i in np.flatnonzero(layout.logical_Z[key])} & square
        if on and not any(on == qubits(c) for c in _SIDE_CORNERS.values()):
            raise AssertionError("logical representative is not a union of square sides")
        out.append(int(on == qubits(_SIDE_CORNERS[side])))
    return tuple(out)


def _add(store, key, qubit, weight, crossing, incidences, kind):
    if key in store:
        w, qs, cr, inc, k = store[key]
        if w != weight or cr != crossing or inc != incidences:
            raise AssertionError(f"parallel edges disagree at {key}")
        qs.append(qubit)
    else:
        store[key] = (weight, [qubit], crossing, incidences, kind)


def _sum_cross(*parts):
    acc = (0, 0)
    for p in parts:
        acc = (acc[0] ^ p[0], acc[1] ^ p[1])
    return acc


def _finish(layout, sheets, nodes, store, w_A, w_B, bundle_keys):
    node_index = {nd: i for i, nd in enumerate(nodes)}
    edges = []
    key_id = {}
    for key in sorted(store, key=lambda k: tuple(sorted((node_index[k[0]], node_index[k[1]])))):
        w, qs, cr, inc, kind = store[key]
        a, b = sorted((node_index[key[0]], node_index[key[1]]))
        key_id[key] = len(edges)
        edges.append(Edge(a, b, w, tuple(sorted(qs)), cr, inc, kind))
    bundles = tuple(tuple(sorted(key_id[k] for k in keys)) for keys in bundle_keys)
    return MatchingGraph(layout, sheets, tuple(nodes), tuple(edges), w_A, w_B, bundles)


def _as_fraction(w) -> Fraction:
    return Fraction(str(w)) if isinstance(w, float) else Fraction(w)


def build_restricted_graph(layout: ColorLayout, u: str, weight=1) -> MatchingGraph:
    """Matching graph of the restricted lattice excluding color ``u``."""
    if u not in COLORS:
        raise ValueError(f"unknown color {u!r}")
    w = _as_fraction(weight)
    if w < 0:
        raise ValueError("weights must be nonnegative")
    nodes = [(f.id, u) for f in layout.faces if f.color != u] + [(BOUNDARY, u)]
    store, bundle_keys = {}, []
    for q in range(layout.n):
        t = _Touch(layout, q)
        here = [c for c in COLORS if c != u and c in t.by_color]
        keys = []
        if len(here) == 2:
            ends = tuple((t.by_color[c], u) for c in here)
        elif len(here) == 1:
            ends = ((t.by_color[here[0]], u), (BOUNDARY, u))
        else:
            bundle_keys.append(keys)
            continue
        inc = _incidences(t, u)
        cr = _sum_cross(*(_crossing(layout, s, side) for s, side in inc))
        key = tuple(sorted(ends))
        _add(store, key, q, w, cr, inc, "bulk" if len(here) == 2 else "boundary")
        keys.append(key)
        bundle_keys.append(keys)
    return _finish(layout, (u,), nodes, store, w, w, bundle_keys)


def _incidences(t: _Touch, sheet: str) -> tuple[tuple[int, str], ...]:
    """Side of the red square an edge on ``sheet`` leaves through."""
    if sheet == "r":
        return ()
    other = "b" if sheet == "g" else "g"
    side = t.side_to.get(other, t.missing.get(other))
    return ((t.red, side),)


# stitch rule -> weights keyed by "g" (green-boundary stitch, R_r to R_b),
# "b" (blue-boundary stitch, R_r to R_g) and "corner" (R_b to R_g).
# "sum" prices a stitch like the two sheet edges it replaces; "split" makes
# the green-boundary stitch cheaper so that a Y next to the green boundary
# beats the mirror-image Z path through the blue boundaries.
STITCH_RULES = {
    "split": lambda w: {"g": (w["r"] + w["b"]) * 3 / 4, "b": w["r"] + w["g"], "corner": w["g"] + w["b"]},
    "sum": lambda w: {"g": w["r"] + w["b"], "b": w["r"] + w["g"], "corner": w["g"] + w["b"]},
    "mean": lambda w: {"g": (w["r"] + w["b"]) / 2, "b": (w["r"] + w["g"]) / 2, "corner": (w["g"] + w["b"]) / 2},
}
DEFAULT_STITCH = "split"


def build_unified_graph(layout: ColorLayout, w_A=1, w_B=1, stitch=DEFAULT_STITCH) -> MatchingGraph:
    """Three sheets stitched along boundaries and corners into one graph.

    Sheets R_g and R_b carry bulk weight ``w_A``, sheet R_r carries ``w_B``.
    Stitch and corner weights follow ``STITCH_RULES[stitch]``.
    """
    if stitch not in STITCH_RULES:
        raise ValueError(f"unknown stitch rule {stitch!r}")
    w_A, w_B = _as_fraction(w_A), _as_fraction(w_B)
    if w_A <= 0 or w_B <= 0:
        raise ValueError("unified weights must be positive")
    sheet_w = {"r": w_B, "g": w_A, "b": w_A}
    join = STITCH_RULES[stitch](sheet_w)
    nodes = [(f.id, s) for f in layout.faces for s in COLORS if s != f.color]
    store, bundle_keys = {}, []
    for q in range(layout.n):
        t = _Touch(layout, q)
        keys = []
        if len(t.by_color) == 3:
            for s in COLORS:
                a, b = (t.by_color[c] for c in COLORS if c != s)
                inc = _incidences(t, s)
                cr = _sum_cross(*(_crossing(layout, f, side) for f, side in inc))
                key = tuple(sorted(((a, s), (b, s))))
                _add(store, key, q, sheet_w[s], cr, inc, "bulk")
                keys.append(key)
        elif len(t.by_color) == 2:
            have = "g" if "g" in t.by_color else "b"
            octa = t.by_color[have]
            # in-sheet edge on the sheet holding both red and this octagon
            s_in = "b" if have == "g" else "g"
            inc = _incidences(t, s_in)
            cr = _sum_cross(*(_crossing(layout, f, side) for f, side in inc))
            key = tuple(sorted(((t.red, s_in), (octa, s_in))))
            _add(store, key, q, sheet_w[s_in], cr, inc, "bulk")
            keys.append(key)
            # stitch: octagon copy on R_r to red copy on the remaining sheet
            s_st = have
            inc = _incidences(t, s_st)
            cr = _sum_cross(*(_crossing(layout, f, side) for f, side in inc))
            key = tuple(sorted(((octa, "r"), (t.red, s_st))))
            _add(store, key, q, join["g" if have == "b" else "b"], cr, inc, "stitch")
            keys.append(key)
        else:
            inc = _incidences(t, "g") + _incidences(t, "b")
            cr = _sum_cross(*(_crossing(layout, f, side) for f, side in inc))
            key = tuple(sorted(((t.red, "b"), (t.red, "g"))))
            _add(store, key, q, join["corner"], cr, inc, "corner")
            keys.append(key)
        bundle_keys.append(keys)
    return _finish(layout, COLORS, nodes, store, w_A, w_B, bundle_keys)


# --------------------------------------------------------------------------
# topology checks


def defect_instances(graph: MatchingGraph, flips) -> np.ndarray:
    """Parity of each node under a bit-flip error, via edge bundles."""
    par = np.zeros(len(graph.nodes), dtype=bool)
    for q in np.flatnonzero(flips):
        for e in graph.bundles[q]:
            par[graph.edges[e].u] ^= True
            par[graph.edges[e].v] ^= True
    return par


def euler_characteristic(graph: MatchingGraph) -> int:
    """V - E + F with 2-cells given by the face-stabilizer cycles.

    F is the GF(2) rank of the edge cycles traced by each face stabilizer's
    bundles, so the value equals 1 - dim H1 for a connected graph.
    """
    layout = graph.layout
    span = GF2Span()
    for f in layout.faces:
        row = np.zeros(len(graph.edges), dtype=np.uint8)
        for q in f.support:
            for e in graph.bundles[q]:
                row[e] ^= 1
        span.add(row)
    v = len(graph.nodes)
    return v - len(graph.edges) + span.rank


def bundle_mismatches(graph: MatchingGraph) -> list[int]:
    """Qubits whose edge bundle does not flip exactly their face copies.

    Each face copy must be flipped by a single bit flip iff the face holds
    the qubit; boundary nodes are free.  An empty list means every bundle
    realises the qubit's syndrome on all sheets.
    """
    layout = graph.layout
    bad = []
    free = np.zeros(len(graph.nodes), dtype=bool)
    free[list(graph.boundary_nodes)] = True
    for q in range(layout.n):
        e = np.zeros(layout.n, dtype=bool)
        e[q] = True
        want = np.zeros(len(graph.nodes), dtype=bool)
        for f in layout.qubit_faces[q]:
            want[list(graph.instances[f])] = True
        got = defect_instances(graph, e)
        if ((got ^ want) & ~free).any():
            bad.append(q)
    return bad
