import dataclasses
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from unimatch.graphs import (
    DEFAULT_STITCH,
    STITCH_RULES,
    RestrictedLattice,
    build_restricted_graph,
    build_unified_graph,
    bundle_mismatches,
    defect_instances,
    verify_symmetry,
)
from unimatch.lattices import build_color_code, syndrome


@pytest.mark.parametrize("D", [4, 8, 12])
def test_restricted_symmetries(D):
    L = build_color_code(D)
    for u in "rgb":
        R = RestrictedLattice(L, u)
        assert verify_symmetry(L, R.symmetry_set())
        # the boundary operator alone is a nontrivial support
        assert R.boundary_support.any()


@pytest.mark.parametrize("D", [4, 8, 12])
def test_boundary_product_is_identity(D):
    L = build_color_code(D)
    b = [RestrictedLattice(L, u).boundary_support for u in "rgb"]
    assert verify_symmetry(L, b)


@pytest.mark.parametrize("D", [4, 8, 12])
def test_unified_graph_shape(D):
    L = build_color_code(D)
    g = build_unified_graph(L)
    assert len(g.nodes) == 2 * len(L.faces)
    assert not g.boundary_nodes
    assert g.is_connected()
    assert bundle_mismatches(g) == []
    assert verify_symmetry(L, [L.faces[f].support for f, _ in g.nodes])
    kinds = {e.kind for e in g.edges}
    assert kinds == {"bulk", "stitch", "corner"}


@pytest.mark.parametrize("u", "rgb")
def test_restricted_graph(u):
    L = build_color_code(8)
    g = build_restricted_graph(L, u)
    assert len(g.boundary_nodes) == 1
    assert bundle_mismatches(g) == []
    assert all(L.faces[f].color != u for f, s in g.nodes if f >= 0)


def test_stitch_weights():
    L = build_color_code(8)
    g = build_unified_graph(L, Fraction(2), Fraction(1))
    w = {"r": Fraction(1), "g": Fraction(2), "b": Fraction(2)}
    rule = STITCH_RULES[DEFAULT_STITCH](w)
    seen = {e.kind: set() for e in g.edges}
    for e in g.edges:
        seen[e.kind].add(e.weight)
    assert seen["bulk"] == {Fraction(1), Fraction(2)}
    assert seen["corner"] == {rule["corner"]}
    assert seen["stitch"] == {rule["g"], rule["b"]}


def test_unknown_stitch_and_bad_weights():
    L = build_color_code(4)
    with pytest.raises(ValueError):
        build_unified_graph(L, stitch="nope")
    with pytest.raises(ValueError):
        build_unified_graph(L, 0, 1)


def test_wrong_stitch_is_detected():
    L = build_color_code(8)
    g = build_unified_graph(L)
    k = next(i for i, e in enumerate(g.edges) if e.kind == "stitch")
    e = g.edges[k]
    other = next(i for i in range(len(g.nodes)) if i not in (e.u, e.v))
    edges = list(g.edges)
    edges[k] = dataclasses.replace(e, v=other)
    bad = dataclasses.replace(g, edges=tuple(edges))
    assert bundle_mismatches(bad) != []


@given(st.lists(st.integers(0, 1), min_size=100, max_size=100))
def test_defects_are_face_copies(bits):
    L = build_color_code(8)
    flips = np.array(bits, dtype=bool)
    syn = syndrome(L, flips)
    for g in (build_unified_graph(L), build_restricted_graph(L, "g")):
        par = defect_instances(g, flips)
        want = np.zeros(len(g.nodes), bool)
        want[g.defects(syn)] = True
        mask = np.ones(len(g.nodes), bool)
        mask[list(g.boundary_nodes)] = False
        assert np.array_equal(par[mask], want[mask])
