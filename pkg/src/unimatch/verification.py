"""Fast always-on invariant suite (d=4 surface, D=8 color)."""

from __future__ import annotations

import itertools
import time
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .decoder import ContractBreach, decode_surface_error, solve_mwpm
from .graphs import RestrictedLattice, build_restricted_graph, build_unified_graph, bundle_mismatches, verify_symmetry
from .lattices import PauliError, build_color_code, build_surface_code, commutation_ok, syndrome
from .unfold import build_map, map_error_to_color, map_syndrome_to_surface, verify_stabilizer_relations


@dataclass
class Check:
    name: str
    ok: bool
    detail: str = ""
    seconds: float = 0.0


def brute_force_matching(dist, boundary=None) -> Fraction:
    """Least total weight over all perfect matchings, by enumeration.

    With ``boundary`` any node may instead be matched to the boundary at
    the given cost.  Intended for at most about ten nodes.
    """
    m = len(dist)
    best = None

    def rec(left, acc):
        nonlocal best
        if best is not None and acc >= best:
            return
        if not left:
            best = acc
            return
        i, rest = left[0], left[1:]
        if boundary is not None:
            rec(rest, acc + Fraction(boundary[i]))
        for k, j in enumerate(rest):
            rec(rest[:k] + rest[k + 1:], acc + Fraction(dist[i][j]))

    rec(tuple(range(m)), Fraction(0))
    if best is None:
        raise ValueError("no perfect matching exists")
    return best


def random_instance(rng: np.random.Generator, m: int, with_boundary: bool):
    """Random symmetric integer distances with many ties."""
    a = rng.integers(1, 6, size=(m, m))
    dist = np.triu(a, 1)
    dist = dist + dist.T
    bnd = rng.integers(1, 6, size=m) if with_boundary else None
    return dist, bnd


def _symmetry_identities(layout, unified_builder) -> str:
    for u in "rgb":
        if not verify_symmetry(layout, RestrictedLattice(layout, u).symmetry_set()):
            return f"restricted lattice R_{u} product is not the identity"
    g = unified_builder(layout)
    copies = [layout.faces[f].support for f, _ in g.nodes]
    if not verify_symmetry(layout, copies):
        return "unified face copies do not multiply to the identity"
    bad = bundle_mismatches(g)
    if bad:
        return f"unified bundles wrong for qubits {bad[:5]}"
    for u in "gb":
        bad = bundle_mismatches(build_restricted_graph(layout, u))
        if bad:
            return f"R_{u} bundles wrong for qubits {bad[:5]}"
    return ""


def _syndrome_equivalence(d: int) -> str:
    emap = build_map(build_surface_code(d))
    rep = verify_stabilizer_relations(emap)
    if not rep.ok:
        return rep.message
    n = emap.surface.n
    for w in (1, 2):
        for sup in itertools.combinations(range(n), w):
            for ps in itertools.product("XYZ", repeat=w):
                e = PauliError.from_sites(n, dict(zip(sup, ps)))
                mapped = map_syndrome_to_surface(emap, syndrome(emap.color, map_error_to_color(emap, e)))
                if not np.array_equal(mapped, syndrome(emap.surface, e)):
                    return f"syndrome mismatch for {e.to_string()}"
    return ""


def _matching_oracle(seed: int, instances: int) -> str:
    rng = np.random.default_rng(seed)
    for _ in range(instances):
        m = int(rng.integers(1, 11))
        with_b = bool(m % 2) or bool(rng.integers(2))
        dist, bnd = random_instance(rng, m, with_b)
        got = solve_mwpm(dist, bnd).weight
        want = brute_force_matching(dist, bnd)
        if got != want:
            return f"solver {got} != brute force {want} on {m} nodes"
    return ""


def _weight_one_and_closure(d: int, seed: int, shots: int) -> str:
    n = build_surface_code(d).n
    for dec in ("unified", "restricted"):
        for q in range(n):
            for p in "XYZ":
                _, status = decode_surface_error(d, PauliError.from_sites(n, {q: p}), dec)
                if status != "success":
                    return f"{dec}: single {p} on qubit {q} gives {status}"
    rng = np.random.default_rng(seed)
    for _ in range(shots):
        v = rng.integers(0, 4, size=n) * (rng.random(n) < 0.1)
        e = PauliError(np.isin(v, (1, 2)), np.isin(v, (2, 3)))
        try:
            decode_surface_error(d, e, "unified")
        except ContractBreach as exc:
            return f"residual check failed: {exc}"
    return ""


def _reproducibility(seed: int) -> str:
    from .cli import main_to_string

    args = ["montecarlo", "--code", "surface", "--d", "4", "--p", "0.05", "--trials", "2000", "--seed", str(seed)]
    a, b = main_to_string(args), main_to_string(args)
    if a != b:
        return "montecarlo output differs between identical runs"
    args = ["splitting", "--code", "surface", "--d", "4", "--p-start", "0.05", "--p-end", "0.03",
            "--samples", "200", "--walkers", "100", "--anchor-trials", "500", "--seed", str(seed)]
    if main_to_string(args) != main_to_string(args):
        return "splitting output differs between identical runs"
    return ""


def verify_suite(seed: int = 7, unified_builder=build_unified_graph) -> list[Check]:
    """Run every invariant suite; each check reports ok and a diagnostic."""
    surface, color = build_surface_code(4), build_color_code(8)
    plan = [
        ("commutation", lambda: "" if commutation_ok(surface) and commutation_ok(color) else "stabilizers anticommute"),
        ("symmetry identities", lambda: _symmetry_identities(color, unified_builder)),
        ("syndrome equivalence d=4", lambda: _syndrome_equivalence(4)),
        ("matching vs brute force", lambda: _matching_oracle(seed, 300)),
        ("weight-1 correction and residual closure", lambda: _weight_one_and_closure(4, seed, 100)),
        ("seed reproducibility", lambda: _reproducibility(seed)),
    ]
    out = []
    for name, fn in plan:
        t0 = time.perf_counter()
        try:
            msg = fn()
        except Exception as exc:  # a crash is a failed check, not a crashed suite
            msg = f"{type(exc).__name__}: {exc}"
        out.append(Check(name, not msg, msg, time.perf_counter() - t0))
    return out
