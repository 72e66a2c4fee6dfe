import itertools
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from unimatch.decoder import (
    BatchDecoder,
    ContractBreach,
    MatchingEngine,
    assess_failure,
    decode_restricted,
    decode_surface_error,
    decode_unified,
    solve_mwpm,
)
from unimatch.lattices import PauliError, build_color_code, syndrome
from unimatch.verification import brute_force_matching


def brute_class_minima(dist, boundary):
    """Least weight per logical class over all matchings and path classes."""
    K, m, _ = dist.shape
    best = {}

    def rec(left, acc, cls):
        if not left:
            if cls not in best or acc < best[cls]:
                best[cls] = acc
            return
        i, rest = left[0], left[1:]
        if boundary is not None:
            for c in range(K):
                rec(rest, acc + Fraction(int(boundary[c, i])), cls ^ c)
        for k, j in enumerate(rest):
            for c in range(K):
                rec(rest[:k] + rest[k + 1:], acc + Fraction(int(dist[c, i, j])), cls ^ c)

    rec(tuple(range(m)), Fraction(0), 0)
    return best


def instance(draw, m, K, with_b):
    vals = draw(st.lists(st.integers(1, 6), min_size=K * m * m, max_size=K * m * m))
    a = np.array(vals).reshape(K, m, m)
    dist = np.triu(a, 1)
    dist = dist + dist.transpose(0, 2, 1)
    bnd = np.array(draw(st.lists(st.integers(1, 6), min_size=K * m, max_size=K * m))).reshape(K, m) if with_b else None
    return dist, bnd


@given(st.data())
def test_mwpm_equals_brute_force(data):
    m = data.draw(st.integers(1, 10))
    with_b = m % 2 == 1 or data.draw(st.booleans())
    dist, bnd = instance(data.draw, m, 1, with_b)
    got = solve_mwpm(dist[0], None if bnd is None else bnd[0])
    assert got.weight == brute_force_matching(dist[0], None if bnd is None else bnd[0])
    # the returned pairs realise the weight
    total = sum(Fraction(int(bnd[0, i])) if j == -1 else Fraction(int(dist[0, i, j])) for i, j in got.pairs)
    assert total == got.weight


@given(st.data())
def test_optimal_classes_equal_brute_force(data):
    m = data.draw(st.integers(1, 6))
    with_b = m % 2 == 1 or data.draw(st.booleans())
    dist, bnd = instance(data.draw, m, 2, with_b)
    got = solve_mwpm(dist, bnd).class_minima
    want = brute_class_minima(dist, bnd)
    best = min(want.values())
    assert min(got.values()) == best
    assert {c for c, v in got.items() if v == best} == {c for c, v in want.items() if v == best}
    assert all(v >= want[c] for c, v in got.items())


def test_mwpm_rejects_bad_input():
    with pytest.raises(ValueError):
        solve_mwpm(np.zeros((3, 3)))
    with pytest.raises(ValueError):
        solve_mwpm(-np.ones((2, 2)))


def test_fractional_weights_exact():
    d = np.array([[0, Fraction(1, 3)], [Fraction(1, 3), 0]], dtype=object)
    assert solve_mwpm(d).weight == Fraction(1, 3)


def _random_errors(n, p, shots, seed):
    rng = np.random.default_rng(seed)
    v = rng.integers(1, 4, size=(shots, n)) * (rng.random((shots, n)) < p)
    return v.astype(np.uint8)


@pytest.mark.parametrize("decoder", ["unified", "restricted"])
def test_batch_matches_full_pipeline_weight_two(decoder):
    bd = BatchDecoder("surface", 4, decoder)
    codes = {"success": 0, "failure": 1, "coin-flip": 2}
    errs = []
    for sup in itertools.combinations(range(bd.n), 2):
        for ps in itertools.product((1, 2, 3), repeat=2):
            e = np.zeros(bd.n, np.uint8)
            e[list(sup)] = ps
            errs.append(e)
    errs = np.array(errs)
    fast = bd.assess(errs)
    # full pipeline on every failing or degenerate error plus a sample of the rest
    rng = np.random.default_rng(1)
    idx = np.r_[np.flatnonzero(fast), rng.choice(len(errs), 200, replace=False)]
    for i in idx:
        v = errs[i]
        e = PauliError(np.isin(v, (1, 2)), np.isin(v, (2, 3)))
        _, status = decode_surface_error(4, e, decoder)
        assert codes[status] == fast[i]


@pytest.mark.parametrize("decoder", ["unified", "restricted"])
def test_residual_closure_random(decoder):
    errs = _random_errors(25, 0.12, 60, 3)
    bd = BatchDecoder("surface", 4, decoder)
    fast = bd.assess(errs)
    codes = {"success": 0, "failure": 1, "coin-flip": 2}
    for v, f in zip(errs, fast):
        e = PauliError(np.isin(v, (1, 2)), np.isin(v, (2, 3)))
        _, status = decode_surface_error(4, e, decoder)
        assert codes[status] == f


def test_color_code_decoding_agrees():
    L = build_color_code(8)
    bd = BatchDecoder("color", 8, "unified", Fraction(11, 10), 1)
    rng = np.random.default_rng(5)
    errs = (rng.random((40, L.n)) < 0.06).astype(np.uint8)
    fast = bd.assess(errs)
    codes = {"success": 0, "failure": 1, "coin-flip": 2}
    for e, f in zip(errs, fast):
        out = decode_unified(L, syndrome(L, e), Fraction(11, 10), 1)
        assert not syndrome(L, out.correction ^ e.astype(bool)).any()
        assert codes[assess_failure(L, e.astype(bool), out)] == f
        out = decode_restricted(L, syndrome(L, e))
        assert not syndrome(L, out.correction ^ e.astype(bool)).any()


@pytest.mark.parametrize("decoder", ["unified", "restricted"])
def test_all_single_errors_corrected(decoder):
    bd = BatchDecoder("surface", 6, decoder)
    errs = np.zeros((3 * bd.n, bd.n), np.uint8)
    for q in range(bd.n):
        errs[3 * q : 3 * q + 3, q] = (1, 2, 3)
    assert not bd.assess(errs).any()
    assert not MatchingEngine(bd).assess(errs).any()


def test_matching_engine_agrees_when_not_degenerate():
    bd = BatchDecoder("surface", 4, "unified")
    eng = MatchingEngine(bd)
    errs = _random_errors(bd.n, 0.08, 3000, 11)
    status = bd.assess(errs)
    fast = eng.assess(errs)
    _, _, exact = bd.class_minima(errs)
    # blossom fallbacks cannot see ties, so only exactly solved shots compare
    clear = (status != 2) & exact
    assert clear.sum() > 2500
    assert np.array_equal(status[clear], fast[clear])


def test_crossing_check_raises():
    class Fake:
        correction = np.zeros(100, bool)
        logical_flip = (1,)
        degenerate = False
        flip_classes = frozenset()

    L = build_color_code(8)
    with pytest.raises(ContractBreach):
        assess_failure(L, np.zeros(L.n, bool), Fake())
