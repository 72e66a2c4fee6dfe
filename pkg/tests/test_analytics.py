from fractions import Fraction
from math import comb

import pytest
from hypothesis import given
from hypothesis import strategies as st

from unimatch.analytics import (
    enumerate_color_minweight,
    enumerate_surface_minweight,
    n_fail_color,
    n_fail_color_row,
    n_fail_surface_restricted,
    n_fail_surface_unified,
)


def test_closed_form_values():
    assert n_fail_surface_restricted(4) == Fraction(16, 3)
    assert n_fail_surface_unified(4) == Fraction(4, 3)
    assert n_fail_surface_restricted(6) == Fraction(160, 9)
    assert n_fail_surface_unified(6) == Fraction(20, 9)
    assert n_fail_color(2, "restricted") == 24
    assert n_fail_color(2, "unified") == 20


@given(st.integers(1, 15))
def test_ratio_law(h):
    d = 2 * h
    assert n_fail_surface_restricted(d) / n_fail_surface_unified(d) == 2**h


def brute_row(M, per_pair):
    """Count weight-M flips on M squares of 4 qubits failing per the row rule.

    A square holding one flip fails alone in 4 ways; two flips on a square
    contribute ``per_pair`` failing arrangements; three or more are not
    least weight and never occur with total weight M and every square hit.
    """
    total = 0
    for pattern in _compositions(M, M):
        if any(k > 2 for k in pattern):
            continue
        if sum(1 for k in pattern if k == 2) * 2 + sum(1 for k in pattern if k == 1) != M:
            continue
        ways = 1
        for k in pattern:
            ways *= {0: 1, 1: 4, 2: per_pair}[k]
        total += ways
    return total


def _compositions(total, parts):
    if parts == 0:
        if total == 0:
            yield ()
        return
    for k in range(total + 1):
        for rest in _compositions(total - k, parts - 1):
            yield (k,) + rest


@given(st.integers(1, 7), st.sampled_from(["restricted", "unified"]))
def test_color_row_sum_matches_direct_count(M, decoder):
    per_pair = {"restricted": 4, "unified": 2}[decoder]
    assert n_fail_color_row(M, decoder) == brute_row(M, per_pair)


def test_closed_form_guards():
    with pytest.raises(ValueError):
        n_fail_surface_unified(5)
    with pytest.raises(ValueError):
        n_fail_color_row(0, "unified")


@pytest.mark.parametrize("decoder,want", [("restricted", Fraction(16, 3)), ("unified", Fraction(4, 3))])
def test_enumerate_d4(decoder, want):
    rep = enumerate_surface_minweight(4, decoder)
    assert rep.enumerated == want and rep.match
    assert sum(rep.counts.values()) == comb(25, 2) * 9


def test_enumerate_color_m2():
    assert enumerate_color_minweight(2, "restricted").enumerated == 24
    assert enumerate_color_minweight(2, "unified", Fraction(11, 10), 1).enumerated == 20


def test_long_runs_need_opt_in():
    with pytest.raises(ValueError):
        enumerate_surface_minweight(8)
