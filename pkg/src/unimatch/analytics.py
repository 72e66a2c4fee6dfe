"""Closed-form entropic terms and exhaustive enumeration oracles.

The entropic term is the coefficient of the leading power of p in the
logical failure rate: the number of least-weight errors that fail, with
degenerate (coin-flip) decodes counted as one half.
"""

from __future__ import annotations

import itertools
import time
from dataclasses import dataclass, field
from fractions import Fraction
from math import comb

import numpy as np

from .decoder import BatchDecoder

FAILURE_CODE, COIN_CODE = 1, 2


def n_fail_surface_restricted(d: int) -> Fraction:
    _check_surface(d)
    h = d // 2
    return h * comb(d, h) * Fraction(2, 3) ** h


def n_fail_surface_unified(d: int) -> Fraction:
    _check_surface(d)
    h = d // 2
    return h * comb(d, h) * Fraction(1, 3) ** h


def n_fail_color_row(M: int, decoder: str) -> int:
    """Failing weight-M bit-flip patterns on one row of M red squares.

    ``k`` squares carry a pair, ``M - 2k`` a single flip; a pair can be any
    of the 4 failing pairs for the restricted decoder but only one of the 2
    horizontal pairs for the unified one.
    """
    if M < 1:
        raise ValueError("M must be positive")
    per_pair = {"restricted": 4, "unified": 2}[decoder]
    return sum(comb(M, k) * comb(M - k, M - 2 * k) * per_pair**k * 4 ** (M - 2 * k) for k in range(M // 2 + 1))


def n_fail_color(M: int, decoder: str) -> Fraction:
    """Entropic term over all M major rows with the one-half guessing factor."""
    return Fraction(M, 2) * n_fail_color_row(M, decoder)


def _check_surface(d: int) -> None:
    if d < 2 or d % 2:
        raise ValueError(f"surface distance must be even and >= 2, got {d}")


@dataclass
class EntropicReport:
    code: str
    size: int  # d for the surface code, M for the color code
    decoder: str
    w_A: Fraction
    w_B: Fraction
    analytic: Fraction
    enumerated: Fraction
    counts: dict = field(default_factory=dict)
    failing: list = field(default_factory=list)  # logged patterns, if requested
    off_row: dict = field(default_factory=dict)
    wall_time: float = 0.0

    @property
    def match(self) -> bool:
        return self.analytic == self.enumerated

    def row(self) -> dict:
        return {
            "code": self.code,
            "size": self.size,
            "decoder": self.decoder,
            "w_A": str(self.w_A),
            "w_B": str(self.w_B),
            "analytic": str(self.analytic),
            "enumerated": str(self.enumerated),
            "match": self.match,
        }


def _chunks(supports: np.ndarray, values: np.ndarray, n: int, chunk: int):
    """Yield error arrays placing every value tuple on every support."""
    per = len(values)
    step = max(1, chunk // per)
    for s in range(0, len(supports), step):
        sup = supports[s : s + step]
        errs = np.zeros((len(sup), per, n), dtype=np.uint8)
        rows = np.arange(len(sup))[:, None, None]
        cols = np.arange(per)[None, :, None]
        errs[rows, cols, sup[:, None, :]] = values[None, :, :]
        yield errs.reshape(-1, n)


def _tally(bd: BatchDecoder, errors: np.ndarray, counts: np.ndarray, log: list | None, describe):
    status = bd.assess(errors)
    counts += np.bincount(status, minlength=3)
    if log is not None:
        for e, s in zip(errors[status > 0], status[status > 0]):
            log.append((describe(e), "failure" if s == FAILURE_CODE else "coin-flip"))


def enumerate_surface_minweight(d: int, decoder: str = "unified", w_A=1, w_B=1, log: bool = False,
                                allow_long: bool = False, chunk: int = 60000,
                                stitch: str | None = None) -> EntropicReport:
    """Decode every weight-d/2 depolarising error and sum failures.

    Each error is mapped to the color code, decoded there, and its outcome
    judged by the logical class in the surface picture.
    """
    _check_surface(d)
    if d > 6 and not allow_long:
        raise ValueError("distances above 6 take hours; pass allow_long=True")
    t0 = time.perf_counter()
    kw = {"stitch": stitch} if stitch else {}
    bd = BatchDecoder("surface", d, decoder, w_A, w_B, **kw)
    h = d // 2
    supports = np.array(list(itertools.combinations(range(bd.n), h)), dtype=np.int64)
    values = np.array(list(itertools.product((1, 2, 3), repeat=h)), dtype=np.uint8)
    counts = np.zeros(3, dtype=np.int64)
    failing = [] if log else None
    coords = [q.coord for q in bd.surface.qubits]

    def describe(e):
        return tuple((coords[q], "IXYZ"[e[q]]) for q in np.flatnonzero(e))

    for errs in _chunks(supports, values, bd.n, chunk):
        _tally(bd, errs, counts, failing, describe)
    enumerated = (Fraction(int(counts[1])) + Fraction(int(counts[2]), 2)) / 3**h
    analytic = (n_fail_surface_unified if decoder == "unified" else n_fail_surface_restricted)(d)
    return EntropicReport(
        "surface", d, decoder, Fraction(w_A), Fraction(w_B), analytic, enumerated,
        {"success": int(counts[0]), "failure": int(counts[1]), "coin-flip": int(counts[2])},
        failing or [], {}, time.perf_counter() - t0,
    )


def enumerate_color_minweight(M: int, decoder: str = "unified", w_A=Fraction(11, 10), w_B=1,
                              off_row: bool = False, log: bool = False,
                              stitch: str | None = None) -> EntropicReport:
    """Decode every weight-M bit flip confined to one major row.

    A major row is a row of M red squares (4M qubits) on the distance-2M
    color code.  With ``off_row`` the remaining weight-M patterns are
    decoded too and their outcomes reported separately.
    """
    if M < 1:
        raise ValueError("M must be positive")
    t0 = time.perf_counter()
    kw = {"stitch": stitch} if stitch else {}
    bd = BatchDecoder("color", 2 * M, decoder, w_A, w_B, **kw)
    layout = bd.color
    row_of = np.array([layout.faces[layout.qubit_square[q][0]].coord[1] for q in range(layout.n)])
    coords = [q.coord for q in layout.qubits]

    def describe(e):
        return tuple(coords[q] for q in np.flatnonzero(e))

    ones = np.ones((1, M), dtype=np.uint8)
    counts = np.zeros(3, dtype=np.int64)
    failing = [] if log else None
    in_row = set()
    for y in range(0, 2 * M - 1, 2):
        qs = np.flatnonzero(row_of == y)
        supports = np.array(list(itertools.combinations(qs, M)), dtype=np.int64)
        in_row.update(map(tuple, supports))
        for errs in _chunks(supports, ones, layout.n, 60000):
            _tally(bd, errs, counts, failing, describe)
    enumerated = Fraction(int(counts[1])) + Fraction(int(counts[2]), 2)
    extra = {}
    if off_row:
        rest = np.array([s for s in itertools.combinations(range(layout.n), M) if s not in in_row], dtype=np.int64)
        oc = np.zeros(3, dtype=np.int64)
        for errs in _chunks(rest, ones, layout.n, 60000):
            _tally(bd, errs, oc, None, describe)
        extra = {"success": int(oc[0]), "failure": int(oc[1]), "coin-flip": int(oc[2])}
    return EntropicReport(
        "color", M, decoder, Fraction(w_A), Fraction(w_B), n_fail_color(M, decoder), enumerated,
        {"success": int(counts[0]), "failure": int(counts[1]), "coin-flip": int(counts[2])},
        failing or [], extra, time.perf_counter() - t0,
    )
