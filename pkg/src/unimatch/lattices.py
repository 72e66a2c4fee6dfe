"""Planar surface code and square-octagon color code layouts.

Both layouts share one integer coordinate system.  For a surface code of
distance ``d`` the "site grid" is ``[0, 2d-2] x [0, 2d-2]``:

* sites with ``x + y`` even carry surface qubits (``y`` even: horizontal
  edges, ``y`` odd: vertical edges) and, in the color code, red squares;
* sites with ``x`` odd and ``y`` even are surface vertices (stars) and
  blue octagons;
* sites with ``x`` even and ``y`` odd are surface plaquettes (faces) and
  green octagons.

The color code of distance ``D = 2d`` places four qubits at the corners of
each red square.  Corner ``(cx, cy)`` of the square at ``(x, y)`` has qubit
coordinate ``(2x + cx, 2y + cy)``; ``cx = 0`` is the left corner and
``cy = 0`` the bottom corner.  Left/right boundaries of the color code are
blue, top/bottom are green and the four corner qubits touch a red face only.

Surface-code boundaries are rough on the left/right (dangling horizontal
edges) and smooth on the top/bottom.  Everything is enumerated row-major,
i.e. sorted by ``(y, x)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

COLORS = ("r", "g", "b")


@dataclass(frozen=True)
class Qubit:
    id: int
    coord: tuple[int, int]


@dataclass(frozen=True)
class Stabilizer:
    id: int
    pauli_type: str
    support: tuple[int, ...]
    color: str | None = None
    coord: tuple[int, int] | None = None


class PauliError:
    """A Pauli operator on a surface code, stored as two boolean supports.

    A site with both ``x`` and ``z`` set carries a Y.
    """

    __slots__ = ("x", "z")

    def __init__(self, x, z):
        self.x = np.asarray(x, dtype=bool)
        self.z = np.asarray(z, dtype=bool)
        if self.x.shape != self.z.shape:
            raise ValueError("x and z supports differ in length")

    @classmethod
    def identity(cls, n: int) -> "PauliError":
        return cls(np.zeros(n, dtype=bool), np.zeros(n, dtype=bool))

    @classmethod
    def from_sites(cls, n: int, sites: dict[int, str]) -> "PauliError":
        """Build an error from ``{qubit: 'X' | 'Y' | 'Z'}``."""
        err = cls.identity(n)
        for q, p in sites.items():
            if p not in ("X", "Y", "Z", "I"):
                raise ValueError(f"unknown Pauli {p!r}")
            err.x[q] = p in ("X", "Y")
            err.z[q] = p in ("Z", "Y")
        return err

    def __xor__(self, other: "PauliError") -> "PauliError":
        return PauliError(self.x ^ other.x, self.z ^ other.z)

    def __eq__(self, other) -> bool:
        if not isinstance(other, PauliError):
            return NotImplemented
        return bool(np.array_equal(self.x, other.x) and np.array_equal(self.z, other.z))

    def __hash__(self):
        return hash((self.x.tobytes(), self.z.tobytes()))

    def __repr__(self) -> str:
        return f"PauliError({self.to_string()!r})"

    @property
    def n(self) -> int:
        return len(self.x)

    @property
    def weight(self) -> int:
        return int(np.count_nonzero(self.x | self.z))

    def sites(self) -> dict[int, str]:
        out = {}
        for q in np.flatnonzero(self.x | self.z):
            out[int(q)] = "Y" if self.x[q] and self.z[q] else ("X" if self.x[q] else "Z")
        return out

    def to_string(self) -> str:
        chars = np.full(self.n, "I")
        chars[self.x & ~self.z] = "X"
        chars[self.z & ~self.x] = "Z"
        chars[self.x & self.z] = "Y"
        return "".join(chars)


# --------------------------------------------------------------------------
# GF(2) helpers on Python integers used as bit sets.


def _to_int(bits) -> int:
    packed = np.packbits(np.asarray(bits, dtype=np.uint8), bitorder="little")
    return int.from_bytes(packed.tobytes(), "little")


class GF2Span:
    """Row span over GF(2) kept in reduced form for membership tests."""

    def __init__(self, rows=()):
        self._pivots: dict[int, int] = {}
        for row in rows:
            self.add(row)

    def _reduce(self, v: int) -> int:
        while v:
            top = v.bit_length() - 1
            p = self._pivots.get(top)
            if p is None:
                return v
            v ^= p
        return 0

    def add(self, row) -> bool:
        v = self._reduce(row if isinstance(row, int) else _to_int(row))
        if v:
            self._pivots[v.bit_length() - 1] = v
            return True
        return False

    def __contains__(self, row) -> bool:
        return self._reduce(row if isinstance(row, int) else _to_int(row)) == 0

    @property
    def rank(self) -> int:
        return len(self._pivots)


def gf2_rank(matrix) -> int:
    return GF2Span(np.asarray(matrix, dtype=np.uint8)).rank


def _support_matrix(supports, n: int) -> np.ndarray:
    m = np.zeros((len(supports), n), dtype=np.uint8)
    for i, s in enumerate(supports):
        m[i, list(s)] = 1
    return m


# --------------------------------------------------------------------------
# Surface code


@dataclass(frozen=True, eq=False)
class SurfaceLayout:
    distance: int
    qubits: tuple[Qubit, ...]
    stars: tuple[Stabilizer, ...]
    faces: tuple[Stabilizer, ...]
    logical_X: np.ndarray
    logical_Z: np.ndarray
    index: dict = field(repr=False)

    @property
    def n(self) -> int:
        return len(self.qubits)

    @property
    def stabilizers(self) -> tuple[Stabilizer, ...]:
        return self.stars + self.faces

    @cached_property
    def hx(self) -> np.ndarray:
        """Star (X-type) check matrix; rows see Z errors."""
        return _support_matrix([s.support for s in self.stars], self.n)

    @cached_property
    def hz(self) -> np.ndarray:
        """Face (Z-type) check matrix; rows see X errors."""
        return _support_matrix([s.support for s in self.faces], self.n)

    @cached_property
    def _span(self) -> GF2Span:
        # symplectic vectors (x | z) packed as x + (z << n)
        span = GF2Span()
        for s in self.stars:
            span.add(_to_int(np.r_[_indicator(s.support, self.n), np.zeros(self.n)]))
        for s in self.faces:
            span.add(_to_int(np.r_[np.zeros(self.n), _indicator(s.support, self.n)]))
        return span

    def in_stabilizer_group(self, op: PauliError) -> bool:
        return _to_int(np.r_[op.x, op.z]) in self._span


def _indicator(support, n):
    v = np.zeros(n, dtype=np.uint8)
    v[list(support)] = 1
    return v


def _check_even(d: int, name: str, minimum: int) -> None:
    if not isinstance(d, (int, np.integer)) or isinstance(d, bool):
        raise TypeError(f"{name} must be an integer")
    if d < minimum or d % 2:
        raise ValueError(f"{name} must be even and >= {minimum}, got {d}")


def build_surface_code(d: int) -> SurfaceLayout:
    """Unrotated planar surface code with qubits on edges, even distance ``d``."""
    _check_even(d, "d", 2)
    top = 2 * d - 2
    coords = sorted(
        ((x, y) for y in range(top + 1) for x in range(top + 1) if (x + y) % 2 == 0),
        key=lambda c: (c[1], c[0]),
    )
    index = {c: i for i, c in enumerate(coords)}
    qubits = tuple(Qubit(i, c) for i, c in enumerate(coords))

    def neighbours(x, y):
        return tuple(
            index[c] for c in ((x, y - 1), (x - 1, y), (x + 1, y), (x, y + 1)) if c in index
        )

    star_sites = [(x, y) for y in range(0, top + 1, 2) for x in range(1, top, 2)]
    face_sites = [(x, y) for y in range(1, top, 2) for x in range(0, top + 1, 2)]
    stars = tuple(
        Stabilizer(i, "X", tuple(sorted(neighbours(*c))), None, c) for i, c in enumerate(star_sites)
    )
    off = len(stars)
    faces = tuple(
        Stabilizer(off + i, "Z", tuple(sorted(neighbours(*c))), None, c)
        for i, c in enumerate(face_sites)
    )
    n = len(coords)
    logical_X = np.zeros(n, dtype=bool)  # vertical string on the left column
    logical_Z = np.zeros(n, dtype=bool)  # horizontal string on the bottom row
    for k in range(d):
        logical_X[index[(0, 2 * k)]] = True
        logical_Z[index[(2 * k, 0)]] = True
    return SurfaceLayout(d, qubits, stars, faces, logical_X, logical_Z, index)


# --------------------------------------------------------------------------
# Color code

# corner order inside a square: (cx, cy)
CORNERS = ((0, 1), (1, 1), (0, 0), (1, 0))
CORNER_NAMES = ("TL", "TR", "BL", "BR")


@dataclass(frozen=True)
class Face:
    id: int
    color: str
    coord: tuple[int, int]
    support: tuple[int, ...]


@dataclass(frozen=True, eq=False)
class ColorLayout:
    distance: int
    qubits: tuple[Qubit, ...]
    faces: tuple[Face, ...]
    boundary_colors: dict
    corner_colors: tuple[str, ...]
    logical_X: dict
    logical_Z: dict
    index: dict = field(repr=False)
    face_index: dict = field(repr=False)
    # per qubit: (red square face id, corner (cx, cy))
    qubit_square: tuple = field(repr=False)

    @property
    def n(self) -> int:
        return len(self.qubits)

    @property
    def stabilizers(self) -> tuple[Stabilizer, ...]:
        """X and Z stabilizer pair of every face (ids ``2f`` and ``2f + 1``)."""
        out = []
        for f in self.faces:
            out.append(Stabilizer(2 * f.id, "X", f.support, f.color, f.coord))
            out.append(Stabilizer(2 * f.id + 1, "Z", f.support, f.color, f.coord))
        return tuple(out)

    def faces_of(self, color: str) -> tuple[Face, ...]:
        return tuple(f for f in self.faces if f.color == color)

    @cached_property
    def h(self) -> np.ndarray:
        """Face-by-qubit incidence; also the Z check matrix seeing bit flips."""
        return _support_matrix([f.support for f in self.faces], self.n)

    @cached_property
    def qubit_faces(self) -> tuple[tuple[int, ...], ...]:
        out = [[] for _ in range(self.n)]
        for f in self.faces:
            for q in f.support:
                out[q].append(f.id)
        return tuple(tuple(v) for v in out)

    @cached_property
    def _span(self) -> GF2Span:
        return GF2Span(self.h)

    def in_stabilizer_group(self, op) -> bool:
        """Membership of an X-type (or Z-type) operator in the face span."""
        return np.asarray(op, dtype=np.uint8) in self._span


def build_color_code(D: int) -> ColorLayout:
    """Square-octagon color code with square boundaries, even distance ``D``."""
    _check_even(D, "D", 4)
    top = D - 2
    sites = [(x, y) for y in range(top + 1) for x in range(top + 1)]
    squares = [c for c in sites if (c[0] + c[1]) % 2 == 0]
    qcoords = sorted(
        ((2 * x + cx, 2 * y + cy) for (x, y) in squares for (cx, cy) in CORNERS),
        key=lambda c: (c[1], c[0]),
    )
    index = {c: i for i, c in enumerate(qcoords)}
    qubits = tuple(Qubit(i, c) for i, c in enumerate(qcoords))

    def corner(sq, cx, cy):
        return index[(2 * sq[0] + cx, 2 * sq[1] + cy)]

    square_set = set(squares)
    faces = []
    for (x, y) in sites:
        if (x + y) % 2 == 0:
            color = "r"
            support = [corner((x, y), cx, cy) for cx, cy in CORNERS]
        else:
            color = "b" if x % 2 else "g"
            support = []
            for (sx, sy), side in (
                ((x - 1, y), ((1, 0), (1, 1))),
                ((x + 1, y), ((0, 0), (0, 1))),
                ((x, y - 1), ((0, 1), (1, 1))),
                ((x, y + 1), ((0, 0), (1, 0))),
            ):
                if (sx, sy) in square_set:
                    support += [corner((sx, sy), cx, cy) for cx, cy in side]
        faces.append(Face(len(faces), color, (x, y), tuple(sorted(support))))
    face_index = {f.coord: f.id for f in faces}

    qubit_square = [None] * len(qcoords)
    for (x, y) in squares:
        for cx, cy in CORNERS:
            qubit_square[corner((x, y), cx, cy)] = (face_index[(x, y)], (cx, cy))

    n = len(qcoords)
    bottom = np.zeros(n, dtype=bool)
    left = np.zeros(n, dtype=bool)
    for k in range(0, top + 1, 2):
        bottom[[corner((k, 0), 0, 0), corner((k, 0), 1, 0)]] = True
        left[[corner((0, k), 0, 0), corner((0, k), 0, 1)]] = True
    # logicals are labelled by the boundary they lie on
    logical_X = {"g": bottom.copy(), "b": left.copy()}
    logical_Z = {"g": bottom.copy(), "b": left.copy()}
    return ColorLayout(
        D,
        qubits,
        tuple(faces),
        {"left": "b", "right": "b", "bottom": "g", "top": "g"},
        ("r", "r", "r", "r"),
        logical_X,
        logical_Z,
        index,
        face_index,
        tuple(qubit_square),
    )


# --------------------------------------------------------------------------
# Syndromes and logical classes


def syndrome(layout, error) -> np.ndarray:
    """Violated stabilizers as a boolean vector.

    Surface code: indexed like ``layout.stabilizers`` (stars then faces).
    Color code: error is a bit-flip support; indexed by face id, each entry
    being the face's Z stabilizer.
    """
    if isinstance(layout, SurfaceLayout):
        if not isinstance(error, PauliError):
            raise TypeError("surface-code errors are PauliError instances")
        z = error.z.astype(np.uint8)
        x = error.x.astype(np.uint8)
        return np.r_[(layout.hx @ z) % 2, (layout.hz @ x) % 2].astype(bool)
    e = np.asarray(error, dtype=np.uint8)
    return ((layout.h @ e) % 2).astype(bool)


def syndrome_batch(layout, x=None, z=None) -> np.ndarray:
    """Row-wise syndromes for many errors at once (shots x stabilizers)."""
    if isinstance(layout, SurfaceLayout):
        sx = (z.astype(np.uint8) @ layout.hx.T) % 2
        sz = (x.astype(np.uint8) @ layout.hz.T) % 2
        return np.hstack([sx, sz]).astype(bool)
    return ((x.astype(np.uint8) @ layout.h.T) % 2).astype(bool)


def violated(layout, error) -> frozenset[int]:
    return frozenset(int(i) for i in np.flatnonzero(syndrome(layout, error)))


def class_bits(layout, op) -> tuple[int, ...]:
    """Commutation bits of an operator against the fixed logical detectors.

    Surface code: ``(z-part vs logical_X, x-part vs logical_Z)``; the first
    bit flags a horizontal logical Z string, the second a vertical X string.
    Color code (X-type operators): ``(overlap with Z_b, overlap with Z_g)``;
    the first bit flags a horizontal X string, the second a vertical one.
    The two labellings correspond under the unfolding map.
    """
    if isinstance(layout, SurfaceLayout):
        return (
            int(np.count_nonzero(op.z & layout.logical_X) % 2),
            int(np.count_nonzero(op.x & layout.logical_Z) % 2),
        )
    op = np.asarray(op, dtype=bool)
    return (
        int(np.count_nonzero(op & layout.logical_Z["b"]) % 2),
        int(np.count_nonzero(op & layout.logical_Z["g"]) % 2),
    )


def logical_class(layout, residual) -> tuple[int, ...]:
    """Logical class of an operator with empty syndrome.

    Returns the commutation bits of :func:`class_bits`; all zeros means the
    residual lies in the stabilizer group.  Both the commutation label and
    GF(2) membership are computed and must agree.
    """
    if syndrome(layout, residual).any():
        raise ValueError("residual has a nonempty syndrome")
    bits = class_bits(layout, residual)
    member = layout.in_stabilizer_group(residual)
    if member != (not any(bits)):
        raise AssertionError("logical label disagrees with stabilizer membership")
    return bits


def commutation_ok(layout) -> bool:
    """Every pair of X-type and Z-type generators overlaps evenly."""
    if isinstance(layout, SurfaceLayout):
        return not ((layout.hx.astype(int) @ layout.hz.T.astype(int)) % 2).any()
    return not ((layout.h.astype(int) @ layout.h.T.astype(int)) % 2).any()
