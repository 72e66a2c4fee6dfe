"""Unfolding correspondence between the surface code and the color code.

Each surface qubit sits at the same site as one red square of the color code
with twice the distance.  The square carries a [[4,2,2]] code whose two
logical X operators are weight-2 pairs; a surface Pauli on the edge becomes
one of those pairs:

* Z -> the pair flipping the two blue octagons at the edge's endpoints,
* X -> the pair flipping the two green octagons beside the edge,
* Y -> their sum, a diagonal pair.

Blue octagon defects then reproduce star defects and green octagon defects
reproduce face defects.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .lattices import ColorLayout, GF2Span, PauliError, SurfaceLayout, build_color_code

HORIZONTAL = "horizontal_edge"
VERTICAL = "vertical_edge"

# local order of the four corners (cx, cy) per orientation; the vertical
# order is the horizontal one rotated by 90 degrees clockwise
LOCAL_ORDER = {
    HORIZONTAL: ((0, 1), (1, 1), (0, 0), (1, 0)),  # TL TR BL BR
    VERTICAL: ((1, 1), (1, 0), (0, 1), (0, 0)),  # TR BR TL BL
}

# [[4,2,2]] logical representatives as local positions
FRAME = {
    "X1": (0, 2),  # XIXI
    "Z1": (0, 1),  # ZZII
    "X2": (0, 1),  # XXII
    "Z2": (0, 2),  # ZIZI
}

# local positions flipped by each single-qubit surface Pauli
PAULI_PAIRS = {"X": FRAME["X1"], "Z": FRAME["X2"], "Y": (1, 2)}


@dataclass(frozen=True, eq=False)
class EdgeSquareMap:
    surface: SurfaceLayout
    color: ColorLayout
    square_of: tuple[int, ...]  # surface qubit -> red face id
    orientation: tuple[str, ...]  # per surface qubit
    local: tuple[tuple[int, int, int, int], ...]  # per surface qubit, color qubit ids

    def qubit_of(self, face_id: int) -> int:
        return self.square_of.index(face_id)

    def pair(self, q: int, pauli: str) -> tuple[int, int]:
        a, b = PAULI_PAIRS[pauli]
        return self.local[q][a], self.local[q][b]

    def to_dict(self) -> dict:
        return {
            "d": self.surface.distance,
            "D": self.color.distance,
            "entries": [
                {
                    "surface_qubit": q,
                    "red_square": self.square_of[q],
                    "orientation": self.orientation[q],
                    "local_order": list(self.local[q]),
                }
                for q in range(self.surface.n)
            ],
        }


def build_map(surface: SurfaceLayout, color: ColorLayout | None = None) -> EdgeSquareMap:
    """Pair a surface code of distance d with the color code of distance 2d."""
    d = surface.distance
    if color is None:
        color = build_color_code(2 * d)
    if color.distance != 2 * d:
        raise ValueError(f"color distance must be {2 * d}, got {color.distance}")
    square_of, orientation, local = [], [], []
    for qb in surface.qubits:
        x, y = qb.coord
        square_of.append(color.face_index[(x, y)])
        kind = HORIZONTAL if y % 2 == 0 else VERTICAL
        orientation.append(kind)
        local.append(tuple(color.index[(2 * x + cx, 2 * y + cy)] for cx, cy in LOCAL_ORDER[kind]))
    return EdgeSquareMap(surface, color, tuple(square_of), tuple(orientation), tuple(local))


def pair_table(emap: EdgeSquareMap) -> np.ndarray:
    """``table[q, k]`` = the two color qubits flipped by Pauli ``'XYZ'[k]`` on q."""
    return np.array([[emap.pair(q, p) for p in "XYZ"] for q in range(emap.surface.n)])


def map_error_to_color(emap: EdgeSquareMap, error: PauliError) -> np.ndarray:
    flips = np.zeros(emap.color.n, dtype=bool)
    for q, p in error.sites().items():
        a, b = emap.pair(q, p)
        flips[a] ^= True
        flips[b] ^= True
    return flips


def map_errors_batch(emap: EdgeSquareMap, x: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Vectorised :func:`map_error_to_color` over rows of (x, z) supports."""
    tab = pair_table(emap)
    out = np.zeros((x.shape[0], emap.color.n), dtype=np.uint8)
    for k, mask in enumerate((x & ~z, x & z, z & ~x)):
        for j in range(2):
            m = np.zeros((emap.surface.n, emap.color.n), dtype=np.uint8)
            m[np.arange(emap.surface.n), tab[:, k, j]] = 1
            out ^= (mask.astype(np.uint8) @ m).astype(np.uint8)
    return out.astype(bool)


_PATTERN_PAULI = {}
for _p, (_a, _b) in PAULI_PAIRS.items():
    _v = [0, 0, 0, 0]
    _v[_a] = _v[_b] = 1
    _PATTERN_PAULI[tuple(_v)] = _p
    _PATTERN_PAULI[tuple(1 - t for t in _v)] = _p
_PATTERN_PAULI[(0, 0, 0, 0)] = "I"
_PATTERN_PAULI[(1, 1, 1, 1)] = "I"


def unmap_bitflips(emap: EdgeSquareMap, flips) -> PauliError:
    """Inverse of the map on bit flips with even weight on every red square.

    The result is unique because square patterns are only defined up to the
    red face stabilizer.
    """
    flips = np.asarray(flips, dtype=bool)
    sites = {}
    for q in range(emap.surface.n):
        pattern = tuple(int(flips[i]) for i in emap.local[q])
        if sum(pattern) % 2:
            raise ValueError(f"odd flip parity on red square {emap.square_of[q]}")
        p = _PATTERN_PAULI[pattern]
        if p != "I":
            sites[q] = p
    return PauliError.from_sites(emap.surface.n, sites)


def map_syndrome_to_surface(emap: EdgeSquareMap, color_syndrome) -> np.ndarray:
    """Translate octagon defects to star (blue) and face (green) defects."""
    color_syndrome = np.asarray(color_syndrome, dtype=bool)
    surface, color = emap.surface, emap.color
    out = np.zeros(len(surface.stabilizers), dtype=bool)
    stab_at = {s.coord: s.id for s in surface.stabilizers}
    for f in np.flatnonzero(color_syndrome):
        face = color.faces[f]
        if face.color == "r":
            raise ValueError(f"defect on red face {f} has no surface counterpart")
        out[stab_at[face.coord]] = True
    return out


@dataclass
class RelationReport:
    ok: bool
    checked: int
    first_violation: int | None = None
    message: str = ""


def verify_stabilizer_relations(emap: EdgeSquareMap) -> RelationReport:
    """Check the octagon identities and the per-square frame identities.

    For every octagon, each adjacent red square contributes the pair of its
    corners lying on the octagon; that pair must be the frame logical tied
    to the octagon's surface stabilizer type (up to the red face operator),
    and the pairs must tile the octagon support.  The surface stabilizer's
    image must also differ from the octagon by a product of red squares.
    """
    surface, color = emap.surface, emap.color
    if FRAME["X1"] != FRAME["Z2"] or FRAME["Z1"] != FRAME["X2"]:
        return RelationReport(False, 0, None, "frame identification broken")
    stab_at = {s.coord: s for s in surface.stabilizers}
    red_span = color.faces_of("r")
    red_rows = np.zeros((len(red_span), color.n), dtype=np.uint8)
    for i, f in enumerate(red_span):
        red_rows[i, list(f.support)] = 1
    span = GF2Span(red_rows)
    checked = 0
    for face in color.faces:
        if face.color == "r":
            continue
        checked += 1
        stab = stab_at[face.coord]
        key = "X1" if stab.pauli_type == "X" else "X2"
        covered = set()
        for q in stab.support:
            loc = emap.local[q]
            side = {i for i in loc if i in face.support}
            rep = {loc[k] for k in FRAME[key]}
            if side != rep and side != set(loc) - rep:
                return RelationReport(False, checked, face.id, f"square of qubit {q} misoriented")
            if side & covered:
                return RelationReport(False, checked, face.id, "overlapping side pairs")
            covered |= side
        if covered != set(face.support):
            return RelationReport(False, checked, face.id, "side pairs do not tile the octagon")
        image = np.zeros(color.n, dtype=bool)
        pauli = "X" if stab.pauli_type == "X" else "Z"
        for q in stab.support:
            for i in emap.pair(q, pauli):
                image[i] ^= True
        diff = image.copy()
        diff[list(face.support)] ^= True
        if diff.astype(np.uint8) not in span:
            return RelationReport(False, checked, face.id, "image not equivalent to octagon")
    return RelationReport(True, checked)
