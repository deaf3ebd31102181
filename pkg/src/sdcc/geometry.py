"""Triangular color-code layouts on a square qubit grid.

The code is laid out "pointy-top": the tile indexed (a, b) has its auxiliary
pair on rows 2a and 2a+1 of column a+2b, and its (up to six) data qubits on
the surrounding sites.  Readout lines are the row+col diagonals.

The triangular patch is cut out of the infinite tiling by three half-plane
conditions related by the lattice's 120-degree rotation.  That rotation is
not an affine map of the square-grid coordinates, so it is applied
combinatorially per site (tile (a, b) maps to (-a-b, a) and each hexagon
vertex slot maps to the next rotated slot).
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum
from typing import Sequence


class Role(str, Enum):
    DATA = "Data"
    AUX_X = "AuxX"
    AUX_Z = "AuxZ"


COLOR_NAMES = ("Red", "Green", "Blue")
KIND_NAMES = ("Hexagon", "Quadrilateral")

# Hexagon vertex slots relative to the tile's top-center row 2a, col a+2b,
# in cyclic order: top, mid-right, bottom-right, bottom, bottom-left, mid-left.
_SLOT_ORDER = ("T", "MR", "BR", "B", "BL", "ML")
_SLOT_POS = {
    "T": (-1, 0),
    "MR": (0, 1),
    "BR": (1, 1),
    "B": (2, 0),
    "BL": (1, -1),
    "ML": (0, -1),
}
# Image of each slot under the 120-degree rotation.
_RHO_SLOT = {"T": "BL", "MR": "ML", "BR": "T", "B": "MR", "BL": "BR", "ML": "B"}


@dataclass(frozen=True)
class Qubit:
    index: int
    row: int
    col: int
    role: Role

    @property
    def coord(self) -> tuple[int, int]:
        return (self.row, self.col)

    @property
    def readout_line(self) -> int:
        return self.row + self.col


@dataclass(frozen=True)
class Tile:
    color: int  # 0=Red, 1=Green, 2=Blue
    kind: str  # "Hexagon" | "Quadrilateral"
    data_support: tuple[int, ...]  # qubit indices, cyclic slot order
    aux_x: int
    aux_z: int

    def __post_init__(self) -> None:
        want = 6 if self.kind == "Hexagon" else 4
        if len(self.data_support) != want:
            raise ValueError(
                f"{self.kind} tile must have {want} data qubits, "
                f"got {len(self.data_support)}"
            )


@dataclass(frozen=True)
class CodeLayout:
    distance: int
    qubits: tuple[Qubit, ...]
    tiles: tuple[Tile, ...]
    logical_x: tuple[int, ...]
    logical_z: tuple[int, ...]
    deformed: bool = False
    swap_pairs: tuple[tuple[int, int], ...] = ()  # (aux_x index, data index)

    @property
    def data_qubits(self) -> tuple[Qubit, ...]:
        return tuple(q for q in self.qubits if q.role is Role.DATA)

    @property
    def aux_qubits(self) -> tuple[Qubit, ...]:
        return tuple(q for q in self.qubits if q.role is not Role.DATA)

    @property
    def num_qubits(self) -> int:
        return len(self.qubits)

    def qubit_at(self, coord: tuple[int, int]) -> Qubit:
        return self._by_coord()[coord]

    def _by_coord(self) -> dict[tuple[int, int], Qubit]:
        return {q.coord: q for q in self.qubits}


def qubit_count(code: str, d: int) -> int:
    """Total qubit count of a distance-d patch, 'color' or 'surface'."""
    _check_distance(d)
    if code == "color":
        return (3 * d * d - 1) // 2
    if code == "surface":
        return 2 * d * d - 1
    raise ValueError(f"unknown code family: {code!r}")


def _check_distance(d: int) -> None:
    if d < 3 or d % 2 == 0:
        raise ValueError(f"distance must be an odd integer >= 3, got {d}")


# ---------------------------------------------------------------------------
# Patch region
# ---------------------------------------------------------------------------

def _center(a: int, b: int) -> tuple[int, int]:
    return (2 * a, a + 2 * b)


def _site_kind(row: int, col: int) -> str:
    """'c' for a tile-center (aux) site, 'd' for a data site."""
    if row % 2 == 0:
        a = row // 2
        return "c" if (col - a) % 2 == 0 else "d"
    a = (row - 1) // 2
    return "c" if (col - a) % 2 == 0 else "d"


def _data_slot(row: int, col: int) -> tuple[int, int, str]:
    """One (a, b, slot) representation of a data site."""
    for slot, (dr, dc) in _SLOT_POS.items():
        rc, cc = row - dr, col - dc
        if rc % 2 == 0 and (cc - rc // 2) % 2 == 0:
            return (rc // 2, (cc - rc // 2) // 2, slot)
    raise ValueError(f"({row}, {col}) is not a data site")


def _rotate(point: tuple[int, int]) -> tuple[int, int]:
    """120-degree rotation of the tiling, acting on grid sites."""
    row, col = point
    if _site_kind(row, col) == "c":
        top = row % 2 == 0
        a = row // 2 if top else (row - 1) // 2
        b = (col - a) // 2
        cr, cc = _center(-a - b, a)
        return (cr, cc) if top else (cr + 1, cc)
    a, b, slot = _data_slot(row, col)
    cr, cc = _center(-a - b, a)
    dr, dc = _SLOT_POS[_RHO_SLOT[slot]]
    return (cr + dr, cc + dc)


def _in_region(point: tuple[int, int], c2: int, c3: int) -> bool:
    if point[1] < 0:
        return False
    if _rotate(_rotate(point))[1] < c2:
        return False
    return _rotate(point)[1] >= c3


def _region_params(d: int) -> tuple[int, int]:
    return (-(3 * (d - 1) // 2) - 1, 1)


def _enumerate_tiles(
    d: int, offset: tuple[int, int] = (0, 0)
) -> list[tuple[int, int, list[tuple[int, int]]]]:
    """Tiles (a, b, data sites in slot order) of the translated patch."""
    c2, c3 = _region_params(d)
    da, db = offset

    def inside(p: tuple[int, int]) -> bool:
        # Translate back by the tile-lattice offset before the region test.
        shift_r, shift_c = 2 * da, da + 2 * db
        return _in_region((p[0] - shift_r, p[1] - shift_c), c2, c3)

    tiles = []
    lo, hi = -2 * d, 2 * d
    for a in range(lo + da, hi + da):
        for b in range(lo + db, hi + db):
            cr, cc = _center(a, b)
            support = [
                (cr + dr, cc + dc)
                for slot, (dr, dc) in ((s, _SLOT_POS[s]) for s in _SLOT_ORDER)
                if inside((cr + dr, cc + dc))
            ]
            if not support:
                continue
            aux_in = inside((cr, cc)) and inside((cr + 1, cc))
            if len(support) in (4, 6) and aux_in:
                tiles.append((a, b, support))
            elif len(support) in (4, 6) or aux_in:
                raise AssertionError(
                    f"partial tile at ({a}, {b}): region parameters invalid"
                )
    return tiles


# ---------------------------------------------------------------------------
# Layout construction
# ---------------------------------------------------------------------------

def build_triangular_code(
    d: int, origin: tuple[int, int] = (0, 0)
) -> CodeLayout:
    """Undeformed distance-d triangular color-code layout.

    ``origin`` translates the patch by a tile-lattice vector; the default
    places the top corner near the grid origin.
    """
    _check_distance(d)
    raw_tiles = _enumerate_tiles(d, origin)
    n_tiles_want = (3 * d * d - 3) // 8
    if len(raw_tiles) != n_tiles_want:
        raise AssertionError(
            f"expected {n_tiles_want} tiles for d={d}, found {len(raw_tiles)}"
        )

    data_sites = sorted({p for _, _, sup in raw_tiles for p in sup})
    n_data_want = (3 * d * d + 1) // 4
    if len(data_sites) != n_data_want:
        raise AssertionError(
            f"expected {n_data_want} data qubits for d={d}, "
            f"found {len(data_sites)}"
        )

    aux_parity = _aux_x_line_parity(d, raw_tiles, set(data_sites))

    coords: list[tuple[tuple[int, int], Role]] = [
        (p, Role.DATA) for p in data_sites
    ]
    tile_aux: dict[tuple[int, int], tuple[tuple[int, int], tuple[int, int]]] = {}
    for a, b, _ in raw_tiles:
        cr, cc = _center(a, b)
        top, bottom = (cr, cc), (cr + 1, cc)
        if (cr + cc) % 2 == aux_parity:
            x_pos, z_pos = top, bottom
        else:
            x_pos, z_pos = bottom, top
        tile_aux[(a, b)] = (x_pos, z_pos)
        coords.append((x_pos, Role.AUX_X))
        coords.append((z_pos, Role.AUX_Z))

    coords.sort(key=lambda cr: cr[0])
    qubits = tuple(
        Qubit(index=i, row=p[0], col=p[1], role=role)
        for i, (p, role) in enumerate(coords)
    )
    index_of = {q.coord: q.index for q in qubits}

    tiles = tuple(
        Tile(
            color=(a - b) % 3,
            kind="Hexagon" if len(sup) == 6 else "Quadrilateral",
            data_support=tuple(index_of[p] for p in sup),
            aux_x=index_of[tile_aux[(a, b)][0]],
            aux_z=index_of[tile_aux[(a, b)][1]],
        )
        for a, b, sup in sorted(raw_tiles)
    )

    # Both logicals live on the left boundary (minimum column of the patch);
    # a self-orthogonal support of odd size d, so X and Z anticommute.
    min_col = min(p[1] for p in data_sites)
    boundary = tuple(
        index_of[p] for p in data_sites if p[1] == min_col
    )
    if len(boundary) != d:
        raise AssertionError(
            f"boundary logical has weight {len(boundary)}, expected {d}"
        )

    return CodeLayout(
        distance=d,
        qubits=qubits,
        tiles=tiles,
        logical_x=boundary,
        logical_z=boundary,
    )


def _aux_x_line_parity(
    d: int,
    raw_tiles: Sequence[tuple[int, int, list[tuple[int, int]]]],
    data_sites: set[tuple[int, int]],
) -> int:
    """Readout-line parity on which AuxX must sit for the deformation.

    Tries both choices and keeps the one for which the deformation exists
    and leaves every readout line role-homogeneous.
    """
    for parity in (0, 1):
        result = _deformation_plan(parity, raw_tiles, data_sites)
        if result is not None:
            return parity
    raise AssertionError(
        f"no aux-role parity yields a homogeneous deformation for d={d}"
    )


def _deformation_plan(
    aux_parity: int,
    raw_tiles: Sequence[tuple[int, int, list[tuple[int, int]]]],
    data_sites: set[tuple[int, int]],
) -> dict[tuple[int, int], tuple[int, int]] | None:
    """Match each tile's AuxX site to an adjacent swap-partner data site.

    Returns {tile (a, b): data coord} or None if no perfect matching leaves
    every readout line holding only one role.
    """
    x_site: dict[tuple[int, int], tuple[int, int]] = {}
    z_site: dict[tuple[int, int], tuple[int, int]] = {}
    for a, b, _ in raw_tiles:
        cr, cc = _center(a, b)
        if (cr + cc) % 2 == aux_parity:
            x_site[(a, b)], z_site[(a, b)] = (cr, cc), (cr + 1, cc)
        else:
            x_site[(a, b)], z_site[(a, b)] = (cr + 1, cc), (cr, cc)

    target_parity = 1 - aux_parity
    candidates: dict[tuple[int, int], list[tuple[int, int]]] = {}
    for key, (xr, xc) in x_site.items():
        # Lateral neighbors first, then the vertical (boundary) fallback.
        neighbors = [(xr, xc - 1), (xr, xc + 1), (xr - 1, xc), (xr + 1, xc)]
        candidates[key] = [
            p
            for p in neighbors
            if p in data_sites and (p[0] + p[1]) % 2 == target_parity
        ]

    matched: dict[tuple[int, int], tuple[int, int]] = {}

    def assign(key: tuple[int, int], seen: set[tuple[int, int]]) -> bool:
        for p in candidates[key]:
            if p in seen:
                continue
            seen.add(p)
            if p not in matched or assign(matched[p], seen):
                matched[p] = key
                return True
        return False

    for key in sorted(candidates):
        if not assign(key, set()):
            return None

    plan = {tile: p for p, tile in matched.items()}
    # Homogeneity: after the swaps, no readout line mixes roles.
    swapped = set(matched)
    new_data = (data_sites - swapped) | set(x_site.values())
    new_aux = set(z_site.values()) | swapped
    lines_data = {p[0] + p[1] for p in new_data}
    lines_aux = {p[0] + p[1] for p in new_aux}
    if lines_data & lines_aux:
        return None
    return plan


def apply_deformation(layout: CodeLayout) -> CodeLayout:
    """Exchange each AuxX role with an adjacent data qubit.

    Afterwards every readout line holds only data or only auxiliary qubits.
    The swapped-out data qubit's tile memberships transfer to the old AuxX
    site, where the data state rests between cycles.
    """
    if layout.deformed:
        raise ValueError("layout is already deformed")

    by_coord = layout._by_coord()
    data_sites = {q.coord for q in layout.data_qubits}
    raw_tiles = []
    x_parity = None
    for tile in layout.tiles:
        xq = layout.qubits[tile.aux_x]
        cr = min(xq.row, layout.qubits[tile.aux_z].row)
        a, cc = cr // 2, xq.col
        b = (cc - a) // 2
        raw_tiles.append((a, b, [layout.qubits[i].coord for i in tile.data_support]))
        x_parity = xq.readout_line % 2

    plan = _deformation_plan(x_parity, raw_tiles, data_sites)
    if plan is None:
        raise AssertionError("deformation homogeneity cannot be achieved")

    # index-level swaps: (old AuxX index, old Data index)
    swap_pairs = []
    role_change: dict[int, Role] = {}
    remap: dict[int, int] = {}  # data index replacements inside tile supports
    tile_new_x: dict[int, int] = {}
    tiles_by_key = {}
    for (a, b, sup), tile in zip(raw_tiles, layout.tiles):
        tiles_by_key[(a, b)] = tile
    for key, data_coord in plan.items():
        tile = tiles_by_key[key]
        old_x = tile.aux_x
        old_d = by_coord[data_coord].index
        swap_pairs.append((old_x, old_d))
        role_change[old_x] = Role.DATA
        role_change[old_d] = Role.AUX_X
        remap[old_d] = old_x
        tile_new_x[id(tile)] = old_d

    new_qubits = tuple(
        replace(q, role=role_change.get(q.index, q.role))
        for q in layout.qubits
    )
    new_tiles = tuple(
        Tile(
            color=t.color,
            kind=t.kind,
            data_support=tuple(remap.get(i, i) for i in t.data_support),
            aux_x=tile_new_x[id(t)],
            aux_z=t.aux_z,
        )
        for t in layout.tiles
    )
    new_logical = tuple(remap.get(i, i) for i in layout.logical_x)
    new_logical_z = tuple(remap.get(i, i) for i in layout.logical_z)

    return CodeLayout(
        distance=layout.distance,
        qubits=new_qubits,
        tiles=new_tiles,
        logical_x=new_logical,
        logical_z=new_logical_z,
        deformed=True,
        swap_pairs=tuple(sorted(swap_pairs)),
    )


def enumerate_d3_subsets(layout: CodeLayout) -> tuple[CodeLayout, ...]:
    """Three distance-3 sublayouts at the corners of a distance-5 patch.

    Each is a valid distance-3 layout whose qubit coordinates are a subset
    of the parent's data/center sites.
    """
    if layout.distance != 5:
        raise ValueError("d=3 subsets are defined for a distance-5 layout")
    parent_data = {q.coord for q in layout.data_qubits}
    parent_centers = set()
    for tile in layout.tiles:
        xq, zq = layout.qubits[tile.aux_x], layout.qubits[tile.aux_z]
        parent_centers.add((min(xq.row, zq.row), xq.col))

    found = []
    for da in range(-4, 8):
        for db in range(-6, 8):
            try:
                raw = _enumerate_tiles(3, (da, db))
            except AssertionError:
                continue
            if len(raw) != 3:
                continue
            centers = {_center(a, b) for a, b, _ in raw}
            data = {p for _, _, sup in raw for p in sup}
            if centers <= parent_centers and data <= parent_data:
                found.append(((da, db), data))
    # Keep the translations anchored at the parent's corners: those covering
    # a data qubit that belongs to exactly one parent tile.
    membership: dict[tuple[int, int], int] = {}
    for tile in layout.tiles:
        for i in tile.data_support:
            p = layout.qubits[i].coord
            membership[p] = membership.get(p, 0) + 1
    corners = {p for p, m in membership.items() if m == 1}
    chosen = sorted(o for o, data in found if data & corners)
    if len(chosen) != 3:
        raise AssertionError(
            f"expected 3 corner subsets, found {len(chosen)}"
        )
    return tuple(build_triangular_code(3, origin=o) for o in chosen)


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def layout_to_text(layout: CodeLayout) -> str:
    lines = [f"LAYOUT distance={layout.distance} deformed={int(layout.deformed)}"]
    for q in layout.qubits:
        lines.append(
            f"Q {q.index} {q.row} {q.col} {q.role.value} {q.readout_line}"
        )
    for t in layout.tiles:
        data = " ".join(str(i) for i in t.data_support)
        lines.append(
            f"T {COLOR_NAMES[t.color]} {t.kind} {data} {t.aux_x} {t.aux_z}"
        )
    lines.append("LX " + " ".join(str(i) for i in layout.logical_x))
    lines.append("LZ " + " ".join(str(i) for i in layout.logical_z))
    for ax, dq in layout.swap_pairs:
        lines.append(f"SP {ax} {dq}")
    return "\n".join(lines) + "\n"


def layout_from_text(text: str) -> CodeLayout:
    distance = None
    deformed = False
    qubits: list[Qubit] = []
    tiles: list[Tile] = []
    logical_x: tuple[int, ...] = ()
    logical_z: tuple[int, ...] = ()
    swap_pairs: list[tuple[int, int]] = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        tag = parts[0]
        try:
            if tag == "LAYOUT":
                kv = dict(p.split("=") for p in parts[1:])
                distance = int(kv["distance"])
                deformed = bool(int(kv.get("deformed", "0")))
            elif tag == "Q":
                idx, row, col = int(parts[1]), int(parts[2]), int(parts[3])
                role = Role(parts[4])
                if int(parts[5]) != row + col:
                    raise ValueError("readout line does not match coordinates")
                if idx != len(qubits):
                    raise ValueError("qubit indices must be dense and ordered")
                qubits.append(Qubit(idx, row, col, role))
            elif tag == "T":
                color = COLOR_NAMES.index(parts[1])
                kind = parts[2]
                rest = [int(p) for p in parts[3:]]
                tiles.append(
                    Tile(color, kind, tuple(rest[:-2]), rest[-2], rest[-1])
                )
            elif tag == "LX":
                logical_x = tuple(int(p) for p in parts[1:])
            elif tag == "LZ":
                logical_z = tuple(int(p) for p in parts[1:])
            elif tag == "SP":
                swap_pairs.append((int(parts[1]), int(parts[2])))
            else:
                raise ValueError(f"unknown record tag {tag!r}")
        except (ValueError, KeyError, IndexError) as exc:
            raise ValueError(f"layout line {lineno}: {exc}") from exc
    if distance is None:
        raise ValueError("missing LAYOUT header")
    return CodeLayout(
        distance=distance,
        qubits=tuple(qubits),
        tiles=tuple(tiles),
        logical_x=logical_x,
        logical_z=logical_z,
        deformed=deformed,
        swap_pairs=tuple(swap_pairs),
    )
