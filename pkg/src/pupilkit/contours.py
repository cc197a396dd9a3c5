"""Border following with a full nesting hierarchy, plus contour geometry.

Foreground is 8-connected and background 4-connected.  Borders are found by
a raster scan that labels outer and hole borders as it goes, so every
8-connected region yields one outer contour and every hole one hole contour,
each linked to the border that immediately encloses it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .image_core import BinaryImage

OUTER = "outer"
HOLE = "hole"

# Neighbour offsets (drow, dcol) in clockwise order on screen, starting east.
_DIRS = ((0, 1), (1, 1), (1, 0), (1, -1), (0, -1), (-1, -1), (-1, 0), (-1, 1))
_DIR_INDEX = {d: k for k, d in enumerate(_DIRS)}


@dataclass(frozen=True)
class Contour:
    points: tuple[tuple[int, int], ...]  # (x, y) pixel coordinates, closed implicitly
    kind: str

    @property
    def is_hole(self) -> bool:
        return self.kind == HOLE

    def as_array(self) -> np.ndarray:
        return np.asarray(self.points, dtype=np.int64).reshape(-1, 2)


@dataclass
class HierarchyNode:
    next_sibling: Optional[int] = None
    prev_sibling: Optional[int] = None
    first_child: Optional[int] = None
    parent: Optional[int] = None


@dataclass
class ContourHierarchy:
    nodes: list[HierarchyNode]

    def __len__(self):
        return len(self.nodes)

    def __getitem__(self, i) -> HierarchyNode:
        return self.nodes[i]

    def children(self, i: int) -> list[int]:
        out = []
        c = self.nodes[i].first_child
        while c is not None:
            out.append(c)
            c = self.nodes[c].next_sibling
        return out

    def roots(self) -> list[int]:
        return [i for i, n in enumerate(self.nodes) if n.parent is None]

    def depth(self, i: int) -> int:
        d = 0
        p = self.nodes[i].parent
        while p is not None:
            d += 1
            p = self.nodes[p].parent
        return d


@dataclass(frozen=True)
class ContourMetrics:
    area: float
    perimeter: float
    circularity: float
    centroid: tuple[float, float]
    # pixel count of the region the contour encloses, including the boundary row
    filled_area: float


def _trace(f: np.ndarray, i: int, j: int, i2: int, j2: int, nbd: int) -> list[tuple[int, int]]:
    """Follow one border starting at (i, j) with the 0-pixel (i2, j2) as its
    entry neighbour, relabelling ``f`` in place.  Returns (row, col) points."""
    d0 = _DIR_INDEX[(i2 - i, j2 - j)]
    # clockwise search around the start for the first nonzero neighbour
    for s in range(8):
        d = (d0 + s) & 7
        di, dj = _DIRS[d]
        if f[i + di, j + dj] != 0:
            i1, j1 = i + di, j + dj
            break
    else:
        f[i, j] = -nbd
        return [(i, j)]

    points = []
    i2, j2 = i1, j1
    i3, j3 = i, j
    while True:
        # counter-clockwise search around (i3, j3), starting just past (i2, j2)
        d = _DIR_INDEX[(i2 - i3, j2 - j3)]
        east_zero = False
        for _ in range(8):
            d = (d - 1) & 7
            di, dj = _DIRS[d]
            if f[i3 + di, j3 + dj] != 0:
                i4, j4 = i3 + di, j3 + dj
                break
            if d == 0:
                east_zero = True
        if east_zero:
            f[i3, j3] = -nbd
        elif f[i3, j3] == 1:
            f[i3, j3] = nbd
        points.append((i3, j3))
        if i4 == i and j4 == j and i3 == i1 and j3 == j1:
            return points
        i2, j2 = i3, j3
        i3, j3 = i4, j4


def extract_contours(image: BinaryImage) -> tuple[list[Contour], ContourHierarchy]:
    """All borders of ``image`` with parent/child/sibling links.

    Contours are listed in raster discovery order.  Top-level outer borders
    have ``parent = None``.
    """
    mask = image.mask
    h, w = mask.shape
    # one-pixel zero frame; working labels are int32
    f = np.zeros((h + 2, w + 2), dtype=np.int32)
    f[1:-1, 1:-1] = mask
    if not mask.any():
        return [], ContourHierarchy([])

    # Candidate start pixels: foreground with a background pixel left or right.
    # Zeros never change, so this superset is computed once.
    fg = f != 0
    cand = fg & (~np.roll(fg, 1, axis=1) | ~np.roll(fg, -1, axis=1))
    rows, cols = np.nonzero(cand)

    raw_points: list[list[tuple[int, int]]] = []
    kinds: list[str] = []
    parents: list[Optional[int]] = []  # border index, None means the frame
    # border numbers start at 2 (1 is the frame); border b has number b + 2

    for i, j in zip(rows.tolist(), cols.tolist()):
        v = f[i, j]
        if v == 1 and f[i, j - 1] == 0:
            kind = OUTER
            i2, j2 = i, j - 1
        elif v >= 1 and f[i, j + 1] == 0:
            kind = HOLE
            i2, j2 = i, j + 1
        else:
            continue

        if kind == HOLE and v > 1:
            lnbd = int(v)
        else:
            row = f[i, :j]
            marked = np.flatnonzero((row != 0) & (row != 1))
            lnbd = abs(int(row[marked[-1]])) if marked.size else 1

        if lnbd == 1:
            prev_kind, prev_parent, prev_idx = HOLE, None, None  # the frame acts as a hole
        else:
            prev_idx = lnbd - 2
            prev_kind, prev_parent = kinds[prev_idx], parents[prev_idx]
        parent = prev_parent if prev_kind == kind else prev_idx

        nbd = len(raw_points) + 2
        raw_points.append(_trace(f, i, j, i2, j2, nbd))
        kinds.append(kind)
        parents.append(parent)

    contours = [
        Contour(tuple((c - 1, r - 1) for r, c in pts), kind) for pts, kind in zip(raw_points, kinds)
    ]
    nodes = [HierarchyNode(parent=p) for p in parents]
    last_child: dict[Optional[int], int] = {}
    for idx, p in enumerate(parents):
        prev = last_child.get(p)
        if prev is None:
            if p is not None:
                nodes[p].first_child = idx
        else:
            nodes[prev].next_sibling = idx
            nodes[idx].prev_sibling = prev
        last_child[p] = idx
    return contours, ContourHierarchy(nodes)


def _closed_steps(pts: np.ndarray) -> np.ndarray:
    return np.roll(pts, -1, axis=0) - pts


def shoelace_area(pts: np.ndarray) -> float:
    """Absolute polygon area through the given vertices."""
    if len(pts) < 3:
        return 0.0
    x = pts[:, 0].astype(np.float64)
    y = pts[:, 1].astype(np.float64)
    return abs(float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))) / 2.0


def contour_metrics(contour: Contour) -> ContourMetrics:
    pts = contour.as_array()
    n = len(pts)
    if n == 1:
        x, y = pts[0]
        return ContourMetrics(0.0, 0.0, 0.0, (float(x), float(y)), 1.0)

    steps = _closed_steps(pts)
    diagonal = (steps[:, 0] != 0) & (steps[:, 1] != 0)
    step_len = np.where(diagonal, math.sqrt(2.0), np.abs(steps).sum(axis=1))
    perimeter = float(step_len.sum())

    x = pts[:, 0].astype(np.float64)
    y = pts[:, 1].astype(np.float64)
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    signed = cross.sum() / 2.0
    area = abs(float(signed))
    if area > 0:
        cx = float(((x + xn) * cross).sum() / (6.0 * signed))
        cy = float(((y + yn) * cross).sum() / (6.0 * signed))
    else:
        cx, cy = float(x.mean()), float(y.mean())

    circularity = 4.0 * math.pi * area / (perimeter * perimeter) if perimeter > 0 else 0.0
    circularity = min(1.0, max(0.0, circularity))

    # Pick's theorem: lattice points enclosed = area + boundary_points / 2 + 1.
    # Boundary steps are unit or diagonal, so each step adds exactly one
    # boundary lattice point; exact for simple (non-self-touching) borders.
    filled = area + n / 2.0 + 1.0 if area > 0 else float(len(set(contour.points)))
    return ContourMetrics(area, perimeter, circularity, (cx, cy), filled)


def diameter_from_area(area: float) -> float:
    """Diameter of the circle with the given area."""
    if area < 0:
        raise ValueError(f"area must be nonnegative, got {area}")
    return 2.0 * math.sqrt(area / math.pi)


def touches_border(contour: Contour, width: int, height: int) -> bool:
    pts = contour.as_array()
    return bool(
        (pts[:, 0] == 0).any() or (pts[:, 1] == 0).any()
        or (pts[:, 0] == width - 1).any() or (pts[:, 1] == height - 1).any()
    )
