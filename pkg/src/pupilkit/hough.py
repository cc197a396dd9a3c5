"""Circle Hough transform over a 3-D (a, b, r) accumulator.

Every evidence point votes for all centres lying on a rasterized circle of
radius r around itself; a true circle's centre collects one vote per point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np

from .image_core import BinaryImage

COUNTER_BYTES = 4  # int32 counters
MEMORY_BUDGET_BYTES = 64 * 1024 * 1024


@dataclass(frozen=True)
class HoughConfig:
    r_min: int = 8
    r_max: int = 120
    r_step: int = 1
    center_step: int = 1
    vote_fraction_min: float = 0.45
    nms_radius: float = 10.0

    def __post_init__(self):
        if not 1 <= self.r_min <= self.r_max:
            raise ValueError(f"need 1 <= r_min <= r_max, got r_min={self.r_min}, r_max={self.r_max}")
        if self.r_step < 1 or self.center_step < 1:
            raise ValueError("r_step and center_step must be >= 1")
        if not 0 < self.vote_fraction_min <= 1:
            raise ValueError("vote_fraction_min must lie in (0, 1]")
        if self.nms_radius < 0:
            raise ValueError("nms_radius must be nonnegative")

    @property
    def n_radii(self) -> int:
        return -(-(self.r_max - self.r_min + 1) // self.r_step)

    def radii(self) -> np.ndarray:
        return self.r_min + self.r_step * np.arange(self.n_radii)

    def grid_shape(self, width: int, height: int) -> tuple[int, int, int]:
        """(b bins, a bins, r bins) for a width x height image."""
        cs = self.center_step
        return (-(-height // cs), -(-width // cs), self.n_radii)

    def memory_bytes(self, width: int, height: int) -> int:
        nb, na, nr = self.grid_shape(width, height)
        return na * nb * nr * COUNTER_BYTES


# Bench profile: halves centre resolution so 640x480 fits the 64 MiB budget.
BENCH_PROFILE = HoughConfig(center_step=2)


@dataclass(frozen=True)
class CircleHypothesis:
    center: tuple[float, float]
    radius: float
    votes: int
    support: float


@dataclass(eq=False)
class HoughAccumulator:
    bins: np.ndarray  # int32, indexed [b_bin, a_bin, r_bin]
    config: HoughConfig
    width: int
    height: int
    cast: int = 0  # number of increments that landed inside the grid

    @property
    def total_votes(self) -> int:
        return int(self.bins.sum(dtype=np.int64))

    def bin_center(self, a_bin: int, b_bin: int) -> tuple[float, float]:
        cs = self.config.center_step
        off = (cs - 1) / 2.0
        return (a_bin * cs + off, b_bin * cs + off)

    def bin_radius(self, r_bin: int) -> int:
        return int(self.config.r_min + r_bin * self.config.r_step)


@lru_cache(maxsize=512)
def circle_offsets(r: int) -> np.ndarray:
    """Unique integer offsets of the midpoint-rasterized circle of radius ``r``."""
    if r == 0:
        return np.zeros((1, 2), dtype=np.int64)
    pts = set()
    x, y, err = r, 0, 1 - r
    while x >= y:
        pts.update(((x, y), (y, x), (-y, x), (-x, y), (-x, -y), (-y, -x), (y, -x), (x, -y)))
        y += 1
        if err < 0:
            err += 2 * y + 1
        else:
            x -= 1
            err += 2 * (y - x) + 1
    out = np.array(sorted(pts), dtype=np.int64)
    out.setflags(write=False)
    return out


def ideal_votes(r: int) -> int:
    """Votes a perfectly rasterized circle of radius r gives its own centre."""
    return len(circle_offsets(r))


def boundary_points(image: BinaryImage) -> np.ndarray:
    """Foreground pixels with a 4-neighbour in the background or off-frame, as (x, y) rows."""
    m = image.mask
    p = np.pad(m, 1, constant_values=False)
    interior = p[:-2, 1:-1] & p[2:, 1:-1] & p[1:-1, :-2] & p[1:-1, 2:]
    ys, xs = np.nonzero(m & ~interior)
    return np.column_stack([xs, ys]).astype(np.int64)


def vote(
    points: Sequence[tuple[int, int]] | np.ndarray,
    config: HoughConfig,
    size: Optional[tuple[int, int]] = None,
) -> HoughAccumulator:
    """Cast votes from every point for every radius bin.

    ``size`` is the (width, height) the centre grid spans; by default the
    points' bounding extent from the origin.  Centres outside it are dropped.
    """
    pts = np.asarray(points, dtype=np.int64).reshape(-1, 2)
    if len(pts) == 0:
        raise ValueError("vote() needs at least one point")
    if size is None:
        width, height = int(pts[:, 0].max()) + 1, int(pts[:, 1].max()) + 1
    else:
        width, height = size
    nb, na, nr = config.grid_shape(width, height)
    bins = np.zeros((nb, na, nr), dtype=np.int32)
    cs = config.center_step
    cast = 0
    for k, r in enumerate(config.radii().tolist()):
        off = circle_offsets(r)
        cx = (pts[:, 0, None] + off[None, :, 0]).ravel()
        cy = (pts[:, 1, None] + off[None, :, 1]).ravel()
        ok = (cx >= 0) & (cx < width) & (cy >= 0) & (cy < height)
        if not ok.any():
            continue
        flat = (cy[ok] // cs) * na + (cx[ok] // cs)
        cast += int(ok.sum())
        bins[:, :, k] = np.bincount(flat, minlength=na * nb).reshape(nb, na)
    return HoughAccumulator(bins, config, width, height, cast)


def _local_maxima(bins: np.ndarray) -> np.ndarray:
    """Mask of cells >= all 26 neighbours (plateaus count) and > 0."""
    p = np.pad(bins, 1, constant_values=-1)
    nb, na, nr = bins.shape
    peak = bins > 0
    for db in range(3):
        for da in range(3):
            for dr in range(3):
                if db == da == dr == 1:
                    continue
                peak &= bins >= p[db:db + nb, da:da + na, dr:dr + nr]
    return peak


def detect_circles(acc: HoughAccumulator, max_results: int = 1) -> list[CircleHypothesis]:
    """Strongest local maxima with enough support, after centre non-max suppression.

    Sorted by votes (descending), ties by smaller radius then raster order of
    the centre.
    """
    cfg = acc.config
    if max_results < 1 or acc.bins.size == 0:
        return []
    peak = _local_maxima(acc.bins)
    bs, as_, rs = np.nonzero(peak)
    if len(bs) == 0:
        return []
    votes = acc.bins[bs, as_, rs].astype(np.int64)
    radii = cfg.r_min + rs * cfg.r_step
    ideal = np.array([ideal_votes(int(r)) for r in radii], dtype=np.float64)
    support = votes / ideal
    keep = support >= cfg.vote_fraction_min
    bs, as_, rs, votes, radii, support = (v[keep] for v in (bs, as_, rs, votes, radii, support))
    order = np.lexsort((as_, bs, radii, -votes))

    chosen: list[CircleHypothesis] = []
    for idx in order.tolist():
        center = acc.bin_center(int(as_[idx]), int(bs[idx]))
        if any(
            math.hypot(center[0] - c.center[0], center[1] - c.center[1]) <= cfg.nms_radius
            for c in chosen
        ):
            continue
        chosen.append(CircleHypothesis(center, float(radii[idx]), int(votes[idx]), float(support[idx])))
        if len(chosen) == max_results:
            break
    return chosen


def refine_radius(acc: HoughAccumulator, hyp: CircleHypothesis) -> float:
    """Vote-weighted mean radius over the peak's bin and its two radial neighbours."""
    cfg = acc.config
    cs = cfg.center_step
    a = int(round((hyp.center[0] - (cs - 1) / 2.0) / cs))
    b = int(round((hyp.center[1] - (cs - 1) / 2.0) / cs))
    k = int(round((hyp.radius - cfg.r_min) / cfg.r_step))
    lo, hi = max(0, k - 1), min(cfg.n_radii, k + 2)
    v = acc.bins[b, a, lo:hi].astype(np.float64)
    r = cfg.r_min + cfg.r_step * np.arange(lo, hi)
    return float((v * r).sum() / v.sum()) if v.sum() > 0 else hyp.radius


def hough_circles(
    image: BinaryImage, config: HoughConfig = HoughConfig(), max_results: int = 1
) -> tuple[list[CircleHypothesis], Optional[HoughAccumulator]]:
    """Convenience: boundary points of ``image`` -> accumulator -> hypotheses."""
    pts = boundary_points(image)
    if len(pts) == 0:
        return [], None
    acc = vote(pts, config, size=(image.width, image.height))
    return detect_circles(acc, max_results), acc
