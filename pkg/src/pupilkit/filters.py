"""Preprocessing chain: 5x5 Gaussian smoothing, median denoising, inverse thresholding."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

import numpy as np

from .image_core import BinaryImage, DimensionError, GrayImage

KERNEL_SIZE = 5
# sigma = 0.3 * ((k - 1) / 2 - 1) + 0.8 for k = 5
DEFAULT_SIGMA = 0.3 * ((KERNEL_SIZE - 1) / 2 - 1) + 0.8
SWEEP_DEFAULT = (25, 40)


def gaussian_kernel_1d(size: int = KERNEL_SIZE, sigma: float = DEFAULT_SIGMA) -> np.ndarray:
    half = size // 2
    x = np.arange(-half, half + 1, dtype=np.float64)
    w = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return w / w.sum()


@dataclass(frozen=True)
class GaussianKernel5:
    sigma: float = DEFAULT_SIGMA

    @property
    def taps(self) -> np.ndarray:
        return gaussian_kernel_1d(KERNEL_SIZE, self.sigma)

    @property
    def weights(self) -> np.ndarray:
        t = self.taps
        return np.outer(t, t)


@dataclass(frozen=True)
class ThresholdConfig:
    """Inverse-threshold level, or a sweep range resolved by the pipeline."""

    level: int = 30
    mode: str = "fixed"  # "fixed" or "sweep"
    lo: int = SWEEP_DEFAULT[0]
    hi: int = SWEEP_DEFAULT[1]

    def __post_init__(self):
        if self.mode not in ("fixed", "sweep"):
            raise ValueError(f"threshold mode must be 'fixed' or 'sweep', not {self.mode!r}")
        for name in ("level", "lo", "hi"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or not 0 <= v <= 255:
                raise ValueError(f"threshold {name} must be an integer in [0, 255], got {v!r}")
        if self.lo > self.hi:
            raise ValueError(f"sweep bounds reversed: lo={self.lo} > hi={self.hi}")

    @classmethod
    def fixed(cls, level: int) -> "ThresholdConfig":
        return cls(level=level, mode="fixed")

    @classmethod
    def sweep(cls, lo: int = SWEEP_DEFAULT[0], hi: int = SWEEP_DEFAULT[1]) -> "ThresholdConfig":
        return cls(level=lo, mode="sweep", lo=lo, hi=hi)

    def levels(self) -> range:
        if self.mode == "sweep":
            return range(self.lo, self.hi + 1)
        return range(self.level, self.level + 1)


def _round_u8(x: np.ndarray) -> np.ndarray:
    return np.clip(np.floor(x + 0.5), 0, 255).astype(np.uint8)


def gaussian_blur_5x5(image: GrayImage, sigma: float = DEFAULT_SIGMA) -> GrayImage:
    """Separable 5x5 Gaussian blur with mirror-reflect borders (edge pixel not repeated)."""
    if image.width < KERNEL_SIZE or image.height < KERNEL_SIZE:
        raise DimensionError(
            f"image {image.width}x{image.height} is smaller than the {KERNEL_SIZE}x{KERNEL_SIZE} kernel"
        )
    taps = gaussian_kernel_1d(KERNEL_SIZE, sigma)
    h, w = image.height, image.width
    p = np.pad(image.data.astype(np.float64), 2, mode="reflect")
    rows = sum(taps[k] * p[:, k:k + w] for k in range(KERNEL_SIZE))
    out = sum(taps[k] * rows[k:k + h, :] for k in range(KERNEL_SIZE))
    return GrayImage(_round_u8(out))


def _oddeven_merge(lo: int, hi: int, r: int):
    step = r * 2
    if step < hi - lo:
        yield from _oddeven_merge(lo, hi, step)
        yield from _oddeven_merge(lo + r, hi, step)
        yield from ((i, i + r) for i in range(lo + r, hi - r, step))
    else:
        yield (lo, lo + r)


def _oddeven_merge_sort(lo: int, hi: int):
    if hi - lo >= 1:
        mid = lo + (hi - lo) // 2
        yield from _oddeven_merge_sort(lo, mid)
        yield from _oddeven_merge_sort(mid + 1, hi)
        yield from _oddeven_merge(lo, hi, 1)


@lru_cache(maxsize=None)
def median_network(n: int) -> tuple[tuple[int, int, bool, bool], ...]:
    """Comparators of a Batcher sorting network on ``n`` wires, pruned to those
    that influence the middle wire.

    Each entry is ``(i, j, keep_min, keep_max)``: wire ``i`` receives the min
    and wire ``j`` the max, but only the flagged outputs are ever read later.
    Wires beyond ``n`` behave as +inf, so comparators touching them are dropped.
    """
    size = 1 << max(1, (n - 1).bit_length())
    net = [c for c in _oddeven_merge_sort(0, size - 1) if c[1] < n]
    needed = {n // 2}
    pruned = []
    for i, j in reversed(net):
        if i in needed or j in needed:
            pruned.append((i, j, i in needed, j in needed))
            needed.update((i, j))
    pruned.reverse()
    return tuple(pruned)


def median_blur(image: GrayImage, k: int = 5) -> GrayImage:
    """Exact k x k median with edge-replicated borders."""
    if not isinstance(k, (int, np.integer)) or k < 3 or k % 2 == 0:
        raise ValueError(f"median kernel size must be an odd integer >= 3, got {k!r}")
    if image.width < k or image.height < k:
        raise ValueError(f"median kernel {k} is larger than image {image.width}x{image.height}")
    h, w = image.height, image.width
    r = k // 2
    p = np.pad(image.data, r, mode="edge")
    wires = [np.ascontiguousarray(p[dy:dy + h, dx:dx + w]) for dy in range(k) for dx in range(k)]
    for i, j, keep_min, keep_max in median_network(k * k):
        a, b = wires[i], wires[j]
        if keep_min:
            wires[i] = np.minimum(a, b)
        if keep_max:
            wires[j] = np.maximum(a, b)
    return GrayImage(wires[(k * k) // 2])


def threshold_inverse(image: GrayImage, config: ThresholdConfig | int) -> BinaryImage:
    """Foreground (255) where the pixel is at or below the level, background elsewhere.

    A sweep config thresholds at its ``level`` field; choosing the level is the
    pipeline's job.
    """
    level = config if isinstance(config, (int, np.integer)) else config.level
    if not 0 <= level <= 255:
        raise ValueError(f"threshold level must be in [0, 255], got {level}")
    return BinaryImage(np.where(image.data <= level, np.uint8(255), np.uint8(0)))


def preprocess(image: GrayImage, median_k: Optional[int] = 5) -> GrayImage:
    """Blur then median, the shared front half of the detection chain."""
    out = gaussian_blur_5x5(image)
    if median_k:
        out = median_blur(out, median_k)
    return out
