"""End-to-end pupil detection.

gray -> 5x5 Gaussian -> median -> inverse threshold -> contour hierarchy ->
pupil selection -> diameter from area.  The circle Hough transform runs on the
same binary image as an independent cross-check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .contours import (
    OUTER,
    Contour,
    ContourHierarchy,
    contour_metrics,
    diameter_from_area,
    extract_contours,
    touches_border,
)
from .filters import ThresholdConfig, preprocess, threshold_inverse
from .hough import HoughConfig, boundary_points, detect_circles, refine_radius, vote
from .image_core import BinaryImage, DimensionError, GrayImage, Image, as_gray

MIN_SIZE = 32
METHODS = ("contour", "hough", "both")

# Filled-region boundaries split their votes between adjacent radius bins, so
# a true pupil reaches only ~0.45-0.5 support; 0.3 keeps it detectable.
PIPELINE_HOUGH = HoughConfig(vote_fraction_min=0.3)


@dataclass(frozen=True)
class PipelineConfig:
    threshold: ThresholdConfig = field(default_factory=ThresholdConfig.sweep)
    median_k: int = 5
    hough: HoughConfig = PIPELINE_HOUGH
    circularity_min: float = 0.6
    min_area: float = 80.0
    method: str = "contour"

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if not 0 < self.circularity_min <= 1:
            raise ValueError("circularity_min must lie in (0, 1]")
        if self.min_area < 1:
            raise ValueError("min_area must be >= 1")
        if self.median_k and (self.median_k < 3 or self.median_k % 2 == 0):
            raise ValueError("median_k must be an odd integer >= 3 (or 0 to skip)")


@dataclass(frozen=True)
class PupilMeasurement:
    center: tuple[float, float]
    diameter: float
    confidence: float
    method: str
    threshold_used: int
    agreement: Optional[float] = None
    circularity: float = 0.0
    contour_index: Optional[int] = None

    def as_record(self) -> dict:
        return {
            "center_x": round(self.center[0], 3),
            "center_y": round(self.center[1], 3),
            "diameter_px": round(self.diameter, 3),
            "confidence": round(self.confidence, 4),
            "method": self.method,
            "threshold_used": self.threshold_used,
        }


@dataclass(frozen=True)
class LevelResult:
    """Everything the contour path produced at one threshold level."""

    level: int
    binary: BinaryImage
    contours: list[Contour]
    hierarchy: ContourHierarchy
    measurement: Optional[PupilMeasurement]


def select_pupil(
    contours: list[Contour],
    hierarchy: ContourHierarchy,
    width: int,
    height: int,
    config: PipelineConfig,
) -> Optional[int]:
    """Index of the pupil contour, or None.

    Candidates are outer borders off the frame edge passing the area and
    circularity filters.  Candidates nested inside another border win over
    top-level ones; within a group the largest area wins, then the rounder.
    """
    best, best_key = None, None
    for idx, c in enumerate(contours):
        if c.kind != OUTER or touches_border(c, width, height):
            continue
        m = contour_metrics(c)
        if m.area < config.min_area or m.circularity < config.circularity_min:
            continue
        key = (hierarchy[idx].parent is not None, m.area, m.circularity)
        if best_key is None or key > best_key:
            best, best_key = idx, key
    return best


def _contour_measurement(contour: Contour, index: int, level: int) -> PupilMeasurement:
    m = contour_metrics(contour)
    diameter = diameter_from_area(m.filled_area)
    pts = contour.as_array().astype(np.float64)
    reach = float(np.hypot(pts[:, 0] - m.centroid[0], pts[:, 1] - m.centroid[1]).max()) + 0.5
    coverage = min(1.0, m.filled_area / (math.pi * reach * reach))
    return PupilMeasurement(
        center=m.centroid,
        diameter=diameter,
        confidence=m.circularity * coverage,
        method="contour",
        threshold_used=level,
        circularity=m.circularity,
        contour_index=index,
    )


def measure_level(smoothed: GrayImage, level: int, config: PipelineConfig) -> LevelResult:
    """Threshold an already-filtered image at ``level`` and run the contour path."""
    binary = threshold_inverse(smoothed, level)
    contours, hierarchy = extract_contours(binary)
    idx = select_pupil(contours, hierarchy, binary.width, binary.height, config)
    meas = None if idx is None else _contour_measurement(contours[idx], idx, level)
    return LevelResult(level, binary, contours, hierarchy, meas)


def hough_measurement(binary: BinaryImage, level: int, config: PipelineConfig) -> Optional[PupilMeasurement]:
    """Strongest circle in the binary image's boundary, as a measurement.

    Votes only over the bounding box of the boundary points, which holds every
    centre of a circle drawn by those points.
    """
    pts = boundary_points(binary)
    if len(pts) == 0:
        return None
    lo = pts.min(axis=0)
    hi = pts.max(axis=0)
    acc = vote(pts - lo, config.hough, size=(int(hi[0] - lo[0]) + 1, int(hi[1] - lo[1]) + 1))
    hyps = detect_circles(acc, 1)
    if not hyps:
        return None
    h = hyps[0]
    # boundary pixel centres sit half a pixel inside the region edge
    radius = refine_radius(acc, h) + 0.5
    return PupilMeasurement(
        center=(h.center[0] + float(lo[0]), h.center[1] + float(lo[1])),
        diameter=2.0 * radius,
        confidence=min(1.0, h.support),
        method="hough",
        threshold_used=level,
    )


def _check_size(gray: GrayImage) -> None:
    if gray.width < MIN_SIZE or gray.height < MIN_SIZE:
        raise DimensionError(f"image {gray.width}x{gray.height} is below the {MIN_SIZE}x{MIN_SIZE} minimum")


def _sweep(smoothed: GrayImage, config: PipelineConfig) -> Optional[LevelResult]:
    best: Optional[LevelResult] = None
    for level in config.threshold.levels():
        res = measure_level(smoothed, level, config)
        if res.measurement is None:
            continue
        # strict > keeps the lower level on ties
        if best is None or res.measurement.circularity > best.measurement.circularity:
            best = res
    return best


def _finish(res: LevelResult, config: PipelineConfig) -> Optional[PupilMeasurement]:
    """Apply the configured method to a chosen level's result."""
    if config.method == "contour":
        return res.measurement
    hough = hough_measurement(res.binary, res.level, config)
    if config.method == "hough":
        return hough
    if res.measurement is None:
        return None
    agreement = None
    if hough is not None:
        agreement = abs(res.measurement.diameter - hough.diameter) / res.measurement.diameter
    return replace(res.measurement, agreement=agreement)


def _default_level(t: ThresholdConfig) -> int:
    return t.level if t.mode == "fixed" else (t.lo + t.hi) // 2


def detect_pupil(image: Image, config: PipelineConfig = PipelineConfig()) -> Optional[PupilMeasurement]:
    """Measure the pupil in one frame; None when nothing qualifies.

    A sweep threshold config is resolved by :func:`auto_threshold`.
    """
    gray = as_gray(image)
    _check_size(gray)
    smoothed = preprocess(gray, config.median_k)
    if config.threshold.mode == "sweep":
        res = _sweep(smoothed, config)
        if res is None:
            if config.method != "hough":
                return None
            res = measure_level(smoothed, _default_level(config.threshold), config)
    else:
        res = measure_level(smoothed, config.threshold.level, config)
    return _finish(res, config)


def auto_threshold(
    image: Image, config: PipelineConfig = PipelineConfig()
) -> tuple[Optional[int], Optional[PupilMeasurement]]:
    """Try every level of the sweep; keep the one whose pupil contour is roundest.

    Returns ``(None, None)`` when no level yields a pupil.
    """
    if config.threshold.mode != "sweep":
        raise ValueError("auto_threshold needs a sweep threshold config")
    gray = as_gray(image)
    _check_size(gray)
    smoothed = preprocess(gray, config.median_k)
    res = _sweep(smoothed, config)
    if res is None:
        return None, None
    return res.level, _finish(res, config)


@dataclass(frozen=True)
class CrossCheckReport:
    contour: Optional[PupilMeasurement]
    hough: Optional[PupilMeasurement]
    threshold_used: int

    @property
    def contour_missing(self) -> bool:
        return self.contour is None

    @property
    def hough_missing(self) -> bool:
        return self.hough is None

    @property
    def diameter_gap(self) -> Optional[float]:
        """|d_contour - d_hough| / d_contour."""
        if self.contour is None or self.hough is None:
            return None
        return abs(self.contour.diameter - self.hough.diameter) / self.contour.diameter

    @property
    def center_distance(self) -> Optional[float]:
        if self.contour is None or self.hough is None:
            return None
        (x0, y0), (x1, y1) = self.contour.center, self.hough.center
        return math.hypot(x0 - x1, y0 - y1)

    def as_record(self) -> dict:
        return {
            "threshold_used": self.threshold_used,
            "contour_missing": self.contour_missing,
            "hough_missing": self.hough_missing,
            "contour_diameter": None if self.contour is None else self.contour.diameter,
            "hough_diameter": None if self.hough is None else self.hough.diameter,
            "diameter_gap": self.diameter_gap,
            "center_distance": self.center_distance,
        }


def cross_check(image: Image, config: PipelineConfig = PipelineConfig(method="both")) -> CrossCheckReport:
    """Run the contour and Hough detectors on the same binary image and compare.

    The level is the contour path's choice (sweep or fixed); if the contour
    path finds nothing, Hough runs at the fixed level or the sweep midpoint.
    """
    gray = as_gray(image)
    _check_size(gray)
    smoothed = preprocess(gray, config.median_k)
    if config.threshold.mode == "sweep":
        res = _sweep(smoothed, config)
    else:
        res = measure_level(smoothed, config.threshold.level, config)
    if res is None:
        res = measure_level(smoothed, _default_level(config.threshold), config)
    hough = hough_measurement(res.binary, res.level, config)
    return CrossCheckReport(res.measurement, hough, res.level)

