"""Synthetic eye scenes and a pupillary light-reflex model, used as ground truth.

The reflex dynamics (first-order lag with asymmetric time constants and a
fixed latency) are a modelling convention for exercising the detector; only
the dark and resting diameters are anchored to physiology.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .image_core import GrayImage, write_pnm

IRIS_BROWN = 90
IRIS_DARK = 50


@dataclass(frozen=True)
class Glint:
    center: tuple[float, float]
    radius: float
    level: int = 255


@dataclass(frozen=True)
class EyeSceneParams:
    width: int = 640
    height: int = 480
    pupil_center: Optional[tuple[float, float]] = None  # defaults to the frame centre
    pupil_radius: float = 30.0
    iris_radius: float = 80.0
    sclera_level: int = 220
    iris_level: int = IRIS_DARK
    pupil_level: int = 15
    glint: Optional[Glint] = None
    illumination_gradient: float = 10.0
    gaussian_noise_sigma: float = 2.0
    salt_pepper_density: float = 0.01
    seed: int = 0

    @property
    def center(self) -> tuple[float, float]:
        if self.pupil_center is None:
            return ((self.width - 1) / 2.0, (self.height - 1) / 2.0)
        return self.pupil_center

    def validate(self) -> None:
        if self.width < 1 or self.height < 1:
            raise ValueError(f"image size must be positive, got {self.width}x{self.height}")
        if not 0 < self.pupil_radius < self.iris_radius:
            raise ValueError(
                f"need 0 < pupil_radius < iris_radius, got {self.pupil_radius}, {self.iris_radius}"
            )
        for name in ("sclera_level", "iris_level", "pupil_level"):
            v = getattr(self, name)
            if not 0 <= v <= 255:
                raise ValueError(f"{name} must lie in [0, 255], got {v}")
        if self.glint is not None and not 0 <= self.glint.level <= 255:
            raise ValueError("glint level must lie in [0, 255]")
        if not 0 <= self.salt_pepper_density <= 1:
            raise ValueError("salt_pepper_density must lie in [0, 1]")
        if self.gaussian_noise_sigma < 0:
            raise ValueError("gaussian_noise_sigma must be nonnegative")
        cx, cy = self.center
        r = self.pupil_radius
        if cx - r < 0 or cy - r < 0 or cx + r > self.width - 1 or cy + r > self.height - 1:
            raise ValueError(
                f"pupil (centre {cx:g},{cy:g}, radius {r:g}) does not fit in a "
                f"{self.width}x{self.height} frame"
            )


@dataclass(frozen=True)
class GroundTruth:
    center: tuple[float, float]
    pupil_radius: float

    @property
    def diameter(self) -> float:
        return 2.0 * self.pupil_radius


def render_clean(params: EyeSceneParams) -> np.ndarray:
    """Scene layers before the illumination ramp and noise, as float64."""
    params.validate()
    h, w = params.height, params.width
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    cx, cy = params.center
    d2 = (xx - cx) ** 2 + (yy - cy) ** 2
    img = np.full((h, w), float(params.sclera_level))
    img[d2 <= params.iris_radius ** 2] = params.iris_level
    img[d2 <= params.pupil_radius ** 2] = params.pupil_level
    if params.glint is not None:
        gx, gy = params.glint.center
        img[(xx - gx) ** 2 + (yy - gy) ** 2 <= params.glint.radius ** 2] = params.glint.level
    return img


def render_eye(params: EyeSceneParams) -> tuple[GrayImage, GroundTruth]:
    """Hard-edged disks (pupil over iris over sclera), glint, ramp, Gaussian
    noise and salt-and-pepper, all driven by ``params.seed``."""
    img = render_clean(params)
    h, w = img.shape
    if params.illumination_gradient:
        ramp = np.linspace(-0.5, 0.5, w) if w > 1 else np.zeros(1)
        img = img + params.illumination_gradient * ramp[None, :]
    rng = np.random.default_rng(params.seed)
    if params.gaussian_noise_sigma > 0:
        img = img + rng.normal(0.0, params.gaussian_noise_sigma, size=img.shape)
    out = np.clip(np.floor(img + 0.5), 0, 255).astype(np.uint8)
    if params.salt_pepper_density > 0:
        hit = rng.random(size=out.shape) < params.salt_pepper_density
        salt = rng.random(size=out.shape) < 0.5
        out[hit & salt] = 255
        out[hit & ~salt] = 0
    return GrayImage(out), GroundTruth(params.center, float(params.pupil_radius))


@dataclass(frozen=True)
class PlrModel:
    d_dark: float = 7.5
    d_light: float = 4.5  # resting lit diameter; kept for scene presets, not used by the dynamics
    d_floor: float = 2.5
    tau_constrict: float = 0.4
    tau_dilate: float = 2.0
    px_per_mm: float = 12.0
    latency: float = 0.2

    def __post_init__(self):
        if not self.d_floor < self.d_light < self.d_dark:
            raise ValueError("need d_floor < d_light < d_dark")
        if self.tau_constrict <= 0 or self.tau_dilate <= 0:
            raise ValueError("time constants must be positive")
        if self.latency < 0 or self.px_per_mm <= 0:
            raise ValueError("latency must be >= 0 and px_per_mm > 0")

    def target(self, illumination: float) -> float:
        """Equilibrium diameter (mm) under constant illumination in [0, 1]."""
        return self.d_dark + illumination * (self.d_floor - self.d_dark)


@dataclass(frozen=True)
class StimulusTimeline:
    events: tuple[tuple[float, float], ...]  # (time s, illumination in [0, 1])

    def __post_init__(self):
        ev = tuple((float(t), float(v)) for t, v in self.events)
        if not ev or ev[0][0] != 0.0:
            raise ValueError("timeline must start at t=0")
        if any(b[0] <= a[0] for a, b in zip(ev, ev[1:])):
            raise ValueError("timeline times must be strictly increasing")
        if any(not 0.0 <= v <= 1.0 for _, v in ev):
            raise ValueError("illumination levels must lie in [0, 1]")
        object.__setattr__(self, "events", ev)

    @classmethod
    def step(cls, at: float, level: float = 1.0, before: float = 0.0) -> "StimulusTimeline":
        if at <= 0:
            return cls(((0.0, level),))
        return cls(((0.0, before), (at, level)))

    def illumination(self, t: float) -> float:
        level = self.events[0][1]
        for te, v in self.events:
            if te <= t:
                level = v
            else:
                break
        return level


class PlrTrajectory:
    """Closed-form diameter trajectory for a model and timeline.

    The pupil starts adapted to darkness (or ``initial``); each illumination
    edge retargets the lag ``latency`` seconds later.  Between retarget times
    the solution is an exact exponential approach.
    """

    def __init__(self, model: PlrModel, timeline: StimulusTimeline, initial: Optional[float] = None):
        self.model = model
        d0 = model.d_dark if initial is None else float(initial)
        if not model.d_floor <= d0 <= model.d_dark:
            raise ValueError("initial diameter must lie in [d_floor, d_dark]")
        knots = [(0.0, model.d_dark)]  # (retarget time, target diameter)
        prev_level = 0.0
        for te, level in timeline.events:
            if level != prev_level:
                knots.append((te + model.latency, model.target(level)))
                prev_level = level
        self._segments = []  # (start time, diameter at start, target)
        d = d0
        for k, (ts, tgt) in enumerate(knots):
            if k:
                d = self._advance(d, knots[k - 1][1], ts - knots[k - 1][0])
            self._segments.append((ts, d, tgt))

    def _advance(self, d: float, target: float, dt: float) -> float:
        if dt <= 0 or d == target:
            return d if dt <= 0 else target
        tau = self.model.tau_constrict if target < d else self.model.tau_dilate
        return target + (d - target) * math.exp(-dt / tau)

    def __call__(self, t: float) -> float:
        seg = self._segments[0]
        for s in self._segments:
            if s[0] <= t:
                seg = s
            else:
                break
        ts, d, tgt = seg
        return self._advance(d, tgt, t - ts)


def simulate_plr(
    model: PlrModel,
    timeline: StimulusTimeline,
    dt: float,
    duration: float,
    initial: Optional[float] = None,
) -> list[tuple[float, float]]:
    """Diameter (mm) sampled at t = 0, dt, 2 dt, ... up to ``duration`` inclusive."""
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if duration < dt:
        raise ValueError("duration must be at least dt")
    traj = PlrTrajectory(model, timeline, initial)
    n = int(math.floor(duration / dt + 1e-9))
    return [(k * dt, traj(k * dt)) for k in range(n + 1)]


def frame_times(fps: float, duration: float) -> list[float]:
    if not fps > 0:
        raise ValueError(f"fps must be positive, got {fps}")
    return [k / fps for k in range(int(round(duration * fps)))]


def brightness_scale(illumination: float) -> float:
    """Multiplier applied to sclera and iris levels; the pupil stays dark."""
    return 0.85 + 0.3 * illumination


@dataclass(frozen=True)
class SequenceFrame:
    index: int
    t: float
    image: GrayImage
    truth: GroundTruth
    diameter_mm: float

    @property
    def diameter_px(self) -> float:
        return self.truth.diameter


def render_frame(
    model: PlrModel,
    timeline: StimulusTimeline,
    template: EyeSceneParams,
    index: int,
    t: float,
    trajectory: Optional[PlrTrajectory] = None,
) -> SequenceFrame:
    traj = trajectory or PlrTrajectory(model, timeline)
    d_mm = traj(t)
    gain = brightness_scale(timeline.illumination(t))
    params = replace(
        template,
        pupil_radius=d_mm * model.px_per_mm / 2.0,
        sclera_level=int(min(255, round(template.sclera_level * gain))),
        iris_level=int(min(255, round(template.iris_level * gain))),
        seed=template.seed + index,
    )
    image, truth = render_eye(params)
    return SequenceFrame(index, t, image, truth, d_mm)


def render_sequence(
    model: PlrModel,
    timeline: StimulusTimeline,
    template: EyeSceneParams,
    fps: float,
    duration: float,
) -> list[SequenceFrame]:
    """One frame per 1/fps, pupil radius following the reflex model."""
    traj = PlrTrajectory(model, timeline)
    return [
        render_frame(model, timeline, template, k, t, traj)
        for k, t in enumerate(frame_times(fps, duration))
    ]


MANIFEST_FIELDS = ("frame_index", "t_seconds", "center_x", "center_y", "radius_px", "diameter_mm")


def frame_name(index: int, width: int = 5) -> str:
    return f"frame_{index:0{width}d}.pgm"


def write_dataset(frames: Sequence[SequenceFrame], out_dir) -> Path:
    """Write numbered PGM frames plus ``manifest.csv``; returns the manifest path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for fr in frames:
        write_pnm(out / frame_name(fr.index), fr.image)
    manifest = out / "manifest.csv"
    with open(manifest, "w", newline="") as f:
        wr = csv.writer(f, lineterminator="\n")
        wr.writerow(MANIFEST_FIELDS)
        for fr in frames:
            cx, cy = fr.truth.center
            wr.writerow([fr.index, f"{fr.t:.6f}", f"{cx:.3f}", f"{cy:.3f}",
                         f"{fr.truth.pupil_radius:.6f}", f"{fr.diameter_mm:.6f}"])
    return manifest


def read_manifest(path) -> list[dict]:
    with open(path, newline="") as f:
        rows = list(csv.DictReader(f))
    out = []
    for r in rows:
        out.append({
            "frame_index": int(r["frame_index"]),
            "t_seconds": float(r["t_seconds"]),
            "center_x": float(r["center_x"]),
            "center_y": float(r["center_y"]),
            "radius_px": float(r["radius_px"]),
            "diameter_mm": float(r["diameter_mm"]),
        })
    return out
