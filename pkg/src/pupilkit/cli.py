"""Command-line front end: detect, batch, synth, bench.

Exit codes: 0 success, 1 I/O or parse error, 2 bad parameters or
insufficient coverage, 3 pupil not found.
"""

from __future__ import annotations

import argparse
import csv
import json
import re
import sys
import time
from dataclasses import replace
from concurrent.futures import ProcessPoolExecutor
from functools import partial
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .contours import extract_contours
from .filters import ThresholdConfig, gaussian_blur_5x5, median_blur, threshold_inverse
from .hough import BENCH_PROFILE, MEMORY_BUDGET_BYTES, HoughConfig, boundary_points, vote
from .image_core import DimensionError, PnmError, as_gray, read_pnm
from .pupil_pipeline import PIPELINE_HOUGH, PipelineConfig, detect_pupil
from .synth import (
    EyeSceneParams,
    Glint,
    PlrModel,
    SequenceFrame,
    StimulusTimeline,
    read_manifest,
    render_eye,
    render_sequence,
    write_dataset,
)
from .timeseries import CoverageError, build_series, reflex_metrics, rmse

EXIT_OK, EXIT_IO, EXIT_PARAM, EXIT_NOT_FOUND = 0, 1, 2, 3

DETECT_FIELDS = ("status", "center_x", "center_y", "diameter_px", "confidence", "method", "threshold_used")


class ParamError(Exception):
    pass


def _size(text: str) -> tuple[int, int]:
    m = re.fullmatch(r"\s*(\d+)\s*[xX]\s*(\d+)\s*", text)
    if not m:
        raise argparse.ArgumentTypeError(f"expected WIDTHxHEIGHT, got {text!r}")
    return int(m.group(1)), int(m.group(2))


def _odd(text: str) -> int:
    v = int(text)
    if v < 3 or v % 2 == 0:
        raise argparse.ArgumentTypeError(f"median kernel must be odd and >= 3, got {v}")
    return v


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {v}")
    return v


def _add_pipeline_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("pipeline")
    g.add_argument("--threshold", type=int, help="fixed inverse-threshold level (disables the sweep)")
    g.add_argument("--sweep", type=int, nargs=2, metavar=("LO", "HI"), help="sweep range (default 25 40)")
    g.add_argument("--method", choices=("contour", "hough", "both"), default="contour")
    g.add_argument("--median-k", type=_odd, default=5)
    g.add_argument("--circularity-min", type=float, default=0.6)
    g.add_argument("--min-area", type=float, default=80.0)
    g.add_argument("--center-step", type=_positive_int, default=PIPELINE_HOUGH.center_step,
                   help="Hough centre quantization (px)")
    g.add_argument("--config", type=Path, help="key=value file; command-line flags override it")


def pipeline_config(args) -> PipelineConfig:
    try:
        if args.threshold is not None:
            thr = ThresholdConfig.fixed(args.threshold)
        elif args.sweep is not None:
            thr = ThresholdConfig.sweep(*args.sweep)
        else:
            thr = ThresholdConfig.sweep()
        hough = HoughConfig(
            r_min=PIPELINE_HOUGH.r_min,
            r_max=PIPELINE_HOUGH.r_max,
            r_step=PIPELINE_HOUGH.r_step,
            center_step=args.center_step,
            vote_fraction_min=PIPELINE_HOUGH.vote_fraction_min,
            nms_radius=PIPELINE_HOUGH.nms_radius,
        )
        return PipelineConfig(
            threshold=thr,
            median_k=args.median_k,
            hough=hough,
            circularity_min=args.circularity_min,
            min_area=args.min_area,
            method=args.method,
        )
    except ValueError as e:
        raise ParamError(str(e)) from e


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pupilkit", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    parser.subcommands = sub.choices

    p = sub.add_parser("detect", help="measure the pupil in one PGM/PPM image")
    p.add_argument("image", type=Path)
    p.add_argument("--format", choices=("csv", "jsonl"), default="csv")
    _add_pipeline_flags(p)

    p = sub.add_parser("batch", help="measure every frame of a directory and emit a diameter series")
    p.add_argument("directory", type=Path)
    p.add_argument("--fps", type=float, default=30.0, help="frame rate when no manifest gives times")
    p.add_argument("--px-per-mm", type=float, help="report diameters in mm")
    p.add_argument("--stimulus", type=float, help="stimulus time (s); also emit reflex metrics")
    p.add_argument("--parallel", type=_positive_int, default=1, help="worker processes")
    p.add_argument("--output", type=Path, help="series CSV path (default: stdout)")
    p.add_argument("--metrics-output", type=Path, help="metrics JSON path (default: stderr)")
    _add_pipeline_flags(p)

    p = sub.add_parser("synth", help="render a synthetic eye dataset with a ground-truth manifest")
    p.add_argument("--output", type=Path, required=True)
    p.add_argument("--frames", type=_positive_int, default=30)
    p.add_argument("--fps", type=float, default=30.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--size", type=_size, default=(640, 480))
    p.add_argument("--pupil-radius", type=float, help="static pupil radius (px); omit for a light-reflex sequence")
    p.add_argument("--iris-radius", type=float)
    p.add_argument("--iris-level", type=int, default=EyeSceneParams.iris_level)
    p.add_argument("--stimulus", type=float, help="light step time (s); default a third of the clip")
    p.add_argument("--px-per-mm", type=float, default=PlrModel.px_per_mm)
    p.add_argument("--noise-sigma", type=float, default=EyeSceneParams.gaussian_noise_sigma)
    p.add_argument("--salt-pepper", type=float, default=EyeSceneParams.salt_pepper_density)
    p.add_argument("--glint", type=float, nargs=3, metavar=("X", "Y", "R"))
    p.add_argument("--config", type=Path)

    p = sub.add_parser("bench", help="per-stage timing and accumulator memory report (JSON lines)")
    p.add_argument("--frames", type=_positive_int, default=5)
    p.add_argument("--size", type=_size, default=(640, 480))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", type=Path, help="report path (default: stdout)")
    _add_pipeline_flags(p)
    return parser


def _read_config_file(path: Path) -> dict[str, str]:
    out = {}
    with open(path) as f:
        for n, line in enumerate(f, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ParamError(f"{path}:{n}: expected key=value")
            k, v = line.split("=", 1)
            out[k.strip().replace("-", "_")] = v.strip()
    return out


def _apply_config_file(parser: argparse.ArgumentParser, argv: Sequence[str], args) -> argparse.Namespace:
    """Re-parse with defaults taken from the --config file so flags still win."""
    values = _read_config_file(args.config)
    sub = parser.subcommands[args.command]
    defaults = {}
    actions = {a.dest: a for a in sub._actions}
    for key, raw in values.items():
        action = actions.get(key)
        if action is None or key in ("config", "help"):
            raise ParamError(f"unknown config key {key!r}")
        try:
            if action.nargs in (2, 3):
                conv = [action.type(x) if action.type else x for x in raw.replace(",", " ").split()]
                if len(conv) != action.nargs:
                    raise ValueError(f"expected {action.nargs} values")
                defaults[key] = conv
            else:
                defaults[key] = action.type(raw) if action.type else raw
        except (ValueError, argparse.ArgumentTypeError) as e:
            raise ParamError(f"config key {key!r}: {e}") from e
        if action.choices is not None and defaults[key] not in action.choices:
            raise ParamError(f"config key {key!r}: invalid choice {raw!r}")
    sub.set_defaults(**defaults)
    return parser.parse_args(argv)


# --- detect ---------------------------------------------------------------

def _detect_record(meas) -> dict:
    if meas is None:
        return {"status": "not_found"}
    return {"status": "ok", **meas.as_record()}


def _emit_record(rec: dict, fmt: str, out) -> None:
    if fmt == "jsonl":
        out.write(json.dumps(rec) + "\n")
        return
    wr = csv.writer(out, lineterminator="\n")
    wr.writerow(DETECT_FIELDS)
    wr.writerow([rec.get(k, "") for k in DETECT_FIELDS])


def cmd_detect(args) -> int:
    config = pipeline_config(args)
    try:
        image = read_pnm(args.image)
    except OSError as e:
        print(f"error: cannot read {args.image}: {e.strerror or e}", file=sys.stderr)
        return EXIT_IO
    except PnmError as e:
        print(f"error: {args.image}: {e}", file=sys.stderr)
        return EXIT_IO
    try:
        meas = detect_pupil(image, config)
    except DimensionError as e:
        raise ParamError(str(e)) from e
    _emit_record(_detect_record(meas), args.format, sys.stdout)
    return EXIT_OK if meas is not None else EXIT_NOT_FOUND


# --- batch ----------------------------------------------------------------

_NUM = re.compile(r"(\d+)")


def _frame_key(path: Path):
    nums = _NUM.findall(path.stem)
    return (int(nums[-1]) if nums else -1, path.name)


def list_frames(directory: Path) -> list[Path]:
    frames = [p for p in directory.iterdir() if p.suffix.lower() in (".pgm", ".ppm", ".pnm") and p.is_file()]
    return sorted(frames, key=_frame_key)


def _measure_path(path: Path, config: PipelineConfig) -> Optional[float]:
    meas = detect_pupil(read_pnm(path), config)
    return None if meas is None else meas.diameter


def cmd_batch(args) -> int:
    config = pipeline_config(args)
    if not args.directory.is_dir():
        print(f"error: {args.directory} is not a directory", file=sys.stderr)
        return EXIT_IO
    frames = list_frames(args.directory)
    if not frames:
        print(f"error: no PGM/PPM frames in {args.directory}", file=sys.stderr)
        return EXIT_PARAM
    if args.fps <= 0:
        raise ParamError("--fps must be positive")

    manifest = None
    manifest_path = args.directory / "manifest.csv"
    if manifest_path.exists():
        try:
            manifest = {r["frame_index"]: r for r in read_manifest(manifest_path)}
        except (OSError, KeyError, ValueError) as e:
            print(f"error: bad manifest {manifest_path}: {e}", file=sys.stderr)
            return EXIT_IO

    times = []
    for k, path in enumerate(frames):
        idx = _frame_key(path)[0]
        if manifest is not None and idx in manifest:
            times.append(manifest[idx]["t_seconds"])
        else:
            times.append(k / args.fps)

    work = partial(_measure_path, config=config)
    try:
        if args.parallel > 1:
            with ProcessPoolExecutor(max_workers=args.parallel) as pool:
                diameters = list(pool.map(work, frames, chunksize=max(1, len(frames) // (4 * args.parallel))))
        else:
            diameters = [work(p) for p in frames]
    except PnmError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO
    except DimensionError as e:
        raise ParamError(str(e)) from e

    try:
        series = build_series(list(zip(times, diameters)), args.px_per_mm)
    except ValueError as e:
        raise ParamError(str(e)) from e
    text = series.to_csv()
    if args.output:
        args.output.write_text(text)
    else:
        sys.stdout.write(text)

    if args.stimulus is None:
        return EXIT_OK
    try:
        metrics = reflex_metrics(series, args.stimulus)
    except CoverageError as e:
        print(f"error: cannot compute reflex metrics: {e}", file=sys.stderr)
        return EXIT_PARAM
    report = {"unit": series.unit, **metrics.as_record()}
    if manifest is not None:
        scale = (1.0 / args.px_per_mm) if args.px_per_mm else 1.0
        truth, got = [], []
        for path, s in zip(frames, series.samples):
            row = manifest.get(_frame_key(path)[0])
            if row is not None and s.valid:
                truth.append(2.0 * row["radius_px"] * scale)
                got.append(s.diameter)
        if truth:
            report["rmse_vs_manifest"] = rmse(got, truth)
    line = json.dumps(report) + "\n"
    if args.metrics_output:
        args.metrics_output.write_text(line)
    else:
        sys.stderr.write(line)
    return EXIT_OK


# --- synth ----------------------------------------------------------------

def synth_frames(args) -> list[SequenceFrame]:
    w, h = args.size
    glint = Glint((args.glint[0], args.glint[1]), args.glint[2]) if args.glint else None
    model = PlrModel(px_per_mm=args.px_per_mm)
    try:
        if args.pupil_radius is not None:
            r = args.pupil_radius
            iris = args.iris_radius if args.iris_radius is not None else 2.0 * r
            base = EyeSceneParams(
                width=w, height=h, pupil_radius=r, iris_radius=iris, iris_level=args.iris_level,
                gaussian_noise_sigma=args.noise_sigma, salt_pepper_density=args.salt_pepper,
                glint=glint, seed=args.seed,
            )
            base.validate()
            frames = []
            for k in range(args.frames):
                params = replace(base, seed=args.seed + k)
                image, truth = render_eye(params)
                frames.append(SequenceFrame(k, k / args.fps, image, truth, 2.0 * r / model.px_per_mm))
            return frames
        duration = args.frames / args.fps
        stim = args.stimulus if args.stimulus is not None else duration / 3.0
        iris = args.iris_radius if args.iris_radius is not None else model.d_dark * model.px_per_mm / 2.0 + 15.0
        template = EyeSceneParams(
            width=w, height=h, iris_radius=iris, iris_level=args.iris_level,
            pupil_radius=model.d_floor * model.px_per_mm / 2.0,
            gaussian_noise_sigma=args.noise_sigma, salt_pepper_density=args.salt_pepper,
            glint=glint, seed=args.seed,
        )
        # largest pupil the sequence can reach must fit
        replace(template, pupil_radius=model.d_dark * model.px_per_mm / 2.0).validate()
        frames = render_sequence(model, StimulusTimeline.step(stim), template, args.fps, duration)
        return frames[: args.frames]
    except ValueError as e:
        raise ParamError(str(e)) from e


def cmd_synth(args) -> int:
    if args.fps <= 0:
        raise ParamError("--fps must be positive")
    frames = synth_frames(args)
    try:
        write_dataset(frames, args.output)
    except OSError as e:
        print(f"error: cannot write dataset to {args.output}: {e.strerror or e}", file=sys.stderr)
        return EXIT_IO
    print(f"wrote {len(frames)} frames to {args.output}", file=sys.stderr)
    return EXIT_OK


# --- bench ----------------------------------------------------------------

BENCH_STAGES = ("blur", "median", "threshold", "contours", "hough", "total")


def memory_record(profile: str, config: HoughConfig, width: int, height: int) -> dict:
    nbytes = config.memory_bytes(width, height)
    return {
        "kind": "memory",
        "profile": profile,
        "width": width,
        "height": height,
        "center_step": config.center_step,
        "r_min": config.r_min,
        "r_max": config.r_max,
        "r_step": config.r_step,
        "accumulator_bytes": nbytes,
        "accumulator_mib": round(nbytes / 2**20, 3),
        "budget_mib": MEMORY_BUDGET_BYTES // 2**20,
        "over_budget": nbytes > MEMORY_BUDGET_BYTES,
    }


def bench_frame(image, config: PipelineConfig, hough_config: HoughConfig) -> dict[str, float]:
    """Wall time (ms) of each stage on one frame; ``total`` is a full detect_pupil call."""
    gray = as_gray(image)
    level = config.threshold.level if config.threshold.mode == "fixed" else (config.threshold.lo + config.threshold.hi) // 2
    times = {}
    t = time.perf_counter()
    blurred = gaussian_blur_5x5(gray)
    times["blur"] = time.perf_counter() - t
    t = time.perf_counter()
    smoothed = median_blur(blurred, config.median_k) if config.median_k else blurred
    times["median"] = time.perf_counter() - t
    t = time.perf_counter()
    binary = threshold_inverse(smoothed, level)
    times["threshold"] = time.perf_counter() - t
    t = time.perf_counter()
    extract_contours(binary)
    times["contours"] = time.perf_counter() - t
    t = time.perf_counter()
    pts = boundary_points(binary)
    if len(pts):
        vote(pts, hough_config, size=(gray.width, gray.height))
    times["hough"] = time.perf_counter() - t
    contour_only = PipelineConfig(
        threshold=config.threshold, median_k=config.median_k, hough=config.hough,
        circularity_min=config.circularity_min, min_area=config.min_area, method="contour",
    )
    t = time.perf_counter()
    detect_pupil(gray, contour_only)
    times["total"] = time.perf_counter() - t
    return {k: v * 1000.0 for k, v in times.items()}


def bench_report(frames: int, size: tuple[int, int], seed: int, config: PipelineConfig) -> list[dict]:
    w, h = size
    bench_hough = HoughConfig(
        r_min=config.hough.r_min, r_max=config.hough.r_max, r_step=config.hough.r_step,
        center_step=max(BENCH_PROFILE.center_step, config.hough.center_step),
        vote_fraction_min=config.hough.vote_fraction_min, nms_radius=config.hough.nms_radius,
    )
    runs = []
    for k in range(frames):
        image, _ = render_eye(EyeSceneParams(width=w, height=h, seed=seed + k))
        runs.append(bench_frame(image, config, bench_hough))
    records = []
    for stage in BENCH_STAGES:
        vals = np.array([r[stage] for r in runs])
        records.append({
            "kind": "stage",
            "stage": stage,
            "frames": frames,
            "mean_ms": round(float(vals.mean()), 3),
            "min_ms": round(float(vals.min()), 3),
            "max_ms": round(float(vals.max()), 3),
        })
    default_hough = HoughConfig(
        r_min=config.hough.r_min, r_max=config.hough.r_max, r_step=config.hough.r_step,
        center_step=config.hough.center_step,
    )
    records.append(memory_record("default", default_hough, w, h))
    records.append(memory_record("bench", bench_hough, w, h))
    return records


def cmd_bench(args) -> int:
    config = pipeline_config(args)
    try:
        records = bench_report(args.frames, args.size, args.seed, config)
    except ValueError as e:
        raise ParamError(str(e)) from e
    text = "".join(json.dumps(r) + "\n" for r in records)
    if args.output:
        try:
            args.output.write_text(text)
        except OSError as e:
            print(f"error: cannot write {args.output}: {e.strerror or e}", file=sys.stderr)
            return EXIT_IO
    else:
        sys.stdout.write(text)
    return EXIT_OK


COMMANDS = {"detect": cmd_detect, "batch": cmd_batch, "synth": cmd_synth, "bench": cmd_bench}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    args = parser.parse_args(argv)
    try:
        if getattr(args, "config", None) is not None:
            try:
                args = _apply_config_file(parser, argv, args)
            except OSError as e:
                print(f"error: cannot read config {args.config}: {e.strerror or e}", file=sys.stderr)
                return EXIT_IO
        return COMMANDS[args.command](args)
    except ParamError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_PARAM


if __name__ == "__main__":
    sys.exit(main())
