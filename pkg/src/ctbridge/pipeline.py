"""End-to-end reconstruction runs driven by an experiment config.

One run walks each image through phantom synthesis, forward projection,
extraction of the incomplete measurements, optional noise, FBP-side
preprocessing, FBP, and the bridge sampler, then scores both the FBP
baseline and the bridge output against the phantom.  Every intermediate
array is persisted, so a failed stage leaves its inputs on disk.

The metrics CSV is a pure function of the configuration: floats are
written with repr (round-trip exact) and wall-clock timings go to a
separate run_info.txt instead.
"""

from __future__ import annotations

import csv
import os
import shlex
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .arrayio import save_array, save_pgm
from .bridge import DC_CONSTANT, DC_TIME_VARYING, SamplerConfig, run_sampler, \
    step_coeffs
from .config import ExperimentConfig
from .errors import ConfigError, PipelineError
from .metrics import rmse_hu, ssim
from .phantoms import make_phantom
from .predictors import ExternalPredictor, affine_predictor_from_files, \
    identity_predictor, shrinkage_predictor
from .projector import FanBeamProjector
from .schedule import Schedule, make_time_grid
from .sinoproc import NoiseModel, add_noise_water_normalized, \
    extract_incomplete, fbp, preprocess

FBP_METHOD = "fbp"
BRIDGE_METHOD = "bridge"


@dataclass(frozen=True)
class ImageResult:
    index: int
    method: str
    rmse_hu: float
    ssim: float


@dataclass(frozen=True)
class MethodAggregate:
    method: str
    rmse_hu_mean: float
    rmse_hu_std: float
    ssim_mean: float
    ssim_std: float


@dataclass(frozen=True)
class MetricsReport:
    rows: tuple[ImageResult, ...]
    aggregates: tuple[MethodAggregate, ...]
    runtimes_s: tuple[tuple[str, float], ...]

    def aggregate(self, method: str) -> MethodAggregate:
        for agg in self.aggregates:
            if agg.method == method:
                return agg
        raise KeyError(method)


def build_schedule(name: str) -> Schedule:
    return Schedule.i2sb() if name == "i2sb" else Schedule.ddbm_ve()


def build_predictor(cfg: ExperimentConfig, schedule: Schedule, base_dir="."):
    """Instantiate the configured predictor; returns (predict, close)."""
    spec = cfg.predictor
    if spec.kind == "identity":
        return identity_predictor(), None
    if spec.kind == "shrinkage":
        return shrinkage_predictor(schedule, spec.blur_sigma_px), None
    if spec.kind == "affine_files":
        join = lambda rel: os.path.join(base_dir, rel)
        return affine_predictor_from_files(
            join(spec.matrix_file),
            join(spec.offset_file) if spec.offset_file else None), None
    ext = ExternalPredictor(shlex.split(spec.command))
    return ext, ext.close


def build_sampler_config(cfg: ExperimentConfig, schedule: Schedule,
                         seed_offset: int = 0) -> SamplerConfig:
    spec = cfg.sampler
    mode = DC_TIME_VARYING if spec.dc_mode == "time_varying" else DC_CONSTANT
    return SamplerConfig(
        schedule=schedule,
        grid=make_time_grid(schedule, spec.nfe),
        gamma=spec.gamma,
        dc_weight=spec.dc_weight,
        cg_iters=spec.cg_iters,
        dc_mode=mode,
        sigma_x2=spec.sigma_x2,
        sigma_y2=spec.sigma_y2,
        skip_dc_last_step=spec.skip_dc_last_step,
        warm_start=spec.warm_start,
        seed=spec.seed + seed_offset,
    )


def eta_mean(schedule: Schedule, n_steps: int, gamma: float) -> float:
    """Average per-step noise scale over a uniform grid; grows with gamma."""
    grid = make_time_grid(schedule, n_steps)
    etas = [step_coeffs(schedule, t, t_prev, gamma=gamma).eta
            for _, t, t_prev in grid.step_pairs()]
    return float(np.mean(etas))


def _format_float(value: float) -> str:
    return repr(float(value))


def _stage(name: str, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except PipelineError:
        raise
    except Exception as exc:
        raise PipelineError(name, str(exc)) from exc


def _data_range(ref: np.ndarray) -> float:
    span = float(ref.max() - ref.min())
    return span if span > 0 else 1.0


def _save_image(out_dir: str, stem: str, image: np.ndarray):
    save_array(os.path.join(out_dir, stem + ".bin"), image)
    save_pgm(os.path.join(out_dir, stem + ".pgm"), image)


def run_pipeline(cfg: ExperimentConfig, out_dir: str | None = None,
                 base_dir: str = ".", max_workers: int | None = None
                 ) -> MetricsReport:
    """Run the full reconstruction chain for every configured image.

    Images are independent (their phantom, noise, and sampler seeds are the
    configured seeds plus the image index) and run on a thread pool; all
    artifact filenames carry the image index so writes never collide.
    Raises PipelineError naming the failing stage; artifacts produced by
    stages that already completed stay on disk.
    """
    out_dir = out_dir if out_dir is not None else cfg.out_dir
    os.makedirs(out_dir, exist_ok=True)

    geometry = _stage("geometry", cfg.geometry.build)
    mask = _stage("geometry", cfg.incompleteness.build, geometry)
    schedule = build_schedule(cfg.sampler.schedule)
    predictor, close = _stage("predictor", build_predictor, cfg, schedule,
                              base_dir)
    projector_full = FanBeamProjector(geometry)
    op = FanBeamProjector(geometry, mask).as_operator()

    def one_image(i: int):
        tag = f"{i:03d}"
        rows: list[ImageResult] = []
        runtimes: list[tuple[str, float]] = []

        phantom = _stage("phantom", make_phantom, cfg.phantom.kind,
                         cfg.phantom.size, seed=cfg.phantom.seed + i)
        _save_image(out_dir, f"phantom_{tag}", phantom)

        sino = _stage("project", projector_full.forward, phantom)
        save_array(os.path.join(out_dir, f"sino_full_{tag}.bin"), sino)

        y_raw = _stage("corrupt", extract_incomplete, sino, geometry, mask)
        if cfg.noise.enabled:
            model = NoiseModel(n_air=cfg.noise.n_air, seed=cfg.noise.seed + i)
            y_raw = _stage("corrupt", add_noise_water_normalized, y_raw, model)
        save_array(os.path.join(out_dir, f"y_raw_{tag}.bin"), y_raw)

        y_fbp, mask_fbp = _stage("preprocess", preprocess, y_raw,
                                 geometry, mask)
        save_array(os.path.join(out_dir, f"y_fbp_{tag}.bin"), y_fbp)

        t0 = time.perf_counter()
        x_fbp = _stage("fbp", fbp, y_fbp, geometry, mask_fbp)
        runtimes.append((f"fbp_{tag}", time.perf_counter() - t0))
        _save_image(out_dir, f"fbp_{tag}", x_fbp)

        sampler_cfg = build_sampler_config(cfg, schedule, seed_offset=i)
        t0 = time.perf_counter()
        x_bridge = _stage("sample", run_sampler, y_raw, op, x_fbp,
                          predictor, sampler_cfg)
        runtimes.append((f"sample_{tag}", time.perf_counter() - t0))
        _save_image(out_dir, f"bridge_{tag}", x_bridge)

        span = _data_range(phantom)
        for method, image in ((FBP_METHOD, x_fbp), (BRIDGE_METHOD, x_bridge)):
            rows.append(ImageResult(
                index=i, method=method,
                rmse_hu=_stage("evaluate", rmse_hu, image, phantom,
                               mu_water=1.0),
                ssim=_stage("evaluate", ssim, image, phantom, span)))
        return rows, runtimes

    count = cfg.phantom.count
    workers = max_workers or min(count, os.cpu_count() or 1)
    try:
        if workers <= 1:
            results = [one_image(i) for i in range(count)]
        else:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(one_image, range(count)))
    finally:
        if close is not None:
            close()

    rows = [row for image_rows, _ in results for row in image_rows]
    runtimes = [rt for _, image_rts in results for rt in image_rts]
    report = MetricsReport(rows=tuple(rows),
                           aggregates=tuple(_aggregate(rows)),
                           runtimes_s=tuple(runtimes))
    _write_metrics_csv(os.path.join(out_dir, "metrics.csv"), report)
    _write_run_info(os.path.join(out_dir, "run_info.txt"), cfg, report)
    return report


def _aggregate(rows) -> list[MethodAggregate]:
    out = []
    for method in (FBP_METHOD, BRIDGE_METHOD):
        r = [row.rmse_hu for row in rows if row.method == method]
        s = [row.ssim for row in rows if row.method == method]
        if not r:
            continue
        out.append(MethodAggregate(
            method=method,
            rmse_hu_mean=float(np.mean(r)), rmse_hu_std=float(np.std(r)),
            ssim_mean=float(np.mean(s)), ssim_std=float(np.std(s))))
    return out


def _write_metrics_csv(path: str, report: MetricsReport):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["image", "method", "rmse_hu", "ssim"])
        for row in report.rows:
            writer.writerow([row.index, row.method,
                             _format_float(row.rmse_hu),
                             _format_float(row.ssim)])


def _write_run_info(path: str, cfg: ExperimentConfig, report: MetricsReport):
    with open(path, "w") as fh:
        fh.write("# wall-clock timings; excluded from metrics.csv so the "
                 "CSV stays reproducible\n")
        for name, seconds in report.runtimes_s:
            fh.write(f"{name} {seconds:.3f}s\n")
        for agg in report.aggregates:
            fh.write(f"{agg.method} rmse_hu {agg.rmse_hu_mean:.4f} "
                     f"+/- {agg.rmse_hu_std:.4f} "
                     f"ssim {agg.ssim_mean:.4f} +/- {agg.ssim_std:.4f}\n")


# -- parameter sweeps -----------------------------------------------------------


@dataclass(frozen=True)
class SweepRow:
    parameter: str
    value: float
    eta_mean: float
    rmse_hu_mean: float
    ssim_mean: float


def _sweep_point(cfg: ExperimentConfig, value, out_dir: str,
                 base_dir: str) -> SweepRow:
    point = cfg.with_sweep_value(value)
    report = run_pipeline(point, out_dir=out_dir, base_dir=base_dir)
    agg = report.aggregate(BRIDGE_METHOD)
    return SweepRow(
        parameter=cfg.sweep.parameter,
        value=float(value),
        eta_mean=eta_mean(build_schedule(point.sampler.schedule),
                          point.sampler.nfe, point.sampler.gamma),
        rmse_hu_mean=agg.rmse_hu_mean,
        ssim_mean=agg.ssim_mean)


def run_sweep(cfg: ExperimentConfig, out_dir: str | None = None,
              base_dir: str = ".", max_workers: int | None = None
              ) -> tuple[SweepRow, ...]:
    """Run the pipeline once per sweep value, points in parallel.

    Each point writes into its own subdirectory, so rows depend only on
    (config, value) and the combined sweep.csv is order-stable no matter
    which point finishes first.
    """
    if cfg.sweep is None:
        raise ConfigError("config has no sweep section")
    out_dir = out_dir if out_dir is not None else cfg.out_dir
    os.makedirs(out_dir, exist_ok=True)
    values = cfg.sweep.values
    dirs = [os.path.join(out_dir, f"point_{k:02d}_{cfg.sweep.parameter}")
            for k in range(len(values))]
    workers = max_workers or min(len(values), os.cpu_count() or 1)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(_sweep_point, cfg, value, d, base_dir)
                   for value, d in zip(values, dirs)]
        rows = tuple(f.result() for f in futures)

    with open(os.path.join(out_dir, "sweep.csv"), "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["parameter", "value", "eta_mean", "rmse_hu_mean",
                         "ssim_mean"])
        for row in rows:
            writer.writerow([row.parameter, _format_float(row.value),
                             _format_float(row.eta_mean),
                             _format_float(row.rmse_hu_mean),
                             _format_float(row.ssim_mean)])
    return rows
