"""Experiment configuration: flat INI sections parsed into typed specs.

The file format is deliberately dumb: ``[section]`` headers, ``key = value``
pairs, ``#`` comments.  Unknown sections or keys are errors, so a typo in a
sweep definition fails loudly instead of silently running defaults.
"""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, field, replace

from .errors import ConfigError
from .geometry import (EQUIANGULAR, EQUISPACED, FULL, LIMITED_ANGLE, MASK_KINDS,
                       SPARSE_VIEW, TRUNCATED, bench_geometry, desk_geometry,
                       full_mask, limited_angle_mask, sparse_view_mask,
                       truncated_mask)
from .phantoms import PHANTOM_KINDS

SWEEPABLE = ("gamma", "dc_weight", "cg_iters", "nfe", "seed", "n_air")

PREDICTOR_KINDS = ("identity", "shrinkage", "affine_files", "external")

_PROFILES = ("desk", "bench")


@dataclass(frozen=True)
class GeometrySpec:
    profile: str = "desk"
    image_size: int = 128
    n_views: int = 180
    ray_spacing: str = EQUISPACED

    def build(self):
        if self.profile == "bench":
            return bench_geometry(ray_spacing=self.ray_spacing)
        return desk_geometry(image_size=self.image_size, n_views=self.n_views,
                             ray_spacing=self.ray_spacing)


@dataclass(frozen=True)
class IncompletenessSpec:
    kind: str = FULL
    stride: int = 6
    arc_deg: float = 120.0
    keep_fraction: float = 0.5

    def build(self, geometry):
        if self.kind == FULL:
            return full_mask(geometry)
        if self.kind == SPARSE_VIEW:
            return sparse_view_mask(geometry, self.stride)
        if self.kind == LIMITED_ANGLE:
            return limited_angle_mask(geometry, self.arc_deg)
        return truncated_mask(geometry, self.keep_fraction)


@dataclass(frozen=True)
class NoiseSpec:
    enabled: bool = False
    n_air: float = 2.5e5
    seed: int = 0


@dataclass(frozen=True)
class PhantomSpec:
    kind: str = "shepp_logan"
    size: int = 128
    seed: int = 0
    count: int = 1


@dataclass(frozen=True)
class PredictorSpec:
    kind: str = "shrinkage"
    blur_sigma_px: float = 2.0
    matrix_file: str = ""
    offset_file: str = ""
    command: str = ""


@dataclass(frozen=True)
class SamplerSpec:
    schedule: str = "i2sb"
    nfe: int = 50
    gamma: float = float("inf")
    dc_weight: float = 1.0
    cg_iters: int = 10
    dc_mode: str = "constant"
    sigma_x2: float = 1.0
    sigma_y2: float = 0.0
    skip_dc_last_step: bool = False
    warm_start: bool = False
    seed: int = 0


@dataclass(frozen=True)
class SweepSpec:
    parameter: str
    values: tuple


@dataclass(frozen=True)
class ExperimentConfig:
    geometry: GeometrySpec = field(default_factory=GeometrySpec)
    incompleteness: IncompletenessSpec = field(default_factory=IncompletenessSpec)
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    phantom: PhantomSpec = field(default_factory=PhantomSpec)
    predictor: PredictorSpec = field(default_factory=PredictorSpec)
    sampler: SamplerSpec = field(default_factory=SamplerSpec)
    sweep: SweepSpec | None = None
    out_dir: str = "runs/out"

    def with_sweep_value(self, value) -> "ExperimentConfig":
        """Derived config for one sweep point (sweep section dropped)."""
        if self.sweep is None:
            raise ConfigError("config has no sweep section")
        name = self.sweep.parameter
        if name == "n_air":
            noise = replace(self.noise, enabled=True, n_air=float(value))
            return replace(self, noise=noise, sweep=None)
        caster = int if name in ("cg_iters", "nfe", "seed") else float
        sampler = replace(self.sampler, **{name: caster(value)})
        return replace(self, sampler=sampler, sweep=None)


_SCHEMA = {
    "geometry": ("profile", "image_size", "n_views", "ray_spacing"),
    "incompleteness": ("kind", "stride", "arc_deg", "keep_fraction"),
    "noise": ("enabled", "n_air", "seed"),
    "phantom": ("kind", "size", "seed", "count"),
    "predictor": ("kind", "blur_sigma_px", "matrix_file", "offset_file",
                  "command"),
    "sampler": ("schedule", "nfe", "gamma", "dc_weight", "cg_iters",
                "dc_mode", "sigma_x2", "sigma_y2", "skip_dc_last_step",
                "warm_start", "seed"),
    "sweep": ("parameter", "values"),
    "output": ("directory",),
}


def _fail(section, key, message):
    raise ConfigError(f"[{section}] {key}: {message}")


class _Section:
    def __init__(self, parser, name):
        self.name = name
        self.raw = dict(parser[name]) if parser.has_section(name) else {}
        for key in self.raw:
            if key not in _SCHEMA[name]:
                _fail(name, key, "unknown key")

    def get(self, key, default):
        return self.raw.get(key, default)

    def get_int(self, key, default):
        try:
            return int(self.raw.get(key, default))
        except ValueError:
            _fail(self.name, key, f"not an integer: {self.raw[key]!r}")

    def get_float(self, key, default):
        text = self.raw.get(key, default)
        if isinstance(text, str) and text.strip().lower() == "inf":
            return float("inf")
        try:
            return float(text)
        except ValueError:
            _fail(self.name, key, f"not a number: {text!r}")

    def get_bool(self, key, default):
        text = str(self.raw.get(key, default)).strip().lower()
        if text in ("true", "yes", "1", "on"):
            return True
        if text in ("false", "no", "0", "off"):
            return False
        _fail(self.name, key, f"not a boolean: {self.raw[key]!r}")

    def get_choice(self, key, default, choices):
        value = self.raw.get(key, default)
        if value not in choices:
            _fail(self.name, key, f"{value!r} not one of {choices}")
        return value


def parse_config(text: str, base_dir: str = ".") -> ExperimentConfig:
    """Parse and validate configuration text; see load_config for files."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",),
                                       interpolation=None)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown section [{section}]")

    geo = _Section(parser, "geometry")
    geometry = GeometrySpec(
        profile=geo.get_choice("profile", "desk", _PROFILES),
        image_size=geo.get_int("image_size", 128),
        n_views=geo.get_int("n_views", 180),
        ray_spacing=geo.get_choice("ray_spacing", EQUISPACED,
                                   (EQUISPACED, EQUIANGULAR)),
    )

    inc = _Section(parser, "incompleteness")
    incompleteness = IncompletenessSpec(
        kind=inc.get_choice("kind", FULL, MASK_KINDS),
        stride=inc.get_int("stride", 6),
        arc_deg=inc.get_float("arc_deg", 120.0),
        keep_fraction=inc.get_float("keep_fraction", 0.5),
    )

    noi = _Section(parser, "noise")
    noise = NoiseSpec(
        enabled=noi.get_bool("enabled", False),
        n_air=noi.get_float("n_air", 2.5e5),
        seed=noi.get_int("seed", 0),
    )
    if noise.enabled and not noise.n_air > 0:
        _fail("noise", "n_air", "must be positive")

    pha = _Section(parser, "phantom")
    phantom = PhantomSpec(
        kind=pha.get_choice("kind", "shepp_logan", PHANTOM_KINDS),
        size=pha.get_int("size", geometry.image_size),
        seed=pha.get_int("seed", 0),
        count=pha.get_int("count", 1),
    )
    if phantom.size != geometry.build().image_size:
        _fail("phantom", "size", "must match the geometry image size")
    if phantom.count < 1:
        _fail("phantom", "count", "must be at least 1")

    pre = _Section(parser, "predictor")
    predictor = PredictorSpec(
        kind=pre.get_choice("kind", "shrinkage", PREDICTOR_KINDS),
        blur_sigma_px=pre.get_float("blur_sigma_px", 2.0),
        matrix_file=pre.get("matrix_file", ""),
        offset_file=pre.get("offset_file", ""),
        command=pre.get("command", ""),
    )
    if predictor.kind == "affine_files":
        if not predictor.matrix_file:
            _fail("predictor", "matrix_file", "required for affine_files")
        for key in ("matrix_file", "offset_file"):
            rel = getattr(predictor, key)
            if rel and not os.path.exists(os.path.join(base_dir, rel)):
                _fail("predictor", key, f"file not found: {rel}")
    if predictor.kind == "external" and not predictor.command.strip():
        _fail("predictor", "command", "required for external")

    sam = _Section(parser, "sampler")
    sampler = SamplerSpec(
        schedule=sam.get_choice("schedule", "i2sb", ("i2sb", "ddbm_ve")),
        nfe=sam.get_int("nfe", 50),
        gamma=sam.get_float("gamma", float("inf")),
        dc_weight=sam.get_float("dc_weight", 1.0),
        cg_iters=sam.get_int("cg_iters", 10),
        dc_mode=sam.get_choice("dc_mode", "constant",
                               ("constant", "time_varying")),
        sigma_x2=sam.get_float("sigma_x2", 1.0),
        sigma_y2=sam.get_float("sigma_y2", 0.0),
        skip_dc_last_step=sam.get_bool("skip_dc_last_step", False),
        warm_start=sam.get_bool("warm_start", False),
        seed=sam.get_int("seed", 0),
    )
    if sampler.nfe < 1:
        _fail("sampler", "nfe", "must be at least 1")
    if sampler.gamma < 0:
        _fail("sampler", "gamma", "must be non-negative")
    if sampler.cg_iters < 0:
        _fail("sampler", "cg_iters", "must be non-negative")

    sweep = None
    if parser.has_section("sweep"):
        swe = _Section(parser, "sweep")
        name = swe.get_choice("parameter", None, SWEEPABLE)
        raw_values = swe.get("values", "")
        parts = [p.strip() for p in raw_values.split(",") if p.strip()]
        if not parts:
            _fail("sweep", "values", "needs a comma-separated list")
        caster = int if name in ("cg_iters", "nfe", "seed") else float
        try:
            values = tuple(caster(p) if p.lower() != "inf" else float("inf")
                           for p in parts)
        except ValueError as exc:
            _fail("sweep", "values", str(exc))
        sweep = SweepSpec(parameter=name, values=values)

    out = _Section(parser, "output")
    out_dir = out.get("directory", "runs/out")

    return ExperimentConfig(geometry=geometry, incompleteness=incompleteness,
                            noise=noise, phantom=phantom, predictor=predictor,
                            sampler=sampler, sweep=sweep, out_dir=out_dir)


def load_config(path) -> ExperimentConfig:
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    with open(path) as fh:
        text = fh.read()
    return parse_config(text, base_dir=os.path.dirname(os.path.abspath(path)))
