"""Command-line front end.

Verbs cover the pipeline stage by stage (phantom, project, corrupt, fbp,
sample, evaluate), batch experiments (sweep), and the built-in oracle
battery (verify).  Stateful verbs read an experiment config; file verbs
take explicit paths.  Exit status: 0 on success, 2 for configuration or
input problems, 3 for numeric failures.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from .arrayio import FormatError, load_array, save_array, save_pgm
from .config import load_config
from .errors import ConfigError, DomainError, NumericError, PipelineError, \
    ProtocolError
from .metrics import rmse_hu, ssim
from .phantoms import PHANTOM_KINDS, make_phantom
from .pipeline import build_predictor, build_sampler_config, build_schedule, \
    run_pipeline, run_sweep
from .projector import FanBeamProjector
from .sinoproc import NoiseModel, add_noise_water_normalized, \
    extract_incomplete, fbp, preprocess


def _write_outputs(args, image):
    save_array(args.out, image)
    if getattr(args, "pgm", None):
        save_pgm(args.pgm, image)


def _load_experiment(args):
    cfg = load_config(args.config)
    base_dir = os.path.dirname(os.path.abspath(args.config))
    return cfg, base_dir


def _cmd_phantom(args) -> int:
    image = make_phantom(args.kind, args.size, seed=args.seed)
    _write_outputs(args, image)
    return 0


def _cmd_project(args) -> int:
    cfg, _ = _load_experiment(args)
    geometry = cfg.geometry.build()
    sino = FanBeamProjector(geometry).forward(load_array(args.input))
    save_array(args.out, sino)
    return 0


def _cmd_corrupt(args) -> int:
    cfg, _ = _load_experiment(args)
    geometry = cfg.geometry.build()
    mask = cfg.incompleteness.build(geometry)
    y = extract_incomplete(load_array(args.input), geometry, mask)
    if cfg.noise.enabled:
        seed = cfg.noise.seed if args.seed is None else args.seed
        model = NoiseModel(n_air=cfg.noise.n_air, seed=seed)
        y = add_noise_water_normalized(y, model)
    save_array(args.out, y)
    return 0


def _cmd_fbp(args) -> int:
    cfg, _ = _load_experiment(args)
    geometry = cfg.geometry.build()
    mask = cfg.incompleteness.build(geometry)
    y_fbp, mask_fbp = preprocess(load_array(args.input), geometry, mask)
    image = fbp(y_fbp, geometry, mask_fbp)
    _write_outputs(args, image)
    return 0


def _cmd_sample(args) -> int:
    from .bridge import run_sampler
    cfg, base_dir = _load_experiment(args)
    geometry = cfg.geometry.build()
    mask = cfg.incompleteness.build(geometry)
    schedule = build_schedule(cfg.sampler.schedule)
    predictor, close = build_predictor(cfg, schedule, base_dir)
    try:
        sampler_cfg = build_sampler_config(cfg, schedule)
        if args.seed is not None:
            sampler_cfg = build_sampler_config(
                cfg, schedule, seed_offset=args.seed - cfg.sampler.seed)
        op = FanBeamProjector(geometry, mask).as_operator()
        image = run_sampler(load_array(args.y), op, load_array(args.fbp),
                            predictor, sampler_cfg)
    finally:
        if close is not None:
            close()
    _write_outputs(args, image)
    return 0


def _cmd_evaluate(args) -> int:
    x = load_array(args.input)
    ref = load_array(args.ref)
    span = args.data_range
    if span is None:
        span = float(ref.max() - ref.min()) or 1.0
    print(f"rmse_hu {rmse_hu(x, ref, mu_water=args.mu_water)!r}")
    print(f"ssim {ssim(x, ref, span)!r}")
    return 0


def _cmd_run(args) -> int:
    cfg, base_dir = _load_experiment(args)
    report = run_pipeline(cfg, out_dir=args.out, base_dir=base_dir)
    for agg in report.aggregates:
        print(f"{agg.method} rmse_hu {agg.rmse_hu_mean:.4f} "
              f"ssim {agg.ssim_mean:.4f}")
    return 0


def _cmd_sweep(args) -> int:
    cfg, base_dir = _load_experiment(args)
    rows = run_sweep(cfg, out_dir=args.out, base_dir=base_dir)
    for row in rows:
        print(f"{row.parameter}={row.value:g} eta_mean={row.eta_mean:.6g} "
              f"rmse_hu={row.rmse_hu_mean:.4f} ssim={row.ssim_mean:.4f}")
    return 0


def _cmd_verify(args) -> int:
    from .verify import run_verification
    failures = 0
    for name, ok, detail in run_verification():
        status = "PASS" if ok else "FAIL"
        print(f"{status} {name}: {detail}")
        failures += 0 if ok else 1
    if failures:
        raise NumericError(f"{failures} verification check(s) failed")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ctbridge",
        description="fan-beam CT simulation and bridge reconstruction")
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("phantom", help="synthesize a phantom image")
    p.add_argument("--kind", choices=PHANTOM_KINDS, default="shepp_logan")
    p.add_argument("--size", type=int, default=128)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--pgm", help="also write an 8-bit preview here")
    p.set_defaults(func=_cmd_phantom)

    p = sub.add_parser("project", help="complete forward projection")
    p.add_argument("--config", required=True)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_project)

    p = sub.add_parser("corrupt",
                       help="extract incomplete data, optionally add noise")
    p.add_argument("--config", required=True)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--seed", type=int, help="override the noise seed")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_corrupt)

    p = sub.add_parser("fbp", help="preprocess and filtered backprojection")
    p.add_argument("--config", required=True)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--pgm")
    p.set_defaults(func=_cmd_fbp)

    p = sub.add_parser("sample", help="run the bridge sampler")
    p.add_argument("--config", required=True)
    p.add_argument("--y", required=True, help="raw incomplete measurements")
    p.add_argument("--fbp", required=True, help="FBP reconstruction")
    p.add_argument("--seed", type=int, help="override the sampler seed")
    p.add_argument("--out", required=True)
    p.add_argument("--pgm")
    p.set_defaults(func=_cmd_sample)

    p = sub.add_parser("evaluate", help="score an image against a reference")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--ref", required=True)
    p.add_argument("--data-range", type=float)
    p.add_argument("--mu-water", type=float, default=1.0)
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("run", help="full pipeline for one config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", help="override the output directory")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("sweep", help="run the configured parameter sweep")
    p.add_argument("--config", required=True)
    p.add_argument("--out", help="override the output directory")
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("verify", help="run the built-in oracle battery")
    p.set_defaults(func=_cmd_verify)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (DomainError, FormatError, FileNotFoundError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3
    except PipelineError as exc:
        numeric = isinstance(exc.__cause__, (NumericError, ProtocolError))
        print(f"pipeline failure: {exc}", file=sys.stderr)
        return 3 if numeric else 2


if __name__ == "__main__":
    sys.exit(main())
