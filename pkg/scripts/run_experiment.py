"""Run one experiment config end to end and print the metric summary."""

import argparse
import sys

from ctbridge.config import load_config
from ctbridge.pipeline import run_pipeline


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("config", help="experiment INI file")
    ap.add_argument("--out", default=None, help="override the output directory")
    ap.add_argument("--workers", type=int, default=None,
                    help="max worker threads for multi-image runs")
    args = ap.parse_args(argv)

    cfg = load_config(args.config)
    report = run_pipeline(cfg, out_dir=args.out, max_workers=args.workers)

    print(f"{'method':<8} {'rmse_hu':>10} {'+/-':>8} {'ssim':>8} {'+/-':>8}")
    for agg in report.aggregates:
        print(f"{agg.method:<8} {agg.rmse_hu_mean:>10.2f} "
              f"{agg.rmse_hu_std:>8.2f} {agg.ssim_mean:>8.4f} "
              f"{agg.ssim_std:>8.4f}")
    for name, seconds in report.runtimes_s:
        print(f"# {name}: {seconds:.2f}s")
    return 0


if __name__ == "__main__":
    sys.exit(main())
