"""Plot a sweep CSV: swept value against noise scale and reconstruction error."""

import argparse
import csv
import sys

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("sweep_csv", help="sweep.csv written by run_sweep")
    ap.add_argument("--out", default="sweep.png")
    args = ap.parse_args(argv)

    with open(args.sweep_csv, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        print("empty sweep", file=sys.stderr)
        return 1
    parameter = rows[0]["parameter"]
    values = [float(r["value"]) for r in rows]
    etas = [float(r["eta_mean"]) for r in rows]
    rmses = [float(r["rmse_hu_mean"]) for r in rows]

    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.5))
    ax1.plot(values, etas, "o-")
    ax1.set_xlabel(parameter)
    ax1.set_ylabel("mean step noise scale")
    ax2.plot(values, rmses, "s-", color="tab:red")
    ax2.set_xlabel(parameter)
    ax2.set_ylabel("RMSE (HU)")
    fig.tight_layout()
    fig.savefig(args.out, dpi=150)
    print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
