"""Log-log weak-error plots from convergence CSVs (one panel per model).

    python scripts/plot_convergence.py results/rates/model*_rows.csv -o weak_error.png

Needs matplotlib (``pip install -e .[plot]``).  Each curve shows log2 of the
absolute error against log2 of the step size, with the standard error as a
dashed noise floor.
"""

import argparse
import math
from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from heston_weak.convergence import default_fit_subset, fit_rate, read_rows_csv  # noqa: E402


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("csv", nargs="+", type=Path)
    ap.add_argument("-o", "--output", type=Path, default=Path("weak_error.png"))
    args = ap.parse_args()

    series = defaultdict(lambda: defaultdict(list))
    for path in args.csv:
        for rec in read_rows_csv(path):
            series[rec["model"]][rec["functional"]].append(rec["row"])

    models = sorted(series)
    fig, axes = plt.subplots(1, len(models), figsize=(5 * len(models), 4), squeeze=False)
    for ax, model in zip(axes[0], models):
        for functional, rows in series[model].items():
            x = [math.log2(r.delta) for r in rows]
            y = [math.log2(r.abs_error) if r.abs_error > 0 else float("nan") for r in rows]
            subset = default_fit_subset(rows)
            label = functional
            if len(subset) >= 2:
                label += f" (rate {fit_rate(rows, subset).slope:.2f})"
            line, = ax.plot(x, y, "o-", label=label)
            ax.plot(x, [math.log2(r.std_error) for r in rows], "--", color=line.get_color(),
                    alpha=0.5)
        ax.set_title(f"Weak error, {model}")
        ax.set_xlabel("log2(delta)")
        ax.set_ylabel("log2(error)")
        ax.legend(fontsize="small")
    fig.tight_layout()
    fig.savefig(args.output, dpi=120)
    print(f"wrote {args.output}")


if __name__ == "__main__":
    main()
