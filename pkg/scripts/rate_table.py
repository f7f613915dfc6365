"""Rerun the weak-error study for all three presets and print a rate table.

    python scripts/rate_table.py --paths 1000000 --out-dir results/rates

Writes per-model rows/summary CSVs and gnuplot data files, then prints the
measured rates next to the target rates.  Model 3 uses the truncated
scheme.  With 10^6 paths per level expect roughly 5 CPU-minutes per model.
"""

import argparse
import time
from pathlib import Path

from heston_weak.convergence import (StudyConfig, row_record, run_studies, summary_record,
                                     write_plot_data, write_rows_csv, write_summary_csv)
from heston_weak.core import feller_report, preset
from heston_weak.payoffs import PayoffKind, make_payoff
from heston_weak.schemes import Scheme

TARGET_RATES = {
    "model1": (0.62, 0.58, 1.01),
    "model2": (1.00, 0.91, 1.02),
    "model3": (0.96, 0.90, 0.88),
}
KINDS = (PayoffKind.SMOOTHED_PUT, PayoffKind.PUT, PayoffKind.INDICATOR)


def run_model(name, n_paths, seed, workers, out_dir: Path):
    p = preset(name)
    scheme = Scheme.MILSTEIN_D_TRUNC if name == "model3" else Scheme.MILSTEIN_D
    configs = [StudyConfig(p, make_payoff(k, p), n_paths, seed, scheme=scheme, model_name=name,
                           workers=workers) for k in KINDS]
    results = run_studies(configs)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_rows_csv(out_dir / f"{name}_rows.csv",
                   [row_record(name, c.functional.label, scheme.value, row)
                    for c, r in zip(configs, results) for row in r.rows])
    write_summary_csv(out_dir / f"{name}_summary.csv",
                      [summary_record(name, p, c.functional.label, r)
                       for c, r in zip(configs, results)])
    for c, r in zip(configs, results):
        write_plot_data(out_dir / f"{name}_{c.functional.label}.dat", r,
                        title=f"{name} {c.functional.label}")
    return results


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--paths", type=int, default=1_000_000)
    ap.add_argument("--seed", type=int, default=20240611)
    ap.add_argument("--workers", type=int, default=None)
    ap.add_argument("--models", nargs="+", default=sorted(TARGET_RATES))
    ap.add_argument("--out-dir", type=Path, default=Path("results/rates"))
    args = ap.parse_args()

    lines = []
    for name in args.models:
        t0 = time.perf_counter()
        results = run_model(name, args.paths, args.seed, args.workers, args.out_dir)
        nu = feller_report(preset(name)).nu
        cells = []
        for res, pub in zip(results, TARGET_RATES[name]):
            rate = "  n/a" if res.fitted_rate is None else f"{res.fitted_rate:5.2f}"
            cells.append(f"{rate} ({pub:.2f})")
        lines.append(f"{name:7s} {nu:5.2f}  " + "  ".join(cells))
        print(f"{name} done in {time.perf_counter() - t0:.0f}s", flush=True)

    print()
    print("measured (target) rates")
    print(f"{'':7s} {'nu':>5s}  {'smoothed put':14s}{'put':14s}{'indicator':14s}")
    for line in lines:
        print(line)


if __name__ == "__main__":
    main()
