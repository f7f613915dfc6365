"""How the fitted rate of one model depends on the per-level path count.

    python scripts/rate_vs_paths.py --model model3 --paths 1000000 4000000

For each path count the study is rerun (same seed) and every level is printed
with its error in units of its standard error, so rows that sit at the noise
floor are easy to spot.
"""

import argparse

from heston_weak.convergence import StudyConfig, run_studies
from heston_weak.core import preset
from heston_weak.payoffs import PayoffKind, make_payoff
from heston_weak.schemes import Scheme


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--model", default="model3")
    ap.add_argument("--payoff", nargs="+", default=["smoothed-put", "put", "indicator"])
    ap.add_argument("--paths", type=int, nargs="+", default=[1_000_000, 4_000_000])
    ap.add_argument("--seed", type=int, default=20240611)
    ap.add_argument("--workers", type=int, default=None)
    args = ap.parse_args()

    p = preset(args.model)
    scheme = Scheme.MILSTEIN_D_TRUNC if args.model == "model3" else Scheme.MILSTEIN_D
    kinds = [PayoffKind.parse(k) for k in args.payoff]
    for n in args.paths:
        configs = [StudyConfig(p, make_payoff(k, p), n, args.seed, scheme=scheme,
                               model_name=args.model, workers=args.workers) for k in kinds]
        for kind, res in zip(kinds, run_studies(configs)):
            rate = "n/a" if res.fitted_rate is None else f"{res.fitted_rate:.3f}"
            print(f"{args.model} {kind.cli_name} n={n}: rate {rate} over N={list(res.fit_subset)}")
            for r in res.rows:
                print(f"    N={r.n_steps:<4d} err {r.estimate - r.reference:+.4e}  "
                      f"se {r.std_error:.2e}  err/se {(r.estimate - r.reference) / r.std_error:+6.2f}")
        print(flush=True)


if __name__ == "__main__":
    main()
