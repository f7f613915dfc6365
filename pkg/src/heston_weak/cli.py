"""Command-line entry point: ``python -m heston_weak {price,simulate,converge,fit}``.

Exit codes: 0 success, 2 usage error (bad flags, refused configuration,
malformed input file), 3 numerical failure (quadrature did not converge,
non-finite Monte Carlo sample).
"""

from __future__ import annotations

import argparse
import json
import secrets
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

from . import __version__, analytic, convergence
from .core import PRESETS, HestonParams, feller_report, load_params, preset, uniform_grid
from .montecarlo import (WORKERS_ENV, NonFiniteSampleError, RngStreamSpec, default_workers,
                         estimate)
from .payoffs import PayoffKind, make_payoff
from .quadrature import QuadratureError
from .schemes import Scheme, SchemeError, require_scheme

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NUMERICAL = 3

CONVERGE_PAYOFFS = ("smoothed-put", "put", "indicator")
ROWS_FILE = "rows.csv"
SUMMARY_FILE = "summary.csv"
MANIFEST_FILE = "manifest.json"


class UsageError(Exception):
    pass


@dataclass
class RunManifest:
    """Everything needed, together with the code version, to regenerate a run."""

    command: str
    model_name: str
    model: dict
    payoffs: list[str]
    strike: float
    scheme: str
    step_counts: list[int]
    n_paths: int
    seed: int
    fine_steps: int | None = None
    reference_paths: int | None = None
    version: str = __version__
    timestamp: str = field(default_factory=lambda: time.strftime("%Y-%m-%dT%H:%M:%S%z"))
    outputs: list[str] = field(default_factory=list)

    def reproducible_part(self) -> dict:
        d = asdict(self)
        for k in ("timestamp", "outputs", "version"):
            d.pop(k)
        return d

    def write(self, path: Path):
        path.write_text(json.dumps(asdict(self), indent=2) + "\n")


# --- argument handling ------------------------------------------------------

def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {value}")
    return value


def _seed(text: str) -> int:
    try:
        value = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"seed must be an integer, got {text!r}") from None
    if not 0 <= value < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must lie in [0, 2**64)")
    return value


def _step_list(text: str) -> tuple[int, ...]:
    try:
        steps = tuple(int(s) for s in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    return steps


def _level_range(text: str) -> tuple[int, int]:
    lo, sep, hi = text.partition(":")
    try:
        bounds = (int(lo), int(hi))
    except ValueError:
        bounds = None
    if not sep or bounds is None or bounds[0] > bounds[1]:
        raise argparse.ArgumentTypeError(f"expected LO:HI with LO <= HI, got {text!r}")
    return bounds


def _add_model_args(p: argparse.ArgumentParser):
    g = p.add_mutually_exclusive_group()
    g.add_argument("--model", choices=sorted(PRESETS), default=None,
                   help="built-in parameter set (default model1)")
    g.add_argument("--params-file", type=Path, help="JSON file with s0,v0,mu,kappa,lambda,theta,rho,T")


def _add_payoff_args(p: argparse.ArgumentParser, choices, multiple=False):
    if multiple:
        p.add_argument("--payoff", action="append", choices=choices, default=None,
                       help=f"functional (repeatable; default: {' '.join(CONVERGE_PAYOFFS)})")
    else:
        p.add_argument("--payoff", choices=choices, default="put")
    p.add_argument("--strike", type=float, default=None, help="strike K (default S0)")


def _add_mc_args(p: argparse.ArgumentParser, default_paths: int):
    p.add_argument("--paths", type=_positive_int, default=default_paths)
    p.add_argument("--seed", type=_seed, default=None,
                   help="master seed; drawn and printed when omitted")
    p.add_argument("--scheme", choices=[s.value for s in Scheme], default=Scheme.MILSTEIN_D.value)
    p.add_argument("--workers", type=_positive_int, default=None,
                   help=f"worker threads (default ${WORKERS_ENV} or 1)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="heston_weak",
                                     description="Log-Heston weak-error experiments.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("price", help="semi-analytic reference price")
    _add_model_args(p)
    _add_payoff_args(p, ["put", "call", "indicator"])
    p.add_argument("--abs-tol", type=float, default=analytic.QuadratureConfig().abs_tol)
    p.add_argument("--json", action="store_true", help="print JSON instead of text")

    p = sub.add_parser("simulate", help="one Monte Carlo estimate")
    _add_model_args(p)
    _add_payoff_args(p, [k.cli_name for k in PayoffKind if k is not PayoffKind.CUSTOM])
    _add_mc_args(p, default_paths=100_000)
    p.add_argument("--steps", type=_positive_int, default=64)
    p.add_argument("--json", action="store_true")

    p = sub.add_parser("converge", help="weak-error study over step counts")
    _add_model_args(p)
    _add_payoff_args(p, list(CONVERGE_PAYOFFS) + ["call"], multiple=True)
    _add_mc_args(p, default_paths=1_000_000)
    p.add_argument("--steps", type=_step_list, default=convergence.DEFAULT_STEPS,
                   help="comma-separated step counts (default 1,2,4,...,256)")
    p.add_argument("--fine-steps", type=_positive_int, default=convergence.DEFAULT_FINE_STEPS,
                   help="steps of the self-referenced fine grid (smoothed put)")
    p.add_argument("--reference-paths", type=_positive_int, default=None,
                   help="paths for the fine-grid reference (default --paths)")
    p.add_argument("--out-dir", type=Path, default=Path("results"))
    p.add_argument("--resume", action="store_true",
                   help="reuse levels already written to OUT_DIR/rows.csv")

    p = sub.add_parser("fit", help="refit rates from a convergence CSV")
    p.add_argument("csv", type=Path)
    p.add_argument("--levels", type=_level_range, default=None,
                   help="only rows with LO <= N <= HI (default: non-noise-dominated rows)")
    p.add_argument("--functional", default=None, help="restrict to one functional")
    return parser


def _params(args) -> tuple[str, HestonParams]:
    if getattr(args, "params_file", None) is not None:
        try:
            return args.params_file.stem, load_params(args.params_file)
        except OSError as exc:
            raise UsageError(f"cannot read {args.params_file}: {exc}") from None
    name = args.model or "model1"
    return name, preset(name)


def _resolve_seed(args) -> int:
    if args.seed is None:
        args.seed = secrets.randbits(64)
        print(f"seed: {args.seed}", file=sys.stderr)
    return args.seed


def _workers(args) -> int:
    return default_workers() if args.workers is None else args.workers


# --- commands ---------------------------------------------------------------

def cmd_price(args) -> int:
    name, params = _params(args)
    strike = params.s0 if args.strike is None else args.strike
    cfg = analytic.QuadratureConfig(abs_tol=args.abs_tol)
    fn = {"put": analytic.put_price, "call": analytic.call_price,
          "indicator": analytic.digital_price}[args.payoff]
    ref = fn(params, strike, cfg)
    out = {"model": name, "payoff": args.payoff, "strike": strike, "value": ref.value,
           "p1": ref.p1, "p2": ref.p2, "est_error": ref.est_error}
    if args.json:
        print(json.dumps(out))
    else:
        print(f"{name} {args.payoff} K={strike:g}: {ref.value:.12g} "
              f"(est_error {ref.est_error:.2e}, P1={ref.p1:.12g}, P2={ref.p2:.12g})")
    return EXIT_OK


def cmd_simulate(args) -> int:
    name, params = _params(args)
    scheme = require_scheme(params, args.scheme)
    if scheme is Scheme.SQRT_EULER:
        raise UsageError("sqrt-euler only simulates the variance; choose milstein-d or milstein-d-trunc")
    seed = _resolve_seed(args)
    spec = make_payoff(PayoffKind.parse(args.payoff), params, args.strike)
    est = estimate(params, uniform_grid(params.t_horizon, args.steps), spec, scheme,
                   args.paths, RngStreamSpec(seed), workers=_workers(args))
    out = {"model": name, "payoff": spec.label, "strike": spec.strike, "scheme": scheme.value,
           "seed": seed, "mean": est.mean, "std_error": est.std_error,
           "n_paths": est.n_paths, "n_steps": est.n_steps}
    if args.json:
        print(json.dumps(out))
    else:
        print(f"{name} {spec.label} N={est.n_steps} n={est.n_paths}: "
              f"{est.mean:.10g} +/- {est.std_error:.3g}")
    return EXIT_OK


def _completed_levels(rows_path: Path, manifest_path: Path, manifest: RunManifest):
    """Levels already on disk, after checking they belong to the same run."""
    if not rows_path.exists():
        return {}
    if not manifest_path.exists():
        raise UsageError(f"--resume: {rows_path} exists but {manifest_path} is missing")
    old = json.loads(manifest_path.read_text())
    mine = manifest.reproducible_part()
    clash = [k for k, v in mine.items() if old.get(k) != v]
    if clash:
        raise UsageError(f"--resume: existing run differs in {', '.join(clash)}")
    try:
        records = convergence.read_rows_csv(rows_path)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    return {(r["functional"], r["row"].n_steps): (r["row"].estimate, r["row"].std_error)
            for r in records}


def cmd_converge(args) -> int:
    name, params = _params(args)
    scheme = require_scheme(params, args.scheme)
    if scheme is Scheme.SQRT_EULER:
        raise UsageError("sqrt-euler only simulates the variance; choose milstein-d or milstein-d-trunc")
    seed = _resolve_seed(args)
    kinds = args.payoff or list(CONVERGE_PAYOFFS)
    if len(set(kinds)) != len(kinds):
        raise UsageError("each --payoff may be given once")
    specs = [make_payoff(PayoffKind.parse(k), params, args.strike) for k in kinds]
    workers = _workers(args)
    try:
        configs = [convergence.StudyConfig(model=params, functional=s, n_paths=args.paths,
                                           seed=seed, step_counts=args.steps, scheme=scheme,
                                           fine_steps=args.fine_steps,
                                           reference_paths=args.reference_paths,
                                           model_name=name, workers=workers) for s in specs]
    except ValueError as exc:
        raise UsageError(str(exc)) from None

    out_dir: Path = args.out_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    rows_path = out_dir / ROWS_FILE
    manifest_path = out_dir / MANIFEST_FILE
    needs_fine = any(c.reference is convergence.ReferenceKind.SELF_FINE_GRID for c in configs)
    manifest = RunManifest(command="converge", model_name=name, model=params.to_json_dict(),
                           payoffs=[s.label for s in specs], strike=specs[0].strike,
                           scheme=scheme.value, step_counts=list(configs[0].step_counts),
                           n_paths=args.paths, seed=seed,
                           fine_steps=args.fine_steps if needs_fine else None,
                           reference_paths=configs[0].ref_paths if needs_fine else None)
    completed = _completed_levels(rows_path, manifest_path, manifest) if args.resume else {}
    if not completed:
        convergence.write_rows_csv(rows_path, [])

    def on_level(cfg, row):
        if (cfg.functional.label, row.n_steps) in completed:
            return
        convergence.write_rows_csv(rows_path, [convergence.row_record(
            name, cfg.functional.label, scheme.value, row)], append=True)
        print(f"{cfg.functional.label} N={row.n_steps}: {row.estimate:.8g} "
              f"(se {row.std_error:.2e}, err {row.abs_error:.2e})", file=sys.stderr)

    manifest.outputs = [ROWS_FILE, SUMMARY_FILE] + [f"{s.label}.dat" for s in specs]
    manifest.write(manifest_path)
    results = convergence.run_studies(configs, on_level=on_level, completed=completed)

    if completed:
        # rows for resumed levels came from disk; rewrite in canonical order
        convergence.write_rows_csv(rows_path, [
            convergence.row_record(name, s.label, scheme.value, res.rows[j])
            for j in range(len(configs[0].step_counts)) for s, res in zip(specs, results)])
    summary = [convergence.summary_record(name, params, s.label, r) for s, r in zip(specs, results)]
    convergence.write_summary_csv(out_dir / SUMMARY_FILE, summary)
    for s, r in zip(specs, results):
        convergence.write_plot_data(out_dir / f"{s.label}.dat", r,
                                    title=f"{name} {s.label} {scheme.value}")
    nu = feller_report(params).nu
    for s, r in zip(specs, results):
        rate = "n/a" if r.fitted_rate is None else f"{r.fitted_rate:.4f}"
        extra = f" [{'; '.join(r.flags)}]" if r.flags else ""
        print(f"{name} {s.label} nu={nu:.3f} rate={rate} fit N={list(r.fit_subset)}{extra}")
    return EXIT_OK


def cmd_fit(args) -> int:
    try:
        records = convergence.read_rows_csv(args.csv)
    except OSError as exc:
        raise UsageError(f"cannot read {args.csv}: {exc}") from None
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    groups: dict[tuple[str, str, str], list] = {}
    for r in records:
        if args.functional is None or r["functional"] == args.functional:
            groups.setdefault((r["model"], r["functional"], r["scheme"]), []).append(r["row"])
    if not groups:
        raise UsageError(f"{args.csv}: no rows to fit")
    for (model, functional, scheme), rows in groups.items():
        if args.levels is None:
            subset = convergence.default_fit_subset(rows)
        else:
            lo, hi = args.levels
            subset = tuple(r.n_steps for r in rows if lo <= r.n_steps <= hi)
        try:
            fit = convergence.fit_rate(rows, subset)
        except convergence.FitError as exc:
            raise UsageError(f"{model} {functional}: {exc}") from None
        print(f"{model} {functional} {scheme} rate={fit.slope:.6f} "
              f"intercept={fit.intercept:.6f} residual={fit.residual:.6f} N={list(subset)}")
    return EXIT_OK


COMMANDS = {"price": cmd_price, "simulate": cmd_simulate,
            "converge": cmd_converge, "fit": cmd_fit}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (UsageError, SchemeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (QuadratureError, NonFiniteSampleError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        # parameter validation (bad params file, strike <= 0, ...)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
