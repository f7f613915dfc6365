"""Weak-error study: sweep step counts, compare with a reference, fit the rate."""

from __future__ import annotations

import csv
import enum
import math
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from . import analytic
from .core import HestonParams, feller_report, uniform_grid
from .montecarlo import RngStreamSpec, estimate_many
from .payoffs import PayoffKind, PayoffSpec
from .schemes import Scheme, require_scheme

DEFAULT_STEPS = tuple(2 ** k for k in range(9))
DEFAULT_FINE_STEPS = 2 ** 10

ROW_HEADER = ["model", "functional", "scheme", "N", "delta", "estimate",
              "std_error", "reference", "abs_error"]
SUMMARY_HEADER = ["model", "functional", "nu", "fitted_rate", "residual"]


class FitError(ValueError):
    pass


class ReferenceKind(str, enum.Enum):
    ANALYTIC = "analytic"
    SELF_FINE_GRID = "self_fine_grid"


@dataclass(frozen=True)
class StudyConfig:
    model: HestonParams
    functional: PayoffSpec
    n_paths: int
    seed: int
    step_counts: tuple[int, ...] = DEFAULT_STEPS
    reference: ReferenceKind | None = None   # None: analytic when available
    scheme: Scheme = Scheme.MILSTEIN_D
    fine_steps: int = DEFAULT_FINE_STEPS
    reference_paths: int | None = None
    model_name: str = "custom"
    workers: int | None = None

    def __post_init__(self):
        steps = tuple(int(n) for n in self.step_counts)
        object.__setattr__(self, "step_counts", steps)
        object.__setattr__(self, "scheme", Scheme.parse(self.scheme))
        if not steps or any(n < 1 for n in steps):
            raise ValueError("step_counts must be positive integers")
        if any(b <= a for a, b in zip(steps, steps[1:])):
            raise ValueError("step_counts must be strictly increasing")
        if self.n_paths < 2:
            raise ValueError("n_paths must be >= 2")
        ref = self.reference
        if ref is None:
            ref = (ReferenceKind.ANALYTIC if has_analytic_reference(self.functional)
                   else ReferenceKind.SELF_FINE_GRID)
        ref = ReferenceKind(ref)
        object.__setattr__(self, "reference", ref)
        if ref is ReferenceKind.ANALYTIC and not has_analytic_reference(self.functional):
            raise ValueError(f"no analytic reference for {self.functional.label}")
        if ref is ReferenceKind.SELF_FINE_GRID:
            if self.fine_steps <= steps[-1]:
                raise ValueError("fine-grid reference needs more steps than the finest level")
            if self.reference_paths is not None and self.reference_paths < self.n_paths:
                raise ValueError("reference_paths must be at least n_paths")

    @property
    def ref_paths(self) -> int:
        return self.n_paths if self.reference_paths is None else self.reference_paths


@dataclass(frozen=True)
class StudyRow:
    n_steps: int
    delta: float
    estimate: float
    std_error: float
    reference: float
    abs_error: float

    @property
    def noise_dominated(self) -> bool:
        return self.std_error > self.abs_error


@dataclass(frozen=True)
class FitResult:
    slope: float
    intercept: float
    residual: float
    n_rows: int


@dataclass(frozen=True)
class StudyResult:
    rows: tuple[StudyRow, ...]
    fitted_rate: float | None
    intercept: float | None
    residual: float | None
    fit_subset: tuple[int, ...]
    reference_value: float
    reference_error: float
    flags: tuple[str, ...] = ()

    def row(self, n_steps: int) -> StudyRow:
        for r in self.rows:
            if r.n_steps == n_steps:
                return r
        raise KeyError(n_steps)


# --- fitting --------------------------------------------------------------

def fit_rate(rows: Sequence[StudyRow], subset: Iterable[int] | None = None) -> FitResult:
    """Least-squares slope of log2(abs_error) against log2(delta).

    ``subset`` lists the step counts N to use (default: all rows).  Rows with a
    zero error cannot be logged and are dropped with a warning.
    """
    chosen = list(rows) if subset is None else [r for r in rows if r.n_steps in set(subset)]
    usable = [r for r in chosen if r.abs_error > 0]
    if len(usable) < len(chosen):
        warnings.warn(f"dropped {len(chosen) - len(usable)} rows with zero abs_error", stacklevel=2)
    if len(usable) < 2:
        raise FitError(f"need at least 2 rows with positive error, got {len(usable)}")
    x = np.log2([r.delta for r in usable])
    y = np.log2([r.abs_error for r in usable])
    xc = x - x.mean()
    sxx = float(np.dot(xc, xc))
    if sxx == 0.0:
        raise FitError("all rows share one step size")
    slope = float(np.dot(xc, y - y.mean())) / sxx
    intercept = float(y.mean() - slope * x.mean())
    residual = float(np.linalg.norm(y - (intercept + slope * x)))
    return FitResult(slope=slope, intercept=intercept, residual=residual, n_rows=len(usable))


def default_fit_subset(rows: Sequence[StudyRow]) -> tuple[int, ...]:
    return tuple(r.n_steps for r in rows if r.abs_error > 0 and not r.noise_dominated)


def summarize(levels: Sequence[tuple[int, float, float, float]], reference: float | Sequence[float],
              reference_error: float = 0.0, subset: Iterable[int] | None = None) -> StudyResult:
    """Assemble rows from (N, delta, estimate, std_error) levels and fit them."""
    refs = ([float(reference)] * len(levels) if np.isscalar(reference)
            else [float(r) for r in reference])
    rows = tuple(StudyRow(n, d, e, s, r, abs(e - r)) for (n, d, e, s), r in zip(levels, refs))
    flags = [f"noise-dominated N={r.n_steps}" for r in rows if r.noise_dominated]
    chosen = default_fit_subset(rows) if subset is None else tuple(subset)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            fit = fit_rate(rows, chosen)
    except FitError:
        return StudyResult(rows, None, None, None, chosen, refs[0], reference_error,
                           tuple(flags) + ("degenerate fit",))
    return StudyResult(rows, fit.slope, fit.intercept, fit.residual, chosen,
                       refs[0], reference_error, tuple(flags))


# --- running ----------------------------------------------------------------

def has_analytic_reference(spec: PayoffSpec) -> bool:
    return spec.kind in (PayoffKind.PUT, PayoffKind.INDICATOR, PayoffKind.CALL)


def analytic_reference(params: HestonParams, spec: PayoffSpec,
                       cfg: analytic.QuadratureConfig = analytic.QuadratureConfig()):
    """Payoff-matched semi-analytic value (discount taken from the spec)."""
    scale = spec.discount / params.discount
    if spec.kind is PayoffKind.PUT:
        ref = analytic.put_price(params, spec.strike, cfg)
    elif spec.kind is PayoffKind.CALL:
        ref = analytic.call_price(params, spec.strike, cfg)
    elif spec.kind is PayoffKind.INDICATOR:
        ref = analytic.digital_price(params, spec.strike, cfg)
    else:
        raise ValueError(f"no analytic reference for {spec.label}")
    return scale * ref.value, scale * ref.est_error


def level_offsets(step_counts: Sequence[int], n_paths: int) -> dict[int, int]:
    """Disjoint path-index ranges: level i owns [i*n, (i+1)*n); the fine-grid
    reference starts after the last level."""
    return {n: i * n_paths for i, n in enumerate(step_counts)}


def run_studies(configs: Sequence[StudyConfig],
                on_level: Callable[[StudyConfig, StudyRow], None] | None = None,
                completed: dict[tuple[str, int], tuple[float, float]] | None = None
                ) -> list[StudyResult]:
    """Run several studies that share model, scheme, seed, grid levels and
    path counts, simulating each level once for all functionals.

    Each result is identical to what :func:`run_study` gives for that config
    alone.  ``completed`` maps (functional label, N) to a previously computed
    (estimate, std_error) and skips those levels.
    """
    if not configs:
        return []
    base = configs[0]
    for c in configs[1:]:
        if (c.model, c.scheme, c.seed, c.step_counts, c.n_paths, c.workers) != \
                (base.model, base.scheme, base.seed, base.step_counts, base.n_paths, base.workers):
            raise ValueError("run_studies needs configs that differ only in functional")
    params, scheme = base.model, base.scheme
    require_scheme(params, scheme)
    rng = RngStreamSpec(base.seed)
    completed = completed or {}
    offsets = level_offsets(base.step_counts, base.n_paths)
    fine_offset = len(base.step_counts) * base.n_paths

    refs = []
    fine_group = {}
    for i, c in enumerate(configs):
        if c.reference is ReferenceKind.ANALYTIC:
            refs.append(analytic_reference(params, c.functional))
        else:
            refs.append(None)
            fine_group.setdefault((c.fine_steps, c.ref_paths), []).append(i)
    for (fine_steps, ref_paths), group in fine_group.items():
        ests = estimate_many(params, uniform_grid(params.t_horizon, fine_steps),
                             [configs[i].functional for i in group], scheme, ref_paths, rng,
                             path_offset=fine_offset, workers=base.workers)
        for i, e in zip(group, ests):
            refs[i] = (e.mean, e.std_error)

    levels = [[] for _ in configs]
    for n in base.step_counts:
        grid = uniform_grid(params.t_horizon, n)
        todo = [i for i, c in enumerate(configs) if (c.functional.label, n) not in completed]
        if todo:
            ests = estimate_many(params, grid, [configs[i].functional for i in todo], scheme,
                                 base.n_paths, rng, path_offset=offsets[n], workers=base.workers)
            fresh = dict(zip(todo, ests))
        else:
            fresh = {}
        for i, c in enumerate(configs):
            if i in fresh:
                mean, se = fresh[i].mean, fresh[i].std_error
            else:
                mean, se = completed[(c.functional.label, n)]
            level = (n, float(grid.steps[0]), mean, se)
            levels[i].append(level)
            if on_level is not None:
                row = StudyRow(n, level[1], mean, se, refs[i][0], abs(mean - refs[i][0]))
                on_level(c, row)
    return [summarize(lv, ref[0], ref[1]) for lv, ref in zip(levels, refs)]


def run_study(cfg: StudyConfig, **kwargs) -> StudyResult:
    return run_studies([cfg], **kwargs)[0]


# --- files ------------------------------------------------------------------

def _fmt(x: float) -> str:
    return repr(float(x))


def row_record(model: str, functional: str, scheme: str, row: StudyRow) -> list[str]:
    return [model, functional, scheme, str(row.n_steps), _fmt(row.delta), _fmt(row.estimate),
            _fmt(row.std_error), _fmt(row.reference), _fmt(row.abs_error)]


def write_rows_csv(path: str | Path, records: Iterable[list[str]], append: bool = False):
    path = Path(path)
    fresh = not (append and path.exists() and path.stat().st_size > 0)
    with open(path, "a" if not fresh else "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if fresh:
            w.writerow(ROW_HEADER)
        for rec in records:
            w.writerow(rec)


def read_rows_csv(path: str | Path) -> list[dict]:
    """Rows of a convergence CSV, with numeric fields parsed and validated."""
    out = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ROW_HEADER:
            raise ValueError(f"{path}: expected header {','.join(ROW_HEADER)}, "
                             f"got {','.join(reader.fieldnames or [])}")
        for lineno, rec in enumerate(reader, start=2):
            try:
                row = StudyRow(int(rec["N"]), float(rec["delta"]), float(rec["estimate"]),
                               float(rec["std_error"]), float(rec["reference"]),
                               float(rec["abs_error"]))
            except (TypeError, ValueError) as exc:
                raise ValueError(f"{path}:{lineno}: malformed row ({exc})") from None
            out.append({"model": rec["model"], "functional": rec["functional"],
                        "scheme": rec["scheme"], "row": row})
    return out


def summary_record(model: str, params: HestonParams, functional: str,
                   result: StudyResult) -> list[str]:
    rate = "" if result.fitted_rate is None else _fmt(result.fitted_rate)
    resid = "" if result.residual is None else _fmt(result.residual)
    return [model, functional, _fmt(feller_report(params).nu), rate, resid]


def write_summary_csv(path: str | Path, records: Iterable[list[str]]):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_HEADER)
        for rec in records:
            w.writerow(rec)


def write_plot_data(path: str | Path, result: StudyResult, title: str = ""):
    """Whitespace-separated columns for gnuplot: N, log2(delta), log2(error),
    log2(std_error), and the fitted line."""
    with open(path, "w") as fh:
        if title:
            fh.write(f"# {title}\n")
        if result.fitted_rate is not None:
            fh.write(f"# fitted rate {result.fitted_rate:.6f} over N in {list(result.fit_subset)}\n")
        fh.write("# N log2_delta log2_abs_error log2_std_error log2_fit\n")
        for r in result.rows:
            ld = math.log2(r.delta)
            le = math.log2(r.abs_error) if r.abs_error > 0 else float("nan")
            ls = math.log2(r.std_error) if r.std_error > 0 else float("nan")
            lf = (result.intercept + result.fitted_rate * ld
                  if result.fitted_rate is not None else float("nan"))
            fh.write(f"{r.n_steps} {ld:.10g} {le:.10g} {ls:.10g} {lf:.10g}\n")
