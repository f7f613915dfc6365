"""Reproducible Monte Carlo estimation of E f(S_T) under the discretized model.

Paths are identified by a global index; the noise of path ``i`` depends only
on ``(seed, i)``.  The index range is cut into fixed blocks of
``CHUNK_PATHS`` paths, each block is reduced to ``(count, mean, M2)``, and the
blocks are merged in index order.  Worker count only changes which thread
computes a block, so results are bit-identical for any ``workers``.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import kernels
from .core import HestonParams, TimeGrid
from .payoffs import PayoffSpec, evaluate
from .rng import fill_normals, split_seed
from .schemes import NoiseIncrement, Scheme, SchemeError, require_scheme

CHUNK_PATHS = 1 << 15
WORKERS_ENV = "HESTON_WEAK_WORKERS"


class NonFiniteSampleError(ArithmeticError):
    def __init__(self, path_index: int, seed: int, value: float):
        super().__init__(f"non-finite payoff sample {value!r} at path {path_index} (seed {seed})")
        self.path_index = path_index
        self.seed = seed


@dataclass(frozen=True)
class RngStreamSpec:
    """Master seed; path ``i`` draws from Philox counters ``(step, i)``."""

    seed: int

    def __post_init__(self):
        split_seed(self.seed)

    @property
    def key(self) -> tuple[np.uint64, np.uint64]:
        return split_seed(self.seed)

    def stream_of(self, path_index: int) -> tuple[int, int, int, int]:
        """(key_lo, key_hi, counter_lo, counter_hi) identifying the path's stream."""
        k0, k1 = self.key
        return int(k0), int(k1), path_index & 0xFFFFFFFF, path_index >> 32

    def normals(self, path_start: int, n_paths: int, step: int) -> tuple[np.ndarray, np.ndarray]:
        zw = np.empty(n_paths)
        zb = np.empty(n_paths)
        k0, k1 = self.key
        fill_normals(k0, k1, np.uint64(path_start), np.uint64(step), zw, zb)
        return zw, zb

    def increments(self, grid: TimeGrid, path_start: int, n_paths: int):
        """The exact noise the engine feeds paths [path_start, path_start+n_paths)."""
        for k, dt in enumerate(grid.steps):
            zw, zb = self.normals(path_start, n_paths, k)
            sq = np.sqrt(dt)
            yield NoiseIncrement(dw=sq * zw, db=sq * zb, dt=float(dt))


@dataclass(frozen=True)
class McEstimate:
    mean: float
    std_error: float
    n_paths: int
    n_steps: int


@dataclass(frozen=True)
class _Moments:
    count: int
    mean: float
    m2: float

    def merge(self, other: "_Moments") -> "_Moments":
        n = self.count + other.count
        delta = other.mean - self.mean
        return _Moments(n, self.mean + delta * (other.count / n),
                        self.m2 + other.m2 + delta * delta * (self.count * other.count / n))

    def estimate(self, n_steps: int) -> McEstimate:
        var = self.m2 / (self.count - 1)
        return McEstimate(mean=self.mean, std_error=float(np.sqrt(var / self.count)),
                          n_paths=self.count, n_steps=n_steps)


def _block_moments(y: np.ndarray) -> _Moments:
    # shifted two-pass: exact for constant samples
    shift = y[0]
    mean = shift + np.mean(y - shift)
    return _Moments(y.size, float(mean), float(np.sum((y - mean) ** 2)))


def default_workers() -> int:
    raw = os.environ.get(WORKERS_ENV)
    if not raw:
        return 1
    try:
        workers = int(raw)
    except ValueError:
        raise ValueError(f"{WORKERS_ENV} must be a positive integer, got {raw!r}") from None
    if workers < 1:
        raise ValueError(f"{WORKERS_ENV} must be a positive integer, got {raw!r}")
    return workers


def _blocks(path_offset: int, n_paths: int):
    return [(path_offset + lo, min(CHUNK_PATHS, n_paths - lo))
            for lo in range(0, n_paths, CHUNK_PATHS)]


def _run_blocks(fn, blocks, workers):
    workers = default_workers() if workers is None else workers
    if workers < 1:
        raise ValueError(f"workers must be >= 1, got {workers}")
    if workers == 1 or len(blocks) == 1:
        return [fn(b) for b in blocks]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, blocks))


def _model_args(params: HestonParams):
    return (params.x0, params.v0, params.mu, params.kappa, params.lam,
            params.theta, params.rho)


def terminal_states(params: HestonParams, grid: TimeGrid, scheme: Scheme | str,
                    rng: RngStreamSpec, path_start: int, n_paths: int):
    """Terminal (x_N, v_N) arrays for a contiguous block of path indices."""
    scheme = require_scheme(params, scheme)
    out_x = np.empty(n_paths)
    out_v = np.empty(n_paths)
    k0, k1 = rng.key
    kernels.terminal_states(np.uint64(path_start), np.ascontiguousarray(grid.steps),
                            *_model_args(params), scheme.code, k0, k1, out_x, out_v)
    return out_x, out_v


def estimate_many(params: HestonParams, grid: TimeGrid, payoffs: Sequence[PayoffSpec],
                  scheme: Scheme | str, n_paths: int, rng: RngStreamSpec,
                  path_offset: int = 0, workers: int | None = None) -> list[McEstimate]:
    """Estimates for several payoffs evaluated on one set of simulated paths."""
    scheme = require_scheme(params, scheme)
    if scheme is Scheme.SQRT_EULER:
        raise SchemeError("sqrt-euler simulates the variance only; it cannot price payoffs")
    if n_paths < 2:
        raise ValueError(f"n_paths must be >= 2, got {n_paths}")
    payoffs = list(payoffs)

    def block(b):
        start, n = b
        x, _ = terminal_states(params, grid, scheme, rng, start, n)
        s = np.exp(x)
        out = []
        for spec in payoffs:
            y = np.asarray(evaluate(spec, s), dtype=np.float64)
            bad = ~np.isfinite(y)
            if bad.any():
                i = int(np.argmax(bad))
                raise NonFiniteSampleError(start + i, rng.seed, float(y[i]))
            out.append(_block_moments(y))
        return out

    parts = _run_blocks(block, _blocks(path_offset, n_paths), workers)
    results = []
    for j in range(len(payoffs)):
        acc = parts[0][j]
        for p in parts[1:]:
            acc = acc.merge(p[j])
        results.append(acc.estimate(grid.n_steps))
    return results


def estimate(params: HestonParams, grid: TimeGrid, payoff: PayoffSpec,
             scheme: Scheme | str, n_paths: int, rng: RngStreamSpec,
             path_offset: int = 0, workers: int | None = None) -> McEstimate:
    """Sample mean of payoff(exp(x_N)) over paths [path_offset, path_offset + n_paths)."""
    return estimate_many(params, grid, [payoff], scheme, n_paths, rng,
                         path_offset=path_offset, workers=workers)[0]


def estimate_v_moments(params: HestonParams, grid: TimeGrid, scheme: Scheme | str,
                       n_paths: int, rng: RngStreamSpec, path_offset: int = 0,
                       workers: int | None = None) -> list[tuple[float, float]]:
    """(sample mean, standard error) of v_k for k = 0..N."""
    scheme = require_scheme(params, scheme)
    if n_paths < 2:
        raise ValueError(f"n_paths must be >= 2, got {n_paths}")
    dts = np.ascontiguousarray(grid.steps)
    k0, k1 = rng.key

    def block(b):
        start, n = b
        mean = np.empty(grid.n_steps + 1)
        m2 = np.empty(grid.n_steps + 1)
        kernels.v_moments(np.uint64(start), n, dts, *_model_args(params), scheme.code,
                          k0, k1, mean, m2)
        return n, mean, m2

    parts = _run_blocks(block, _blocks(path_offset, n_paths), workers)
    count, mean, m2 = parts[0]
    for n, mb, m2b in parts[1:]:
        total = count + n
        delta = mb - mean
        mean = mean + delta * (n / total)
        m2 = m2 + m2b + delta * delta * (count * n / total)
        count = total
    se = np.sqrt(m2 / (count - 1) / count)
    return [(float(a), float(b)) for a, b in zip(mean, se)]
