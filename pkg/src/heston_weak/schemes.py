"""Drift-implicit Milstein / Euler discretization of log-Heston, plus the
drift-implicit square-root Euler scheme for the CIR factor alone.

The ``*_update`` functions are the single source of the formulas.  They work
on floats and on numpy arrays alike and are compiled unchanged into the
Monte Carlo kernels.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import HestonParams, TimeGrid, feller_report


class SchemeError(ValueError):
    """A scheme was asked to run where it is not defined."""


class Scheme(str, enum.Enum):
    MILSTEIN_D = "milstein-d"
    MILSTEIN_D_TRUNC = "milstein-d-trunc"
    SQRT_EULER = "sqrt-euler"

    @classmethod
    def parse(cls, value: "Scheme | str") -> "Scheme":
        try:
            return cls(value)
        except ValueError:
            names = ", ".join(s.value for s in cls)
            raise SchemeError(f"unknown scheme {value!r}; choose from {names}") from None

    @property
    def code(self) -> int:
        return _SCHEME_CODES[self]


_SCHEME_CODES = {Scheme.MILSTEIN_D: 0, Scheme.MILSTEIN_D_TRUNC: 1, Scheme.SQRT_EULER: 2}


@dataclass(frozen=True)
class PathState:
    x: float
    v: float


@dataclass(frozen=True)
class NoiseIncrement:
    """Brownian increments of W and B over one step of length ``dt``.

    ``dw`` and ``db`` may be arrays, one entry per path.
    """

    dw: float
    db: float
    dt: float

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be > 0, got {self.dt!r}")


@dataclass(frozen=True)
class CirState:
    a: float


# --- formulas -------------------------------------------------------------

def milstein_v_update(v, dw, dt, kappa, lam, theta):
    r = np.sqrt(v) + 0.5 * theta * dw
    return (r * r + (kappa * lam - 0.25 * theta * theta) * dt) / (1.0 + kappa * dt)


def milstein_v_update_trunc(v, dw, dt, kappa, lam, theta):
    # positive part only under the root; the linear v term stays untruncated
    vp = np.maximum(v, 0.0)
    r = np.sqrt(vp) + 0.5 * theta * dw
    return (r * r + (v - vp) + (kappa * lam - 0.25 * theta * theta) * dt) / (1.0 + kappa * dt)


def euler_x_update(x, v, dw, db, dt, mu, rho, rho_bar):
    return x + (mu - 0.5 * v) * dt + np.sqrt(np.maximum(v, 0.0)) * (rho * dw + rho_bar * db)


def sqrt_euler_update(a, dw, dt, kappa, lam, theta):
    b = np.sqrt(a) + 0.5 * theta * dw
    den = 2.0 + kappa * dt
    s = b / den + np.sqrt(b * b / (den * den) + (kappa * lam - 0.25 * theta * theta) * dt / den)
    return s * s


def milstein_v_raw(v, dw, dt, kappa, lam, theta):
    """The implicit recursion solved for v_{n+1} without completing the square."""
    return (v + kappa * lam * dt + theta * np.sqrt(v) * dw
            + 0.25 * theta * theta * (dw * dw - dt)) / (1.0 + kappa * dt)


# --- step API ---------------------------------------------------------------

def milstein_v_step(v, noise: NoiseIncrement, params: HestonParams):
    return milstein_v_update(v, noise.dw, noise.dt, params.kappa, params.lam, params.theta)


def milstein_v_step_truncated(v, noise: NoiseIncrement, params: HestonParams):
    return milstein_v_update_trunc(v, noise.dw, noise.dt, params.kappa, params.lam, params.theta)


def scheme_d_step(state: PathState, noise: NoiseIncrement, params: HestonParams,
                  truncated: bool = False) -> PathState:
    """One step of the coupled scheme; both updates read only the old state."""
    rho_bar = np.sqrt(1.0 - params.rho * params.rho)
    x = euler_x_update(state.x, state.v, noise.dw, noise.db, noise.dt,
                       params.mu, params.rho, rho_bar)
    step = milstein_v_step_truncated if truncated else milstein_v_step
    return PathState(x=x, v=step(state.v, noise, params))


def sqrt_euler_step(a: CirState, noise: NoiseIncrement, params: HestonParams) -> CirState:
    require_scheme(params, Scheme.SQRT_EULER)
    return CirState(a=sqrt_euler_update(a.a, noise.dw, noise.dt,
                                        params.kappa, params.lam, params.theta))


def require_scheme(params: HestonParams, scheme: Scheme | str) -> Scheme:
    """Refuse scheme/parameter pairings without a well-defined recursion."""
    scheme = Scheme.parse(scheme)
    if scheme is not Scheme.MILSTEIN_D_TRUNC and not feller_report(params).scheme_well_defined:
        ratio = 4.0 * params.kappa * params.lam / params.theta ** 2
        raise SchemeError(
            f"{scheme.value} needs 4*kappa*lambda/theta^2 >= 1, got {ratio:.4g}; "
            "use milstein-d-trunc for this parameter set")
    return scheme


@dataclass(frozen=True)
class PathRecord:
    """Terminal state plus the whole trajectory (shape ``(N+1, ...)``)."""

    terminal: PathState | CirState
    x: np.ndarray | None
    v: np.ndarray


def simulate_path(grid: TimeGrid, params: HestonParams,
                  noise_stream: Sequence[NoiseIncrement],
                  scheme: Scheme | str = Scheme.MILSTEIN_D,
                  record: bool = False):
    """Run a scheme over ``grid`` with the given increments.

    Increments may carry arrays, in which case a batch of paths is advanced
    together.  The square-root Euler scheme evolves the variance only and
    returns a :class:`CirState`.
    """
    scheme = require_scheme(params, scheme)
    noise_stream = list(noise_stream)
    if len(noise_stream) != grid.n_steps:
        raise ValueError(f"got {len(noise_stream)} increments for {grid.n_steps} steps")
    for k, (inc, dt) in enumerate(zip(noise_stream, grid.steps)):
        if not np.isclose(inc.dt, dt, rtol=1e-12, atol=0.0):
            raise ValueError(f"increment {k} has dt={inc.dt!r}, grid step is {dt!r}")

    kappa, lam, theta = params.kappa, params.lam, params.theta
    rho_bar = np.sqrt(1.0 - params.rho * params.rho)
    x, v = params.x0, params.v0
    xs, vs = [x], [v]
    for inc in noise_stream:
        if scheme is Scheme.SQRT_EULER:
            v = sqrt_euler_update(v, inc.dw, inc.dt, kappa, lam, theta)
        else:
            x_new = euler_x_update(x, v, inc.dw, inc.db, inc.dt, params.mu, params.rho, rho_bar)
            if scheme is Scheme.MILSTEIN_D:
                v = milstein_v_update(v, inc.dw, inc.dt, kappa, lam, theta)
            else:
                v = milstein_v_update_trunc(v, inc.dw, inc.dt, kappa, lam, theta)
            x = x_new
        if record:
            xs.append(x)
            vs.append(v)

    terminal = CirState(a=v) if scheme is Scheme.SQRT_EULER else PathState(x=x, v=v)
    if not record:
        return terminal
    v_path = np.array([np.broadcast_to(q, np.shape(v)) for q in vs])
    x_path = None
    if scheme is not Scheme.SQRT_EULER:
        x_path = np.array([np.broadcast_to(q, np.shape(x)) for q in xs])
    return PathRecord(terminal=terminal, x=x_path, v=v_path)


def lower_bound(params: HestonParams, dt):
    """Per-step floor (kappa*lam - theta^2/4) * dt / (1 + kappa*T) for v_k."""
    return (params.kappa * params.lam - 0.25 * params.theta ** 2) * dt / (1.0 + params.kappa * params.t_horizon)
