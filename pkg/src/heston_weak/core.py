"""Model parameters, the Feller classification and time grids."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class HestonParams:
    """Constants of the log-Heston model.

    ``lam`` is the long-run variance level and ``theta`` the volatility of
    variance.  Validation happens here once; downstream code trusts the values.
    """

    s0: float
    v0: float
    mu: float
    kappa: float
    lam: float
    theta: float
    rho: float
    t_horizon: float

    def __post_init__(self):
        for name in ("s0", "v0", "mu", "kappa", "lam", "theta", "rho", "t_horizon"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise ValueError(f"{name} must be finite, got {value!r}")
        for name in ("s0", "v0", "kappa", "lam", "theta", "t_horizon"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0, got {getattr(self, name)!r}")
        if not -1.0 <= self.rho <= 1.0:
            raise ValueError(f"rho must lie in [-1, 1], got {self.rho!r}")

    @property
    def x0(self) -> float:
        return math.log(self.s0)

    @property
    def discount(self) -> float:
        return math.exp(-self.mu * self.t_horizon)

    def replace(self, **changes) -> "HestonParams":
        values = asdict(self)
        values.update(changes)
        return HestonParams(**values)

    def to_json_dict(self) -> dict:
        return {
            "s0": self.s0, "v0": self.v0, "mu": self.mu, "kappa": self.kappa,
            "lambda": self.lam, "theta": self.theta, "rho": self.rho,
            "T": self.t_horizon,
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "HestonParams":
        expected = {"s0", "v0", "mu", "kappa", "lambda", "theta", "rho", "T"}
        missing = expected - data.keys()
        extra = data.keys() - expected
        if missing or extra:
            raise ValueError(
                f"bad parameter keys: missing {sorted(missing)}, unexpected {sorted(extra)}")
        return cls(
            s0=float(data["s0"]), v0=float(data["v0"]), mu=float(data["mu"]),
            kappa=float(data["kappa"]), lam=float(data["lambda"]),
            theta=float(data["theta"]), rho=float(data["rho"]),
            t_horizon=float(data["T"]),
        )


def load_params(path: str | Path) -> HestonParams:
    with open(path) as fh:
        return HestonParams.from_json_dict(json.load(fh))


# Kimmel et al. (Model 1) and Broadie-Kaya (Models 2, 3) parameter sets.
PRESETS: dict[str, HestonParams] = {
    "model1": HestonParams(s0=100.0, v0=0.0457, mu=0.0, kappa=5.07, lam=0.0457,
                           theta=0.48, rho=-0.767, t_horizon=2.0),
    "model2": HestonParams(s0=100.0, v0=0.010201, mu=0.0319, kappa=6.21, lam=0.019,
                           theta=0.61, rho=-0.7, t_horizon=1.0),
    "model3": HestonParams(s0=100.0, v0=0.09, mu=0.05, kappa=2.0, lam=0.09,
                           theta=1.0, rho=-0.3, t_horizon=5.0),
}


def preset(name: str) -> HestonParams:
    try:
        return PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown model preset {name!r}; choose from {sorted(PRESETS)}") from None


@dataclass(frozen=True)
class FellerReport:
    nu: float
    satisfies_f: bool
    satisfies_fmin: bool
    scheme_well_defined: bool


def feller_report(params: HestonParams) -> FellerReport:
    """Feller index 2*kappa*lam/theta**2 and the regimes it selects."""
    two_kl = 2.0 * params.kappa * params.lam
    th2 = params.theta * params.theta
    return FellerReport(
        nu=two_kl / th2,
        satisfies_f=two_kl > 2.0 * th2,
        satisfies_fmin=2.0 * two_kl > th2,
        scheme_well_defined=2.0 * two_kl >= th2,
    )


class TimeGrid:
    """Discretization 0 = t_0 < ... < t_N = T with per-step lengths.

    Steps are stored rather than re-derived by differencing, so a uniform grid
    carries exactly T/N on every step.
    """

    def __init__(self, times, steps=None):
        times = np.array(times, dtype=np.float64)
        if times.ndim != 1 or times.size < 2:
            raise ValueError("a time grid needs at least two points")
        if times[0] != 0.0:
            raise ValueError(f"grid must start at 0, got {times[0]!r}")
        if not np.all(np.diff(times) > 0):
            raise ValueError("grid times must be strictly increasing")
        if steps is None:
            steps = np.diff(times)
        else:
            steps = np.array(steps, dtype=np.float64)
            if steps.shape != (times.size - 1,):
                raise ValueError("need exactly one step per grid interval")
            if not np.all(steps > 0):
                raise ValueError("steps must be positive")
            if not np.allclose(steps, np.diff(times), rtol=1e-9, atol=0.0):
                raise ValueError("steps disagree with the grid times")
        times.setflags(write=False)
        steps.setflags(write=False)
        self.times = times
        self.steps = steps

    @property
    def n_steps(self) -> int:
        return self.steps.size

    @property
    def t_horizon(self) -> float:
        return float(self.times[-1])

    @property
    def max_step(self) -> float:
        return float(self.steps.max())

    def __len__(self):
        return self.n_steps

    def __eq__(self, other):
        if not isinstance(other, TimeGrid):
            return NotImplemented
        return np.array_equal(self.times, other.times) and np.array_equal(self.steps, other.steps)

    def __repr__(self):
        return f"TimeGrid(n_steps={self.n_steps}, T={self.t_horizon!r}, max_step={self.max_step!r})"


def uniform_grid(t_horizon: float, n_steps: int) -> TimeGrid:
    if isinstance(n_steps, bool) or int(n_steps) != n_steps or n_steps < 1:
        raise ValueError(f"n_steps must be a positive integer, got {n_steps!r}")
    if not t_horizon > 0:
        raise ValueError(f"t_horizon must be > 0, got {t_horizon!r}")
    n_steps = int(n_steps)
    dt = t_horizon / n_steps
    times = np.arange(n_steps + 1, dtype=np.float64) * dt
    times[-1] = t_horizon
    return TimeGrid(times, np.full(n_steps, dt))
