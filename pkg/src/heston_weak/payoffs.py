"""Terminal-price functionals: put, smoothed put, indicator and call.

Payoffs take the price ``s = exp(x_N)``; the composition with ``exp`` is done
by the Monte Carlo engine.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from math import factorial
from typing import Callable

import numpy as np

from .core import HestonParams

_BRIDGE_LO = 0.9
_BRIDGE_HI = 1.1
_MAX_COND = 1e12


class PayoffKind(str, enum.Enum):
    PUT = "put"
    SMOOTHED_PUT = "smoothed_put"
    INDICATOR = "indicator"
    CALL = "call"
    CUSTOM = "custom"

    @property
    def cli_name(self) -> str:
        return self.value.replace("_", "-")

    @classmethod
    def parse(cls, name: "PayoffKind | str") -> "PayoffKind":
        if isinstance(name, PayoffKind):
            return name
        try:
            return cls(name.replace("-", "_"))
        except ValueError:
            choices = ", ".join(k.cli_name for k in cls if k is not cls.CUSTOM)
            raise ValueError(f"unknown payoff {name!r}; choose from {choices}") from None


class SmoothingError(ArithmeticError):
    pass


@dataclass(frozen=True)
class PayoffSpec:
    """A payoff with its strike and discount factor baked in.

    For the smoothed put, ``smoothing_poly`` holds the 8 coefficients of the
    bridge polynomial in the local coordinate ``t = (s - 0.9K) / (0.2K)``,
    lowest degree first.
    """

    kind: PayoffKind
    strike: float
    discount: float = 1.0
    smoothing_poly: tuple[float, ...] | None = None
    func: Callable | None = field(default=None, compare=False)
    name: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", PayoffKind.parse(self.kind))
        if not self.strike > 0:
            raise ValueError(f"strike must be > 0, got {self.strike!r}")
        if not self.discount > 0:
            raise ValueError(f"discount must be > 0, got {self.discount!r}")
        if self.kind is PayoffKind.CUSTOM and self.func is None:
            raise ValueError("a custom payoff needs func")
        if self.kind is PayoffKind.SMOOTHED_PUT and self.smoothing_poly is None:
            raise ValueError("use build_smoothed_put to construct a smoothed put")

    @property
    def label(self) -> str:
        return self.name or self.kind.cli_name

    def __call__(self, s):
        return evaluate(self, s)


def put(s, spec: PayoffSpec):
    return spec.discount * np.maximum(spec.strike - s, 0.0)


def call(s, spec: PayoffSpec):
    return spec.discount * np.maximum(s - spec.strike, 0.0)


def indicator(s, spec: PayoffSpec):
    # closed interval [0, K]
    return np.where(s <= spec.strike, spec.discount, 0.0)


def _put_jets(strike: float, discount: float):
    """(value, f', f'', f''') of the put at the two bridge endpoints."""
    lo = (discount * (1.0 - _BRIDGE_LO) * strike, -discount, 0.0, 0.0)
    hi = (0.0, 0.0, 0.0, 0.0)
    return lo, hi


def _bridge_system(h: float):
    """8x8 Hermite system in t in [0, 1]; row j*2+e is derivative j at endpoint e."""
    a = np.zeros((8, 8))
    for j in range(4):
        for deg in range(j, 8):
            coef = factorial(deg) / factorial(deg - j) / h ** j
            a[2 * j, deg] = coef * (0.0 ** (deg - j) if deg > j else 1.0)
            a[2 * j + 1, deg] = coef
    return a


def _poly_derivs(coeffs, t, h, order):
    c = np.polynomial.polynomial.polyder(coeffs, order) if order else np.asarray(coeffs)
    return np.polynomial.polynomial.polyval(t, c) / h ** order


def build_smoothed_put(spec: PayoffSpec) -> PayoffSpec:
    """Smoothed put derived from a put spec.

    Inside [0.9K, 1.1K] the put is replaced by the degree-7 polynomial whose
    value and first three derivatives agree with the put at both ends.
    """
    if spec.kind is not PayoffKind.PUT:
        raise ValueError(f"expected a put spec, got {spec.kind.value}")
    k, d = spec.strike, spec.discount
    h = (_BRIDGE_HI - _BRIDGE_LO) * k
    # work in value units of d*h so the system is O(1)
    a = _bridge_system(1.0)
    lo, hi = _put_jets(k, d)
    rhs = np.empty(8)
    for j in range(4):
        rhs[2 * j] = lo[j] * h ** j / (d * h)
        rhs[2 * j + 1] = hi[j] * h ** j / (d * h)
    cond = np.linalg.cond(a)
    if not cond < _MAX_COND:
        raise SmoothingError(f"bridge system ill-conditioned (cond={cond:.3g})")
    try:
        c = np.linalg.solve(a, rhs)
    except np.linalg.LinAlgError as exc:
        raise SmoothingError(f"bridge solve failed (cond={cond:.3g}): {exc}") from exc
    coeffs = c * d * h

    for j in range(4):
        for t, target in ((0.0, lo[j]), (1.0, hi[j])):
            got = _poly_derivs(coeffs, t, h, j)
            scale = d * k ** (1 - j)
            if abs(got - target) > 1e-9 * scale:
                raise SmoothingError(
                    f"bridge misses derivative {j} at t={t}: {got!r} vs {target!r}")
    return PayoffSpec(kind=PayoffKind.SMOOTHED_PUT, strike=k, discount=d,
                      smoothing_poly=tuple(float(x) for x in coeffs))


def smoothed_put(s, spec: PayoffSpec):
    k = spec.strike
    lo, hi = _BRIDGE_LO * k, _BRIDGE_HI * k
    s = np.asarray(s, dtype=np.float64)
    t = (s - lo) / (hi - lo)
    inside = (s >= lo) & (s <= hi)
    bridge = np.polynomial.polynomial.polyval(np.clip(t, 0.0, 1.0), spec.smoothing_poly)
    out = np.where(inside, bridge, spec.discount * np.maximum(k - s, 0.0))
    return out if out.ndim else float(out)


def smoothed_put_derivative(s, spec: PayoffSpec, order: int):
    """Analytic derivative of the bridge polynomial (valid inside the bridge)."""
    h = (_BRIDGE_HI - _BRIDGE_LO) * spec.strike
    t = (np.asarray(s, dtype=np.float64) - _BRIDGE_LO * spec.strike) / h
    return _poly_derivs(spec.smoothing_poly, t, h, order)


def evaluate(spec: PayoffSpec, s):
    kind = spec.kind
    if kind is PayoffKind.PUT:
        return put(s, spec)
    if kind is PayoffKind.SMOOTHED_PUT:
        return smoothed_put(s, spec)
    if kind is PayoffKind.INDICATOR:
        return indicator(s, spec)
    if kind is PayoffKind.CALL:
        return call(s, spec)
    return spec.func(s)


def make_payoff(kind: PayoffKind | str, params: HestonParams,
                strike: float | None = None) -> PayoffSpec:
    """Payoff for ``params``, discounted by exp(-mu*T); strike defaults to S0."""
    kind = PayoffKind.parse(kind)
    if kind is PayoffKind.CUSTOM:
        raise ValueError("custom payoffs are built directly with PayoffSpec")
    strike = params.s0 if strike is None else float(strike)
    disc = math.exp(-params.mu * params.t_horizon)
    if kind is PayoffKind.SMOOTHED_PUT:
        return build_smoothed_put(PayoffSpec(PayoffKind.PUT, strike, disc))
    return PayoffSpec(kind, strike, disc)


def constant_payoff(c: float) -> PayoffSpec:
    return PayoffSpec(PayoffKind.CUSTOM, strike=1.0, func=lambda s: np.full(np.shape(s), float(c)),
                      name=f"const({c:g})")
