"""Semi-analytic Heston prices by Fourier inversion of the characteristic function.

The call is S0*P1 - K*exp(-mu*T)*P2 with both exercise probabilities obtained
from Gil-Pelaez integrals; the put follows by parity and the digital paying on
{S_T <= K} is exp(-mu*T)*(1 - P2).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import HestonParams
from .quadrature import QuadratureError, integrate


@dataclass(frozen=True)
class QuadratureConfig:
    abs_tol: float = 1e-9
    max_nodes: int = 20000
    # fraction of abs_tol granted to the truncated tail beyond the upper limit
    tail_share: float = 0.1

    def __post_init__(self):
        if not self.abs_tol > 0:
            raise ValueError(f"abs_tol must be > 0, got {self.abs_tol!r}")
        if self.max_nodes < 64:
            raise ValueError(f"max_nodes must be >= 64, got {self.max_nodes!r}")
        if not 0 < self.tail_share < 1:
            raise ValueError(f"tail_share must lie in (0, 1), got {self.tail_share!r}")


@dataclass(frozen=True)
class ReferencePrice:
    value: float
    est_error: float
    p1: float | None = None
    p2: float | None = None


def _log1p_ratio(w):
    """log(1 + w) / w for complex w, accurate as w -> 0."""
    w = np.asarray(w, dtype=np.complex128)
    out = np.empty_like(w)
    small = np.abs(w) < 1e-3
    ws = w[small]
    out[small] = 1.0 - ws * (1.0 / 2 - ws * (1.0 / 3 - ws * (1.0 / 4 - ws / 5)))
    wl = w[~small]
    out[~small] = np.log1p(wl) / wl
    return out


def _psi(u, params: HestonParams, t: float):
    """log E exp(iu (log S_t - log S0 - mu t)), branch-stable form."""
    u = np.asarray(u, dtype=np.complex128)
    kappa, lam, theta, rho = params.kappa, params.lam, params.theta, params.rho
    iu = 1j * u
    a = iu + u * u
    beta = kappa - rho * theta * iu
    d = np.sqrt(beta * beta + theta * theta * a)
    bpd = beta + d
    q = -a / bpd                       # (beta - d) / theta^2 without cancellation
    g = theta * theta * q / bpd        # (beta - d) / (beta + d)
    e = np.exp(-d * t)
    one_m_e = -np.expm1(-d * t)
    h = (q / bpd) * one_m_e / (1.0 - g)
    dcoef = q * one_m_e / (1.0 - g * e)
    ccoef = kappa * lam * (q * t - 2.0 * h * _log1p_ratio(theta * theta * h))
    return ccoef + dcoef * params.v0


def heston_cf(u, params: HestonParams, t: float | None = None):
    """Characteristic function of log S_t, E exp(iu log S_t)."""
    t = params.t_horizon if t is None else t
    if not t > 0:
        raise ValueError(f"t must be > 0, got {t!r}")
    u = np.asarray(u, dtype=np.complex128)
    with np.errstate(over="ignore", invalid="ignore"):
        val = np.exp(1j * u * (params.x0 + params.mu * t) + _psi(u, params, t))
    if not np.all(np.isfinite(val)):
        raise FloatingPointError("characteristic function evaluation produced non-finite values")
    return val if val.ndim else complex(val)


def _upper_limit(log_modulus, tol: float):
    """Upper limit U for an integrand bounded by exp(log_modulus(u)) / (pi u).

    Decay is extrapolated exponentially from successive doublings of U; the
    returned tail bound is envelope(U) / decay_rate.
    """
    u_prev, e_prev = None, None
    u = 1.0
    for _ in range(64):
        e = float(np.exp(log_modulus(np.array([u]))[0]) / (math.pi * u))
        if e == 0.0:
            return u, 0.0
        if e_prev is not None and e < e_prev:
            rate = math.log(e_prev / e) / (u - u_prev)
            tail = e / rate
            if tail < tol:
                return u, tail
        u_prev, e_prev = u, e
        u *= 2.0
    raise QuadratureError("integrand does not decay; no truncation point found", math.nan, math.inf, 0)


def _probability(params: HestonParams, strike: float, shift: complex, tol: float,
                 cfg: QuadratureConfig):
    """1/2 + 1/pi * int_0^inf Re[exp(iu m + psi(u - shift)) / (iu)] du."""
    t = params.t_horizon
    m = math.log(params.s0 / strike) + params.mu * t

    def log_mod(u):
        return np.real(_psi(u - shift, params, t))

    def integrand(u):
        val = np.real(np.exp(1j * u * m + _psi(u - shift, params, t)) / (1j * u))
        if not np.all(np.isfinite(val)):
            raise FloatingPointError("non-finite integrand value in Heston inversion")
        return val

    upper, tail = _upper_limit(log_mod, cfg.tail_share * tol)
    integral, err, _ = integrate(integrand, 0.0, upper, (1.0 - cfg.tail_share) * tol,
                                 max_nodes=cfg.max_nodes)
    return 0.5 + float(integral) / math.pi, float(err + tail) / math.pi


def exercise_probabilities(params: HestonParams, strike: float,
                           cfg: QuadratureConfig = QuadratureConfig()):
    """(P1, err1, P2, err2): P2 = Q(S_T > K) and P1 the same under the share measure."""
    if not strike > 0:
        raise ValueError(f"strike must be > 0, got {strike!r}")
    disc = params.discount
    # split abs_tol between the two weighted probabilities of the call
    tol1 = math.pi * cfg.abs_tol / (2.0 * params.s0)
    tol2 = math.pi * cfg.abs_tol / (2.0 * max(strike * disc, 1.0))
    p1, e1 = _probability(params, strike, 1j, tol1, cfg)
    p2, e2 = _probability(params, strike, 0.0, tol2, cfg)
    return p1, e1, p2, e2


def call_price(params: HestonParams, strike: float,
               cfg: QuadratureConfig = QuadratureConfig()) -> ReferencePrice:
    p1, e1, p2, e2 = exercise_probabilities(params, strike, cfg)
    disc = params.discount
    value = params.s0 * p1 - strike * disc * p2
    return ReferencePrice(value=value, est_error=params.s0 * e1 + strike * disc * e2, p1=p1, p2=p2)


def put_price(params: HestonParams, strike: float,
              cfg: QuadratureConfig = QuadratureConfig()) -> ReferencePrice:
    c = call_price(params, strike, cfg)
    value = c.value - params.s0 + strike * params.discount
    return ReferencePrice(value=value, est_error=c.est_error, p1=c.p1, p2=c.p2)


def digital_price(params: HestonParams, strike: float,
                  cfg: QuadratureConfig = QuadratureConfig()) -> ReferencePrice:
    """Discounted probability exp(-mu*T) * (1 - P2) of finishing at or below K."""
    p1, _, p2, e2 = exercise_probabilities(params, strike, cfg)
    disc = params.discount
    return ReferencePrice(value=disc * (1.0 - p2), est_error=disc * e2, p1=p1, p2=p2)
