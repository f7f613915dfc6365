"""Compiled path loops.  Formulas come from :mod:`heston_weak.schemes`."""

import numpy as np
from numba import njit

from . import schemes
from .rng import normal_pair

_v_milstein = njit(nogil=True, cache=True)(schemes.milstein_v_update)
_v_trunc = njit(nogil=True, cache=True)(schemes.milstein_v_update_trunc)
_x_euler = njit(nogil=True, cache=True)(schemes.euler_x_update)
_a_sqrt_euler = njit(nogil=True, cache=True)(schemes.sqrt_euler_update)


@njit(nogil=True, cache=True)
def _advance(code, x, v, dw, db, dt, mu, kappa, lam, theta, rho, rho_bar):
    if code == 2:
        return x, _a_sqrt_euler(v, dw, dt, kappa, lam, theta)
    x_new = _x_euler(x, v, dw, db, dt, mu, rho, rho_bar)
    if code == 0:
        v_new = _v_milstein(v, dw, dt, kappa, lam, theta)
    else:
        v_new = _v_trunc(v, dw, dt, kappa, lam, theta)
    return x_new, v_new


@njit(nogil=True, cache=True)
def terminal_states(path_start, dts, x0, v0, mu, kappa, lam, theta, rho,
                    code, k0, k1, out_x, out_v):
    rho_bar = np.sqrt(1.0 - rho * rho)
    sq = np.sqrt(dts)
    n_steps = dts.shape[0]
    for i in range(out_x.shape[0]):
        path = path_start + np.uint64(i)
        x = x0
        v = v0
        for k in range(n_steps):
            zw, zb = normal_pair(k0, k1, path, np.uint64(k))
            x, v = _advance(code, x, v, sq[k] * zw, sq[k] * zb, dts[k],
                            mu, kappa, lam, theta, rho, rho_bar)
        out_x[i] = x
        out_v[i] = v


@njit(nogil=True, cache=True)
def v_moments(path_start, n_paths, dts, x0, v0, mu, kappa, lam, theta, rho,
              code, k0, k1, mean, m2):
    """Per-step Welford accumulation of v_k over a block of paths."""
    rho_bar = np.sqrt(1.0 - rho * rho)
    sq = np.sqrt(dts)
    n_steps = dts.shape[0]
    for k in range(n_steps + 1):
        mean[k] = 0.0
        m2[k] = 0.0
    for i in range(n_paths):
        path = path_start + np.uint64(i)
        x = x0
        v = v0
        inv = 1.0 / (i + 1)
        d = v - mean[0]
        mean[0] += d * inv
        m2[0] += d * (v - mean[0])
        for k in range(n_steps):
            zw, zb = normal_pair(k0, k1, path, np.uint64(k))
            x, v = _advance(code, x, v, sq[k] * zw, sq[k] * zb, dts[k],
                            mu, kappa, lam, theta, rho, rho_bar)
            d = v - mean[k + 1]
            mean[k + 1] += d * inv
            m2[k + 1] += d * (v - mean[k + 1])
