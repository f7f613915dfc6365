"""Counter-based Gaussian noise.

Every normal draw is a pure function of ``(seed, path_index, step_index)``:
a Philox4x32-10 block is evaluated at counter ``(step, path_lo, path_hi, 0)``
under key ``(seed_lo, seed_hi)``.  Words 0-1 of the block give the W draw and
words 2-3 the B draw, each mapped to (0, 1) with 53 bits and pushed through
the inverse normal CDF (Wichura's AS241).
"""

import math

import numpy as np
from numba import njit

_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = np.uint64(0x9E3779B9)
_W1 = np.uint64(0xBB67AE85)
_MASK = np.uint64(0xFFFFFFFF)
_S32 = np.uint64(32)
_S5 = np.uint64(5)
_S6 = np.uint64(6)


@njit(nogil=True, cache=True)
def philox4x32(c0, c1, c2, c3, k0, k1):
    """Philox4x32 with 10 rounds; all arguments are uint64 holding 32-bit words."""
    for r in range(10):
        p0 = _M0 * c0
        p1 = _M1 * c2
        hi0 = p0 >> _S32
        lo0 = p0 & _MASK
        hi1 = p1 >> _S32
        lo1 = p1 & _MASK
        c0 = hi1 ^ c1 ^ k0
        c1 = lo1
        c2 = hi0 ^ c3 ^ k1
        c3 = lo0
        if r < 9:
            k0 = (k0 + _W0) & _MASK
            k1 = (k1 + _W1) & _MASK
    return c0, c1, c2, c3


@njit(nogil=True, cache=True)
def _to_open_unit(a, b):
    hi = np.float64(a >> _S5)
    lo = np.float64(b >> _S6)
    return (hi * 67108864.0 + lo + 0.5) * (1.0 / 9007199254740992.0)


@njit(nogil=True, cache=True)
def ndtri(p):
    """Inverse standard normal CDF on (0, 1), about 1e-16 relative accuracy."""
    q = p - 0.5
    if abs(q) <= 0.425:
        r = 0.180625 - q * q
        num = (((((((2509.0809287301226727 * r + 33430.575583588128105) * r
                    + 67265.770927008700853) * r + 45921.953931549871457) * r
                  + 13731.693765509461125) * r + 1971.5909503065514427) * r
                + 133.14166789178437745) * r + 3.387132872796366608)
        den = (((((((5226.495278852545925 * r + 28729.085735721942674) * r
                    + 39307.89580009271061) * r + 21213.794301586595867) * r
                  + 5394.1960214247511077) * r + 687.1870074920579083) * r
                + 42.313330701600911252) * r + 1.0)
        return q * num / den
    r = p if q < 0.0 else 1.0 - p
    r = math.sqrt(-math.log(r))
    if r <= 5.0:
        r -= 1.6
        num = (((((((7.7454501427834140764e-4 * r + 0.0227238449892691845833) * r
                    + 0.24178072517745061177) * r + 1.27045825245236838258) * r
                  + 3.64784832476320460504) * r + 5.7694972214606914055) * r
                + 4.6303378461565452959) * r + 1.42343711074968357734)
        den = (((((((1.05075007164441684324e-9 * r + 5.475938084995344946e-4) * r
                    + 0.0151986665636164571966) * r + 0.14810397642748007459) * r
                  + 0.68976733498510000455) * r + 1.6763848301838038494) * r
                + 2.05319162663775882187) * r + 1.0)
    else:
        r -= 5.0
        num = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r
                    + 0.0012426609473880784386) * r + 0.026532189526576123093) * r
                  + 0.29656057182850489123) * r + 1.7848265399172913358) * r
                + 5.4637849111641143699) * r + 6.6579046435011037772)
        den = (((((((2.04426310338993978564e-15 * r + 1.4215117583164458887e-7) * r
                    + 1.8463183175100546818e-5) * r + 7.868691311456132591e-4) * r
                  + 0.0148753612908506148525) * r + 0.13692988092273580531) * r
                + 0.59983220655588793769) * r + 1.0)
    val = num / den
    return -val if q < 0.0 else val


@njit(nogil=True, cache=True)
def normal_pair(k0, k1, path, step):
    """Standard normal (z_w, z_b) for one path and one step."""
    w0, w1, w2, w3 = philox4x32(np.uint64(step), path & _MASK, path >> _S32,
                                np.uint64(0), k0, k1)
    return ndtri(_to_open_unit(w0, w1)), ndtri(_to_open_unit(w2, w3))


@njit(nogil=True, cache=True)
def fill_normals(k0, k1, path_start, step, out_w, out_b):
    for i in range(out_w.shape[0]):
        zw, zb = normal_pair(k0, k1, path_start + np.uint64(i), step)
        out_w[i] = zw
        out_b[i] = zb


def split_seed(seed: int) -> tuple[np.uint64, np.uint64]:
    if not 0 <= seed < 2**64:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return np.uint64(seed & 0xFFFFFFFF), np.uint64(seed >> 32)
