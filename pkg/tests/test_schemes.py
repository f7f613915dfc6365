import math

import numpy as np
import pytest
from hypothesis import assume, given, strategies as st

from heston_weak import analytic
from heston_weak.core import HestonParams, preset, uniform_grid
from heston_weak.montecarlo import RngStreamSpec, estimate, terminal_states
from heston_weak.payoffs import PayoffKind, PayoffSpec
from heston_weak.schemes import (CirState, NoiseIncrement, PathState, Scheme, SchemeError,
                                 lower_bound, milstein_v_raw, milstein_v_step,
                                 milstein_v_step_truncated, scheme_d_step, simulate_path,
                                 sqrt_euler_step)

M1, M2, M3 = preset("model1"), preset("model2"), preset("model3")


def raw_recursion(v, dw, dt, p):
    # v' = v + kappa (lam - v') dt + theta sqrt(v) dw + theta^2/4 (dw^2 - dt), solved for v'
    return (v + p.kappa * p.lam * dt + p.theta * math.sqrt(v) * dw
            + p.theta ** 2 / 4 * (dw * dw - dt)) / (1 + p.kappa * dt)


def sqrt_euler_oracle(a, dw, dt, p):
    den = 2 + p.kappa * dt
    b = math.sqrt(a) + p.theta / 2 * dw
    return (b / den + math.sqrt(b * b / den ** 2 + (p.kappa * p.lam - p.theta ** 2 / 4) * dt / den)) ** 2


def params_strategy(well_defined=True):
    @st.composite
    def build(draw):
        kappa = draw(st.floats(0.1, 10))
        theta = draw(st.floats(0.05, 2))
        ratio = draw(st.floats(1.0, 20) if well_defined else st.floats(0.05, 0.99))
        lam = ratio * theta ** 2 / (4 * kappa)
        if well_defined and 4 * kappa * lam < theta ** 2:
            lam = math.nextafter(lam, math.inf)
        rho = draw(st.floats(-1, 1))
        v0 = draw(st.floats(1e-4, 1))
        return HestonParams(100.0, v0, draw(st.floats(-0.1, 0.1)), kappa, lam, theta, rho, 2.0)
    return build()


# --- Milstein variance step ---------------------------------------------------

def test_zero_noise_reduction():
    p, dt = M1, 0.25
    got = milstein_v_step(p.v0, NoiseIncrement(0.0, 0.0, dt), p)
    want = (p.v0 + (p.kappa * p.lam - p.theta ** 2 / 4) * dt) / (1 + p.kappa * dt)
    assert got == pytest.approx(want, rel=1e-15)


def test_boundary_square_term_only():
    p = HestonParams(1, 0.1, 0, kappa=1.0, lam=0.25, theta=1.0, rho=0, t_horizon=1)
    w, dt = 0.3, 0.1
    got = milstein_v_step(0.0, NoiseIncrement(w, 0.0, dt), p)
    assert got == pytest.approx(0.25 * w * w / (1 + dt), rel=1e-15)


def test_squared_form_matches_raw_recursion_model1():
    noise = NoiseIncrement(0.1, 0.0, 0.5)
    got = milstein_v_step(0.0457, noise, M1)
    assert got == pytest.approx(raw_recursion(0.0457, 0.1, 0.5, M1), rel=1e-14)
    assert got == pytest.approx(milstein_v_raw(0.0457, 0.1, 0.5, M1.kappa, M1.lam, M1.theta),
                                rel=1e-14)


@given(params_strategy(), st.floats(0, 2), st.floats(-3, 3), st.floats(1e-4, 1))
def test_algebraic_equivalence(p, v, z, dt):
    dw = z * math.sqrt(dt)
    got = milstein_v_step(v, NoiseIncrement(dw, 0.0, dt), p)
    want = raw_recursion(v, dw, dt, p)
    # relative to the size of the terms that enter the recursion
    scale = (v + p.kappa * p.lam * dt + abs(p.theta * math.sqrt(v) * dw)
             + p.theta ** 2 / 4 * (dw * dw + dt)) / (1 + p.kappa * dt)
    assert abs(got - want) <= 1e-13 * scale


@given(params_strategy(), st.floats(0, 10), st.floats(-1e3, 1e3), st.floats(1e-8, 10))
def test_positivity(p, v, dw, dt):
    assert milstein_v_step(v, NoiseIncrement(dw, 0.0, dt), p) >= 0.0


@given(params_strategy(), st.floats(0, 2), st.floats(-5, 5), st.floats(1e-4, 1))
def test_truncated_identical_on_nonnegative(p, v, dw, dt):
    noise = NoiseIncrement(dw, 0.0, dt)
    assert milstein_v_step_truncated(v, noise, p) == milstein_v_step(v, noise, p)


def test_truncated_goes_negative_for_model3():
    dt = 5 / 256
    got = milstein_v_step_truncated(0.0, NoiseIncrement(0.0, 0.0, dt), M3)
    want = (M3.kappa * M3.lam - M3.theta ** 2 / 4) * dt / (1 + M3.kappa * dt)
    assert got == pytest.approx(want, rel=1e-15)
    assert got < 0


def test_truncated_negative_input_uses_zero_root():
    dt, dw = 0.01, 0.0
    got = milstein_v_step_truncated(-0.01, NoiseIncrement(dw, 0.0, dt), M3)
    want = (-0.01 + (M3.kappa * M3.lam - M3.theta ** 2 / 4) * dt) / (1 + M3.kappa * dt)
    assert got == pytest.approx(want, rel=1e-14)
    # noise enters only through the square term when v < 0
    got = milstein_v_step_truncated(-0.01, NoiseIncrement(0.2, 0.0, dt), M3)
    want = (-0.01 + M3.theta ** 2 / 4 * 0.04 + (M3.kappa * M3.lam - M3.theta ** 2 / 4) * dt) \
        / (1 + M3.kappa * dt)
    assert got == pytest.approx(want, rel=1e-14)


# --- coupled step ---------------------------------------------------------------

def test_zero_variance_kills_diffusion():
    p = M2.replace(rho=0.0)
    s = scheme_d_step(PathState(4.6, 0.0), NoiseIncrement(0.7, -1.3, 0.1), p)
    assert s.x == pytest.approx(4.6 + p.mu * 0.1, rel=1e-15)


def test_deterministic_drift_only():
    p = M1
    s = scheme_d_step(PathState(4.6, 0.05), NoiseIncrement(0.0, 0.0, 0.2), p)
    assert s.x == pytest.approx(4.6 - 0.5 * 0.05 * 0.2, rel=1e-15)


def test_x_update_uses_old_variance():
    p, v, dw, db, dt = M2, 0.02, 0.05, -0.03, 0.1
    s = scheme_d_step(PathState(1.0, v), NoiseIncrement(dw, db, dt), p)
    want = 1.0 + (p.mu - v / 2) * dt + math.sqrt(v) * (p.rho * dw + math.sqrt(1 - p.rho ** 2) * db)
    assert s.x == pytest.approx(want, rel=1e-15)
    assert s.v == milstein_v_step(v, NoiseIncrement(dw, db, dt), p)


def test_truncated_x_keeps_untruncated_drift():
    v, dt = -0.01, 0.1
    s = scheme_d_step(PathState(0.0, v), NoiseIncrement(0.4, 0.4, dt), M3, truncated=True)
    assert s.x == pytest.approx((M3.mu + 0.005) * dt, rel=1e-14)


# --- square-root Euler ---------------------------------------------------------

def test_sqrt_euler_hits_zero_at_boundary():
    p = HestonParams(1, 0.1, 0, kappa=1.0, lam=0.25, theta=1.0, rho=0, t_horizon=1)
    a = 0.09
    got = sqrt_euler_step(CirState(a), NoiseIncrement(-2 * math.sqrt(a) / p.theta, 0.0, 0.1), p)
    assert got.a == pytest.approx(0.0, abs=1e-30)


def test_sqrt_euler_formula():
    dt = 0.125
    got = sqrt_euler_step(CirState(M1.lam), NoiseIncrement(0.0, 0.0, dt), M1)
    want = sqrt_euler_oracle(M1.lam, 0.0, dt, M1)
    assert got.a > 0 and math.isfinite(got.a)
    assert got.a == pytest.approx(want, rel=1e-15)


@given(params_strategy(), st.floats(0, 2), st.floats(-3, 3), st.floats(1e-4, 1))
def test_sqrt_euler_matches_oracle(p, a, z, dt):
    dw = z * math.sqrt(dt)
    got = sqrt_euler_step(CirState(a), NoiseIncrement(dw, 0.0, dt), p).a
    assert got >= 0
    assert got == pytest.approx(sqrt_euler_oracle(a, dw, dt, p), rel=1e-12, abs=1e-300)


def test_sqrt_euler_refuses_ill_defined():
    with pytest.raises(SchemeError, match="milstein-d-trunc"):
        sqrt_euler_step(CirState(0.1), NoiseIncrement(0.0, 0.0, 0.1), M3)


@given(params_strategy(), st.integers(0, 2 ** 32), st.integers(1, 64))
def test_domination_property(p, seed, n):
    grid = uniform_grid(p.t_horizon, n)
    rng = RngStreamSpec(seed)
    noise = list(rng.increments(grid, 0, 32))
    v = simulate_path(grid, p, noise, Scheme.MILSTEIN_D, record=True).v
    a = simulate_path(grid, p, noise, Scheme.SQRT_EULER, record=True).v
    assert np.all(v >= a - 1e-12 * np.maximum(1.0, a))


@given(params_strategy(), st.integers(0, 2 ** 32), st.integers(1, 64))
def test_per_step_lower_bound(p, seed, n):
    grid = uniform_grid(p.t_horizon, n)
    noise = list(RngStreamSpec(seed).increments(grid, 0, 32))
    v = simulate_path(grid, p, noise, Scheme.MILSTEIN_D, record=True).v
    floor = lower_bound(p, grid.steps)
    assert np.all(v[1:] >= floor[:, None])


# --- whole paths -------------------------------------------------------------

def test_single_step_path_is_one_step():
    grid = uniform_grid(M2.t_horizon, 1)
    inc = NoiseIncrement(0.3, -0.2, 1.0)
    got = simulate_path(grid, M2, [inc])
    want = scheme_d_step(PathState(M2.x0, M2.v0), inc, M2)
    assert got == want


def test_small_vol_of_vol_stays_at_long_run_level():
    p = M1.replace(theta=1e-12)
    grid = uniform_grid(p.t_horizon, 128)
    rec = simulate_path(grid, p, RngStreamSpec(3).increments(grid, 0, 16), record=True)
    assert np.max(np.abs(rec.v - p.lam)) < 1e-12


def test_zero_noise_monotone_towards_fixed_point():
    p = M2
    grid = uniform_grid(p.t_horizon, 200)
    zero = [NoiseIncrement(0.0, 0.0, dt) for dt in grid.steps]
    r1 = simulate_path(grid, p, zero, record=True)
    r2 = simulate_path(grid, p, zero, record=True)
    assert np.array_equal(r1.v, r2.v) and np.array_equal(r1.x, r2.x)
    fixed = p.lam - p.theta ** 2 / (4 * p.kappa)
    gap = r1.v - fixed
    assert np.all(gap > 0) and np.all(np.diff(gap) < 0)
    dt = grid.steps[0]
    assert gap[-1] == pytest.approx((p.v0 - fixed) / (1 + p.kappa * dt) ** 200, rel=1e-10)


def test_simulate_path_validates_noise():
    grid = uniform_grid(1.0, 4)
    with pytest.raises(ValueError, match="4 steps"):
        simulate_path(grid, M2, [NoiseIncrement(0, 0, 0.25)] * 3)
    with pytest.raises(ValueError, match="dt"):
        simulate_path(grid, M2, [NoiseIncrement(0, 0, 0.2)] * 4)
    with pytest.raises(ValueError):
        NoiseIncrement(0, 0, 0.0)


def test_untruncated_refused_for_model3():
    grid = uniform_grid(M3.t_horizon, 2)
    with pytest.raises(SchemeError, match="milstein-d-trunc"):
        simulate_path(grid, M3, [NoiseIncrement(0, 0, 2.5)] * 2, Scheme.MILSTEIN_D)
    simulate_path(grid, M3, [NoiseIncrement(0, 0, 2.5)] * 2, Scheme.MILSTEIN_D_TRUNC)


@pytest.mark.parametrize("scheme,params", [("milstein-d", M1), ("milstein-d-trunc", M3)])
def test_compiled_kernel_matches_reference_loop(scheme, params):
    grid = uniform_grid(params.t_horizon, 37)
    rng = RngStreamSpec(12345)
    x, v = terminal_states(params, grid, scheme, rng, 1000, 500)
    ref = simulate_path(grid, params, rng.increments(grid, 1000, 500), scheme)
    np.testing.assert_allclose(x, ref.x, rtol=1e-14, atol=0)
    np.testing.assert_allclose(v, ref.v, rtol=1e-13, atol=1e-16)


def test_martingale_mean_model2():
    p = M2
    s_forward = p.s0 * math.exp(p.mu * p.t_horizon)
    # the pricer's call at a vanishing strike is the discounted forward
    c = analytic.call_price(p, 1e-8)
    assert c.value * math.exp(p.mu * p.t_horizon) == pytest.approx(s_forward, abs=1e-6)
    spot = PayoffSpec(PayoffKind.CUSTOM, 1.0, func=lambda s: s)
    est = estimate(p, uniform_grid(p.t_horizon, 256), spot, "milstein-d", 1_000_000,
                   RngStreamSpec(99))
    assert abs(est.mean - s_forward) < 4 * est.std_error
