import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st
from scipy.stats import norm

from heston_weak import analytic
from heston_weak.core import HestonParams, preset, uniform_grid
from heston_weak.montecarlo import (CHUNK_PATHS, WORKERS_ENV, McEstimate, NonFiniteSampleError,
                                    RngStreamSpec, default_workers, estimate, estimate_many,
                                    estimate_v_moments, terminal_states)
from heston_weak.payoffs import PayoffKind, PayoffSpec, constant_payoff, make_payoff
from heston_weak.schemes import Scheme, SchemeError


def bs_put(s, k, sigma, r, t):
    sd = sigma * math.sqrt(t)
    d1 = (math.log(s / k) + (r + 0.5 * sigma ** 2) * t) / sd
    return k * math.exp(-r * t) * norm.cdf(-(d1 - sd)) - s * norm.cdf(-d1)


def near_constant_vol(mu=0.03, t=1.0):
    return HestonParams(s0=100.0, v0=0.04, mu=mu, kappa=1.5, lam=0.04, theta=1e-8,
                        rho=-0.5, t_horizon=t)


def mean_recursion(p: HestonParams, dts):
    m = [p.v0]
    for dt in dts:
        m.append((m[-1] + p.kappa * p.lam * dt) / (1.0 + p.kappa * dt))
    return np.array(m)


def combine(parts):
    """Pool (mean, std_error, n) summaries back into one mean and std_error."""
    n = sum(e.n_paths for e in parts)
    mean = sum(e.mean * e.n_paths for e in parts) / n
    ss = sum((e.std_error ** 2 * e.n_paths) * (e.n_paths - 1) + e.n_paths * (e.mean - mean) ** 2
             for e in parts)
    return mean, math.sqrt(ss / (n - 1) / n)


def test_constant_payoff_is_exact():
    p = preset("model2")
    est = estimate(p, uniform_grid(p.t_horizon, 8), constant_payoff(2.5), Scheme.MILSTEIN_D,
                   CHUNK_PATHS + 123, RngStreamSpec(3))
    assert est.mean == 2.5
    assert est.std_error == 0.0
    assert (est.n_paths, est.n_steps) == (CHUNK_PATHS + 123, 8)


def test_constant_vol_put_matches_black_scholes():
    p = near_constant_vol()
    spec = make_payoff(PayoffKind.PUT, p)
    est = estimate(p, uniform_grid(p.t_horizon, 16), spec, Scheme.MILSTEIN_D, 200_000,
                   RngStreamSpec(11))
    ref = bs_put(p.s0, spec.strike, math.sqrt(p.lam), p.mu, p.t_horizon)
    assert abs(est.mean - ref) < 4 * est.std_error


def test_standard_error_scales_like_inverse_root_n():
    p = near_constant_vol()
    spec = make_payoff(PayoffKind.PUT, p)
    grid = uniform_grid(p.t_horizon, 2)
    scaled = [estimate(p, grid, spec, Scheme.MILSTEIN_D, n, RngStreamSpec(5)).std_error * math.sqrt(n)
              for n in (10_000, 100_000, 1_000_000)]
    assert max(scaled) / min(scaled) < 1.2


@pytest.mark.slow
def test_model1_digital_fine_grid():
    p = preset("model1")
    spec = make_payoff(PayoffKind.INDICATOR, p)
    est = estimate(p, uniform_grid(p.t_horizon, 256), spec, Scheme.MILSTEIN_D, 2_000_000,
                   RngStreamSpec(2024))
    ref = analytic.digital_price(p, spec.strike).value
    assert abs(est.mean - ref) < 2.0 ** -8
    assert abs(est.mean - ref) < 4 * est.std_error


def test_worker_count_does_not_change_results():
    p = preset("model1")
    grid = uniform_grid(p.t_horizon, 4)
    specs = [make_payoff(k, p) for k in (PayoffKind.PUT, PayoffKind.SMOOTHED_PUT, PayoffKind.CALL)]
    n = 3 * CHUNK_PATHS + 17
    one = estimate_many(p, grid, specs, Scheme.MILSTEIN_D, n, RngStreamSpec(9), workers=1)
    many = estimate_many(p, grid, specs, Scheme.MILSTEIN_D, n, RngStreamSpec(9), workers=7)
    assert one == many


def test_workers_env_default(monkeypatch):
    monkeypatch.delenv(WORKERS_ENV, raising=False)
    assert default_workers() == 1
    monkeypatch.setenv(WORKERS_ENV, "6")
    assert default_workers() == 6
    for bad in ("0", "two"):
        monkeypatch.setenv(WORKERS_ENV, bad)
        with pytest.raises(ValueError, match=WORKERS_ENV):
            default_workers()


@settings(max_examples=15)
@given(cuts=st.lists(st.integers(1, 2 * CHUNK_PATHS + 499), min_size=1, max_size=4, unique=True))
def test_partition_invariance(cuts):
    p = preset("model2")
    grid = uniform_grid(p.t_horizon, 3)
    spec = make_payoff(PayoffKind.PUT, p)
    rng = RngStreamSpec(123)
    n = 2 * CHUNK_PATHS + 500
    edges = [0] + sorted(cuts) + [n]
    assume(all(b - a >= 2 for a, b in zip(edges, edges[1:])))
    # samples are a function of the path index only
    xs_full, _ = terminal_states(p, grid, Scheme.MILSTEIN_D, rng, 0, n)
    pieces = [terminal_states(p, grid, Scheme.MILSTEIN_D, rng, a, b - a)[0]
              for a, b in zip(edges, edges[1:])]
    assert np.array_equal(np.concatenate(pieces), xs_full)
    # and the summaries pool back to the full-range estimate
    full = estimate(p, grid, spec, Scheme.MILSTEIN_D, n, rng)
    parts = [estimate(p, grid, spec, Scheme.MILSTEIN_D, b - a, rng, path_offset=a)
             for a, b in zip(edges, edges[1:])]
    mean, se = combine(parts)
    assert mean == pytest.approx(full.mean, rel=1e-12)
    assert se == pytest.approx(full.std_error, rel=1e-9)


def test_variance_matches_two_pass_oracle():
    p = preset("model1")
    grid = uniform_grid(p.t_horizon, 4)
    spec = make_payoff(PayoffKind.PUT, p)
    rng = RngStreamSpec(42)
    n = 2 * CHUNK_PATHS + 1000
    x, _ = terminal_states(p, grid, Scheme.MILSTEIN_D, rng, 0, n)
    y = spec(np.exp(x))
    est = estimate(p, grid, spec, Scheme.MILSTEIN_D, n, rng)
    assert est.mean == pytest.approx(math.fsum(y) / n, rel=1e-13)
    assert est.std_error == pytest.approx(np.std(y, ddof=1) / math.sqrt(n), rel=1e-11)


def test_v_moments_initial_value_exact(model_name):
    p = preset(model_name)
    scheme = Scheme.MILSTEIN_D_TRUNC if model_name == "model3" else Scheme.MILSTEIN_D
    moments = estimate_v_moments(p, uniform_grid(p.t_horizon, 8), scheme, 1000, RngStreamSpec(1))
    assert moments[0] == (p.v0, 0.0)
    assert len(moments) == 9


def test_v_moments_fixed_point_model1():
    p = preset("model1")
    assert p.v0 == p.lam
    moments = estimate_v_moments(p, uniform_grid(p.t_horizon, 32), Scheme.MILSTEIN_D, 50_000,
                                 RngStreamSpec(8))
    for mean, se in moments[1:]:
        assert abs(mean - 0.0457) < 4 * se


@pytest.mark.parametrize("name,scheme", [("model2", Scheme.MILSTEIN_D),
                                         ("model3", Scheme.MILSTEIN_D_TRUNC)])
def test_v_moments_follow_mean_recursion(name, scheme):
    p = preset(name)
    grid = uniform_grid(p.t_horizon, 32)
    moments = estimate_v_moments(p, grid, scheme, 50_000, RngStreamSpec(77))
    expected = mean_recursion(p, grid.steps)
    for (mean, se), m in zip(moments[1:], expected[1:]):
        assert abs(mean - m) < 4 * se


def test_v_moments_agree_with_terminal_states():
    p = preset("model2")
    grid = uniform_grid(p.t_horizon, 5)
    rng = RngStreamSpec(13)
    _, v = terminal_states(p, grid, Scheme.MILSTEIN_D, rng, 0, 5000)
    mean, se = estimate_v_moments(p, grid, Scheme.MILSTEIN_D, 5000, rng)[-1]
    assert mean == pytest.approx(v.mean(), rel=1e-12)
    assert se == pytest.approx(v.std(ddof=1) / math.sqrt(v.size), rel=1e-9)


def test_non_finite_sample_reports_path_and_seed():
    p = preset("model2")
    grid = uniform_grid(p.t_horizon, 2)
    bad_path = CHUNK_PATHS + 41
    x, _ = terminal_states(p, grid, Scheme.MILSTEIN_D, RngStreamSpec(99), 0, CHUNK_PATHS + 100)
    target = np.exp(x[bad_path])
    spec = PayoffSpec(PayoffKind.CUSTOM, strike=1.0,
                      func=lambda s: np.where(s == target, np.nan, 1.0))
    with pytest.raises(NonFiniteSampleError) as info:
        estimate(p, grid, spec, Scheme.MILSTEIN_D, CHUNK_PATHS + 100, RngStreamSpec(99))
    assert info.value.path_index == bad_path
    assert info.value.seed == 99
    assert str(bad_path) in str(info.value)


def test_refusals():
    p = preset("model2")
    grid = uniform_grid(p.t_horizon, 2)
    spec = make_payoff(PayoffKind.PUT, p)
    with pytest.raises(SchemeError):
        estimate(p, grid, spec, Scheme.SQRT_EULER, 100, RngStreamSpec(1))
    with pytest.raises(ValueError):
        estimate(p, grid, spec, Scheme.MILSTEIN_D, 1, RngStreamSpec(1))
    with pytest.raises(SchemeError, match="milstein-d-trunc"):
        estimate(preset("model3"), grid, spec, Scheme.MILSTEIN_D, 100, RngStreamSpec(1))
    with pytest.raises(ValueError):
        RngStreamSpec(-1)
    with pytest.raises(ValueError):
        RngStreamSpec(2 ** 64)


def test_estimate_type():
    p = preset("model2")
    est = estimate(p, uniform_grid(p.t_horizon, 2), make_payoff(PayoffKind.PUT, p),
                   Scheme.MILSTEIN_D, 100, RngStreamSpec(1))
    assert isinstance(est, McEstimate)
    assert est.std_error >= 0


def test_exponential_moment_diagnostic(model_name):
    """exp((1+rho^2) x_N) for rho < 0 models stays bounded across step sizes.

    Printed, not asserted: heavy-tailed sample moments are unreliable.
    """
    p = preset(model_name)
    scheme = Scheme.MILSTEIN_D_TRUNC if model_name == "model3" else Scheme.MILSTEIN_D
    lines = []
    for n in (1, 4, 16, 64):
        x, _ = terminal_states(p, uniform_grid(p.t_horizon, n), scheme, RngStreamSpec(4), 0, 20_000)
        moment = np.mean(np.exp((1 + p.rho ** 2) * x))
        assert np.isfinite(moment)
        lines.append(f"N={n}: {moment:.4g}")
    print(model_name, "E exp((1+rho^2) x_N):", ", ".join(lines))
