"""Tests for the information-rate routes and inequality chains.

Scalar closed forms used as oracles:

* control channel, gain k on an unstable mode a with unit prior:
  p(t) = 2*a*exp(2*a*t) / (2*a + k^2*(exp(2*a*t) - 1)) and the
  windowed rate is a - (ln p(t1) - ln p(t0)) / (2*(t1 - t0));
* filtering channel at steady state, output c, process noise eps:
  2*a*p - c^2*p^2 + eps = 0 gives rate = (a + sqrt(a^2 + c^2*eps)) / 2.
"""

import math

import numpy as np
import pytest

from infolim.errors import (
    AssumptionViolatedError,
    ConfigError,
    PowerConstraintViolatedError,
)
from infolim.grids import TimeGrid
from infolim.inforate import (
    capacity_check,
    control_rate_monte_carlo,
    control_rate_riccati,
    control_rate_spectral,
    dichotomy_interval_bounds,
    filtering_rate,
    filtering_rate_riccati,
    ltv_bode_integral,
    ltv_rate_bounds_check,
    nonlinear_control_rate,
    nonlinear_filtering_rate,
)
from infolim.sde import SeedSpec
from infolim.statespace import LtiSystem, LtvSystem, NonlinearScalarSystem

SEEDS = SeedSpec(master_seed=424242)
LOOP = LtiSystem(A=[[1.0]], K=[[-2.0]])


def logistic_cov(a, g2, p0, t):
    e = math.exp(2.0 * a * t)
    return 2.0 * a * p0 * e / (2.0 * a + g2 * p0 * (e - 1.0))


# ---------------------------------------------------------------------------
# deterministic routes
# ---------------------------------------------------------------------------

def test_spectral_rate_is_unstable_pole_sum():
    sys = LtiSystem(A=np.diag([2.0, 0.5, -1.0]))
    rep = control_rate_spectral(sys)
    assert rep.rate == pytest.approx(2.5, abs=1e-12)
    assert rep.details["n_unstable"] == 2


def test_control_rate_riccati_scalar_closed_form():
    grid = TimeGrid(horizon=20.0, dt=1e-3)
    rep, sol = control_rate_riccati(LOOP, grid)
    mid = grid.tail_start()
    t_mid = mid * grid.dt
    win = grid.horizon - t_mid
    expected = 1.0 - (
        math.log(logistic_cov(1.0, 4.0, 1.0, grid.horizon))
        - math.log(logistic_cov(1.0, 4.0, 1.0, t_mid))
    ) / (2.0 * win)
    assert rep.rate == pytest.approx(expected, rel=1e-6)
    assert rep.rate == pytest.approx(1.0, abs=1e-3)
    assert rep.converged
    assert rep.details["steady"]
    assert sol is not None


def test_control_rate_zero_without_antistable_modes():
    sys = LtiSystem(A=[[-1.0]], K=[[-1.0]])
    rep, sol = control_rate_riccati(sys, TimeGrid(horizon=5.0, dt=1e-2))
    assert rep.rate == 0.0
    assert rep.total_information == 0.0
    assert sol is None


def test_control_rate_requires_gain():
    sys = LtiSystem(A=[[1.0]], C=[[1.0]])
    with pytest.raises(ConfigError):
        control_rate_riccati(sys, TimeGrid(horizon=1.0, dt=1e-2))


def test_filtering_rate_riccati_closed_form():
    sys = LtiSystem(A=[[1.0]], C=[[2.0]])
    eps = 0.25
    rep, are = filtering_rate_riccati(sys, eps)
    expected = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * eps))
    assert rep.rate == pytest.approx(expected, abs=1e-6)
    assert are.residual < 1e-8


def test_filtering_rate_sweep_monotone_with_limit():
    sys = LtiSystem(
        A=[[-2.0, 0.0], [0.0, 1.0]], C=np.eye(2),
        n_stable=1, modal_form=True,
    )
    out = filtering_rate(sys, None, [1e-4, 1e-2, 1.0])
    assert out["spectral_limit"] == pytest.approx(1.0, abs=1e-12)
    assert out["monotone"]
    assert out["above_limit"]

    def mode_rate(a, eps):
        return 0.5 * (a + math.sqrt(a * a + eps))

    for eps, rep in out["reports"].items():
        expected = mode_rate(1.0, eps) + mode_rate(-2.0, eps)
        assert rep.rate == pytest.approx(expected, abs=1e-6)
    assert out["reports"][1e-4].rate == pytest.approx(1.0, abs=1e-3)


def test_filtering_rate_rejects_bad_scales():
    sys = LtiSystem(A=[[1.0]], C=[[1.0]])
    with pytest.raises(ConfigError):
        filtering_rate(sys, None, [])
    with pytest.raises(ConfigError):
        filtering_rate(sys, None, [0.0, 1.0])
    with pytest.raises(ConfigError):
        filtering_rate(sys, None, [1.0], n_paths=10)  # no grid or seeds


# ---------------------------------------------------------------------------
# Monte Carlo routes
# ---------------------------------------------------------------------------

def test_mc_control_rate_agrees_with_riccati():
    grid = TimeGrid(horizon=12.0, dt=2e-3)
    ric, _ = control_rate_riccati(LOOP, grid)
    mc, ens = control_rate_monte_carlo(LOOP, grid, 150, SEEDS)
    assert mc.n_paths == 150
    assert mc.n_excluded == 0
    assert abs(mc.rate - ric.rate) < 4.0 * mc.mc_std_error
    diff = mc.details["difference_form_rate"]
    diff_se = mc.details["difference_form_se"]
    assert abs(diff - ric.rate) < 4.0 * diff_se


def test_mc_control_rate_near_zero_for_stable_plant():
    sys = LtiSystem(A=[[-1.0]], K=[[-1.0]])
    grid = TimeGrid(horizon=12.0, dt=2e-3)
    mc, _ = control_rate_monte_carlo(sys, grid, 100, SEEDS)
    # direct form is nonnegative by construction; the signed difference
    # form supports a genuine z-test against zero
    assert mc.rate < 0.05
    diff = mc.details["difference_form_rate"]
    diff_se = mc.details["difference_form_se"]
    assert abs(diff) < 4.0 * diff_se


# ---------------------------------------------------------------------------
# capacity sandwich
# ---------------------------------------------------------------------------

def test_capacity_sandwich_holds_for_scalar_loop():
    grid = TimeGrid(horizon=10.0, dt=2e-3)
    mc, ens = control_rate_monte_carlo(LOOP, grid, 200, SEEDS)
    bounds = capacity_check(mc, 4.5, ens)
    assert bounds.C_f == pytest.approx(2.25, abs=1e-12)
    assert bounds.all_passed
    # u = -2x with Var(x) -> 1/2: conditional divergence near 1
    assert bounds.divergence_rate_conditional == pytest.approx(1.0, rel=0.15)
    assert bounds.divergence_rate_marginal < 0.2
    names = [c.name for c in bounds.verdicts]
    assert names == [
        "capacity >= conditional divergence",
        "capacity >= rate + marginal divergence",
        "conditional divergence == rate + marginal divergence",
    ]


def test_capacity_power_violation_raises():
    grid = TimeGrid(horizon=10.0, dt=2e-3)
    mc, ens = control_rate_monte_carlo(LOOP, grid, 200, SEEDS)
    with pytest.raises(PowerConstraintViolatedError):
        capacity_check(mc, 1.0, ens)


def test_capacity_accepts_time_varying_budget():
    grid = TimeGrid(horizon=10.0, dt=2e-3)
    mc, ens = control_rate_monte_carlo(LOOP, grid, 200, SEEDS)
    # E[u^2](t) = 4 (0.5 + 0.5 exp(-2t)); track it with headroom
    budget = lambda t: 4.0 * (0.5 + 0.5 * math.exp(-2.0 * t)) * 1.3
    bounds = capacity_check(mc, budget, ens)
    assert bounds.all_passed


# ---------------------------------------------------------------------------
# sensitivity integral routes
# ---------------------------------------------------------------------------

def test_bode_routes_agree_lti():
    sys = LtiSystem(A=[[-2.0, 0.0], [0.0, 1.0]], B=[[0.0], [1.0]],
                    C=[[3.0, 0.0]])
    grid = TimeGrid(horizon=20.0, dt=1e-3)
    rep = ltv_bode_integral(sys, grid)
    assert rep.trace_route == pytest.approx(1.0, abs=1e-12)
    assert rep.kernel_route == pytest.approx(1.0, abs=1e-3)
    assert rep.routes_gap < 1e-3
    assert rep.spectral_lower == rep.spectral_upper == pytest.approx(1.0)
    assert rep.orthogonality_max == 0.0
    assert rep.loop_stable is False


def test_bode_routes_periodic_plant():
    sys = LtvSystem(
        n=2, n_stable=1,
        A=lambda t: np.array([[-2.0, 0.0], [0.0, 1.5 + math.sin(t)]]),
        B=lambda t: np.array([[0.0], [1.0]]),
        C=lambda t: np.array([[3.0, 0.0]]),
    )
    grid = TimeGrid.of_steps(horizon=8.0 * math.pi, n_steps=25_000)
    rep = ltv_bode_integral(sys, grid, check_stability=False)
    # whole periods average the sinusoid away exactly
    assert rep.trace_route == pytest.approx(1.5, abs=1e-9)
    assert rep.kernel_route == pytest.approx(rep.trace_route, abs=0.05)
    assert rep.spectral_lower == pytest.approx(0.5, abs=1e-6)
    assert rep.spectral_upper == pytest.approx(2.5, abs=1e-6)


def test_bode_requires_output_input_orthogonality():
    sys = LtiSystem(A=[[-2.0, 0.0], [0.0, 1.0]], B=[[0.0], [1.0]],
                    C=[[0.0, 3.0]])
    with pytest.raises(AssumptionViolatedError):
        ltv_bode_integral(sys, TimeGrid(horizon=5.0, dt=1e-2))


def test_dichotomy_bounds():
    lti = LtiSystem(A=np.diag([-2.0, 1.0]))
    assert dichotomy_interval_bounds(lti, TimeGrid(horizon=1.0, dt=1e-2)) \
        == (1.0, 1.0)
    ltv = LtvSystem(
        n=1, n_stable=0,
        A=lambda t: np.array([[1.5 + math.sin(t)]]),
    )
    grid = TimeGrid.of_steps(horizon=2.0 * math.pi, n_steps=100)
    lo, hi = dichotomy_interval_bounds(ltv, grid)
    assert lo == pytest.approx(0.5, abs=1e-3)
    assert hi == pytest.approx(2.5, abs=1e-3)


# ---------------------------------------------------------------------------
# bound chains
# ---------------------------------------------------------------------------

def test_ltv_rate_bounds_chain():
    sys = LtvSystem(
        n=1, n_stable=0,
        A=lambda t: np.array([[1.5 + math.sin(t)]]),
        K=lambda t: np.array([[-(2.5 + math.sin(t))]]),
    )
    grid = TimeGrid.of_steps(horizon=8.0 * math.pi, n_steps=25_000)
    chain, rep = ltv_rate_bounds_check(sys, grid, n_paths=40, seeds=SEEDS)
    assert chain.all_passed
    assert [c.name for c in chain.links] == [
        "monte carlo rate >= riccati rate",
        "rate >= antistable trace average",
        "antistable trace average >= spectral lower bound",
        "spectral upper bound >= antistable trace average",
    ]
    assert rep.rate == pytest.approx(1.5, abs=0.02)
    assert "mc_rate" in rep.details


def test_ltv_chain_needs_seeds_for_mc():
    sys = LtvSystem(n=1, n_stable=0, A=lambda t: np.array([[1.0]]),
                    K=lambda t: np.array([[-2.0]]))
    with pytest.raises(ConfigError):
        ltv_rate_bounds_check(sys, TimeGrid(horizon=2.0, dt=1e-2), n_paths=10)


# ---------------------------------------------------------------------------
# nonlinear rates
# ---------------------------------------------------------------------------

def test_nonlinear_filtering_rate_consistency():
    sys = NonlinearScalarSystem(
        f=lambda t, x: -x,
        b=lambda t, x: np.ones_like(x),
        z=lambda t, x: x ** 3,
    )
    grid = TimeGrid(horizon=4.0, dt=1e-3)
    rep, ens, cons = nonlinear_filtering_rate(
        sys, grid, 24, SEEDS, grid_filter_cfg={"n_cells": 512})
    assert rep.rate > 0.0
    assert rep.details["filter"] == "kushner"
    assert set(cons) == {"difference_form", "conditional_variance_form"}
    for val, gap, se in cons.values():
        assert abs(gap) <= 4.0 * se
    assert ens.n_excluded == 0


def test_nonlinear_rate_requires_channel_map():
    base = dict(f=lambda t, x: -x, b=lambda t, x: np.ones_like(x))
    grid = TimeGrid(horizon=1.0, dt=1e-2)
    with pytest.raises(ConfigError):
        nonlinear_control_rate(
            NonlinearScalarSystem(z=lambda t, x: x, **base), grid, 4, SEEDS)
    with pytest.raises(ConfigError):
        nonlinear_filtering_rate(
            NonlinearScalarSystem(u=lambda t, x: -x, **base), grid, 4, SEEDS)
    with pytest.raises(ConfigError):
        nonlinear_control_rate(
            NonlinearScalarSystem(u=lambda t, x: -x, **base), grid, 4, SEEDS,
            filter_kind="spectral")
