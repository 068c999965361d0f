import math

import numpy as np
import pytest

from infolim.errors import AssumptionViolatedError, ConfigError, NoDichotomyError
from infolim.grids import TimeGrid
from infolim.statespace import (
    LtiSystem,
    LtvSystem,
    NonlinearScalarSystem,
    antistable_trace_integral,
    lyapunov_exponents,
    modal_decompose,
    resolve_state_fn,
    resolve_time_fn,
    system_from_config,
    unstable_pole_sum,
)


def companion(poles):
    # independent construction: char poly coefficients straight from the roots
    coeffs = np.poly(poles)
    n = len(poles)
    a = np.zeros((n, n))
    a[:-1, 1:] = np.eye(n - 1)
    a[-1, :] = -coeffs[:0:-1]
    return a


# ---------------------------------------------------------------------------
# spectral summaries
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("poles,expected_sum,expected_n", [
    ([1.0, -1.0], 1.0, 1),
    ([2.0, 0.5, -1.0], 2.5, 2),
    ([2.0, 1.0, -1.0], 3.0, 2),
    ([-0.5, -2.0], 0.0, 0),
])
def test_unstable_pole_sum_against_known_roots(poles, expected_sum, expected_n):
    summary = unstable_pole_sum(LtiSystem(A=companion(poles)))
    assert summary.unstable_sum == pytest.approx(expected_sum, abs=1e-9)
    assert summary.n_unstable == expected_n


def test_unstable_pole_sum_complex_pair():
    # poles 1 +/- 2i and -3: unstable sum is the two real parts
    a = np.array([[1.0, 2.0, 0.0], [-2.0, 1.0, 0.0], [0.0, 0.0, -3.0]])
    summary = unstable_pole_sum(LtiSystem(A=a))
    assert summary.unstable_sum == pytest.approx(2.0, abs=1e-9)
    assert summary.n_unstable == 2


def test_unstable_pole_sum_refuses_marginal_modes():
    with pytest.raises(NoDichotomyError):
        unstable_pole_sum(LtiSystem(A=[[0.0]]))
    # purely imaginary pair
    with pytest.raises(NoDichotomyError):
        unstable_pole_sum(LtiSystem(A=[[0.0, 1.0], [-1.0, 0.0]]))


# ---------------------------------------------------------------------------
# modal decomposition
# ---------------------------------------------------------------------------

def test_modal_decompose_properties():
    rng = np.random.default_rng(7)
    a = companion([1.5, 0.3, -2.0, -0.7])
    sys = LtiSystem(A=a, C=rng.normal(size=(2, 4)), K=rng.normal(size=(4, 4)))
    dec = modal_decompose(sys)

    np.testing.assert_allclose(dec.T @ dec.T_inv, np.eye(4), atol=1e-10)
    a_m = dec.system.A
    ns = dec.n_stable
    assert ns == 2 and dec.n_antistable == 2
    assert np.max(np.abs(a_m[:ns, ns:])) == 0.0
    assert np.max(np.abs(a_m[ns:, :ns])) == 0.0

    # similarity preserves the spectrum, split by sign of the real part
    orig = np.sort_complex(np.linalg.eigvals(a))
    np.testing.assert_allclose(
        np.sort_complex(np.linalg.eigvals(a_m)), orig, atol=1e-8)
    assert np.all(np.linalg.eigvals(dec.antistable_A).real > 0)

    # mapped C and K act identically through the change of coordinates
    x = rng.normal(size=4)
    np.testing.assert_allclose(dec.system.C @ (dec.T @ x), sys.C @ x, atol=1e-9)
    np.testing.assert_allclose(dec.system.K @ (dec.T @ x), sys.K @ x, atol=1e-9)


def test_modal_decompose_all_stable():
    dec = modal_decompose(LtiSystem(A=companion([-1.0, -2.0])))
    assert dec.n_stable == 2 and dec.n_antistable == 0


# ---------------------------------------------------------------------------
# Lyapunov exponents
# ---------------------------------------------------------------------------

def test_lyapunov_exponents_diagonal_lti():
    sys = LtiSystem(A=np.diag([0.8, -0.3]))
    est = lyapunov_exponents(sys, TimeGrid(horizon=20.0, dt=1e-3))
    np.testing.assert_allclose(est.exponents, [0.8, -0.3], atol=1e-6)


def test_lyapunov_exponents_rotating_system():
    # eigenvalues 0.5 +/- i: both exponents equal the shared real part
    a = np.array([[0.5, 1.0], [-1.0, 0.5]])
    est = lyapunov_exponents(LtiSystem(A=a), TimeGrid(horizon=40.0, dt=1e-3))
    np.testing.assert_allclose(est.exponents, [0.5, 0.5], atol=1e-3)


def test_lyapunov_exponents_periodic_triangular():
    # upper triangular periodic A: exponents are the diagonal time averages
    def a_fn(t):
        return np.array([[-1.0, 0.4], [0.0, 0.5 + math.sin(t)]])

    sys = LtvSystem(A=a_fn, n=2, n_stable=2)  # split unused here
    grid = TimeGrid.of_steps(8.0 * math.pi, 40_000)
    est = lyapunov_exponents(sys, grid)
    np.testing.assert_allclose(est.exponents, [0.5, -1.0], atol=1e-3)


def test_lyapunov_exponents_needs_enough_steps():
    with pytest.raises(ConfigError):
        lyapunov_exponents(LtiSystem(A=[[1.0]]), TimeGrid(horizon=0.5, dt=0.1))


# ---------------------------------------------------------------------------
# antistable trace average
# ---------------------------------------------------------------------------

def test_antistable_trace_average_lti():
    sys = LtiSystem(A=np.diag([-2.0, 1.0, 0.5]), modal_form=True, n_stable=1)
    assert antistable_trace_integral(sys, 7.0) == pytest.approx(1.5)


def test_antistable_trace_average_sinusoidal():
    sys = LtvSystem(A=lambda t: np.array([[1.5 + math.sin(t)]]), n=1, n_stable=0)
    t0, h = 1.3, 9.7
    expected = 1.5 + (math.cos(t0) - math.cos(t0 + h)) / h
    assert antistable_trace_integral(sys, h, t0=t0) == pytest.approx(
        expected, abs=1e-9)


def test_antistable_trace_average_whole_periods():
    sys = LtvSystem(A=lambda t: np.array([[1.5 + math.sin(t)]]), n=1, n_stable=0)
    assert antistable_trace_integral(sys, 32.0 * math.pi) == pytest.approx(
        1.5, abs=1e-9)


def test_antistable_trace_average_requires_modal_form():
    with pytest.raises(AssumptionViolatedError):
        antistable_trace_integral(LtiSystem(A=[[1.0]]), 1.0)


# ---------------------------------------------------------------------------
# builtin function registry
# ---------------------------------------------------------------------------

def test_tanh_control_builtin():
    u = resolve_state_fn({"builtin": "tanh_control",
                          "params": {"gain": 2.0, "saturation": 3.0}})
    e = np.linspace(-4, 4, 9)
    np.testing.assert_allclose(u(0.0, e), -3.0 * np.tanh(2.0 * e))


def test_cubic_builtins():
    # drift is restoring (-gain x^3), output is plain gain x^3
    f = resolve_state_fn({"builtin": "cubic_drift", "params": {"gain": 0.5}})
    z = resolve_state_fn({"builtin": "cubic_output", "params": {"gain": 2.0}})
    x = np.array([-1.0, 0.5, 2.0])
    np.testing.assert_allclose(f(1.0, x), -0.5 * x ** 3)
    np.testing.assert_allclose(z(1.0, x), 2.0 * x ** 3)


def test_sinusoidal_time_builtin():
    a = resolve_time_fn({"builtin": "sinusoidal_scalar",
                         "params": {"mean": 1.5, "amplitude": 1.0,
                                    "frequency": 2.0}})
    assert a(0.0) == pytest.approx(1.5)
    assert a(math.pi / 4.0) == pytest.approx(2.5)


def test_unknown_builtin_rejected():
    with pytest.raises(ConfigError):
        resolve_state_fn({"builtin": "no_such_thing"})


# ---------------------------------------------------------------------------
# config ingestion
# ---------------------------------------------------------------------------

def test_system_from_config_lti():
    sys = system_from_config({
        "kind": "lti", "A": [[0.0, 1.0], [2.0, -1.0]], "B": [[0.0], [1.0]],
        "C": [[3.0, 0.0]],
    })
    assert isinstance(sys, LtiSystem)
    np.testing.assert_allclose(sys.B, [[0.0], [1.0]])
    assert sys.K is None


def test_system_from_config_ltv_diag_scalars():
    sys = system_from_config({
        "kind": "ltv", "n": 2, "n_stable": 1,
        "A": {"builtin": "diag_scalars", "params": {"entries": [
            -1.0,
            {"builtin": "sinusoidal_scalar",
             "params": {"mean": 1.5, "amplitude": 1.0, "frequency": 1.0}},
        ]}},
    })
    assert isinstance(sys, LtvSystem)
    np.testing.assert_allclose(sys.A(0.0), np.diag([-1.0, 1.5]))
    np.testing.assert_allclose(sys.A(math.pi / 2.0), np.diag([-1.0, 2.5]))


def test_system_from_config_nonlinear():
    sys = system_from_config({
        "kind": "nonlinear",
        "f": {"builtin": "linear_drift", "params": {"gain": 0.5}},
        "b": {"builtin": "constant_diffusion", "params": {"value": 1.0}},
        "u": {"builtin": "tanh_control",
              "params": {"gain": 2.0, "saturation": 3.0}},
    })
    assert isinstance(sys, NonlinearScalarSystem)
    x = np.array([1.0])
    np.testing.assert_allclose(
        sys.drift_closed(0.0, x), 0.5 * x - 3.0 * np.tanh(2.0 * x))


@pytest.mark.parametrize("cfg", [
    {"kind": "warp_drive"},
    {"A": [[1.0]]},
    {"kind": "ltv", "A": [[1.0]]},
    {"kind": "nonlinear", "f": {"builtin": "zero"}},
])
def test_system_from_config_rejects_bad_configs(cfg):
    with pytest.raises(ConfigError):
        system_from_config(cfg)


# ---------------------------------------------------------------------------
# system containers
# ---------------------------------------------------------------------------

def test_lti_shape_checks():
    with pytest.raises(ConfigError):
        LtiSystem(A=[[1.0, 2.0]])
    with pytest.raises(ConfigError):
        LtiSystem(A=[[1.0]], C=[[1.0, 2.0]])
    with pytest.raises(ConfigError):
        LtiSystem(A=np.eye(2), modal_form=True)


def test_ltv_rejects_coupled_drift():
    with pytest.raises(AssumptionViolatedError):
        LtvSystem(A=lambda t: np.array([[-1.0, 0.5], [0.0, 1.0]]),
                  n=2, n_stable=1)


def test_ltv_defaults_identity_input():
    sys = LtvSystem(A=lambda t: np.diag([-1.0, 1.0]), n=2, n_stable=1)
    np.testing.assert_allclose(sys.B(3.0), np.eye(2))
    np.testing.assert_allclose(sys.antistable_block(0.0), [[1.0]])


def test_nonlinear_scalar_validation():
    with pytest.raises(ConfigError):
        NonlinearScalarSystem(f=1.0, b=lambda t, x: x)
    with pytest.raises(ConfigError):
        NonlinearScalarSystem(f=lambda t, x: x, b=lambda t, x: x,
                              noise_scale=-1.0)
