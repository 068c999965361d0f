"""Riccati differential and algebraic equation solvers.

All equations are handled in the filter-form template

    dP/dt = A P + P A' + Q - P G'G P

with A, G, Q constant matrices or callables of time.  The control-side
estimation problems use G = K (channel gain) and Q = 0; the filtering
problems use G = Sigma_v^{-1/2} C and Q = B Sigma_w B'.  Integration is
fixed-step RK4 with per-step symmetrization; positive semidefiniteness
is monitored every step and its loss raises rather than warns, because a
negative covariance invalidates every downstream rate quantity.

Algebraic equations are solved by integrating the differential equation
to steady state and checking the trailing residual, which keeps one code
path for both and always yields the stabilizing solution reachable from
the initial covariance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigError, NotConvergedError, NumericalBreakdownError
from .grids import TimeGrid

#: trailing RHS norm below this counts as steady state
RDE_STEADY_TOL = 1e-8
#: eigenvalue floor (relative) before PSD is declared lost
PSD_TOL = 1e-9


@dataclass
class RdeSolution:
    """Dense RDE trajectory on a grid.

    P has shape (n_steps + 1, n, n).  trailing_rhs_max is the largest
    Frobenius norm of dP/dt over the last 5% of steps; steady means it
    fell below RDE_STEADY_TOL.
    """

    grid: TimeGrid
    P: np.ndarray
    trailing_rhs_max: float
    steady: bool
    min_eigenvalue: float

    def logdet(self, index: int) -> float:
        sign, val = np.linalg.slogdet(self.P[index])
        if sign <= 0:
            raise NumericalBreakdownError(
                f"covariance not positive definite at grid index {index}"
            )
        return float(val)

    @property
    def final(self) -> np.ndarray:
        return self.P[-1]


@dataclass
class AreSolution:
    """Steady-state covariance with its convergence certificate."""

    P: np.ndarray
    residual: float
    horizon_used: float
    trailing_rhs_max: float


def _as_time_fn(coef, name: str):
    """Return (callable, constant_matrix_or_None)."""
    if callable(coef):
        return coef, None
    arr = np.atleast_2d(np.asarray(coef, dtype=float))
    if not np.all(np.isfinite(arr)):
        raise ConfigError(f"{name} contains non-finite entries")
    return (lambda t, _a=arr: _a), arr


def _rk4_scalar(a: float, g2: float, q: float, p0: float, dt: float,
                n_steps: int, psd_floor: float) -> np.ndarray:
    """Scalar specialization; plain floats keep the hot loop cheap."""
    out = np.empty(n_steps + 1)
    p = p0
    out[0] = p
    h6 = dt / 6.0
    for i in range(n_steps):
        k1 = 2.0 * a * p + q - g2 * p * p
        p1 = p + 0.5 * dt * k1
        k2 = 2.0 * a * p1 + q - g2 * p1 * p1
        p2 = p + 0.5 * dt * k2
        k3 = 2.0 * a * p2 + q - g2 * p2 * p2
        p3 = p + dt * k3
        k4 = 2.0 * a * p3 + q - g2 * p3 * p3
        p = p + h6 * (k1 + 2.0 * (k2 + k3) + k4)
        if not math.isfinite(p) or p < psd_floor:
            raise NumericalBreakdownError(
                f"covariance lost positivity (p={p!r})", step=i
            )
        out[i + 1] = p
    return out


def integrate_rde(
    a,
    g,
    q,
    p0,
    grid: TimeGrid,
    psd_tol: float = PSD_TOL,
    steady_tol: float = RDE_STEADY_TOL,
) -> RdeSolution:
    """Integrate dP/dt = A P + P A' + Q - P G'G P over the grid.

    Parameters
    ----------
    a, g, q : array_like or callable
        Coefficients; callables receive the absolute time.  g enters only
        through G'G.  q may be None for a noise-free equation.
    p0 : array_like
        Initial covariance (symmetrized on entry).
    """
    a_fn, a_const = _as_time_fn(a, "A")
    g_fn, g_const = _as_time_fn(g, "G")
    if q is None:
        q = np.zeros_like(np.atleast_2d(np.asarray(p0, dtype=float)))
    q_fn, q_const = _as_time_fn(q, "Q")
    p_init = np.atleast_2d(np.asarray(p0, dtype=float))
    n = p_init.shape[0]
    if p_init.shape != (n, n):
        raise ConfigError(f"P0 must be square, got {p_init.shape}")
    p_init = 0.5 * (p_init + p_init.T)
    dt = grid.dt
    n_steps = grid.n_steps

    all_const = a_const is not None and g_const is not None and q_const is not None
    if all_const and n == 1:
        scale = max(1.0, abs(float(p_init[0, 0])))
        # G may be a column of several outputs; only G'G enters
        g2_c = float(np.sum(np.asarray(g_const, dtype=float) ** 2))
        path = _rk4_scalar(
            float(a_const[0, 0]),
            g2_c,
            float(q_const[0, 0]),
            float(p_init[0, 0]),
            dt,
            n_steps,
            -psd_tol * scale,
        )
        p_all = path.reshape(-1, 1, 1)
        a_c, q_c = float(a_const[0, 0]), float(q_const[0, 0])
        tail = path[-max(2, n_steps // 20):]
        rhs_tail = np.abs(2.0 * a_c * tail + q_c - g2_c * tail * tail)
        trailing = float(np.max(rhs_tail))
        return RdeSolution(
            grid=grid,
            P=p_all,
            trailing_rhs_max=trailing,
            steady=trailing < steady_tol,
            min_eigenvalue=float(np.min(path)),
        )

    def rhs(t, p):
        at = np.atleast_2d(np.asarray(a_fn(t), dtype=float))
        gt = np.atleast_2d(np.asarray(g_fn(t), dtype=float))
        qt = np.atleast_2d(np.asarray(q_fn(t), dtype=float))
        gp = gt @ p
        return at @ p + p @ at.T + qt - gp.T @ gp

    p_all = np.empty((n_steps + 1, n, n))
    p = p_init.copy()
    p_all[0] = p
    t = grid.t0
    min_eig = float(np.min(np.linalg.eigvalsh(p)))
    for step in range(n_steps):
        k1 = rhs(t, p)
        k2 = rhs(t + 0.5 * dt, p + 0.5 * dt * k1)
        k3 = rhs(t + 0.5 * dt, p + 0.5 * dt * k2)
        k4 = rhs(t + dt, p + dt * k3)
        p = p + (dt / 6.0) * (k1 + 2.0 * (k2 + k3) + k4)
        p = 0.5 * (p + p.T)
        if not np.all(np.isfinite(p)):
            raise NumericalBreakdownError("non-finite covariance", step=step)
        lo = float(np.min(np.linalg.eigvalsh(p)))
        min_eig = min(min_eig, lo)
        if lo < -psd_tol * (1.0 + float(np.max(np.abs(np.diag(p))))):
            raise NumericalBreakdownError(
                f"covariance lost positive semidefiniteness (min eig {lo:.3e})",
                step=step,
            )
        p_all[step + 1] = p
        t += dt
    tail_lo = max(1, n_steps - max(2, n_steps // 20))
    trailing = 0.0
    for idx in range(tail_lo, n_steps + 1):
        r = rhs(grid.t0 + idx * dt, p_all[idx])
        trailing = max(trailing, float(np.linalg.norm(r)))
    return RdeSolution(
        grid=grid,
        P=p_all,
        trailing_rhs_max=trailing,
        steady=trailing < steady_tol,
        min_eigenvalue=min_eig,
    )


def solve_are(
    a,
    g,
    q,
    p0=None,
    dt: float = 1e-3,
    max_horizon: float = 200.0,
    steady_tol: float = RDE_STEADY_TOL,
) -> AreSolution:
    """Stabilizing solution of 0 = A P + P A' + Q - P G'G P.

    Integrates the differential equation from p0 (identity by default)
    in horizon segments until the trailing RHS norm falls below
    steady_tol, then reports the algebraic residual of the final matrix.

    Raises
    ------
    NotConvergedError
        If the trailing norm is still above steady_tol at max_horizon.
    """
    a_fn, a_const = _as_time_fn(a, "A")
    if a_const is None:
        raise ConfigError("solve_are requires constant coefficients")
    n = a_const.shape[0]
    p = np.eye(n) if p0 is None else np.atleast_2d(np.asarray(p0, dtype=float))
    segment = 20.0
    used = 0.0
    sol = None
    while used < max_horizon:
        seg = min(segment, max_horizon - used)
        grid = TimeGrid(horizon=seg, dt=dt, t0=used)
        sol = integrate_rde(a, g, q, p, grid, steady_tol=steady_tol)
        p = sol.final
        used += seg
        if sol.steady:
            break
    if sol is None or not sol.steady:
        raise NotConvergedError(
            f"Riccati equation not steady after horizon {max_horizon}",
            diagnostic=None if sol is None else sol.trailing_rhs_max,
        )
    g_arr = np.atleast_2d(np.asarray(g, dtype=float))
    q_arr = (np.zeros((n, n)) if q is None
             else np.atleast_2d(np.asarray(q, dtype=float)))
    gp = g_arr @ p
    residual = float(np.linalg.norm(
        a_const @ p + p @ a_const.T + q_arr - gp.T @ gp
    ))
    return AreSolution(
        P=p,
        residual=residual,
        horizon_used=used,
        trailing_rhs_max=sol.trailing_rhs_max,
    )


def control_rde_X(a, b, grid: TimeGrid, x_terminal=None) -> np.ndarray:
    """Backward equation -dX/dt = A'X + X A - X B B' X on the grid.

    a and b may be constants or callables of time.  Returns X on the
    grid, shape (n_steps + 1, n, n), indexed forward in time.

    The equation is homogeneous, so X = 0 is an equilibrium and a zero
    terminal condition stays there; the stabilizing (nonzero) branch is
    the attractor of the backward flow from any positive-definite
    terminal condition, which defaults to the identity.
    """
    a_fn, _ = _as_time_fn(a, "A")
    b_fn, _ = _as_time_fn(b, "B")
    t_end = grid.t0 + grid.horizon

    def a_rev(tau):
        at = np.atleast_2d(np.asarray(a_fn(t_end - tau), dtype=float))
        return at.T

    def g_rev(tau):
        bt = np.atleast_2d(np.asarray(b_fn(t_end - tau), dtype=float))
        return bt.T

    n = np.atleast_2d(np.asarray(a_fn(grid.t0), dtype=float)).shape[0]
    if x_terminal is None:
        x_terminal = np.eye(n)
    rev_grid = TimeGrid(horizon=grid.horizon, dt=grid.dt, t0=0.0)
    sol = integrate_rde(a_rev, g_rev, np.zeros((n, n)), np.asarray(x_terminal, dtype=float), rev_grid)
    return sol.P[::-1].copy()


@dataclass
class ExpansionReport:
    """Vanishing-process-noise behavior of the filtering covariance.

    For noise amplitude eps (covariance eps^2 B B') the stable and cross
    blocks of the steady covariance should scale like eps^2 while the
    antistable block converges to the solution of the reduced
    (noise-free) equation.
    """

    eps_list: np.ndarray
    stable_norms: np.ndarray
    cross_norms: np.ndarray
    antistable_final: np.ndarray
    reduced_P: np.ndarray
    slope_stable: float
    slope_cross: float
    deviation: float

    def block_structure_ok(self, rel_tol: float = 1e-3) -> bool:
        return self.deviation < rel_tol * (1.0 + float(np.linalg.norm(self.reduced_P)))


def vanishing_noise_expansion(
    sys,
    eps_list: Sequence[float],
    dt: float = 1e-3,
    max_horizon: float = 200.0,
) -> ExpansionReport:
    """Solve the filtering Riccati equation along a noise-amplitude sweep.

    The system must be in modal form with an output map C.  Per eps the
    full steady covariance is computed with Q = eps^2 B B'; the reduced
    antistable covariance solves the noise-free equation restricted to
    the antistable block.  Log-log slopes of the stable and cross block
    norms against eps quantify the quadratic collapse.
    """
    if not getattr(sys, "modal_form", False):
        raise ConfigError("vanishing_noise_expansion requires a modal-form system")
    if sys.C is None:
        raise ConfigError("vanishing_noise_expansion requires an output map C")
    eps = np.asarray(sorted(eps_list, reverse=True), dtype=float)
    if eps.size < 1 or np.any(eps <= 0):
        raise ConfigError("eps_list must contain positive amplitudes")
    n_s = sys.n_stable
    bbt = sys.B @ sys.B.T
    stable_norms = np.empty(eps.size)
    cross_norms = np.empty(eps.size)
    p_final = None
    for i, e in enumerate(eps):
        sol = solve_are(sys.A, sys.C, (e ** 2) * bbt, dt=dt, max_horizon=max_horizon)
        p_final = sol.P
        stable_norms[i] = np.linalg.norm(p_final[:n_s, :n_s])
        cross_norms[i] = np.linalg.norm(p_final[:n_s, n_s:])
    a_u = sys.A[n_s:, n_s:]
    c_u = sys.C[:, n_s:]
    red = solve_are(a_u, c_u, np.zeros_like(a_u), dt=dt, max_horizon=max_horizon)
    target = np.zeros_like(p_final)
    target[n_s:, n_s:] = red.P
    deviation = float(np.linalg.norm(p_final - target))

    def _slope(norms):
        mask = norms > 0
        if np.count_nonzero(mask) < 2:
            return float("nan")
        return float(np.polyfit(np.log(eps[mask]), np.log(norms[mask]), 1)[0])

    return ExpansionReport(
        eps_list=eps,
        stable_norms=stable_norms,
        cross_norms=cross_norms,
        antistable_final=p_final[n_s:, n_s:],
        reduced_P=red.P,
        slope_stable=_slope(stable_norms),
        slope_cross=_slope(cross_norms),
        deviation=deviation,
    )
