"""Information rates of control and filtering channels.

Every rate here is a long-run average, which no finite run can produce
exactly.  The convention throughout: a quantity's *rate* is its average
over the trailing half-window [H/2, H], where transients from the
initial covariance have died out; ``tail_deviation`` records how far
that trailing average sits from the full-window average, and a run whose
deviation exceeds 5% of the rate is marked non-converged.  Totals (in
nats) always integrate the full window.

Deterministic routes go through Riccati solutions using the log-det
identity: the integral of tr[dP/dt P^-1] telescopes to the difference of
log-determinants, so no per-step inversion is ever needed.  Monte Carlo
routes estimate the same quantities from realized squared estimation
errors; per-path values are aggregated with compensated summation in
path order, making results independent of batching and worker count.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import (
    AssumptionViolatedError,
    ConfigError,
    NotConvergedError,
    NumericalBreakdownError,
    PowerConstraintViolatedError,
)
from .estimators import _kushner_batch
from .grids import TimeGrid
from .riccati import AreSolution, RdeSolution, integrate_rde, solve_are, control_rde_X
from .sde import EXPLOSION_BOUND, BatchStreams, SeedSpec, draw_x0_batch
from .statespace import (
    LtiSystem,
    LtvSystem,
    NonlinearScalarSystem,
    antistable_trace_integral,
    lyapunov_exponents,
    modal_decompose,
    unstable_pole_sum,
)

#: a rate whose tail deviation exceeds this fraction is non-converged
TAIL_DEVIATION_MAX = 0.05
#: fraction of excluded paths above which an ensemble run fails
MAX_EXCLUDED_FRACTION = 0.01
#: sampling-noise multiplier for statistical consistency checks
MC_SIGMAS = 4.0


@dataclass
class InfoReport:
    """One rate estimate with its convergence and sampling diagnostics."""

    rate_route: str
    rate: float
    total_information: float
    tail_deviation: float
    horizon: float
    dt: float
    mc_std_error: Optional[float] = None
    n_paths: int = 0
    n_excluded: int = 0
    converged: bool = True
    details: dict = field(default_factory=dict)


@dataclass
class InequalityCheck:
    """lhs >= rhs (or equality when ``equality``) within tolerance."""

    name: str
    lhs: float
    rhs: float
    tolerance: float
    equality: bool = False

    @property
    def margin(self) -> float:
        return self.lhs - self.rhs

    @property
    def passed(self) -> bool:
        if self.equality:
            return abs(self.margin) <= self.tolerance
        return self.margin >= -self.tolerance


@dataclass
class CapacityBounds:
    """Capacity sandwich around a channel's information rate."""

    C_f: float
    rate: float
    divergence_rate_marginal: float
    divergence_rate_conditional: float
    verdicts: List[InequalityCheck]

    @property
    def all_passed(self) -> bool:
        return all(c.passed for c in self.verdicts)


def _report_from_windows(rate_route, full_avg, tail_avg, grid, **kw) -> InfoReport:
    tail_dev = abs(tail_avg - full_avg)
    rate = tail_avg
    converged = tail_dev <= TAIL_DEVIATION_MAX * max(abs(rate), 1e-12)
    return InfoReport(
        rate_route=rate_route,
        rate=rate,
        total_information=full_avg * grid.horizon,
        tail_deviation=tail_dev,
        horizon=grid.horizon,
        dt=grid.dt,
        converged=converged,
        **kw,
    )


# ---------------------------------------------------------------------------
# deterministic (Riccati) routes
# ---------------------------------------------------------------------------

def _modal_control_parts(sys):
    """Antistable (A_u, K_u, P0_u) for an LTI system, decomposing if needed."""
    if sys.K is None:
        raise ConfigError("control rate needs a feedback gain K")
    if sys.modal_form:
        n_s = sys.n_stable
        t_mat = np.eye(sys.n)
    else:
        dec = modal_decompose(sys)
        sys = dec.system
        n_s = dec.n_stable
        t_mat = dec.T
    a_u = sys.A[n_s:, n_s:]
    k_u = sys.K[:, n_s:]
    p0_full = t_mat @ t_mat.T          # image of Var(x0) = I in modal coordinates
    p0_u = p0_full[n_s:, n_s:]
    return a_u, k_u, p0_u


def _zero_rate_report(grid: TimeGrid) -> InfoReport:
    return InfoReport(
        rate_route="riccati", rate=0.0, total_information=0.0,
        tail_deviation=0.0, horizon=grid.horizon, dt=grid.dt,
    )


def control_rate_riccati(sys, grid: TimeGrid) -> Tuple[InfoReport, Optional[RdeSolution]]:
    """Deterministic control-channel rate through the antistable Riccati flow.

    The rate integrand is tr[A_u] - (1/2) tr[dP_u/dt P_u^-1]; its window
    averages are computed exactly from log-determinants.  Systems with an
    empty antistable block have zero rate.
    """
    if isinstance(sys, LtvSystem):
        return _control_rate_riccati_ltv(sys, grid)
    a_u, k_u, p0_u = _modal_control_parts(sys)
    n_u = a_u.shape[0]
    if n_u == 0:
        return _zero_rate_report(grid), None
    sol = integrate_rde(a_u, k_u, np.zeros((n_u, n_u)), p0_u, grid)
    tr_au = float(np.trace(a_u))
    mid = grid.tail_start()
    h = grid.horizon
    win = h - mid * grid.dt
    full_avg = tr_au - (sol.logdet(-1) - sol.logdet(0)) / (2.0 * h)
    tail_avg = tr_au - (sol.logdet(-1) - sol.logdet(mid)) / (2.0 * win)
    report = _report_from_windows("riccati", full_avg, tail_avg, grid)
    report.details["steady"] = sol.steady
    return report, sol


def _control_rate_riccati_ltv(sys: LtvSystem, grid: TimeGrid):
    if sys.K is None:
        raise ConfigError("control rate needs a feedback gain K")
    n_s, n_u = sys.n_stable, sys.n_antistable
    if n_u == 0:
        return _zero_rate_report(grid), None

    def a_u(t):
        return sys.antistable_block(t)

    def k_u(t):
        return np.atleast_2d(np.asarray(sys.K(t), dtype=float))[:, n_s:]

    sol = integrate_rde(a_u, k_u, np.zeros((n_u, n_u)), np.eye(n_u), grid)
    mid = grid.tail_start()
    h = grid.horizon
    t_mid = grid.t0 + mid * grid.dt
    win = grid.t0 + h - t_mid
    avg_full = antistable_trace_integral(sys, h, t0=grid.t0)
    avg_tail = antistable_trace_integral(sys, win, t0=t_mid)
    full_avg = avg_full - (sol.logdet(-1) - sol.logdet(0)) / (2.0 * h)
    tail_avg = avg_tail - (sol.logdet(-1) - sol.logdet(mid)) / (2.0 * win)
    report = _report_from_windows("riccati", full_avg, tail_avg, grid)
    report.details["steady"] = sol.steady
    return report, sol


def control_rate_spectral(sys: LtiSystem) -> InfoReport:
    """Closed-form LTI rate: the sum of unstable pole real parts."""
    summary = unstable_pole_sum(sys)
    return InfoReport(
        rate_route="spectral",
        rate=summary.unstable_sum,
        total_information=float("nan"),
        tail_deviation=0.0,
        horizon=float("inf"),
        dt=0.0,
        details={"n_unstable": summary.n_unstable},
    )


def filtering_rate_riccati(
    sys: LtiSystem,
    noise_scale: float,
    dt: float = 1e-3,
) -> Tuple[InfoReport, AreSolution]:
    """Filtering-channel rate (1/2) tr[C P C'] at the steady covariance.

    noise_scale is the process-noise covariance scale: Q = eps B B'.
    """
    if sys.C is None:
        raise ConfigError("filtering rate needs an output map C")
    are = solve_are(sys.A, sys.C, noise_scale * (sys.B @ sys.B.T), dt=dt)
    rate = 0.5 * float(np.trace(sys.C @ are.P @ sys.C.T))
    report = InfoReport(
        rate_route="riccati",
        rate=rate,
        total_information=float("nan"),
        tail_deviation=0.0,
        horizon=are.horizon_used,
        dt=dt,
        details={"are_residual": are.residual, "noise_scale": noise_scale},
    )
    return report, are


def filtering_rate_ltv_reduced(sys: LtvSystem, grid: TimeGrid):
    """Vanishing-noise LTV filtering rate via the reduced antistable flow."""
    if sys.C is None:
        raise ConfigError("filtering rate needs an output map C")
    n_s, n_u = sys.n_stable, sys.n_antistable
    if n_u == 0:
        return _zero_rate_report(grid), None

    def a_u(t):
        return sys.antistable_block(t)

    def c_u(t):
        return np.atleast_2d(np.asarray(sys.C(t), dtype=float))[:, n_s:]

    sol = integrate_rde(a_u, c_u, np.zeros((n_u, n_u)), np.eye(n_u), grid)
    mid = grid.tail_start()
    h = grid.horizon
    t_mid = grid.t0 + mid * grid.dt
    win = grid.t0 + h - t_mid
    avg_full = antistable_trace_integral(sys, h, t0=grid.t0)
    avg_tail = antistable_trace_integral(sys, win, t0=t_mid)
    full_avg = avg_full - (sol.logdet(-1) - sol.logdet(0)) / (2.0 * h)
    tail_avg = avg_tail - (sol.logdet(-1) - sol.logdet(mid)) / (2.0 * win)
    report = _report_from_windows("riccati", full_avg, tail_avg, grid)
    report.details["steady"] = sol.steady
    return report, sol


def filtering_rate(
    sys: LtiSystem,
    grid: Optional[TimeGrid],
    noise_scales: Sequence[float],
    n_paths: int = 0,
    seeds: Optional[SeedSpec] = None,
    workers: int = 1,
) -> dict:
    """Filtering rates along a vanishing process-noise sweep.

    Per scale: the deterministic steady-covariance rate, plus a Monte
    Carlo route when n_paths > 0 (needs a grid).  Returns the per-scale
    reports keyed by scale, the spectral vanishing-noise limit, and two
    checks: rates nonincreasing as the scale decreases, and the smallest
    scale's rate still above the limit.
    """
    eps = sorted(float(e) for e in noise_scales)
    if not eps or eps[0] <= 0:
        raise ConfigError("noise_scales must be positive")
    dt = grid.dt if grid is not None else 1e-3
    reports: Dict[float, InfoReport] = {}
    mc_reports: Dict[float, InfoReport] = {}
    for e in sorted(eps, reverse=True):
        reports[e], _ = filtering_rate_riccati(sys, e, dt=dt)
        if n_paths > 0:
            if grid is None or seeds is None:
                raise ConfigError("Monte Carlo route needs a grid and seeds")
            mc_reports[e], _ = filtering_rate_monte_carlo(
                sys, grid, n_paths, seeds, noise_scale=e, workers=workers
            )
    limit = unstable_pole_sum(sys).unstable_sum
    rates_desc = [reports[e].rate for e in sorted(eps, reverse=True)]
    monotone = all(
        rates_desc[i] >= rates_desc[i + 1] - 1e-12
        for i in range(len(rates_desc) - 1)
    )
    above_limit = rates_desc[-1] >= limit - 1e-9
    return {
        "reports": reports,
        "mc_reports": mc_reports,
        "spectral_limit": limit,
        "monotone": monotone,
        "above_limit": above_limit,
    }


# ---------------------------------------------------------------------------
# Monte Carlo ensembles (linear systems, fused simulate + filter)
# ---------------------------------------------------------------------------

@dataclass
class McEnsemble:
    """Per-path windowed integrals of the channel quantities.

    err2 integrates ||target - estimate||^2, sq the squared target and
    est2 the squared estimate, each over the full window and the trailing
    half-window.  profile_* hold pointwise ensemble means over alive
    paths on the step grid.
    """

    grid: TimeGrid
    err2_full: np.ndarray
    err2_tail: np.ndarray
    sq_full: np.ndarray
    sq_tail: np.ndarray
    est2_full: np.ndarray
    est2_tail: np.ndarray
    alive: np.ndarray
    diverged_step: np.ndarray
    profile_sq_mean: np.ndarray
    profile_sq_se: np.ndarray

    @property
    def n_paths(self) -> int:
        return self.alive.size

    @property
    def n_excluded(self) -> int:
        return int(np.count_nonzero(~self.alive))

    def check_exclusions(self):
        frac = self.n_excluded / max(1, self.n_paths)
        if frac > MAX_EXCLUDED_FRACTION:
            raise NumericalBreakdownError(
                f"{self.n_excluded}/{self.n_paths} paths diverged "
                f"({100 * frac:.2f}% > {100 * MAX_EXCLUDED_FRACTION:.0f}%)"
            )


def _fsum_mean(values: np.ndarray, mask: np.ndarray) -> float:
    picked = [float(v) for v in values[mask]]
    if not picked:
        raise NumericalBreakdownError("no surviving paths to aggregate")
    return math.fsum(picked) / len(picked)


def _fsum_se(values: np.ndarray, mask: np.ndarray, mean: float) -> float:
    picked = [(float(v) - mean) ** 2 for v in values[mask]]
    n = len(picked)
    if n < 2:
        return float("nan")
    return math.sqrt(math.fsum(picked) / (n - 1) / n)


def _linear_mc_block(sys, grid, seeds, path_block, kind, noise_scale, p_sol,
                     chunk_steps=2048):
    """Simulate + filter one contiguous block of paths; returns raw arrays."""
    if isinstance(sys, LtiSystem):
        a_fn = lambda t: sys.A
        b_fn = lambda t: sys.B
        c_fn = None if sys.C is None else (lambda t: sys.C)
        k_fn = None if sys.K is None else (lambda t: sys.K)
        const = True
    else:
        a_fn, b_fn, c_fn, k_fn = sys.A, sys.B, sys.C, sys.K
        const = False
    dt = grid.dt
    sqdt = math.sqrt(dt)
    n = sys.n
    n_steps = grid.n_steps
    tail0 = grid.tail_start()
    nb = len(path_block)

    if kind == "control":
        gain_of = lambda t, p: b_fn(t) + p @ np.asarray(k_fn(t)).T
        target_of = k_fn
        drift_of = (lambda t: np.asarray(a_fn(t)) + np.asarray(b_fn(t)) @ np.asarray(k_fn(t)))
    else:
        gain_of = lambda t, p: p @ np.asarray(c_fn(t)).T
        target_of = c_fn
        drift_of = a_fn

    m = np.asarray(b_fn(grid.t0)).shape[1]
    x = draw_x0_batch(seeds, path_block, n)
    xh = np.zeros((nb, n))
    w_str = BatchStreams(seeds, path_block, m, stream=1)
    if kind == "observation":
        p_dim = np.asarray(c_fn(grid.t0)).shape[0]
        v_str = BatchStreams(seeds, path_block, p_dim, stream=2)
        amp = math.sqrt(noise_scale)
    err2_f = np.zeros(nb)
    err2_t = np.zeros(nb)
    sq_f = np.zeros(nb)
    sq_t = np.zeros(nb)
    est2_f = np.zeros(nb)
    est2_t = np.zeros(nb)
    alive = np.ones(nb, dtype=bool)
    died = np.full(nb, -1, dtype=int)
    prof_sum = np.zeros(n_steps)
    prof_sumsq = np.zeros(n_steps)
    prof_count = np.zeros(n_steps)

    t = grid.t0
    k = 0
    if const:
        a_c = np.asarray(a_fn(0.0), dtype=float)
        tgt_c = np.asarray(target_of(0.0), dtype=float)
        drift_c = np.asarray(drift_of(0.0), dtype=float)
    while k < n_steps:
        steps = min(chunk_steps, n_steps - k)
        dw = w_str.normals(steps) * sqdt
        if kind == "observation":
            dv = v_str.normals(steps) * sqdt
        for j in range(steps):
            tgt_mat = tgt_c if const else np.asarray(target_of(t), dtype=float)
            drift_mat = drift_c if const else np.asarray(drift_of(t), dtype=float)
            tgt = x @ tgt_mat.T
            tgt_hat = xh @ tgt_mat.T
            if kind == "control":
                dchan = tgt * dt + dw[:, j]
                dx_extra = dchan @ np.asarray(b_fn(t), dtype=float).T
            else:
                dchan = tgt * dt + dv[:, j]
                dx_extra = amp * (dw[:, j] @ np.asarray(b_fn(t), dtype=float).T)
            innov = dchan - tgt_hat * dt
            err = tgt - tgt_hat
            e2 = np.einsum("ij,ij->i", err, err)
            s2 = np.einsum("ij,ij->i", tgt, tgt)
            h2 = np.einsum("ij,ij->i", tgt_hat, tgt_hat)
            live = alive
            err2_f[live] += e2[live] * dt
            sq_f[live] += s2[live] * dt
            est2_f[live] += h2[live] * dt
            if k >= tail0:
                err2_t[live] += e2[live] * dt
                sq_t[live] += s2[live] * dt
                est2_t[live] += h2[live] * dt
            prof_sum[k] += float(np.sum(s2[live]))
            prof_sumsq[k] += float(np.sum(s2[live] ** 2))
            prof_count[k] += int(np.count_nonzero(live))
            x = x + (x @ (a_c if const else np.asarray(a_fn(t), dtype=float)).T) * dt + dx_extra
            xh = xh + (xh @ drift_mat.T) * dt + innov @ gain_of(t, p_sol.P[k]).T
            mag = np.max(np.abs(x), axis=1)
            blown = alive & (~np.isfinite(mag) | (mag > EXPLOSION_BOUND))
            if np.any(blown):
                died[blown] = k
                alive = alive & ~blown
                x[~alive] = 0.0
                xh[~alive] = 0.0
            t += dt
            k += 1
    return (err2_f, err2_t, sq_f, sq_t, est2_f, est2_t, alive, died,
            prof_sum, prof_sumsq, prof_count)


def _linear_mc_ensemble(sys, grid, seeds, n_paths, kind, noise_scale=1.0,
                        workers=1) -> McEnsemble:
    if kind == "control":
        if sys.K is None:
            raise ConfigError("control ensemble needs a feedback gain K")
        g_arg = sys.K
        q_arg = np.zeros((sys.n, sys.n))
    else:
        if sys.C is None:
            raise ConfigError("observation ensemble needs an output map C")
        g_arg = sys.C
        if isinstance(sys, LtiSystem):
            q_arg = noise_scale * (sys.B @ sys.B.T)
        else:
            q_arg = lambda t: noise_scale * (
                np.asarray(sys.B(t)) @ np.asarray(sys.B(t)).T
            )
    p_sol = integrate_rde(sys.A, g_arg, q_arg, np.eye(sys.n), grid)

    indices = list(range(n_paths))
    n_workers = max(1, int(workers))
    # fixed block size: the reduction tree must not depend on worker count,
    # or re-runs with different --workers would not be byte-identical
    block_size = 256
    blocks = [indices[i:i + block_size] for i in range(0, n_paths, block_size)]

    def run_block(block):
        return _linear_mc_block(sys, grid, seeds, block, kind, noise_scale, p_sol)

    if n_workers == 1 or len(blocks) == 1:
        results = [run_block(b) for b in blocks]
    else:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            results = list(pool.map(run_block, blocks))

    def cat(i):
        return np.concatenate([r[i] for r in results])

    prof_sum = np.sum([r[8] for r in results], axis=0)
    prof_sumsq = np.sum([r[9] for r in results], axis=0)
    prof_count = np.sum([r[10] for r in results], axis=0)
    count = np.maximum(prof_count, 1.0)
    prof_mean = prof_sum / count
    prof_var = np.maximum(prof_sumsq / count - prof_mean ** 2, 0.0)
    prof_se = np.sqrt(prof_var / count)
    return McEnsemble(
        grid=grid,
        err2_full=cat(0), err2_tail=cat(1),
        sq_full=cat(2), sq_tail=cat(3),
        est2_full=cat(4), est2_tail=cat(5),
        alive=cat(6), diverged_step=cat(7),
        profile_sq_mean=prof_mean,
        profile_sq_se=prof_se,
    )


def _mc_report(rate_route, ens: McEnsemble) -> InfoReport:
    ens.check_exclusions()
    grid = ens.grid
    h = grid.horizon
    win = h - grid.tail_start() * grid.dt
    mask = ens.alive
    full_rates = ens.err2_full / (2.0 * h)
    tail_rates = ens.err2_tail / (2.0 * win)
    full_avg = _fsum_mean(full_rates, mask)
    tail_avg = _fsum_mean(tail_rates, mask)
    se = _fsum_se(tail_rates, mask, tail_avg)
    report = _report_from_windows(rate_route, full_avg, tail_avg, grid)
    report.mc_std_error = se
    report.n_paths = ens.n_paths
    report.n_excluded = ens.n_excluded
    report.total_information = full_avg * h
    # signed difference-form estimator: its sampling error stays O(1/sqrt(N))
    # even when the rate itself is 0, so a z-test against 0 is meaningful
    diff_rates = (ens.sq_tail - ens.est2_tail) / (2.0 * win)
    diff_avg = _fsum_mean(diff_rates, mask)
    diff_se = _fsum_se(diff_rates, mask, diff_avg)
    report.details["difference_form_rate"] = diff_avg
    report.details["difference_form_se"] = diff_se
    return report


def control_rate_monte_carlo(
    sys,
    grid: TimeGrid,
    n_paths: int,
    seeds: SeedSpec,
    workers: int = 1,
) -> Tuple[InfoReport, McEnsemble]:
    """Control-channel rate from realized squared estimation errors.

    Simulates the closed loop and runs the exact control-form filter on
    each path; the rate is the trailing-window average of
    ||u - u_hat||^2 / 2 across paths.
    """
    ens = _linear_mc_ensemble(sys, grid, seeds, n_paths, "control",
                              workers=workers)
    return _mc_report("monte_carlo", ens), ens


def filtering_rate_monte_carlo(
    sys,
    grid: TimeGrid,
    n_paths: int,
    seeds: SeedSpec,
    noise_scale: float = 1.0,
    workers: int = 1,
) -> Tuple[InfoReport, McEnsemble]:
    """Filtering-channel rate from realized output estimation errors."""
    ens = _linear_mc_ensemble(sys, grid, seeds, n_paths, "observation",
                              noise_scale=noise_scale, workers=workers)
    return _mc_report("monte_carlo", ens), ens


# ---------------------------------------------------------------------------
# nonlinear rates (scalar systems, grid or particle filter)
# ---------------------------------------------------------------------------

@dataclass
class NonlinearEnsemble:
    """Per-path integrals from a nonlinear simulate + filter run.

    err2 integrates (target - pi(target))^2, condvar integrates the
    conditional variance pi(target^2) - pi(target)^2; sq and est2 the
    squared target and squared estimate.  stability_ratio compares the
    trailing-window mean square of the state against the middle window.
    """

    grid: TimeGrid
    err2_full: np.ndarray
    err2_tail: np.ndarray
    condvar_full: np.ndarray
    condvar_tail: np.ndarray
    sq_full: np.ndarray
    sq_tail: np.ndarray
    est2_full: np.ndarray
    est2_tail: np.ndarray
    alive: np.ndarray
    boundary_flagged: np.ndarray
    profile_sq_mean: np.ndarray
    profile_sq_se: np.ndarray
    stability_ratio: float

    @property
    def n_paths(self) -> int:
        return self.alive.size

    @property
    def n_excluded(self) -> int:
        return int(np.count_nonzero(~self.alive))

    def check_exclusions(self):
        frac = self.n_excluded / max(1, self.n_paths)
        if frac > MAX_EXCLUDED_FRACTION:
            raise NumericalBreakdownError(
                f"{self.n_excluded}/{self.n_paths} paths diverged "
                f"({100 * frac:.2f}% > {100 * MAX_EXCLUDED_FRACTION:.0f}%)"
            )


def _simulate_nl_batch(sys, grid, seeds, n_paths, kind, chunk_steps=4096):
    """Batched Euler simulation of the scalar plant; returns channel + target."""
    dt = grid.dt
    sqdt = math.sqrt(dt)
    n_steps = grid.n_steps
    x = draw_x0_batch(seeds, range(n_paths), 1)[:, 0]
    w_str = BatchStreams(seeds, range(n_paths), 1, stream=1)
    if kind == "observation":
        v_str = BatchStreams(seeds, range(n_paths), 1, stream=2)
        amp = math.sqrt(sys.noise_scale)
        target = sys.z
    else:
        target = sys.u
    channel = np.empty((n_paths, n_steps))
    tgt_true = np.empty((n_paths, n_steps))
    x2sum_mid = 0.0
    x2sum_tail = 0.0
    n_mid = 0
    n_tail = 0
    alive = np.ones(n_paths, dtype=bool)
    tail0 = grid.tail_start()
    mid0 = n_steps // 4
    t = grid.t0
    k = 0
    while k < n_steps:
        steps = min(chunk_steps, n_steps - k)
        dw = w_str.normals(steps)[:, :, 0] * sqdt
        if kind == "observation":
            dv = v_str.normals(steps)[:, :, 0] * sqdt
        for j in range(steps):
            tv = np.asarray(target(t, x), dtype=float)
            tgt_true[:, k] = tv
            if kind == "control":
                dchan = tv * dt + dw[:, j]
                x = x + np.asarray(sys.f(t, x), dtype=float) * dt \
                    + np.asarray(sys.b(t, x), dtype=float) * dchan
            else:
                dchan = tv * dt + dv[:, j]
                x = x + np.asarray(sys.drift_closed(t, x), dtype=float) * dt \
                    + np.asarray(sys.b(t, x), dtype=float) * amp * dw[:, j]
            channel[:, k] = dchan
            bad = alive & (~np.isfinite(x) | (np.abs(x) > EXPLOSION_BOUND))
            if np.any(bad):
                alive = alive & ~bad
                x[~alive] = 0.0
            if mid0 <= k < tail0:
                x2sum_mid += float(np.sum(x[alive] ** 2))
                n_mid += int(np.count_nonzero(alive))
            elif k >= tail0:
                x2sum_tail += float(np.sum(x[alive] ** 2))
                n_tail += int(np.count_nonzero(alive))
            t += dt
            k += 1
    ratio = (x2sum_tail / max(n_tail, 1)) / max(x2sum_mid / max(n_mid, 1), 1e-300)
    return channel, tgt_true, alive, ratio


def _nonlinear_ensemble(sys, grid, seeds, n_paths, kind, filter_kind,
                        grid_filter_cfg=None) -> NonlinearEnsemble:
    if filter_kind not in ("kushner", "particle"):
        raise ConfigError(f"unknown filter {filter_kind!r}")
    channel, tgt_true, alive, ratio = _simulate_nl_batch(
        sys, grid, seeds, n_paths, kind
    )
    cfg = dict(n_cells=1024, prior_mean=0.0, prior_std=1.0, domain_halfwidth=8.0)
    if grid_filter_cfg:
        cfg.update(grid_filter_cfg)
    idx_alive = np.nonzero(alive)[0]
    dt = grid.dt
    n_steps = grid.n_steps
    tail0 = grid.tail_start()
    shape = (n_paths,)
    err2_f = np.zeros(shape); err2_t = np.zeros(shape)
    cv_f = np.zeros(shape); cv_t = np.zeros(shape)
    sq_f = np.zeros(shape); sq_t = np.zeros(shape)
    es_f = np.zeros(shape); es_t = np.zeros(shape)
    boundary = np.zeros(n_paths, dtype=bool)

    if filter_kind == "kushner":
        runs = _kushner_batch(
            sys, grid, channel[idx_alive], kind,
            n_cells=cfg["n_cells"], prior_mean=cfg["prior_mean"],
            prior_std=cfg["prior_std"], domain_halfwidth=cfg["domain_halfwidth"],
        )
    else:
        from .estimators import particle_filter_run
        from .sde import SamplePath
        runs = []
        for i in idx_alive:
            path = SamplePath(grid, kind, np.zeros((n_steps + 1, 1)),
                              np.zeros((n_steps, 1)), None,
                              channel[i][:, None], int(i), seeds.master_seed)
            runs.append(particle_filter_run(
                sys, path,
                n_particles=cfg.get("n_particles", 10_000),
                prior_mean=cfg["prior_mean"], prior_std=cfg["prior_std"],
            ))

    for row, i in enumerate(idx_alive):
        run = runs[row]
        pi1 = run.pi_target[:-1]
        pi2 = run.pi_target_sq[:-1]
        tv = tgt_true[i]
        err2 = (tv - pi1) ** 2
        cv = np.maximum(pi2 - pi1 ** 2, 0.0)
        err2_f[i] = float(np.sum(err2)) * dt
        err2_t[i] = float(np.sum(err2[tail0:])) * dt
        cv_f[i] = float(np.sum(cv)) * dt
        cv_t[i] = float(np.sum(cv[tail0:])) * dt
        sq_f[i] = float(np.sum(tv ** 2)) * dt
        sq_t[i] = float(np.sum(tv[tail0:] ** 2)) * dt
        es_f[i] = float(np.sum(pi1 ** 2)) * dt
        es_t[i] = float(np.sum(pi1[tail0:] ** 2)) * dt
        bmax = getattr(run, "boundary_mass_max", 0.0)
        if bmax > 1e-6:
            boundary[i] = True

    live_sq = tgt_true[idx_alive] ** 2
    prof_mean = live_sq.mean(axis=0)
    prof_se = live_sq.std(axis=0, ddof=1) / math.sqrt(max(len(idx_alive), 2)) \
        if len(idx_alive) > 1 else np.zeros(n_steps)
    return NonlinearEnsemble(
        grid=grid,
        err2_full=err2_f, err2_tail=err2_t,
        condvar_full=cv_f, condvar_tail=cv_t,
        sq_full=sq_f, sq_tail=sq_t,
        est2_full=es_f, est2_tail=es_t,
        alive=alive, boundary_flagged=boundary,
        profile_sq_mean=prof_mean, profile_sq_se=prof_se,
        stability_ratio=ratio,
    )


def _nl_report(ens: NonlinearEnsemble, filter_kind: str) -> Tuple[InfoReport, dict]:
    ens.check_exclusions()
    grid = ens.grid
    h = grid.horizon
    win = h - grid.tail_start() * grid.dt
    mask = ens.alive
    tail_direct = ens.err2_tail / (2.0 * win)
    full_direct = ens.err2_full / (2.0 * h)
    tail_diff = (ens.sq_tail - ens.est2_tail) / (2.0 * win)
    tail_cv = ens.condvar_tail / (2.0 * win)
    avg_direct = _fsum_mean(tail_direct, mask)
    avg_full = _fsum_mean(full_direct, mask)
    route = "kushner" if filter_kind == "kushner" else "monte_carlo"
    report = _report_from_windows(route, avg_full, avg_direct, grid)
    report.mc_std_error = _fsum_se(tail_direct, mask, avg_direct)
    report.n_paths = ens.n_paths
    report.n_excluded = ens.n_excluded
    report.details["filter"] = filter_kind
    report.details["stability_ratio"] = ens.stability_ratio
    report.details["n_boundary_flagged"] = int(np.count_nonzero(ens.boundary_flagged))

    def paired(a, b):
        d = a - b
        m = _fsum_mean(d, mask)
        s = _fsum_se(d, mask, m)
        return m, s

    diff_gap, diff_se = paired(tail_direct, tail_diff)
    cv_gap, cv_se = paired(tail_direct, tail_cv)
    consistency = {
        "difference_form": (_fsum_mean(tail_diff, mask), diff_gap, diff_se),
        "conditional_variance_form": (_fsum_mean(tail_cv, mask), cv_gap, cv_se),
    }
    for name, (_val, gap, se) in consistency.items():
        if not math.isnan(se) and abs(gap) > MC_SIGMAS * max(se, 1e-15):
            raise NotConvergedError(
                f"{name} disagrees with the realized squared error: "
                f"gap {gap:.3e} exceeds {MC_SIGMAS:.0f} x {se:.3e}",
                diagnostic=abs(gap) / max(se, 1e-300),
            )
    return report, consistency


def nonlinear_control_rate(
    sys: NonlinearScalarSystem,
    grid: TimeGrid,
    n_paths: int,
    seeds: SeedSpec,
    filter_kind: str = "kushner",
    grid_filter_cfg: Optional[dict] = None,
) -> Tuple[InfoReport, NonlinearEnsemble, dict]:
    """Nonlinear control-channel rate with internal consistency gaps.

    Returns the direct-form report (realized squared error), the raw
    ensemble, and for each alternative form (difference of squared
    norms; conditional variance) its value, its gap to the direct form,
    and the paired standard error of that gap.  Raises NotConvergedError
    when either gap exceeds 4 standard errors, which indicates the
    filter is not tracking the conditional law.
    """
    if sys.u is None:
        raise ConfigError("nonlinear control rate needs a control law u")
    ens = _nonlinear_ensemble(sys, grid, seeds, n_paths, "control",
                              filter_kind, grid_filter_cfg)
    report, consistency = _nl_report(ens, filter_kind)
    return report, ens, consistency


def nonlinear_filtering_rate(
    sys: NonlinearScalarSystem,
    grid: TimeGrid,
    n_paths: int,
    seeds: SeedSpec,
    filter_kind: str = "kushner",
    grid_filter_cfg: Optional[dict] = None,
) -> Tuple[InfoReport, NonlinearEnsemble, dict]:
    """Nonlinear filtering-channel rate via the conditional output variance."""
    if sys.z is None:
        raise ConfigError("nonlinear filtering rate needs an output map z")
    ens = _nonlinear_ensemble(sys, grid, seeds, n_paths, "observation",
                              filter_kind, grid_filter_cfg)
    report, consistency = _nl_report(ens, filter_kind)
    return report, ens, consistency


# ---------------------------------------------------------------------------
# capacity sandwich
# ---------------------------------------------------------------------------

def capacity_check(
    rate_report: InfoReport,
    power_profile,
    ensemble,
    mc_sigmas: float = MC_SIGMAS,
) -> CapacityBounds:
    """Check the capacity sandwich against an ensemble's realized power.

    power_profile is the admissible power budget: a scalar or a callable
    of time.  The empirical mean squared input must not exceed the
    budget anywhere on the grid beyond Monte Carlo slack; the capacity
    (half the average budget) must dominate rate + marginal divergence,
    and the conditional divergence must equal that sum within combined
    sampling error.
    """
    grid = ensemble.grid
    n_steps = grid.n_steps
    times = grid.t0 + grid.dt * np.arange(n_steps)
    if callable(power_profile):
        rho = np.asarray([float(power_profile(t)) for t in times])
    else:
        rho = np.full(n_steps, float(power_profile))
    slack = mc_sigmas * ensemble.profile_sq_se
    over = ensemble.profile_sq_mean > rho + slack + 1e-12
    if np.any(over):
        raise PowerConstraintViolatedError(
            times[over], float(np.max(ensemble.profile_sq_mean - rho))
        )
    tail0 = grid.tail_start()
    win = grid.horizon - tail0 * grid.dt
    capacity = float(np.sum(rho[tail0:])) * grid.dt / (2.0 * win)
    mask = ensemble.alive
    cond = ensemble.sq_tail / (2.0 * win)
    marg = ensemble.est2_tail / (2.0 * win)
    err = ensemble.err2_tail / (2.0 * win)
    d_cond = _fsum_mean(cond, mask)
    d_marg = _fsum_mean(marg, mask)
    se_cond = _fsum_se(cond, mask, d_cond)
    se_marg = _fsum_se(marg, mask, d_marg)
    rate = rate_report.rate
    se_rate = rate_report.mc_std_error or 0.0
    tol_sum = mc_sigmas * math.sqrt(se_cond ** 2 + se_marg ** 2 + se_rate ** 2)
    # the decomposition identity is checked on paired per-path differences:
    # cond - marg - err integrates 2*estimate*(target - estimate), whose mean
    # vanishes by orthogonality however large cond and marg individually are
    ident = cond - marg - err
    ident_mean = _fsum_mean(ident, mask)
    ident_se = _fsum_se(ident, mask, ident_mean)
    err_mean = _fsum_mean(err, mask)
    err_se = _fsum_se(err, mask, err_mean)
    if abs(err_mean - rate) <= 1e-12 * max(abs(rate), 1.0):
        ident_tol = mc_sigmas * ident_se      # rate came from this ensemble
    else:
        ident_tol = mc_sigmas * (ident_se + math.hypot(err_se, se_rate))
    verdicts = [
        InequalityCheck("capacity >= conditional divergence",
                        capacity, d_cond, mc_sigmas * se_cond),
        InequalityCheck("capacity >= rate + marginal divergence",
                        capacity, rate + d_marg, tol_sum),
        InequalityCheck("conditional divergence == rate + marginal divergence",
                        d_cond, rate + d_marg, ident_tol, equality=True),
    ]
    return CapacityBounds(
        C_f=capacity,
        rate=rate,
        divergence_rate_marginal=d_marg,
        divergence_rate_conditional=d_cond,
        verdicts=verdicts,
    )


# ---------------------------------------------------------------------------
# time-varying sensitivity integral and bound chains
# ---------------------------------------------------------------------------

@dataclass
class BodeReport:
    """Two routes to the sensitivity growth average plus diagnostics."""

    trace_route: float
    kernel_route: float
    orthogonality_max: float
    loop_stable: Optional[bool]
    spectral_lower: float
    spectral_upper: float

    @property
    def routes_gap(self) -> float:
        return abs(self.trace_route - self.kernel_route)


def dichotomy_interval_bounds(sys, grid: TimeGrid, samples: int = 257):
    """Outer bounds on the antistable growth average.

    For time-varying systems the bounds come from the extreme
    eigenvalues of the symmetric part of A_u over sampled times, scaled
    by the block size; for constant systems both bounds collapse to the
    exact sum of antistable eigenvalue real parts.
    """
    if isinstance(sys, LtiSystem):
        s = unstable_pole_sum(sys).unstable_sum
        return s, s
    lo = math.inf
    hi = -math.inf
    for t in np.linspace(grid.t0, grid.t0 + grid.horizon, samples):
        a_u = sys.antistable_block(float(t))
        sym = 0.5 * (a_u + a_u.T)
        ev = np.linalg.eigvalsh(sym)
        lo = min(lo, float(ev[0]))
        hi = max(hi, float(ev[-1]))
    n_u = sys.n_antistable
    return n_u * lo, n_u * hi


def _trace_route(sys, grid: TimeGrid) -> float:
    if isinstance(sys, LtiSystem):
        return unstable_pole_sum(sys).unstable_sum
    return antistable_trace_integral(sys, grid.horizon, t0=grid.t0)


def ltv_bode_integral(sys, grid: TimeGrid, check_stability: bool = True) -> BodeReport:
    """Sensitivity growth average by the trace route and the kernel route.

    The kernel route averages tr[(B'X - C)B]/2 with X from the backward
    flow, over the leading half-window only: near the endpoint the zero
    terminal condition pulls X away from its stabilizing values, and the
    long-run average is what the routes share.  Requires C(t)B(t) = 0 on
    the grid; loop stability of A - BC is diagnosed, not enforced.
    """
    if isinstance(sys, LtiSystem):
        a_fn = lambda t: sys.A
        b_fn = lambda t: sys.B
        c_fn = None if sys.C is None else (lambda t: sys.C)
    else:
        a_fn, b_fn, c_fn = sys.A, sys.B, sys.C
    if c_fn is None:
        raise ConfigError("sensitivity integral needs an output map C")
    times = grid.times
    ortho = 0.0
    t_worst = times[0]
    for t in times[:: max(1, len(times) // 64)]:
        cb = np.asarray(c_fn(float(t))) @ np.asarray(b_fn(float(t)))
        mag = float(np.max(np.abs(cb)))
        if mag > ortho:
            ortho = mag
            t_worst = float(t)
    if ortho > 1e-10:
        raise AssumptionViolatedError(
            f"C(t)B(t) != 0 (max magnitude {ortho:.3e} at t = {t_worst:.3f}); "
            "the kernel route requires the orthogonality condition"
        )
    trace_route = _trace_route(sys, grid)
    x_path = control_rde_X(
        sys.A if isinstance(sys, LtvSystem) else sys.A,
        sys.B if isinstance(sys, LtvSystem) else sys.B,
        grid,
    )
    half = grid.tail_start()
    vals = np.empty(half)
    t = grid.t0
    for k in range(half):
        bt = np.asarray(b_fn(t), dtype=float)
        ct = np.asarray(c_fn(t), dtype=float)
        vals[k] = 0.5 * float(np.trace((bt.T @ x_path[k] - ct) @ bt))
        t += grid.dt
    kernel_route = float(np.mean(vals))
    loop_stable = None
    if check_stability:
        def a_loop(t):
            return np.asarray(a_fn(t), dtype=float) - \
                np.asarray(b_fn(t), dtype=float) @ np.asarray(c_fn(t), dtype=float)

        class _Loop:
            A = staticmethod(a_loop)
            n = sys.n
        try:
            est = lyapunov_exponents(_Loop, grid)
            loop_stable = bool(est.exponents[0] < 0)
        except Exception:
            loop_stable = None
    lo, hi = dichotomy_interval_bounds(sys, grid)
    return BodeReport(
        trace_route=trace_route,
        kernel_route=kernel_route,
        orthogonality_max=ortho,
        loop_stable=loop_stable,
        spectral_lower=lo,
        spectral_upper=hi,
    )


@dataclass
class ChainReport:
    """Ordered inequality chain with per-link margins."""

    links: List[InequalityCheck]

    @property
    def all_passed(self) -> bool:
        return all(c.passed for c in self.links)


def ltv_rate_bounds_check(
    sys: LtvSystem,
    grid: TimeGrid,
    n_paths: int = 0,
    seeds: Optional[SeedSpec] = None,
    workers: int = 1,
    mc_sigmas: float = MC_SIGMAS,
) -> Tuple[ChainReport, InfoReport]:
    """Verify rate >= average antistable trace >= spectral lower bound.

    Deterministic links carry the explicit finite-horizon transient
    margin (the trailing log-det increment), since the chain only binds
    in the long-run limit.  With n_paths > 0 a Monte Carlo rate is
    prepended with its own sampling tolerance, and a matching upper
    bound from the spectral interval closes the chain.
    """
    report, sol = control_rate_riccati(sys, grid)
    mid = grid.tail_start()
    win = grid.horizon - mid * grid.dt
    avg_tail = antistable_trace_integral(sys, win, t0=grid.t0 + mid * grid.dt)
    transient = 0.0
    if sol is not None:
        transient = abs(sol.logdet(-1) - sol.logdet(mid)) / (2.0 * win)
    lo, hi = dichotomy_interval_bounds(sys, grid)
    links = []
    if n_paths > 0:
        if seeds is None:
            raise ConfigError("Monte Carlo link needs seeds")
        mc_rep, _ = control_rate_monte_carlo(sys, grid, n_paths, seeds,
                                             workers=workers)
        tol = mc_sigmas * (mc_rep.mc_std_error or 0.0)
        links.append(InequalityCheck(
            "monte carlo rate >= riccati rate", mc_rep.rate, report.rate,
            tol + transient + 1e-9,
        ))
        report.details["mc_rate"] = mc_rep.rate
        report.details["mc_std_error"] = mc_rep.mc_std_error
    links.append(InequalityCheck(
        "rate >= antistable trace average", report.rate, avg_tail,
        transient + 1e-9,
    ))
    links.append(InequalityCheck(
        "antistable trace average >= spectral lower bound", avg_tail, lo, 1e-6,
    ))
    links.append(InequalityCheck(
        "spectral upper bound >= antistable trace average", hi, avg_tail, 1e-6,
    ))
    return ChainReport(links=links), report
