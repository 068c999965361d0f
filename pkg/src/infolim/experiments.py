"""Named desk-scale experiment registry.

Each experiment builds its systems, computes the information rate by
every route that applies, and packages the numbers as metrics,
inequality verdicts, time series, and figure descriptions for the
report writer.  Every quantity a verdict depends on is also exposed as
a metric so the CSV report carries the complete computation.

Experiments accept parameter overrides (CLI flags or a JSON config);
unknown parameter names are rejected so typos surface as config errors
rather than silently running the defaults.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import ConfigError, NumericalBreakdownError
from .grids import TimeGrid
from .statespace import (
    LtiSystem,
    LtvSystem,
    NonlinearScalarSystem,
    antistable_trace_integral,
    system_from_config,
)
from .sde import SeedSpec, simulate_control_loop, simulate_observation
from .riccati import control_rde_X, integrate_rde, solve_are, vanishing_noise_expansion
from .estimators import kushner_grid_run
from .inforate import (
    MC_SIGMAS,
    InequalityCheck,
    capacity_check,
    control_rate_monte_carlo,
    control_rate_riccati,
    control_rate_spectral,
    dichotomy_interval_bounds,
    filtering_rate,
    filtering_rate_ltv_reduced,
    filtering_rate_monte_carlo,
    filtering_rate_riccati,
    ltv_bode_integral,
    ltv_rate_bounds_check,
    nonlinear_control_rate,
    nonlinear_filtering_rate,
)

__all__ = [
    "DEFAULT_MASTER_SEED",
    "SeriesSpec",
    "FigureSpec",
    "ExperimentResult",
    "ExperimentSpec",
    "REGISTRY",
    "companion_from_poles",
    "minimum_energy_gain",
    "get_experiment",
    "list_experiments",
    "run_experiment",
]

DEFAULT_MASTER_SEED = 20260814

#: rows kept when a dense trajectory is written out as a series
SERIES_MAX_ROWS = 2001


@dataclass
class SeriesSpec:
    """One delimited series file: named columns of equal length."""

    name: str
    columns: Dict[str, np.ndarray]

    def __post_init__(self):
        lengths = {len(v) for v in self.columns.values()}
        if len(lengths) > 1:
            raise ConfigError(f"series {self.name!r}: ragged columns {lengths}")


@dataclass
class FigureSpec:
    """Declarative figure: lines are (series, x column, y column, label)."""

    name: str
    title: str
    xlabel: str
    ylabel: str
    lines: List[Tuple[str, str, str, str]]
    logx: bool = False
    logy: bool = False


@dataclass
class ExperimentResult:
    """Everything one experiment produced, ready for the report writer."""

    name: str
    params: Dict[str, object]
    metrics: Dict[str, float]
    verdicts: List[InequalityCheck]
    series: List[SeriesSpec] = field(default_factory=list)
    figures: List[FigureSpec] = field(default_factory=list)
    path_dump: Optional[Callable[[int], SeriesSpec]] = field(
        default=None, repr=False, compare=False
    )
    runtime_seconds: float = 0.0

    @property
    def passed(self) -> bool:
        return all(v.passed for v in self.verdicts)


@dataclass
class ExperimentSpec:
    name: str
    description: str
    defaults: Dict[str, object]
    runner: Callable[[dict], ExperimentResult]
    supports_system_override: bool = False


# ---------------------------------------------------------------------------
# shared helpers
# ---------------------------------------------------------------------------

def companion_from_poles(poles: Sequence[float]) -> Tuple[np.ndarray, np.ndarray]:
    """Controllable companion realization with the given open-loop poles."""
    poles = [float(p) for p in poles]
    if not poles:
        raise ConfigError("need at least one pole")
    n = len(poles)
    if n == 1:
        return np.array([[poles[0]]]), np.array([[1.0]])
    coeffs = np.poly(poles)          # [1, c_{n-1}, ..., c_0]
    a = np.zeros((n, n))
    a[:-1, 1:] = np.eye(n - 1)
    a[-1, :] = -coeffs[:0:-1]
    b = np.zeros((n, 1))
    b[-1, 0] = 1.0
    return a, b


def minimum_energy_gain(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Stabilizing feedback K = -B'X that mirrors the unstable poles.

    X is the steady solution of the noise-free control equation; the
    closed loop A + BK keeps the stable poles and reflects the unstable
    ones across the imaginary axis.
    """
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    n = a.shape[0]
    x = solve_are(a.T, b.T, np.zeros((n, n))).P
    k = -b.T @ x
    closed = np.linalg.eigvals(a + b @ k)
    if np.max(closed.real) >= -1e-9:
        raise NumericalBreakdownError(
            f"stabilizing gain failed: closed-loop poles {closed}"
        )
    return k


def _grid_from_params(p: dict) -> TimeGrid:
    h = float(p["horizon"])
    if p.get("dt") is not None:
        return TimeGrid(horizon=h, dt=float(p["dt"]))
    return TimeGrid.of_steps(h, int(p["n_steps"]))


def _seeds(p: dict) -> SeedSpec:
    return SeedSpec(int(p["master_seed"]))


def _stride(n: int, limit: int = SERIES_MAX_ROWS) -> int:
    return max(1, int(math.ceil(n / limit)))


def _eps_tag(e: float) -> str:
    return format(float(e), "g")


def _check_equal(name: str, lhs: float, rhs: float, tol: float) -> InequalityCheck:
    return InequalityCheck(name, float(lhs), float(rhs), float(tol), equality=True)


def _check_ge(name: str, lhs: float, rhs: float, tol: float = 0.0) -> InequalityCheck:
    return InequalityCheck(name, float(lhs), float(rhs), float(tol))


def _path_dumper(sys, grid: TimeGrid, seeds: SeedSpec, kind: str,
                 noise_scale: Optional[float] = None):
    """Dump closure: re-simulates path i and tabulates t, x, e/y, dw, dv."""

    def dump(path_index: int) -> SeriesSpec:
        if kind == "control":
            path = simulate_control_loop(sys, grid, seeds, path_index)
        else:
            path = simulate_observation(sys, grid, seeds, path_index,
                                         noise_scale=noise_scale)
        t = grid.times[:-1]
        cols: Dict[str, np.ndarray] = {"t": t}
        n = path.states.shape[1]
        for j in range(n):
            cols[f"x_{j + 1}"] = path.states[:-1, j]
        chan_name = "e" if kind == "control" else "y"
        signal = np.cumsum(path.channel, axis=0)
        for j in range(path.channel.shape[1]):
            suffix = "" if path.channel.shape[1] == 1 else f"_{j + 1}"
            # signal at step starts: zero before the first increment
            cols[f"{chan_name}{suffix}"] = np.concatenate(([0.0], signal[:-1, j]))
        for j in range(path.dw.shape[1]):
            suffix = "" if path.dw.shape[1] == 1 else f"_{j + 1}"
            cols[f"dw{suffix}"] = path.dw[:, j]
        if path.dv is not None:
            for j in range(path.dv.shape[1]):
                suffix = "" if path.dv.shape[1] == 1 else f"_{j + 1}"
                cols[f"dv{suffix}"] = path.dv[:, j]
        return SeriesSpec(name=f"path_{path_index}", columns=cols)

    return dump


def _scalar_error_covariance(alpha: float, p0: float, t: np.ndarray) -> np.ndarray:
    """Closed-form solution of dp/dt = 2*alpha*p - p^2 from p(0) = p0."""
    if alpha == 0.0:
        return p0 / (1.0 + p0 * t)
    if alpha > 0:
        # divide through by exp(2 alpha t) so nothing overflows
        return 2.0 * alpha * p0 / (p0 - (p0 - 2.0 * alpha) * np.exp(-2.0 * alpha * t))
    return 2.0 * alpha * p0 * np.exp(2.0 * alpha * t) / (
        p0 * np.exp(2.0 * alpha * t) - p0 + 2.0 * alpha
    )


def _tanh_loop(alpha: float, saturation: float, slope: float) -> NonlinearScalarSystem:
    """Scalar linear plant under saturated negative feedback."""
    return NonlinearScalarSystem(
        f=lambda t, x: alpha * x,
        b=lambda t, x: np.ones_like(np.asarray(x, dtype=float)),
        u=lambda t, e: -saturation * np.tanh(slope * e),
    )


def _consistency_verdicts(consistency: dict, sigmas: float = MC_SIGMAS
                          ) -> List[InequalityCheck]:
    out = []
    labels = {
        "difference_form": "difference of squared norms agrees with realized error",
        "conditional_variance_form": "conditional variance agrees with realized error",
    }
    for key, (_value, gap, se) in consistency.items():
        out.append(_check_equal(labels[key], gap, 0.0, sigmas * se))
    return out


def _consistency_metrics(metrics: dict, consistency: dict) -> None:
    for key, (value, gap, se) in consistency.items():
        short = "difference" if key == "difference_form" else "condvar"
        metrics[f"{short}_form_rate"] = value
        metrics[f"{short}_form_gap"] = gap
        metrics[f"{short}_form_se"] = se


def _tracking_series(sys: NonlinearScalarSystem, grid: TimeGrid, seeds: SeedSpec,
                     kind: str, n_cells: int, domain_halfwidth: float = 8.0):
    """Re-run path 0 through the grid filter for a plot of the tracking."""
    if kind == "control":
        path = simulate_control_loop(sys, grid, seeds, 0)
    else:
        path = simulate_observation(sys, grid, seeds, 0)
    run = kushner_grid_run(sys, path, n_cells=n_cells,
                           domain_halfwidth=domain_halfwidth)
    s = _stride(grid.n_steps + 1)
    cols = {
        "t": grid.times[::s],
        "state": path.states[::s, 0],
        "state_estimate": run.mean[::s],
        "posterior_std": np.sqrt(np.maximum(run.var, 0.0))[::s],
    }
    return SeriesSpec(name="sample_path", columns=cols), run


# ---------------------------------------------------------------------------
# experiment: appendix_a
# ---------------------------------------------------------------------------

def _run_appendix_a(p: dict) -> ExperimentResult:
    """Scalar loop whose error covariance has a closed form."""
    alpha = float(p["alpha"])
    k = float(p["k"])
    p0 = float(p["p0"])
    if k == 0.0:
        raise ConfigError("appendix_a needs a nonzero feedback gain k")
    seeds = _seeds(p)
    metrics: Dict[str, float] = {}
    verdicts: List[InequalityCheck] = []
    series: List[SeriesSpec] = []
    figures: List[FigureSpec] = []

    # pointwise covariance check on a fine grid; the channel-input error
    # covariance is k^2 times the state-estimate covariance
    rde_grid = TimeGrid(horizon=float(p["rde_horizon"]), dt=float(p["rde_dt"]))
    sol = integrate_rde(
        np.array([[alpha]]), np.array([[-k]]), np.zeros((1, 1)),
        np.array([[p0 / k ** 2]]), rde_grid,
    )
    p_rde = k ** 2 * sol.P[:, 0, 0]
    t_rde = rde_grid.times
    p_exact = _scalar_error_covariance(alpha, p0, t_rde)
    max_err = float(np.max(np.abs(p_rde - p_exact)))
    metrics["covariance_max_abs_error"] = max_err
    metrics["covariance_final"] = float(p_rde[-1])
    metrics["covariance_limit"] = 2.0 * alpha if alpha > 0 else 0.0
    verdicts.append(_check_equal(
        "integrated error covariance matches the closed form", max_err, 0.0, 1e-6))
    s = _stride(t_rde.size)
    series.append(SeriesSpec("error_covariance", {
        "t": t_rde[::s], "integrated": p_rde[::s], "closed_form": p_exact[::s],
    }))
    figures.append(FigureSpec(
        "error_covariance", "Estimation error covariance",
        "t", "p(t)",
        [("error_covariance", "t", "integrated", "integrated"),
         ("error_covariance", "t", "closed_form", "closed form")],
    ))

    # deterministic and Monte Carlo rates on the long horizon
    grid = _grid_from_params(p)
    sys = LtiSystem(A=[[alpha]], K=[[-k]])
    spectral = control_rate_spectral(sys).rate
    rep, rate_sol = control_rate_riccati(sys, grid)
    metrics["rate_spectral"] = spectral
    metrics["rate_riccati"] = rep.rate
    metrics["rate_tail_deviation"] = rep.tail_deviation
    verdicts.append(_check_equal(
        "deterministic rate equals the open-loop instability",
        rep.rate, spectral, 1e-4))
    if rate_sol is not None:
        su = _stride(grid.n_steps + 1)
        idx = np.arange(0, grid.n_steps + 1, su)
        idx = idx[idx > 0]
        logdets = np.log(rate_sol.P[idx, 0, 0])
        t_idx = grid.t0 + idx * grid.dt
        cum_rate = alpha - (logdets - math.log(rate_sol.P[0, 0, 0])) / (2.0 * t_idx)
        series.append(SeriesSpec("rate_convergence", {
            "t": t_idx,
            "cumulative_rate": cum_rate,
            "limit": np.full(t_idx.size, spectral),
        }))
        figures.append(FigureSpec(
            "rate_convergence", "Information rate vs horizon",
            "horizon", "rate",
            [("rate_convergence", "t", "cumulative_rate", "cumulative"),
             ("rate_convergence", "t", "limit", "spectral limit")],
        ))

    n_paths = int(p["n_paths"])
    mc_rep, _ens = control_rate_monte_carlo(sys, grid, n_paths, seeds,
                                            workers=int(p["workers"]))
    metrics["rate_monte_carlo"] = mc_rep.rate
    metrics["rate_mc_std_error"] = mc_rep.mc_std_error or 0.0
    metrics["mc_n_excluded"] = float(mc_rep.n_excluded)
    verdicts.append(_check_equal(
        "monte carlo rate within five percent of the instability",
        mc_rep.rate, spectral, 0.05 * max(spectral, 1e-9)))

    # a stable plant carries no initial-state information: test the signed
    # difference form, whose sampling error stays O(1/sqrt(N)) at rate zero
    stable_alpha = float(p["stable_alpha"])
    sys_stable = LtiSystem(A=[[stable_alpha]], K=[[-k]])
    st_rep, _ = control_rate_monte_carlo(sys_stable, grid, n_paths, seeds,
                                         workers=int(p["workers"]))
    diff = st_rep.details["difference_form_rate"]
    diff_se = st_rep.details["difference_form_se"]
    metrics["stable_rate_error_form"] = st_rep.rate
    metrics["stable_rate_difference_form"] = diff
    metrics["stable_rate_difference_se"] = diff_se
    verdicts.append(_check_equal(
        "stable plant rate consistent with zero", diff, 0.0, 2.0 * diff_se))

    return ExperimentResult(
        name="appendix_a", params=p, metrics=metrics, verdicts=verdicts,
        series=series, figures=figures,
        path_dump=_path_dumper(sys, grid, seeds, "control"),
    )


# ---------------------------------------------------------------------------
# experiment: lti_prop36
# ---------------------------------------------------------------------------

def _run_lti_prop36(p: dict) -> ExperimentResult:
    """Rate equals the unstable pole sum across three stabilized loops."""
    pole_sets = [list(map(float, s)) for s in p["pole_sets"]]
    if not pole_sets:
        raise ConfigError("lti_prop36 needs at least one pole set")
    grid = _grid_from_params(p)
    seeds = _seeds(p)
    n_paths = int(p["n_paths"])
    workers = int(p["workers"])
    metrics: Dict[str, float] = {}
    verdicts: List[InequalityCheck] = []
    rows = {"set": [], "pole_sum": [], "rate_riccati": [], "rate_monte_carlo": [],
            "mc_std_error": []}
    first_sys = None
    for i, poles in enumerate(pole_sets, start=1):
        a, b = companion_from_poles(poles)
        k = minimum_energy_gain(a, b)
        sys = LtiSystem(A=a, B=b, K=k)
        if first_sys is None:
            first_sys = sys
        target = control_rate_spectral(sys).rate
        rep, _ = control_rate_riccati(sys, grid)
        mc_rep, _ = control_rate_monte_carlo(sys, grid, n_paths, seeds,
                                             workers=workers)
        se = mc_rep.mc_std_error or 0.0
        metrics[f"set{i}_pole_sum"] = target
        metrics[f"set{i}_rate_riccati"] = rep.rate
        metrics[f"set{i}_rate_monte_carlo"] = mc_rep.rate
        metrics[f"set{i}_mc_std_error"] = se
        metrics[f"set{i}_tail_deviation"] = rep.tail_deviation
        verdicts.append(_check_equal(
            f"set {i}: deterministic rate equals the unstable pole sum",
            rep.rate, target, 1e-4))
        verdicts.append(_check_equal(
            f"set {i}: monte carlo rate agrees with the deterministic rate",
            mc_rep.rate, rep.rate, MC_SIGMAS * se))
        rows["set"].append(float(i))
        rows["pole_sum"].append(target)
        rows["rate_riccati"].append(rep.rate)
        rows["rate_monte_carlo"].append(mc_rep.rate)
        rows["mc_std_error"].append(se)
    series = [SeriesSpec("rates", {k: np.asarray(v) for k, v in rows.items()})]
    figures = [FigureSpec(
        "pole_sum_vs_rate", "Rate against unstable pole sum",
        "unstable pole sum", "rate",
        [("rates", "pole_sum", "rate_riccati", "deterministic"),
         ("rates", "pole_sum", "rate_monte_carlo", "monte carlo"),
         ("rates", "pole_sum", "pole_sum", "identity")],
    )]
    return ExperimentResult(
        name="lti_prop36", params=p, metrics=metrics, verdicts=verdicts,
        series=series, figures=figures,
        path_dump=_path_dumper(first_sys, grid, seeds, "control"),
    )


# ---------------------------------------------------------------------------
# experiment: lti_lemma37_nonlinear_k
# ---------------------------------------------------------------------------

def _run_lti_lemma37(p: dict) -> ExperimentResult:
    """Saturated feedback still pays at least the open-loop instability."""
    alpha = float(p["alpha"])
    sat = float(p["saturation"])
    slope = float(p["slope"])
    grid = _grid_from_params(p)
    seeds = _seeds(p)
    n_cells = int(p["n_cells"])
    sys = _tanh_loop(alpha, sat, slope)
    rep, ens, consistency = nonlinear_control_rate(
        sys, grid, int(p["n_paths"]), seeds,
        grid_filter_cfg={"n_cells": n_cells},
    )
    se = rep.mc_std_error or 0.0
    metrics: Dict[str, float] = {
        "rate": rep.rate,
        "mc_std_error": se,
        "open_loop_instability": max(alpha, 0.0),
        "tail_deviation": rep.tail_deviation,
        "stability_ratio": rep.details["stability_ratio"],
        "n_excluded": float(rep.n_excluded),
    }
    _consistency_metrics(metrics, consistency)
    verdicts = [_check_ge(
        "rate not below the open-loop instability",
        rep.rate, max(alpha, 0.0), MC_SIGMAS * se,
    )]
    verdicts += _consistency_verdicts(consistency)
    track, _run = _tracking_series(sys, grid, seeds, "control", n_cells)
    figures = [FigureSpec(
        "tracking", "Grid filter tracking under saturated feedback",
        "t", "state",
        [("sample_path", "t", "state", "state"),
         ("sample_path", "t", "state_estimate", "conditional mean")],
    )]
    return ExperimentResult(
        name="lti_lemma37_nonlinear_k", params=p, metrics=metrics,
        verdicts=verdicts, series=[track], figures=figures,
        path_dump=_path_dumper(sys, grid, seeds, "control"),
    )


# ---------------------------------------------------------------------------
# experiments: ltv_prop311 / ltv_cor312
# ---------------------------------------------------------------------------

def _sinusoidal_gain(p: dict) -> Callable[[float], float]:
    mean = float(p["mean"])
    amp = float(p["amplitude"])
    freq = float(p["frequency"])
    return lambda t: mean + amp * math.sin(freq * t)


def _run_ltv_prop311(p: dict) -> ExperimentResult:
    """Periodic antistable mode: rate equals the mean gain; bound chain."""
    gain = _sinusoidal_gain(p)
    stable_gain = float(p["stable_gain"])

    def a_fn(t):
        return np.diag([stable_gain, gain(t)])

    def k_fn(t):
        # keeps both closed-loop modes at -1
        return np.diag([0.0, -(gain(t) + 1.0)])

    sys = LtvSystem(A=a_fn, n=2, n_stable=1, K=k_fn)
    grid = _grid_from_params(p)
    seeds = _seeds(p)
    chain, rep = ltv_rate_bounds_check(
        sys, grid, n_paths=int(p["n_paths"]), seeds=seeds,
        workers=int(p["workers"]),
    )
    mid = grid.tail_start()
    win = grid.horizon - mid * grid.dt
    trace_avg = antistable_trace_integral(sys, win, t0=grid.t0 + mid * grid.dt)
    lo, hi = dichotomy_interval_bounds(sys, grid)
    metrics: Dict[str, float] = {
        "rate_riccati": rep.rate,
        "tail_deviation": rep.tail_deviation,
        "trace_average": trace_avg,
        "spectral_lower": lo,
        "spectral_upper": hi,
    }
    if "mc_rate" in rep.details:
        metrics["rate_monte_carlo"] = rep.details["mc_rate"]
        metrics["mc_std_error"] = rep.details["mc_std_error"] or 0.0
    verdicts = [_check_equal(
        "rate matches the antistable growth average",
        rep.rate, trace_avg, 1e-3)]
    verdicts += chain.links
    s = _stride(grid.n_steps + 1)
    t_s = grid.times[::s]
    gains = np.array([gain(float(t)) for t in t_s])
    running = np.concatenate((
        [gains[0]],
        np.cumsum(gains)[1:] / np.arange(2, gains.size + 1),
    ))
    series = [SeriesSpec("antistable_gain", {
        "t": t_s, "gain": gains, "running_average": running,
    })]
    figures = [FigureSpec(
        "gain_average", "Periodic gain and its running average",
        "t", "gain",
        [("antistable_gain", "t", "gain", "a(t)"),
         ("antistable_gain", "t", "running_average", "running average")],
    )]
    return ExperimentResult(
        name="ltv_prop311", params=p, metrics=metrics, verdicts=verdicts,
        series=series, figures=figures,
        path_dump=_path_dumper(sys, grid, seeds, "control"),
    )


def _run_ltv_cor312(p: dict) -> ExperimentResult:
    """Scalar periodic plant under saturated feedback: interval bounds."""
    gain = _sinusoidal_gain(p)
    sat = float(p["saturation"])
    slope = float(p["slope"])
    sys = NonlinearScalarSystem(
        f=lambda t, x: gain(t) * x,
        b=lambda t, x: np.ones_like(np.asarray(x, dtype=float)),
        u=lambda t, e: -sat * np.tanh(slope * e),
    )
    lin = LtvSystem(A=lambda t: np.array([[gain(t)]]), n=1, n_stable=0)
    grid = _grid_from_params(p)
    seeds = _seeds(p)
    n_cells = int(p["n_cells"])
    halfwidth = float(p["domain_halfwidth"])
    rep, ens, consistency = nonlinear_control_rate(
        sys, grid, int(p["n_paths"]), seeds,
        grid_filter_cfg={"n_cells": n_cells, "domain_halfwidth": halfwidth},
    )
    se = rep.mc_std_error or 0.0
    lo, hi = dichotomy_interval_bounds(lin, grid)
    mid = grid.tail_start()
    win = grid.horizon - mid * grid.dt
    trace_avg = antistable_trace_integral(lin, win, t0=grid.t0 + mid * grid.dt)
    metrics: Dict[str, float] = {
        "rate": rep.rate,
        "mc_std_error": se,
        "spectral_lower": lo,
        "spectral_upper": hi,
        "trace_average": trace_avg,
        "stability_ratio": rep.details["stability_ratio"],
        "n_excluded": float(rep.n_excluded),
    }
    _consistency_metrics(metrics, consistency)
    verdicts = [
        _check_ge("rate not below the dichotomy lower bound",
                  rep.rate, lo, MC_SIGMAS * se),
        _check_ge("rate not below the antistable growth average",
                  rep.rate, trace_avg, MC_SIGMAS * se),
    ]
    verdicts += _consistency_verdicts(consistency)
    track, _run = _tracking_series(sys, grid, seeds, "control", n_cells, halfwidth)
    figures = [FigureSpec(
        "tracking", "Grid filter tracking, periodic plant",
        "t", "state",
        [("sample_path", "t", "state", "state"),
         ("sample_path", "t", "state_estimate", "conditional mean")],
    )]
    return ExperimentResult(
        name="ltv_cor312", params=p, metrics=metrics, verdicts=verdicts,
        series=[track], figures=figures,
        path_dump=_path_dumper(sys, grid, seeds, "control"),
    )


# ---------------------------------------------------------------------------
# experiments: nl_prop314 / nl_prop49
# ---------------------------------------------------------------------------

def _run_nl_prop314(p: dict) -> ExperimentResult:
    """Internal consistency of the rate forms under saturated feedback."""
    alpha = float(p["alpha"])
    sys = _tanh_loop(alpha, float(p["saturation"]), float(p["slope"]))
    grid = _grid_from_params(p)
    seeds = _seeds(p)
    n_cells = int(p["n_cells"])
    rep, ens, consistency = nonlinear_control_rate(
        sys, grid, int(p["n_paths"]), seeds,
        grid_filter_cfg={"n_cells": n_cells},
    )
    se = rep.mc_std_error or 0.0
    metrics: Dict[str, float] = {
        "rate": rep.rate,
        "mc_std_error": se,
        "open_loop_instability": max(alpha, 0.0),
        "tail_deviation": rep.tail_deviation,
        "stability_ratio": rep.details["stability_ratio"],
        "n_boundary_flagged": float(rep.details["n_boundary_flagged"]),
        "n_excluded": float(rep.n_excluded),
    }
    _consistency_metrics(metrics, consistency)
    verdicts = _consistency_verdicts(consistency)
    verdicts.append(_check_ge(
        "rate not below the open-loop instability",
        rep.rate, max(alpha, 0.0), MC_SIGMAS * se))

    series = []
    figures = []
    snapshot_times = tuple(float(t) for t in p["snapshot_times"])
    path0 = simulate_control_loop(sys, grid, seeds, 0)
    run0 = kushner_grid_run(sys, path0, n_cells=n_cells,
                            snapshot_times=snapshot_times)
    s = _stride(grid.n_steps + 1)
    series.append(SeriesSpec("sample_path", {
        "t": grid.times[::s],
        "state": path0.states[::s, 0],
        "state_estimate": run0.mean[::s],
        "posterior_std": np.sqrt(np.maximum(run0.var, 0.0))[::s],
    }))
    figures.append(FigureSpec(
        "tracking", "Grid filter tracking under saturated feedback",
        "t", "state",
        [("sample_path", "t", "state", "state"),
         ("sample_path", "t", "state_estimate", "conditional mean")],
    ))
    lines = []
    for snap in run0.snapshots:
        tag = format(snap.time, "g").replace(".", "p").replace("-", "m")
        name = f"density_t{tag}"
        series.append(SeriesSpec(name, {
            "position": snap.positions, "density": snap.density,
        }))
        lines.append((name, "position", "density", f"t = {snap.time:g}"))
    if lines:
        figures.append(FigureSpec(
            "density_evolution", "Conditional density snapshots",
            "position", "density", lines,
        ))
    return ExperimentResult(
        name="nl_prop314", params=p, metrics=metrics, verdicts=verdicts,
        series=series, figures=figures,
        path_dump=_path_dumper(sys, grid, seeds, "control"),
    )


def _run_nl_prop49(p: dict) -> ExperimentResult:
    """Cubic read-out of a stable diffusion: rate form consistency."""
    drift_gain = float(p["drift_gain"])
    output_gain = float(p["output_gain"])
    noise_scale = float(p["noise_scale"])
    sys = NonlinearScalarSystem(
        f=lambda t, x: drift_gain * x,
        b=lambda t, x: np.ones_like(np.asarray(x, dtype=float)),
        z=lambda t, x: output_gain * np.asarray(x, dtype=float) ** 3,
        noise_scale=noise_scale,
    )
    grid = _grid_from_params(p)
    seeds = _seeds(p)
    n_cells = int(p["n_cells"])
    halfwidth = float(p["domain_halfwidth"])
    rep, ens, consistency = nonlinear_filtering_rate(
        sys, grid, int(p["n_paths"]), seeds,
        grid_filter_cfg={"n_cells": n_cells, "domain_halfwidth": halfwidth},
    )
    se = rep.mc_std_error or 0.0
    metrics: Dict[str, float] = {
        "rate": rep.rate,
        "mc_std_error": se,
        "tail_deviation": rep.tail_deviation,
        "stability_ratio": rep.details["stability_ratio"],
        "n_boundary_flagged": float(rep.details["n_boundary_flagged"]),
        "n_excluded": float(rep.n_excluded),
    }
    _consistency_metrics(metrics, consistency)
    verdicts = _consistency_verdicts(consistency)
    verdicts.append(_check_ge("rate nonnegative", rep.rate, 0.0, MC_SIGMAS * se))

    path0 = simulate_observation(sys, grid, seeds, 0)
    run0 = kushner_grid_run(sys, path0, n_cells=n_cells,
                            domain_halfwidth=halfwidth)
    s = _stride(grid.n_steps + 1)
    t_s = grid.times[:-1][::s]
    z_true = output_gain * path0.states[:-1, 0] ** 3
    series = [SeriesSpec("sample_path", {
        "t": t_s,
        "output": z_true[::s],
        "output_estimate": run0.pi_target[:-1][::s],
        "state": path0.states[:-1, 0][::s],
        "state_estimate": run0.mean[:-1][::s],
    })]
    figures = [FigureSpec(
        "tracking", "Conditional mean of the cubic output",
        "t", "output",
        [("sample_path", "t", "output", "output"),
         ("sample_path", "t", "output_estimate", "conditional mean")],
    )]
    return ExperimentResult(
        name="nl_prop49", params=p, metrics=metrics, verdicts=verdicts,
        series=series, figures=figures,
        path_dump=_path_dumper(sys, grid, seeds, "observation"),
    )


# ---------------------------------------------------------------------------
# experiments: filt_prop45 / filt_lemma46_expansion / filt_prop48
# ---------------------------------------------------------------------------

def _modal_pair_system(p: dict) -> LtiSystem:
    if p.get("system") is not None:
        sys = system_from_config(p["system"])
        if not isinstance(sys, LtiSystem):
            raise ConfigError("this experiment needs a constant-coefficient system")
        return sys
    # stable mode first: the modal convention keeps the stable block leading
    return LtiSystem(
        A=np.diag([float(p["stable_pole"]), float(p["unstable_pole"])]),
        C=np.eye(2), modal_form=True, n_stable=1,
    )


def _run_filt_prop45(p: dict) -> ExperimentResult:
    """Filtering rate sweep toward the vanishing process-noise limit."""
    sys = _modal_pair_system(p)
    eps_list = [float(e) for e in p["epsilons"]]
    grid = _grid_from_params(p)
    seeds = _seeds(p)
    sweep = filtering_rate(sys, grid, eps_list, n_paths=int(p["n_paths"]),
                           seeds=seeds, workers=int(p["workers"]))
    limit = sweep["spectral_limit"]
    eps_desc = sorted(eps_list, reverse=True)
    rates = [sweep["reports"][e].rate for e in eps_desc]
    metrics: Dict[str, float] = {"spectral_limit": limit}
    verdicts: List[InequalityCheck] = []
    for e, r in zip(eps_desc, rates):
        metrics[f"rate_eps_{_eps_tag(e)}"] = r
    verdicts.append(_check_equal(
        "smallest-noise rate equals the antistable growth",
        rates[-1], limit, 1e-3))
    drops = [rates[i] - rates[i + 1] for i in range(len(rates) - 1)]
    verdicts.append(_check_ge(
        "sweep nonincreasing as the noise vanishes",
        min(drops) if drops else 0.0, 0.0, 1e-12))
    verdicts.append(_check_ge(
        "every rate above the vanishing-noise limit",
        min(rates) - limit, 0.0, 1e-9))
    mc_rows = []
    for e in eps_desc:
        mc = sweep["mc_reports"].get(e)
        if mc is None:
            mc_rows.append((float("nan"), float("nan")))
            continue
        se = mc.mc_std_error or 0.0
        metrics[f"mc_rate_eps_{_eps_tag(e)}"] = mc.rate
        metrics[f"mc_se_eps_{_eps_tag(e)}"] = se
        verdicts.append(_check_ge(
            f"monte carlo rate above the limit (eps {_eps_tag(e)})",
            mc.rate, limit, MC_SIGMAS * se))
        verdicts.append(_check_equal(
            f"monte carlo agrees with the steady covariance (eps {_eps_tag(e)})",
            mc.rate, sweep["reports"][e].rate, MC_SIGMAS * se))
        mc_rows.append((mc.rate, se))
    series = [SeriesSpec("noise_sweep", {
        "eps": np.asarray(eps_desc),
        "rate": np.asarray(rates),
        "mc_rate": np.asarray([r for r, _ in mc_rows]),
        "mc_std_error": np.asarray([s for _, s in mc_rows]),
        "limit": np.full(len(eps_desc), limit),
    })]
    figures = [FigureSpec(
        "noise_sweep", "Filtering rate against process-noise scale",
        "noise scale", "rate",
        [("noise_sweep", "eps", "rate", "steady covariance"),
         ("noise_sweep", "eps", "mc_rate", "monte carlo"),
         ("noise_sweep", "eps", "limit", "vanishing-noise limit")],
        logx=True,
    )]
    return ExperimentResult(
        name="filt_prop45", params=p, metrics=metrics, verdicts=verdicts,
        series=series, figures=figures,
        path_dump=_path_dumper(sys, grid, seeds, "observation",
                               noise_scale=max(eps_desc)),
    )


def _run_filt_lemma46(p: dict) -> ExperimentResult:
    """Quadratic collapse of the covariance onto the antistable block."""
    sys = _modal_pair_system(p)
    eps_list = [float(e) for e in p["epsilons"]]
    report = vanishing_noise_expansion(sys, eps_list, dt=float(p["are_dt"]))
    p_u_norm = float(np.linalg.norm(report.reduced_P))
    metrics: Dict[str, float] = {
        "slope_stable": report.slope_stable,
        "slope_cross": report.slope_cross,
        "block_deviation": report.deviation,
        "reduced_covariance_norm": p_u_norm,
    }
    for e, sn, cn in zip(report.eps_list, report.stable_norms, report.cross_norms):
        metrics[f"stable_norm_eps_{_eps_tag(e)}"] = float(sn)
        metrics[f"cross_norm_eps_{_eps_tag(e)}"] = float(cn)
    verdicts = [
        _check_equal("stable-block norm scales quadratically in the amplitude",
                     report.slope_stable, 2.0, 0.3),
    ]
    if math.isnan(report.slope_cross):
        # decoupled modes keep the cross block exactly zero at every eps
        verdicts.append(_check_equal(
            "cross block vanishes identically",
            float(np.max(report.cross_norms)), 0.0, 1e-12 * (1.0 + p_u_norm)))
    else:
        verdicts.append(_check_equal(
            "cross-block norm scales quadratically in the amplitude",
            report.slope_cross, 2.0, 0.3))
    verdicts.append(_check_ge(
        "covariance collapses onto the antistable block",
        1e-3 * (1.0 + p_u_norm), report.deviation))
    eps = report.eps_list
    quad = report.stable_norms[0] * (eps / eps[0]) ** 2
    series = [SeriesSpec("block_norms", {
        "eps": eps,
        "stable_norm": report.stable_norms,
        "cross_norm": report.cross_norms,
        "quadratic_reference": quad,
    })]
    figures = [FigureSpec(
        "block_norms", "Covariance block norms against noise amplitude",
        "noise amplitude", "Frobenius norm",
        [("block_norms", "eps", "stable_norm", "stable block"),
         ("block_norms", "eps", "cross_norm", "cross block"),
         ("block_norms", "eps", "quadratic_reference", "quadratic reference")],
        logx=True, logy=True,
    )]
    return ExperimentResult(
        name="filt_lemma46_expansion", params=p, metrics=metrics,
        verdicts=verdicts, series=series, figures=figures,
    )


def _run_filt_prop48(p: dict) -> ExperimentResult:
    """Reduced time-varying filtering rate with dichotomy bounds."""
    gain = _sinusoidal_gain(p)
    stable_gain = float(p["stable_gain"])
    sys = LtvSystem(
        A=lambda t: np.diag([stable_gain, gain(t)]),
        n=2, n_stable=1,
        C=lambda t: np.eye(2),
    )
    grid = _grid_from_params(p)
    rep, sol = filtering_rate_ltv_reduced(sys, grid)
    mid = grid.tail_start()
    win = grid.horizon - mid * grid.dt
    trace_avg = antistable_trace_integral(sys, win, t0=grid.t0 + mid * grid.dt)
    lo, hi = dichotomy_interval_bounds(sys, grid)
    metrics: Dict[str, float] = {
        "rate": rep.rate,
        "tail_deviation": rep.tail_deviation,
        "trace_average": trace_avg,
        "spectral_lower": lo,
        "spectral_upper": hi,
    }
    verdicts = [
        _check_equal("reduced filtering rate matches the antistable growth average",
                     rep.rate, trace_avg, 1e-3),
        _check_ge("rate above the dichotomy lower bound", rep.rate, lo, 1e-6),
        _check_ge("growth average below the dichotomy upper bound",
                  hi, trace_avg, 1e-9),
        _check_ge("growth average above the dichotomy lower bound",
                  trace_avg, lo, 1e-9),
    ]
    series = []
    figures = []
    if sol is not None:
        s = _stride(grid.n_steps + 1)
        t_s = grid.times[::s]
        series.append(SeriesSpec("reduced_covariance", {
            "t": t_s,
            "p_reduced": sol.P[::s, 0, 0],
            "gain": np.array([gain(float(t)) for t in t_s]),
        }))
        figures.append(FigureSpec(
            "reduced_covariance", "Reduced error covariance and the periodic gain",
            "t", "value",
            [("reduced_covariance", "t", "p_reduced", "covariance"),
             ("reduced_covariance", "t", "gain", "gain")],
        ))
    return ExperimentResult(
        name="filt_prop48", params=p, metrics=metrics, verdicts=verdicts,
        series=series, figures=figures,
    )


# ---------------------------------------------------------------------------
# experiment: bode_lemma310
# ---------------------------------------------------------------------------

def _run_bode_lemma310(p: dict) -> ExperimentResult:
    """Sensitivity growth average: kernel route, trace route, periodic case."""
    poles = (float(p["unstable_pole"]), float(p["stable_pole"]))
    a, b = companion_from_poles(poles)
    c = np.array([[float(p["output_gain"]), 0.0]])  # CB = 0 by construction
    sys = LtiSystem(A=a, B=b, C=c)
    grid = _grid_from_params(p)
    br = ltv_bode_integral(sys, grid)
    metrics: Dict[str, float] = {
        "trace_route": br.trace_route,
        "kernel_route": br.kernel_route,
        "routes_gap": br.routes_gap,
        "orthogonality_max": br.orthogonality_max,
        "spectral_lower": br.spectral_lower,
        "spectral_upper": br.spectral_upper,
        "loop_stable": float(bool(br.loop_stable)),
    }
    verdicts = [
        _check_equal("kernel route agrees with the trace route",
                     br.kernel_route, br.trace_route, 1e-3),
        _check_ge("growth average below the spectral upper bound",
                  br.spectral_upper, br.trace_route, 1e-9),
        _check_ge("growth average above the spectral lower bound",
                  br.trace_route, br.spectral_lower, 1e-9),
        _check_equal("closed sensitivity loop is stable",
                     float(bool(br.loop_stable)), 1.0, 0.0),
    ]

    # periodic scalar antistable gain, averaged over whole periods
    gain = _sinusoidal_gain(p)
    lin = LtvSystem(A=lambda t: np.array([[gain(t)]]), n=1, n_stable=0)
    periodic_grid = TimeGrid.of_steps(float(p["periodic_horizon"]),
                                      int(p["periodic_steps"]))
    periodic_avg = antistable_trace_integral(lin, periodic_grid.horizon,
                                             t0=periodic_grid.t0)
    metrics["periodic_trace_average"] = periodic_avg
    verdicts.append(_check_equal(
        "periodic growth average equals the mean gain",
        periodic_avg, float(p["mean"]), 1e-3))

    # kernel integrand over the leading half-window for the figure
    x_path = control_rde_X(sys.A, sys.B, grid)
    half = grid.tail_start()
    s = _stride(half)
    idx = np.arange(0, half, s)
    vals = np.array([
        0.5 * float(np.trace((sys.B.T @ x_path[k] - sys.C) @ sys.B))
        for k in idx
    ])
    series = [SeriesSpec("sensitivity_kernel", {
        "t": grid.t0 + idx * grid.dt,
        "integrand": vals,
        "trace_route": np.full(idx.size, br.trace_route),
    })]
    figures = [FigureSpec(
        "sensitivity_kernel", "Sensitivity kernel integrand",
        "t", "integrand",
        [("sensitivity_kernel", "t", "integrand", "kernel integrand"),
         ("sensitivity_kernel", "t", "trace_route", "trace route")],
    )]
    return ExperimentResult(
        name="bode_lemma310", params=p, metrics=metrics, verdicts=verdicts,
        series=series, figures=figures,
    )


# ---------------------------------------------------------------------------
# experiments: capacity_thm34 / capacity_thm43
# ---------------------------------------------------------------------------

def _run_capacity_thm34(p: dict) -> ExperimentResult:
    """Control-channel capacity sandwich under a hard power budget."""
    alpha = float(p["alpha"])
    k = float(p["k"])
    budget = float(p["power_budget"])
    sys = LtiSystem(A=[[alpha]], K=[[-k]])
    closed = alpha - k
    if closed >= 0:
        raise ConfigError(
            f"closed-loop pole {closed} is unstable; pick k > alpha")
    grid = _grid_from_params(p)
    seeds = _seeds(p)
    mc_rep, ens = control_rate_monte_carlo(sys, grid, int(p["n_paths"]), seeds,
                                           workers=int(p["workers"]))
    det_rep, _ = control_rate_riccati(sys, grid)
    bounds = capacity_check(mc_rep, budget, ens)
    se = mc_rep.mc_std_error or 0.0
    i_max = int(np.argmax(ens.profile_sq_mean))
    metrics: Dict[str, float] = {
        "capacity": bounds.C_f,
        "rate_monte_carlo": bounds.rate,
        "mc_std_error": se,
        "rate_riccati": det_rep.rate,
        "divergence_rate_marginal": bounds.divergence_rate_marginal,
        "divergence_rate_conditional": bounds.divergence_rate_conditional,
        "power_budget": budget,
        "realized_power_max": float(ens.profile_sq_mean[i_max]),
    }
    verdicts = list(bounds.verdicts)
    verdicts.append(_check_equal(
        "monte carlo rate agrees with the deterministic rate",
        mc_rep.rate, det_rep.rate, MC_SIGMAS * se))
    verdicts.append(_check_ge(
        "power budget covers the realized input power",
        budget, float(ens.profile_sq_mean[i_max]),
        MC_SIGMAS * float(ens.profile_sq_se[i_max])))
    s = _stride(grid.n_steps)
    t_s = grid.times[:-1][::s]
    series = [SeriesSpec("power_profile", {
        "t": t_s,
        "realized_power": ens.profile_sq_mean[::s],
        "budget": np.full(t_s.size, budget),
    })]
    figures = [FigureSpec(
        "power_profile", "Realized input power against the budget",
        "t", "mean squared input",
        [("power_profile", "t", "realized_power", "realized"),
         ("power_profile", "t", "budget", "budget")],
    )]
    return ExperimentResult(
        name="capacity_thm34", params=p, metrics=metrics, verdicts=verdicts,
        series=series, figures=figures,
        path_dump=_path_dumper(sys, grid, seeds, "control"),
    )


def _run_capacity_thm43(p: dict) -> ExperimentResult:
    """Filtering-channel capacity sandwich with a growing output budget."""
    if p.get("system") is not None:
        sys = system_from_config(p["system"])
        if not isinstance(sys, LtiSystem) or sys.C is None:
            raise ConfigError("capacity_thm43 needs a constant system with C")
    else:
        sys = LtiSystem(
            A=np.diag([float(p["stable_pole"]), float(p["unstable_pole"])]),
            C=np.eye(2), modal_form=True, n_stable=1,
        )
    noise_scale = float(p["noise_scale"])
    margin = float(p["budget_margin"])
    offset = float(p["budget_offset"])
    grid = _grid_from_params(p)
    seeds = _seeds(p)

    modes = np.diag(sys.A)
    if not np.allclose(sys.A, np.diag(modes)) or not np.allclose(sys.C, np.eye(sys.n)):
        raise ConfigError("the output power budget assumes diagonal A and C = I")

    def expected_power(t: float) -> float:
        total = 0.0
        for a in modes:
            growth = math.exp(2.0 * a * t)
            if abs(a) < 1e-12:
                total += 1.0 + noise_scale * t
            else:
                total += growth + noise_scale * (growth - 1.0) / (2.0 * a)
        return total

    def budget(t: float) -> float:
        return margin * expected_power(t) + offset

    mc_rep, ens = filtering_rate_monte_carlo(
        sys, grid, int(p["n_paths"]), seeds,
        noise_scale=noise_scale, workers=int(p["workers"]),
    )
    det_rep, _ = filtering_rate_riccati(sys, noise_scale, dt=grid.dt)
    bounds = capacity_check(mc_rep, budget, ens)
    se = mc_rep.mc_std_error or 0.0
    metrics: Dict[str, float] = {
        "capacity": bounds.C_f,
        "rate_monte_carlo": bounds.rate,
        "mc_std_error": se,
        "rate_riccati": det_rep.rate,
        "divergence_rate_marginal": bounds.divergence_rate_marginal,
        "divergence_rate_conditional": bounds.divergence_rate_conditional,
    }
    verdicts = list(bounds.verdicts)
    verdicts.append(_check_equal(
        "monte carlo rate agrees with the steady covariance rate",
        mc_rep.rate, det_rep.rate, MC_SIGMAS * se))
    s = _stride(grid.n_steps)
    t_s = grid.times[:-1][::s]
    series = [SeriesSpec("power_profile", {
        "t": t_s,
        "realized_power": ens.profile_sq_mean[::s],
        "budget": np.array([budget(float(t)) for t in t_s]),
    })]
    figures = [FigureSpec(
        "power_profile", "Realized output power against the budget",
        "t", "mean squared output",
        [("power_profile", "t", "realized_power", "realized"),
         ("power_profile", "t", "budget", "budget")],
        logy=True,
    )]
    return ExperimentResult(
        name="capacity_thm43", params=p, metrics=metrics, verdicts=verdicts,
        series=series, figures=figures,
        path_dump=_path_dumper(sys, grid, seeds, "observation",
                               noise_scale=noise_scale),
    )


# ---------------------------------------------------------------------------
# registry
# ---------------------------------------------------------------------------

_PI = math.pi

REGISTRY: Dict[str, ExperimentSpec] = {}


def _register(name: str, description: str, defaults: Dict[str, object],
              runner: Callable[[dict], ExperimentResult],
              supports_system_override: bool = False) -> None:
    REGISTRY[name] = ExperimentSpec(
        name=name, description=description, defaults=defaults, runner=runner,
        supports_system_override=supports_system_override,
    )


_register(
    "appendix_a",
    "Scalar loop with a closed-form error covariance; rate by three routes.",
    {
        "alpha": 1.0, "k": 2.0, "p0": 1.0,
        "rde_horizon": 20.0, "rde_dt": 1e-4,
        "horizon": 50.0, "dt": 1e-3,
        "n_paths": 1000, "master_seed": DEFAULT_MASTER_SEED, "workers": 1,
        "stable_alpha": -1.0,
    },
    _run_appendix_a,
)

_register(
    "lti_prop36",
    "Rate equals the unstable pole sum for stabilized companion-form loops.",
    {
        "pole_sets": [[1.0, -1.0], [2.0, 0.5, -1.0], [2.0, 1.0, -1.0]],
        "horizon": 50.0, "dt": 1e-3,
        "n_paths": 1000, "master_seed": DEFAULT_MASTER_SEED, "workers": 1,
    },
    _run_lti_prop36,
)

_register(
    "lti_lemma37_nonlinear_k",
    "Saturated (tanh) feedback on an unstable scalar plant still pays the "
    "open-loop instability; inequality only.",
    {
        "alpha": 0.5, "saturation": 3.0, "slope": 2.0,
        "horizon": 30.0, "dt": 1e-3,
        "n_paths": 100, "n_cells": 1024,
        "master_seed": DEFAULT_MASTER_SEED, "workers": 1,
    },
    _run_lti_lemma37,
)

_register(
    "ltv_prop311",
    "Periodic antistable mode: rate equals the mean gain; full bound chain.",
    {
        "stable_gain": -1.0, "mean": 1.5, "amplitude": 1.0, "frequency": 1.0,
        "horizon": 32.0 * _PI, "n_steps": 100_000, "dt": None,
        "n_paths": 200, "master_seed": DEFAULT_MASTER_SEED, "workers": 1,
    },
    _run_ltv_prop311,
)

_register(
    "ltv_cor312",
    "Scalar periodic plant under saturated feedback: dichotomy interval "
    "bounds on the rate.",
    {
        "mean": 1.5, "amplitude": 1.0, "frequency": 1.0,
        "saturation": 7.0, "slope": 2.0,
        "horizon": 16.0 * _PI, "n_steps": 50_000, "dt": None,
        "n_paths": 60, "n_cells": 2048, "domain_halfwidth": 4.5,
        "master_seed": DEFAULT_MASTER_SEED, "workers": 1,
    },
    _run_ltv_cor312,
)

_register(
    "nl_prop314",
    "Saturated feedback loop through the grid filter: the three rate forms "
    "agree within sampling error.",
    {
        "alpha": 0.5, "saturation": 3.0, "slope": 2.0,
        "horizon": 30.0, "dt": 1e-3,
        "n_paths": 100, "n_cells": 1024,
        "snapshot_times": (1.0, 10.0, 30.0),
        "master_seed": DEFAULT_MASTER_SEED, "workers": 1,
    },
    _run_nl_prop314,
)

_register(
    "filt_prop45",
    "Filtering rate sweep: monotone in the process noise, pinned to the "
    "antistable growth in the vanishing-noise limit.",
    {
        "stable_pole": -2.0, "unstable_pole": 1.0,
        "epsilons": [1e-2, 1e-4, 1e-6],
        "horizon": 10.0, "dt": 1e-3,
        "n_paths": 200, "master_seed": DEFAULT_MASTER_SEED, "workers": 1,
        "system": None,
    },
    _run_filt_prop45,
    supports_system_override=True,
)

_register(
    "filt_lemma46_expansion",
    "Steady filtering covariance collapses quadratically onto the "
    "antistable block as the process noise vanishes.",
    {
        "stable_pole": -2.0, "unstable_pole": 1.0,
        "epsilons": [1e-2, 1e-3, 1e-4, 1e-5, 1e-6],
        "are_dt": 1e-3,
        "system": None,
    },
    _run_filt_lemma46,
    supports_system_override=True,
)

_register(
    "filt_prop48",
    "Reduced time-varying filtering rate equals the periodic mean gain, "
    "inside the dichotomy bounds.",
    {
        "stable_gain": -1.0, "mean": 1.5, "amplitude": 1.0, "frequency": 1.0,
        "horizon": 32.0 * _PI, "n_steps": 100_000, "dt": None,
    },
    _run_filt_prop48,
)

_register(
    "nl_prop49",
    "Cubic read-out of a stable diffusion through the grid filter: rate "
    "forms agree within sampling error.",
    {
        "drift_gain": -1.0, "output_gain": 1.0, "noise_scale": 1.0,
        "horizon": 30.0, "dt": 1e-3,
        "n_paths": 100, "n_cells": 768, "domain_halfwidth": 6.0,
        "master_seed": DEFAULT_MASTER_SEED, "workers": 1,
    },
    _run_nl_prop49,
)

_register(
    "bode_lemma310",
    "Sensitivity growth average: kernel and trace routes agree; periodic "
    "scalar case averages to the mean gain.",
    {
        "unstable_pole": 1.0, "stable_pole": -2.0, "output_gain": 3.0,
        "horizon": 20.0, "dt": 1e-3,
        "mean": 1.5, "amplitude": 1.0, "frequency": 1.0,
        "periodic_horizon": 32.0 * _PI, "periodic_steps": 100_000,
    },
    _run_bode_lemma310,
)

_register(
    "capacity_thm34",
    "Control-channel capacity sandwich under a hard input power budget.",
    {
        "alpha": 1.0, "k": 3.0, "power_budget": 9.5,
        "horizon": 50.0, "dt": 1e-3,
        "n_paths": 1000, "master_seed": DEFAULT_MASTER_SEED, "workers": 1,
    },
    _run_capacity_thm34,
)

_register(
    "capacity_thm43",
    "Filtering-channel capacity sandwich with an exponentially growing "
    "output power budget.",
    {
        "stable_pole": -2.0, "unstable_pole": 1.0, "noise_scale": 1.0,
        "budget_margin": 1.2, "budget_offset": 0.5,
        "horizon": 10.0, "dt": 1e-3,
        "n_paths": 500, "master_seed": DEFAULT_MASTER_SEED, "workers": 1,
        "system": None,
    },
    _run_capacity_thm43,
    supports_system_override=True,
)


def get_experiment(name: str) -> ExperimentSpec:
    if name not in REGISTRY:
        raise ConfigError(
            f"unknown experiment {name!r}; available: {', '.join(REGISTRY)}"
        )
    return REGISTRY[name]


def list_experiments() -> List[Tuple[str, str]]:
    return [(s.name, s.description) for s in REGISTRY.values()]


def run_experiment(name: str, overrides: Optional[dict] = None) -> ExperimentResult:
    """Resolve defaults, apply overrides, run, and time the experiment."""
    spec = get_experiment(name)
    params = dict(spec.defaults)
    overrides = {k: v for k, v in (overrides or {}).items() if v is not None}
    if "system" in overrides and not spec.supports_system_override:
        raise ConfigError(
            f"experiment {name!r} builds its own systems and does not accept "
            "a system override"
        )
    unknown = sorted(set(overrides) - set(params))
    if unknown:
        raise ConfigError(
            f"unknown parameter(s) for {name!r}: {', '.join(unknown)}; "
            f"accepted: {', '.join(sorted(params))}"
        )
    params.update(overrides)
    t0 = time.perf_counter()
    result = spec.runner(params)
    result.runtime_seconds = time.perf_counter() - t0
    return result
