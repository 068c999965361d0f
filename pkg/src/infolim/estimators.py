"""Causal estimators: Kalman-Bucy, grid Bayes filter, particle filter.

Two estimation geometries appear throughout, distinguished by the
``kind`` of the simulated path:

* observation paths: hidden x, channel dy = h(x) dt + dv with v
  independent of the process noise.  This is the textbook setting.
* control paths: channel de = u dt + dw where the *same* w drives the
  plant, and the plant is literally driven by the recorded de.  The
  estimation problem is then conditionally deterministic: given the
  observed increments the hidden state follows dx = f dt + b de, and all
  uncertainty traces back to x0.  Estimators must honor that coupling;
  treating w and the channel noise as independent gives a filter whose
  estimate is not the conditional mean, which breaks every downstream
  identity.

The Kalman-Bucy implementation handles the coupling through the
cross-covariance gain; the grid and particle filters handle it by
transporting the density with the observed increments.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg

from .errors import (
    AssumptionViolatedError,
    ConfigError,
    DegeneracyError,
    NumericalBreakdownError,
)
from .grids import TimeGrid
from .riccati import RdeSolution, integrate_rde
from .sde import BatchStreams, SamplePath, SeedSpec, draw_x0_batch
from .statespace import LtiSystem, LtvSystem, NonlinearScalarSystem

#: run is flagged when this much mass sits against the domain boundary
BOUNDARY_MASS_TOL = 1e-6
#: effective sample size floor before the particle filter gives up
ESS_FLOOR = 10.0


# ---------------------------------------------------------------------------
# Kalman-Bucy
# ---------------------------------------------------------------------------

@dataclass
class KalmanRun:
    """Filter output along one path.

    target/target_hat are the channel drift (u = Kx or z = Cx) and its
    causal estimate sampled at step starts, shape (n_steps, p).
    mmse_realized is the per-step squared error ||target - target_hat||^2;
    mmse_expected is the Riccati prediction tr[G P G'] on the same steps.
    """

    grid: TimeGrid
    x_hat: np.ndarray
    P: RdeSolution
    innovations: np.ndarray
    target: np.ndarray
    target_hat: np.ndarray
    mmse_realized: np.ndarray
    mmse_expected: np.ndarray


def _coeff_fns(sys):
    if isinstance(sys, LtiSystem):
        return (lambda t: sys.A), (lambda t: sys.B), \
            (None if sys.C is None else (lambda t: sys.C)), \
            (None if sys.K is None else (lambda t: sys.K))
    if isinstance(sys, LtvSystem):
        return sys.A, sys.B, sys.C, sys.K
    raise ConfigError(f"expected a linear system, got {type(sys).__name__}")


def kalman_bucy_run(
    sys,
    path: SamplePath,
    noise_scale: float = 1.0,
    P0=None,
) -> KalmanRun:
    """Run the exact linear filter along a recorded path.

    For observation paths the gain is P C' (unit observation-noise
    covariance); the Riccati equation carries Q = noise_scale * B B'.
    For control paths the channel noise is the plant noise, so the gain
    picks up the cross term: B + P K', with Q = 0 and the open-loop A in
    the Riccati equation.  P is integrated once, deterministically, and
    shared by every path on the same grid.
    """
    a_fn, b_fn, c_fn, k_fn = _coeff_fns(sys)
    grid = path.grid
    dt = grid.dt
    n = path.states.shape[1]
    p_init = np.eye(n) if P0 is None else np.atleast_2d(np.asarray(P0, dtype=float))

    if path.kind == "control":
        if k_fn is None:
            raise ConfigError("control-form filter needs the channel gain K")
        g_fn, q = k_fn, np.zeros((n, n))

        def gain_fn(t, p):
            return b_fn(t) + p @ k_fn(t).T

        def closed_a(t):
            return a_fn(t) + b_fn(t) @ k_fn(t)

        target_fn = k_fn
        drift_a = closed_a
    elif path.kind == "observation":
        if c_fn is None:
            raise ConfigError("observation-form filter needs the output map C")
        g_fn = c_fn

        def q_fn(t):
            bt = b_fn(t)
            return noise_scale * (bt @ bt.T)

        q = q_fn if isinstance(sys, LtvSystem) else q_fn(0.0)

        def gain_fn(t, p):
            return p @ c_fn(t).T

        target_fn = c_fn
        drift_a = a_fn
    else:
        raise ConfigError(f"unknown path kind {path.kind!r}")

    a_arg = a_fn if isinstance(sys, LtvSystem) else a_fn(0.0)
    g_arg = g_fn if isinstance(sys, LtvSystem) else g_fn(0.0)
    p_sol = integrate_rde(a_arg, g_arg, q, p_init, grid)

    n_steps = grid.n_steps
    p_dim = np.asarray(target_fn(grid.t0)).shape[0]
    x_hat = np.zeros((n_steps + 1, n))
    innovations = np.empty((n_steps, p_dim))
    target = np.empty((n_steps, p_dim))
    target_hat = np.empty((n_steps, p_dim))
    mmse_realized = np.empty(n_steps)
    mmse_expected = np.empty(n_steps)
    xh = np.zeros(n)
    t = grid.t0
    for k in range(n_steps):
        gt = target_fn(t)
        tgt = gt @ path.states[k]
        tgt_hat = gt @ xh
        innov = path.channel[k] - tgt_hat * dt
        target[k] = tgt
        target_hat[k] = tgt_hat
        innovations[k] = innov
        err = tgt - tgt_hat
        mmse_realized[k] = float(err @ err)
        pk = p_sol.P[k]
        mmse_expected[k] = float(np.trace(gt @ pk @ gt.T))
        xh = xh + (drift_a(t) @ xh) * dt + gain_fn(t, pk) @ innov
        x_hat[k + 1] = xh
        t += dt
    return KalmanRun(
        grid=grid,
        x_hat=x_hat,
        P=p_sol,
        innovations=innovations,
        target=target,
        target_hat=target_hat,
        mmse_realized=mmse_realized,
        mmse_expected=mmse_expected,
    )


# ---------------------------------------------------------------------------
# grid filter
# ---------------------------------------------------------------------------

@dataclass
class DensitySnapshot:
    """Conditional density sampled at one time."""

    time: float
    positions: np.ndarray
    density: np.ndarray


@dataclass
class KushnerRun:
    """Grid-filter output along one path.

    mean/var/pi_target/pi_target_sq are sampled at step starts, aligned
    with the channel increments (index k describes the conditional law
    given increments 0..k-1, i.e. before absorbing increment k).
    pi_target is the conditional mean of the channel drift (z or u).
    """

    grid: TimeGrid
    mean: np.ndarray
    var: np.ndarray
    pi_target: np.ndarray
    pi_target_sq: np.ndarray
    clipped_mass: float
    boundary_mass_max: float
    n_recenter: int
    snapshots: List[DensitySnapshot]


def _upwind_substep(q, v_face, dt_sub, dx):
    """One conservative upwind substep; v_face has length n_cells + 1."""
    flux = np.where(v_face[1:-1] > 0.0, q[:-1], q[1:]) * v_face[1:-1]
    out = q.copy()
    out[:-1] -= (dt_sub / dx) * flux
    out[1:] += (dt_sub / dx) * flux
    return out


def _upwind_substep_batch(q, v_face, dt_sub, dx):
    """Batched variant; q (paths, cells), v_face (paths, cells + 1)."""
    vf = v_face[:, 1:-1]
    flux = np.where(vf > 0.0, q[:, :-1], q[:, 1:]) * vf
    out = q.copy()
    out[:, :-1] -= (dt_sub / dx) * flux
    out[:, 1:] += (dt_sub / dx) * flux
    return out


def _diffusion_matrix(d_face, dt, dx):
    """Banded (ab) form of I - dt*L for backward-Euler diffusion.

    d_face holds the diffusion coefficient at interior faces, length
    n_cells - 1; boundary faces carry zero flux.
    """
    n = d_face.size + 1
    r = dt / (dx * dx)
    ab = np.zeros((3, n))
    ab[0, 1:] = -r * d_face          # superdiagonal
    ab[2, :-1] = -r * d_face         # subdiagonal
    ab[1, :] = 1.0
    ab[1, :-1] += r * d_face
    ab[1, 1:] += r * d_face
    return ab


def _normalize(q, dx, step):
    np.clip(q, 0.0, None, out=q)
    total = q.sum() * dx
    if not np.isfinite(total) or total <= 0.0:
        raise NumericalBreakdownError("grid density lost all mass", step=step)
    q /= total
    return q


def kushner_grid_run(
    sys: NonlinearScalarSystem,
    path: SamplePath,
    n_cells: int = 1024,
    prior_mean: float = 0.0,
    prior_std: float = 1.0,
    domain_halfwidth: float = 8.0,
    snapshot_times: Sequence[float] = (),
) -> KushnerRun:
    """Evolve the conditional density of the hidden scalar state.

    The domain spans prior_mean +- domain_halfwidth * prior_std.  Each
    step applies the exponential likelihood of the recorded channel
    increment at the step-start positions, then transports the density:

    * observation paths: upwind advection under the closed-loop drift
      plus backward-Euler central diffusion with coefficient
      b^2 * noise_scale / 2 (the domain stays fixed);
    * control paths: the plant is driven by the observed increments, so
      the transport is an exact rigid shift by f(mean) dt + b * de
      absorbed into the grid origin plus upwind advection under the
      residual drift f - f(mean), with integer-cell re-centering to
      keep the posterior in the window.  b must not depend on the
      state in this mode.

    Negative densities created by transport are clipped to zero and the
    clipped mass is accumulated; mass touching the outermost cells is
    tracked and the largest value reported.
    """
    run = _kushner_batch(
        sys,
        path.grid,
        channel=path.channel[None, :, 0],
        kind=path.kind,
        n_cells=n_cells,
        prior_mean=prior_mean,
        prior_std=prior_std,
        domain_halfwidth=domain_halfwidth,
        snapshot_times=tuple(snapshot_times),
    )
    return run[0]


def _kushner_batch(
    sys: NonlinearScalarSystem,
    grid: TimeGrid,
    channel: np.ndarray,
    kind: str,
    n_cells: int,
    prior_mean: float,
    prior_std: float,
    domain_halfwidth: float,
    snapshot_times: Tuple[float, ...] = (),
) -> List[KushnerRun]:
    """Shared batched core; channel has shape (n_paths, n_steps)."""
    if kind == "control":
        if sys.u is None:
            raise ConfigError("control-mode grid filter needs the control law u")
        drift_fn = sys.f           # transport under f; b*de enters as shift
        target_fn = sys.u
    elif kind == "observation":
        if sys.z is None:
            raise ConfigError("observation-mode grid filter needs the output map z")
        drift_fn = sys.drift_closed
        target_fn = sys.z
    else:
        raise ConfigError(f"unknown path kind {kind!r}")

    n_paths, n_steps = channel.shape
    if n_steps != grid.n_steps:
        raise ConfigError("channel increments do not match the grid")
    dt = grid.dt
    dx = 2.0 * domain_halfwidth * prior_std / n_cells
    base = prior_mean - domain_halfwidth * prior_std + (np.arange(n_cells) + 0.5) * dx
    offsets = np.zeros(n_paths)
    positions = base[None, :] + offsets[:, None]

    q = np.exp(-0.5 * ((positions - prior_mean) / prior_std) ** 2)
    q /= q.sum(axis=1, keepdims=True) * dx

    if kind == "control":
        b0 = np.asarray(sys.b(grid.t0, positions[0]), dtype=float)
        if np.ptp(b0) > 1e-12 * (1.0 + float(np.max(np.abs(b0)))):
            raise AssumptionViolatedError(
                "control-mode grid filter requires state-independent b"
            )

    mean = np.empty((n_paths, n_steps + 1))
    var = np.empty((n_paths, n_steps + 1))
    pi_t = np.empty((n_paths, n_steps + 1))
    pi_t2 = np.empty((n_paths, n_steps + 1))
    clipped = np.zeros(n_paths)
    boundary_max = np.zeros(n_paths)
    n_recenter = np.zeros(n_paths, dtype=int)
    snapshots: List[List[DensitySnapshot]] = [[] for _ in range(n_paths)]
    snap_left = sorted(snapshot_times)

    def record(k, t):
        w = q * dx
        m = (w * positions).sum(axis=1)
        mean[:, k] = m
        var[:, k] = (w * (positions - m[:, None]) ** 2).sum(axis=1)
        tv = np.asarray(target_fn(t, positions), dtype=float)
        pi_t[:, k] = (w * tv).sum(axis=1)
        pi_t2[:, k] = (w * tv * tv).sum(axis=1)
        bmass = (q[:, 0] + q[:, -1]) * dx
        np.maximum(boundary_max, bmass, out=boundary_max)

    t = grid.t0
    record(0, t)
    for k in range(n_steps):
        while snap_left and t >= snap_left[0] - 0.5 * dt:
            for p_i in range(n_paths):
                snapshots[p_i].append(
                    DensitySnapshot(t, positions[p_i].copy(), q[p_i].copy())
                )
            snap_left.pop(0)
        de = channel[:, k]

        # correction with the step-start likelihood
        tv = np.asarray(target_fn(t, positions), dtype=float)
        arg = tv * de[:, None] - 0.5 * tv * tv * dt
        arg -= arg.max(axis=1, keepdims=True)
        q *= np.exp(arg)
        total = q.sum(axis=1) * dx
        if not np.all(np.isfinite(total)) or np.any(total <= 0.0):
            raise NumericalBreakdownError("grid density lost all mass", step=k)
        q /= total[:, None] * 1.0

        # transport; control paths advect in the frame moving with the
        # conditional mean, so the upwind smearing scales with the
        # posterior spread instead of the state magnitude
        faces = positions - 0.5 * dx
        faces = np.concatenate([faces, positions[:, -1:] + 0.5 * dx], axis=1)
        v = np.asarray(drift_fn(t, faces), dtype=float)
        if kind == "control":
            w = q * dx
            m = (w * positions).sum(axis=1) / w.sum(axis=1)
            carrier = np.atleast_1d(np.asarray(drift_fn(t, m), dtype=float))
            v = v - carrier[:, None]
        cfl = float(np.max(np.abs(v))) * dt / dx
        n_sub = max(1, int(np.ceil(cfl / 0.9)))
        before = q.sum(axis=1)
        for _ in range(n_sub):
            q = _upwind_substep_batch(q, v, dt / n_sub, dx)
        neg = np.clip(q, None, 0.0).sum(axis=1)
        clipped += -neg * dx
        np.clip(q, 0.0, None, out=q)
        tot = q.sum(axis=1)
        bad = ~np.isfinite(tot) | (tot <= 0.0)
        if np.any(bad):
            raise NumericalBreakdownError("grid density lost all mass", step=k)
        q *= (before / tot)[:, None]

        if kind == "control":
            b_now = float(np.asarray(sys.b(t, positions[:, :1]), dtype=float).ravel()[0])
            offsets += carrier * dt + b_now * de
            positions = base[None, :] + offsets[:, None]
            # integer-cell re-centering keeps the posterior inside the window
            w = q * dx
            m = (w * positions).sum(axis=1) / w.sum(axis=1)
            center = positions[:, n_cells // 2]
            shift = np.rint((m - center) / dx).astype(int)
            for p_i in np.nonzero(shift)[0]:
                s = int(shift[p_i])
                rolled = np.zeros_like(q[p_i])
                if s > 0:
                    rolled[: n_cells - s] = q[p_i, s:]
                else:
                    rolled[-s:] = q[p_i, : n_cells + s]
                lost = q[p_i].sum() - rolled.sum()
                clipped[p_i] += max(lost, 0.0) * dx
                q[p_i] = rolled
                offsets[p_i] += s * dx
                n_recenter[p_i] += 1
            positions = base[None, :] + offsets[:, None]

        total = q.sum(axis=1) * dx
        if not np.all(np.isfinite(total)) or np.any(total <= 0.0):
            raise NumericalBreakdownError("grid density lost all mass", step=k)
        q /= total[:, None]

        if kind == "observation":
            eps = sys.noise_scale
            if eps > 0.0:
                d_face = 0.5 * eps * np.asarray(
                    sys.b(t, positions[0, :-1] + 0.5 * dx), dtype=float
                ) ** 2
                ab = _diffusion_matrix(d_face, dt, dx)
                q = scipy.linalg.solve_banded((1, 1), ab, q.T).T
                np.clip(q, 0.0, None, out=q)
                q /= q.sum(axis=1, keepdims=True) * dx

        t += dt
        record(k + 1, t)

    runs = []
    for p_i in range(n_paths):
        runs.append(KushnerRun(
            grid=grid,
            mean=mean[p_i],
            var=var[p_i],
            pi_target=pi_t[p_i],
            pi_target_sq=pi_t2[p_i],
            clipped_mass=float(clipped[p_i]),
            boundary_mass_max=float(boundary_max[p_i]),
            n_recenter=int(n_recenter[p_i]),
            snapshots=snapshots[p_i],
        ))
    return runs


# ---------------------------------------------------------------------------
# particle filter
# ---------------------------------------------------------------------------

@dataclass
class ParticleRun:
    """Bootstrap particle filter output along one path."""

    grid: TimeGrid
    mean: np.ndarray
    var: np.ndarray
    pi_target: np.ndarray
    pi_target_sq: np.ndarray
    ess_min: float
    n_resamples: int


def _systematic_resample(weights, rng):
    n = weights.size
    u = (rng.random() + np.arange(n)) / n
    return np.searchsorted(np.cumsum(weights), u, side="right").clip(0, n - 1)


def particle_filter_run(
    sys: NonlinearScalarSystem,
    path: SamplePath,
    n_particles: int = 10_000,
    ess_threshold: float = 0.5,
    prior_mean: float = 0.0,
    prior_std: float = 1.0,
    rng: Optional[np.random.Generator] = None,
) -> ParticleRun:
    """Bootstrap filter with systematic resampling at ESS < threshold * N.

    Observation paths propagate particles with Euler steps driven by
    fresh process noise.  Control paths transport particles
    deterministically with the observed increments (the conditionally
    exact move); because that transport never replenishes diversity,
    resampling there adds a small kernel jitter (Silverman bandwidth) to
    keep the support alive, at the cost of a slight variance inflation.

    Raises
    ------
    DegeneracyError
        If the effective sample size falls below ESS_FLOOR.
    """
    if path.kind == "control":
        if sys.u is None:
            raise ConfigError("control-mode particle filter needs u")
        target_fn = sys.u
    else:
        if sys.z is None:
            raise ConfigError("observation-mode particle filter needs z")
        target_fn = sys.z
    if rng is None:
        rng = np.random.default_rng(
            [int(path.master_seed), int(path.path_index), 3]
        )
    grid = path.grid
    dt = grid.dt
    sqdt = np.sqrt(dt)
    n_steps = grid.n_steps
    x = prior_mean + prior_std * rng.standard_normal(n_particles)
    logw = np.zeros(n_particles)
    mean = np.empty(n_steps + 1)
    var = np.empty(n_steps + 1)
    pi_t = np.empty(n_steps + 1)
    pi_t2 = np.empty(n_steps + 1)
    ess_min = float(n_particles)
    n_resamples = 0
    jitter_h = (4.0 / (3.0 * n_particles)) ** 0.2

    def record(k, t, w):
        m = float(w @ x)
        mean[k] = m
        var[k] = float(w @ (x - m) ** 2)
        tv = np.asarray(target_fn(t, x), dtype=float)
        pi_t[k] = float(w @ tv)
        pi_t2[k] = float(w @ (tv * tv))

    def norm_weights():
        lw = logw - logw.max()
        w = np.exp(lw)
        w /= w.sum()
        return w

    t = grid.t0
    w = norm_weights()
    record(0, t, w)
    for k in range(n_steps):
        dchan = float(path.channel[k, 0])
        tv = np.asarray(target_fn(t, x), dtype=float)
        logw += tv * dchan - 0.5 * tv * tv * dt
        w = norm_weights()
        ess = 1.0 / float(w @ w)
        ess_min = min(ess_min, ess)
        if ess < ESS_FLOOR:
            raise DegeneracyError(ess, k)
        if ess < ess_threshold * n_particles:
            idx = _systematic_resample(w, rng)
            x = x[idx]
            logw = np.zeros(n_particles)
            w = np.full(n_particles, 1.0 / n_particles)
            n_resamples += 1
            if path.kind == "control":
                spread = float(np.std(x))
                if spread > 0.0:
                    x = x + jitter_h * spread * rng.standard_normal(n_particles)

        if path.kind == "control":
            x = x + np.asarray(sys.f(t, x), dtype=float) * dt \
                + np.asarray(sys.b(t, x), dtype=float) * dchan
        else:
            amp = np.sqrt(sys.noise_scale)
            x = x + np.asarray(sys.drift_closed(t, x), dtype=float) * dt \
                + np.asarray(sys.b(t, x), dtype=float) * amp \
                * sqdt * rng.standard_normal(n_particles)
        t += dt
        record(k + 1, t, w)
    return ParticleRun(
        grid=grid,
        mean=mean,
        var=var,
        pi_target=pi_t,
        pi_target_sq=pi_t2,
        ess_min=ess_min,
        n_resamples=n_resamples,
    )
