"""Path simulation for the control and observation channels.

All simulators use Euler integration of the state with the channel
increments recorded exactly as an estimator would see them.  Randomness
follows a counter-based derivation: path ``i`` of a run seeded with
``master_seed`` draws from generators seeded by the entropy tuple
(master_seed, i, stream), where stream 0 is the initial condition,
stream 1 the channel/process noise w and stream 2 the observation
noise v.  The same tuple always yields the same increments, so control
and observation runs sharing a SeedSpec are driven by the identical
w-stream, and batching or parallelism cannot change any path.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import ConfigError, DivergedError
from .grids import TimeGrid
from .statespace import LtiSystem, LtvSystem, NonlinearScalarSystem

#: paths whose state norm passes this are declared diverged
EXPLOSION_BOUND = 1e8

_STREAM_X0 = 0
_STREAM_W = 1
_STREAM_V = 2


@dataclass(frozen=True)
class SeedSpec:
    """Reproducibility contract for a Monte Carlo run."""

    master_seed: int

    def generator(self, path_index: int, stream: int) -> np.random.Generator:
        """Deterministic per-path, per-stream generator."""
        return np.random.default_rng(
            [int(self.master_seed), int(path_index), int(stream)]
        )


@dataclass
class SamplePath:
    """One simulated path with everything an estimator needs.

    states has shape (n_steps + 1, n); dw holds the standard Brownian
    increments of the channel/process noise, dv those of the observation
    noise (None for control runs); channel holds the recorded channel
    increments, i.e. de for control runs and dy for observation runs.
    """

    grid: TimeGrid
    kind: str                  # "control" | "observation"
    states: np.ndarray
    dw: np.ndarray
    dv: Optional[np.ndarray]
    channel: np.ndarray
    path_index: int
    master_seed: int


def _draw_x0(rng: np.random.Generator, n: int, x0_draw) -> np.ndarray:
    if x0_draw is None:
        return rng.standard_normal(n)
    x0 = np.atleast_1d(np.asarray(x0_draw(rng), dtype=float))
    if x0.shape != (n,):
        raise ConfigError(f"x0_draw returned shape {x0.shape}, expected ({n},)")
    return x0


def _linear_coeffs(sys):
    """Return (A(t), B(t), C(t), K(t)) callables for LTI or LTV systems."""
    if isinstance(sys, LtiSystem):
        a, b, c, k = sys.A, sys.B, sys.C, sys.K
        return (
            lambda t: a,
            lambda t: b,
            None if c is None else (lambda t: c),
            None if k is None else (lambda t: k),
        )
    if isinstance(sys, LtvSystem):
        return sys.A, sys.B, sys.C, sys.K
    raise ConfigError(f"expected a linear system, got {type(sys).__name__}")


def _check_norm(x, step):
    m = float(np.max(np.abs(x)))
    if not np.isfinite(m) or m > EXPLOSION_BOUND:
        raise DivergedError(step, m, EXPLOSION_BOUND)


def simulate_control_loop(
    sys,
    grid: TimeGrid,
    seeds: SeedSpec,
    path_index: int = 0,
    x0_draw: Optional[Callable] = None,
    zero_noise: bool = False,
) -> SamplePath:
    """Simulate the closed loop and record the channel output increments.

    Linear systems evolve dx = A x dt + B de with de = K x dt + dw; the
    plant is therefore driven by the channel output, which is what makes
    de the only thing an estimator may look at.  Scalar nonlinear systems
    evolve dx = f dt + b de with de = u(t, x) dt + dw.

    Raises
    ------
    DivergedError
        When the state norm exceeds EXPLOSION_BOUND; carries the step.
    """
    rng_x0 = seeds.generator(path_index, _STREAM_X0)
    rng_w = seeds.generator(path_index, _STREAM_W)
    dt = grid.dt
    sqdt = np.sqrt(dt)

    if isinstance(sys, NonlinearScalarSystem):
        if sys.u is None:
            raise ConfigError("control-loop simulation needs a control law u")
        x0 = _draw_x0(rng_x0, 1, x0_draw)
        dw = np.zeros((grid.n_steps, 1)) if zero_noise else \
            sqdt * rng_w.standard_normal((grid.n_steps, 1))
        states = np.empty((grid.n_steps + 1, 1))
        de = np.empty((grid.n_steps, 1))
        x = float(x0[0])
        states[0, 0] = x
        t = grid.t0
        for step in range(grid.n_steps):
            u = float(sys.u(t, x))
            inc = u * dt + dw[step, 0]
            de[step, 0] = inc
            x = x + float(sys.f(t, x)) * dt + float(sys.b(t, x)) * inc
            _check_norm(x, step)
            states[step + 1, 0] = x
            t += dt
        return SamplePath(grid, "control", states, dw, None, de,
                          path_index, seeds.master_seed)

    a_fn, b_fn, _c_fn, k_fn = _linear_coeffs(sys)
    if k_fn is None:
        raise ConfigError("control-loop simulation needs a feedback gain K")
    n = sys.n
    m = np.asarray(b_fn(grid.t0)).shape[1]
    x0 = _draw_x0(rng_x0, n, x0_draw)
    dw = np.zeros((grid.n_steps, m)) if zero_noise else \
        sqdt * rng_w.standard_normal((grid.n_steps, m))
    states = np.empty((grid.n_steps + 1, n))
    de = np.empty((grid.n_steps, m))
    x = x0.copy()
    states[0] = x
    t = grid.t0
    for step in range(grid.n_steps):
        inc = (k_fn(t) @ x) * dt + dw[step]
        de[step] = inc
        x = x + (a_fn(t) @ x) * dt + b_fn(t) @ inc
        _check_norm(x, step)
        states[step + 1] = x
        t += dt
    return SamplePath(grid, "control", states, dw, None, de,
                      path_index, seeds.master_seed)


def simulate_observation(
    sys,
    grid: TimeGrid,
    seeds: SeedSpec,
    path_index: int = 0,
    x0_draw: Optional[Callable] = None,
    noise_scale: Optional[float] = None,
    zero_noise: bool = False,
) -> SamplePath:
    """Simulate a hidden state observed through an additive-noise channel.

    Linear: dx = A x dt + sqrt(eps) B dw, dy = C x dt + dv.  Nonlinear
    scalar: dx = (f + b u) dt + b sqrt(eps) dw, dy = z(t, x) dt + dv.
    eps is the process-noise covariance scale (sys.noise_scale for
    nonlinear systems unless overridden).  The w-stream is drawn from the
    same per-path stream as in simulate_control_loop, so runs sharing a
    SeedSpec are coupled through identical w increments.
    """
    rng_x0 = seeds.generator(path_index, _STREAM_X0)
    rng_w = seeds.generator(path_index, _STREAM_W)
    rng_v = seeds.generator(path_index, _STREAM_V)
    dt = grid.dt
    sqdt = np.sqrt(dt)

    if isinstance(sys, NonlinearScalarSystem):
        if sys.z is None:
            raise ConfigError("observation simulation needs an output map z")
        eps = sys.noise_scale if noise_scale is None else noise_scale
        amp = np.sqrt(eps)
        x0 = _draw_x0(rng_x0, 1, x0_draw)
        dw = np.zeros((grid.n_steps, 1)) if zero_noise else \
            sqdt * rng_w.standard_normal((grid.n_steps, 1))
        dv = np.zeros((grid.n_steps, 1)) if zero_noise else \
            sqdt * rng_v.standard_normal((grid.n_steps, 1))
        states = np.empty((grid.n_steps + 1, 1))
        dy = np.empty((grid.n_steps, 1))
        x = float(x0[0])
        states[0, 0] = x
        t = grid.t0
        for step in range(grid.n_steps):
            dy[step, 0] = float(sys.z(t, x)) * dt + dv[step, 0]
            x = x + float(sys.drift_closed(t, x)) * dt \
                + float(sys.b(t, x)) * amp * dw[step, 0]
            _check_norm(x, step)
            states[step + 1, 0] = x
            t += dt
        return SamplePath(grid, "observation", states, dw, dv, dy,
                          path_index, seeds.master_seed)

    a_fn, b_fn, c_fn, _k_fn = _linear_coeffs(sys)
    if c_fn is None:
        raise ConfigError("observation simulation needs an output map C")
    eps = 1.0 if noise_scale is None else noise_scale
    amp = np.sqrt(eps)
    n = sys.n
    m = np.asarray(b_fn(grid.t0)).shape[1]
    p = np.asarray(c_fn(grid.t0)).shape[0]
    x0 = _draw_x0(rng_x0, n, x0_draw)
    dw = np.zeros((grid.n_steps, m)) if zero_noise else \
        sqdt * rng_w.standard_normal((grid.n_steps, m))
    dv = np.zeros((grid.n_steps, p)) if zero_noise else \
        sqdt * rng_v.standard_normal((grid.n_steps, p))
    states = np.empty((grid.n_steps + 1, n))
    dy = np.empty((grid.n_steps, p))
    x = x0.copy()
    states[0] = x
    t = grid.t0
    for step in range(grid.n_steps):
        dy[step] = (c_fn(t) @ x) * dt + dv[step]
        x = x + (a_fn(t) @ x) * dt + amp * (b_fn(t) @ dw[step])
        _check_norm(x, step)
        states[step + 1] = x
        t += dt
    return SamplePath(grid, "observation", states, dw, dv, dy,
                      path_index, seeds.master_seed)


def ou_exact_path(
    alpha: float,
    grid: TimeGrid,
    seeds: SeedSpec,
    path_index: int = 0,
    y0: Optional[float] = None,
) -> np.ndarray:
    """Sample dy = alpha y dt + dw on the grid using the exact transition law.

    Consumes the same stream-1 normals as the Euler simulators (scaled to
    increments dw = sqrt(dt) xi), so a coupled strong comparison against
    Euler output is meaningful.  Returns the state sequence, shape
    (n_steps + 1,).
    """
    rng_x0 = seeds.generator(path_index, _STREAM_X0)
    rng_w = seeds.generator(path_index, _STREAM_W)
    dt = grid.dt
    if y0 is None:
        y0 = float(rng_x0.standard_normal(1)[0])
    xi = rng_w.standard_normal(grid.n_steps)
    decay = np.exp(alpha * dt)
    if abs(alpha) < 1e-14:
        step_std = np.sqrt(dt)
    else:
        step_std = np.sqrt((np.exp(2.0 * alpha * dt) - 1.0) / (2.0 * alpha))
    out = np.empty(grid.n_steps + 1)
    out[0] = y0
    y = y0
    for k in range(grid.n_steps):
        y = y * decay + step_std * xi[k]
        out[k + 1] = y
    return out


class BatchStreams:
    """Per-path noise streams drawn in step chunks for batched simulation.

    Each path keeps its own generator, so the values any single path sees
    are identical to a one-path run; only the layout is batched.
    """

    def __init__(self, seeds: SeedSpec, path_indices, dim: int, stream: int):
        self._gens = [seeds.generator(i, stream) for i in path_indices]
        self.dim = int(dim)

    def normals(self, n_steps: int) -> np.ndarray:
        """Standard normals, shape (n_paths, n_steps, dim)."""
        out = np.empty((len(self._gens), n_steps, self.dim))
        for row, gen in enumerate(self._gens):
            out[row] = gen.standard_normal((n_steps, self.dim))
        return out


def draw_x0_batch(
    seeds: SeedSpec,
    path_indices,
    n: int,
    x0_draw: Optional[Callable] = None,
) -> np.ndarray:
    """Initial conditions for a batch, one stream-0 generator per path."""
    out = np.empty((len(path_indices), n))
    for row, idx in enumerate(path_indices):
        out[row] = _draw_x0(seeds.generator(idx, _STREAM_X0), n, x0_draw)
    return out
