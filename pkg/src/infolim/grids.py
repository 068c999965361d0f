"""Uniform time grids shared by the integrators and simulators."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid on [t0, t0 + horizon] with step dt.

    n_steps is derived by rounding horizon/dt; the rounded product must
    reproduce the horizon to 1e-9 relative accuracy so that "horizon" in
    reports always means what was asked for.
    """

    horizon: float
    dt: float = 1e-3
    t0: float = 0.0
    n_steps: int = field(init=False)

    def __post_init__(self):
        if not (self.horizon > 0 and np.isfinite(self.horizon)):
            raise ConfigError(f"horizon must be positive and finite, got {self.horizon}")
        if not (self.dt > 0 and np.isfinite(self.dt)):
            raise ConfigError(f"dt must be positive and finite, got {self.dt}")
        n = int(round(self.horizon / self.dt))
        if n < 1:
            raise ConfigError(f"horizon {self.horizon} shorter than dt {self.dt}")
        if abs(n * self.dt - self.horizon) > 1e-9 * max(1.0, self.horizon):
            raise ConfigError(
                f"horizon {self.horizon} is not an integer multiple of dt {self.dt}"
            )
        object.__setattr__(self, "n_steps", n)

    @classmethod
    def of_steps(cls, horizon: float, n_steps: int, t0: float = 0.0) -> "TimeGrid":
        """Grid with exactly n_steps steps; dt = horizon / n_steps.

        Convenient for horizons like integer multiples of 2*pi that no
        round decimal step divides.
        """
        if n_steps < 1:
            raise ConfigError(f"n_steps must be positive, got {n_steps}")
        return cls(horizon=horizon, dt=horizon / n_steps, t0=t0)

    @property
    def times(self) -> np.ndarray:
        """Grid times including both endpoints, shape (n_steps + 1,)."""
        return self.t0 + self.dt * np.arange(self.n_steps + 1)

    def tail_start(self) -> int:
        """Index opening the trailing half-window used for rate averages."""
        return self.n_steps // 2
