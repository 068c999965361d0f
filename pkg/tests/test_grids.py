import numpy as np
import pytest

from infolim.errors import ConfigError
from infolim.grids import TimeGrid


def test_basic_construction():
    g = TimeGrid(horizon=2.0, dt=0.5)
    assert g.n_steps == 4
    np.testing.assert_allclose(g.times, [0.0, 0.5, 1.0, 1.5, 2.0])


def test_of_steps_handles_irrational_horizon():
    g = TimeGrid.of_steps(32.0 * np.pi, 100_000)
    assert g.n_steps == 100_000
    assert g.times.size == 100_001
    np.testing.assert_allclose(g.times[-1], 32.0 * np.pi)


def test_offset_origin():
    g = TimeGrid(horizon=1.0, dt=0.25, t0=3.0)
    np.testing.assert_allclose(g.times[0], 3.0)
    np.testing.assert_allclose(g.times[-1], 4.0)


def test_tail_start_is_midpoint():
    g = TimeGrid(horizon=10.0, dt=0.1)
    assert g.tail_start() == g.n_steps // 2


def test_rejects_non_divisible_horizon():
    with pytest.raises(ConfigError):
        TimeGrid(horizon=1.0, dt=0.3)


@pytest.mark.parametrize("horizon,dt", [(-1.0, 0.1), (1.0, -0.1), (0.0, 0.1),
                                        (np.inf, 0.1), (1.0, 0.0)])
def test_rejects_bad_parameters(horizon, dt):
    with pytest.raises(ConfigError):
        TimeGrid(horizon=horizon, dt=dt)


def test_of_steps_rejects_nonpositive_steps():
    with pytest.raises(ConfigError):
        TimeGrid.of_steps(1.0, 0)
