"""Registry-level tests: lookup, override validation, result shape."""

import numpy as np
import pytest

from infolim.errors import ConfigError
from infolim.experiments import (
    REGISTRY,
    companion_from_poles,
    list_experiments,
    minimum_energy_gain,
    run_experiment,
)

EXPECTED_NAMES = [
    "appendix_a",
    "lti_prop36",
    "lti_lemma37_nonlinear_k",
    "ltv_prop311",
    "ltv_cor312",
    "nl_prop314",
    "filt_prop45",
    "filt_lemma46_expansion",
    "filt_prop48",
    "nl_prop49",
    "bode_lemma310",
    "capacity_thm34",
    "capacity_thm43",
]


def test_registry_names():
    assert sorted(REGISTRY) == sorted(EXPECTED_NAMES)
    listed = list_experiments()
    assert [name for name, _ in listed] == list(REGISTRY)
    assert all(desc for _, desc in listed)


def test_unknown_experiment_rejected():
    with pytest.raises(ConfigError, match="unknown experiment"):
        run_experiment("no_such_experiment")


def test_unknown_parameter_rejected():
    with pytest.raises(ConfigError, match="unknown parameter"):
        run_experiment("capacity_thm43", {"n_pafs": 10})


def test_system_override_rejected_where_unsupported():
    with pytest.raises(ConfigError, match="system override"):
        run_experiment("appendix_a", {"system": {"kind": "lti", "A": [[1.0]]}})


def test_none_overrides_fall_back_to_defaults():
    spec = REGISTRY["capacity_thm43"]
    with pytest.raises(ConfigError):
        # None values are dropped before validation, so only the bogus
        # key should be reported
        run_experiment("capacity_thm43", {"horizon": None, "bogus": 1})
    assert spec.defaults["horizon"] == 10.0


def test_companion_from_poles():
    a, b = companion_from_poles([2.0, 0.5, -1.0])
    assert a.shape == (3, 3)
    assert b.shape == (3, 1)
    eig = np.sort_complex(np.linalg.eigvals(a))
    assert np.allclose(eig, np.sort_complex(np.array([2.0, 0.5, -1.0])),
                       atol=1e-9)
    with pytest.raises(ConfigError):
        companion_from_poles([])


def test_minimum_energy_gain_mirrors_antistable_poles():
    a, b = companion_from_poles([1.0, -1.0])
    k = minimum_energy_gain(a, b)
    closed = np.linalg.eigvals(a + b @ k)
    assert np.allclose(np.sort(closed.real), [-1.0, -1.0], atol=1e-6)
    assert np.max(np.abs(closed.imag)) < 1e-6


def test_capacity_experiment_end_to_end(tmp_path):
    result = run_experiment(
        "capacity_thm43", {"n_paths": 120, "horizon": 6.0, "dt": 2e-3})
    assert result.name == "capacity_thm43"
    assert result.params["n_paths"] == 120
    assert result.params["horizon"] == 6.0
    assert result.passed
    assert result.runtime_seconds > 0.0
    assert all(np.isfinite(v) for v in result.metrics.values())
    assert result.verdicts and all(v.passed for v in result.verdicts)
    assert result.series
    for series in result.series:
        lengths = {len(col) for col in series.columns.values()}
        assert len(lengths) == 1
        assert lengths.pop() <= 2001
    assert result.figures
    for fig in result.figures:
        for series_name, x_col, y_col, _label in fig.lines:
            match = [s for s in result.series if s.name == series_name]
            assert len(match) == 1
            assert x_col in match[0].columns
            assert y_col in match[0].columns
    assert callable(result.path_dump)
    dump = result.path_dump(0)
    assert "t" in dump.columns
    lengths = {len(col) for col in dump.columns.values()}
    assert len(lengths) == 1


def test_capacity_system_override_runs():
    override = {
        "kind": "lti",
        "A": [[-2.0, 0.0], [0.0, 0.5]],
        "C": [[1.0, 0.0], [0.0, 1.0]],
        "n_stable": 1,
    }
    result = run_experiment(
        "capacity_thm43",
        {"system": override, "n_paths": 80, "horizon": 6.0, "dt": 2e-3,
         "budget_margin": 1.5},
    )
    assert result.passed
