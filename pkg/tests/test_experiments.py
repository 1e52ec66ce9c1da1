import pickle

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mtm.densities import gaussian_target
from mtm.errors import ConfigurationError, UsageError
from mtm.experiments import (
    CONF2,
    POSTERIOR_MEAN,
    ExperimentConfig,
    SensorModel,
    build_sampler,
    escape_time,
    grid_posterior_mean,
    mse_estimate,
    run_experiment,
    sensor_log_target,
)


def test_sensor_log_target_formula():
    m = SensorModel()
    x = np.array([1.5, -0.5])
    d = np.linalg.norm(x - np.array(m.anchors), axis=1)
    expected = -np.sum((np.array(m.observations) - 10 * np.log(d / 0.3)) ** 2) / 10
    assert sensor_log_target(x, m) == pytest.approx(expected, rel=1e-14)
    b10 = SensorModel(log_base="base-10", slope=-10.0)
    expected = -np.sum((np.array(m.observations) + 10 * np.log10(d / 0.3)) ** 2) / 10
    assert sensor_log_target(x, b10) == pytest.approx(expected, rel=1e-14)


def test_sensor_target_is_minus_inf_on_anchors():
    m = SensorModel()
    assert np.all(sensor_log_target(np.array(m.anchors), m) == -np.inf)
    assert sensor_log_target(np.array(m.anchors), SensorModel(slope=-10.0)).max() == -np.inf


@given(st.permutations(range(6)), st.floats(-9, 9), st.floats(-9, 9))
def test_sensor_target_invariant_to_anchor_relabeling(perm, a, b):
    m = SensorModel()
    p = SensorModel(anchors=tuple(m.anchors[i] for i in perm), observations=tuple(m.observations[i] for i in perm))
    x = np.array([a, b])
    assert sensor_log_target(x, p) == pytest.approx(sensor_log_target(x, m), rel=1e-12, abs=1e-12)


def test_sensor_model_validation_and_pickling():
    with pytest.raises(ConfigurationError):
        SensorModel(anchors=((0.0, 0.0), (0.0, 0.0)), observations=(1.0, 2.0))
    with pytest.raises(ConfigurationError):
        SensorModel(noise_variance=0.0)
    with pytest.raises(ConfigurationError):
        SensorModel(log_base="base-2")
    t = pickle.loads(pickle.dumps(SensorModel().target()))
    assert t(np.zeros(2) + 1) == SensorModel().target()(np.zeros(2) + 1)


def test_grid_mean_of_symmetric_gaussian_is_center():
    t = gaussian_target([1.0, -2.0], np.eye(2))
    mean = grid_posterior_mean(t, ((-5.0, 7.0), (-8.0, 4.0)), 200)
    np.testing.assert_allclose(mean, [1.0, -2.0], atol=1e-12)


def test_grid_mean_refinement_is_stable():
    m = SensorModel()
    a = grid_posterior_mean(m, resolution=200)
    b = grid_posterior_mean(m, resolution=400)
    assert np.all(np.abs(a - b) < 0.01)


def test_grid_mean_argument_checks():
    with pytest.raises(UsageError):
        grid_posterior_mean(SensorModel(), resolution=10)
    with pytest.raises(UsageError):
        grid_posterior_mean(SensorModel(), box=((1.0, -1.0), (0.0, 1.0)))


def test_escape_time_edge_cases():
    x0, mu = np.array([-6.0, -6.0]), np.array(POSTERIOR_MEAN)
    stuck = np.tile(x0, (11, 1))
    assert escape_time(stuck, x0, mu) == 10
    jump = np.vstack([x0, mu, x0])
    assert escape_time(jump, x0, mu) == 1
    with pytest.raises(UsageError):
        escape_time(x0[None, :], x0, mu)


@given(st.lists(st.tuples(st.floats(-8, 8), st.floats(-8, 8)), min_size=2, max_size=30),
       st.lists(st.tuples(st.floats(-8, 8), st.floats(-8, 8)), max_size=10))
def test_escape_time_bounds_and_suffix_invariance(states, tail):
    x0, mu = np.array([-6.0, -6.0]), np.array(POSTERIOR_MEAN)
    s = np.vstack([x0, np.array(states)])
    tau = escape_time(s, x0, mu)
    assert 1 <= tau <= len(states)
    if tau < len(states) or np.linalg.norm(s[-1] - x0) > np.linalg.norm(s[-1] - mu):
        if tail:
            assert escape_time(np.vstack([s, np.array(tail)]), x0, mu) == tau


def test_mse_of_exact_chains_is_zero():
    mu = np.array([1.0, 2.0])
    assert mse_estimate([np.tile(mu, (5, 1))] * 3, mu) == 0.0
    assert mse_estimate([np.array([[0.0, 0.0], [2.0, 0.0]])], [0.0, 0.0]) == pytest.approx(1.0)


def test_experiment_config_validation():
    with pytest.raises(ConfigurationError):
        ExperimentConfig(schemes=("rw-fancy",))
    with pytest.raises(ConfigurationError):
        ExperimentConfig(schemes=("imtm-standard",), n_grid=(3,))
    with pytest.raises(ConfigurationError):
        ExperimentConfig(x0="random")
    with pytest.raises(ConfigurationError):
        ExperimentConfig(sigma_grid=(0.0,))
    with pytest.raises(ConfigurationError):
        ExperimentConfig(runs=0)


def test_build_sampler_schemes():
    assert build_sampler("rw-variable-n", 1.0, 50, 10).schedule == (1, 50, 99)
    assert build_sampler("rw-standard", 1.0, 50, 10).schedule == (50,)
    dm = build_sampler("imtm-dm", 1.3, 4, 10, CONF2)
    assert dm.n_tries == 4 and dm.weight_spec.kind == "dm-mixture" and dm.dm_rule == "generic"
    assert build_sampler("imtm-mixture", 1.3, 2, 10).sampling_mode == "mixture"


def test_cells_do_not_depend_on_grid_order():
    kw = dict(schemes=("rw-standard", "rw-variable-n"), runs=3, chain_length=150)
    a = run_experiment(ExperimentConfig(sigma_grid=(0.8, 1.0), n_grid=(5, 10), **kw))
    b = run_experiment(ExperimentConfig(sigma_grid=(1.0, 0.8), n_grid=(10, 5), **kw))
    for cell in a.cells:
        assert b.cell(cell.scheme, cell.sigma, cell.n_tilde).taus == cell.taus


def test_workers_do_not_change_results():
    cfg = ExperimentConfig(schemes=("imtm-dm",), sigma_grid=(1.3,), n_grid=(2,), runs=4, chain_length=100,
                           x0="uniform", proposal_means=CONF2)
    a, b = run_experiment(cfg), run_experiment(cfg, workers=2)
    assert a == b
    assert a.cells[0].mse is not None and a.cells[0].runs_completed == 4


def test_summary_fields():
    c = run_experiment(ExperimentConfig(runs=3, n_grid=(5,), chain_length=100)).cells[0]
    assert c.complete and c.mse is None and 1 <= c.mean_tau <= 100
    assert c.tau_se == pytest.approx(np.std(c.taus, ddof=1) / np.sqrt(3))
