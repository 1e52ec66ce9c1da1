import mpmath as mp
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from mtm.densities import GaussianProposal, TargetDensity, gaussian_target
from mtm.errors import ConfigurationError, InvariantViolation, UsageError
from mtm.experiments import SensorModel
from mtm.weights import (
    DM_MIXTURE,
    LIU_LAMBDA,
    WeightSpec,
    dm_log_weight,
    importance_log_weight,
    liu_log_weight,
    log_mean_weight,
    named_log_lambda,
    normalize_and_select,
    normalizing_constant_estimate,
)

mp.mp.dps = 40
SENSOR = SensorModel()


def mp_sensor_log(x):
    total = mp.mpf(0)
    for (h1, h2), r in zip(SENSOR.anchors, SENSOR.observations):
        d = mp.sqrt((mp.mpf(x[0]) - h1) ** 2 + (mp.mpf(x[1]) - h2) ** 2)
        mean = 10 * mp.log(d / mp.mpf("0.3"))
        total -= (mp.mpf(r) - mean) ** 2 / 10
    return total


def mp_normal(x, mean, sigma):
    s2 = mp.mpf(sigma) ** 2
    return -mp.log(2 * mp.pi * s2) - ((mp.mpf(x[0]) - mean[0]) ** 2 + (mp.mpf(x[1]) - mean[1]) ** 2) / (2 * s2)


def test_importance_weight_on_sensor_target():
    q = GaussianProposal.independent([0.0, 0.0], 1.0)
    z = np.array([-1.0, 0.0])
    ref = mp_sensor_log(z) - mp_normal(z, [0, 0], 1)
    assert importance_log_weight(z, SENSOR.target(), q) == pytest.approx(float(ref), abs=1e-11)


def test_dm_weight_on_sensor_target():
    comps = [GaussianProposal.independent([-6.0, -6.0], 1.25), GaussianProposal.independent([0.0, 0.0], 1.25)]
    z = np.array([-1.0, -2.0])
    log_psi = mp.log((mp.exp(mp_normal(z, [-6, -6], 1.25)) + mp.exp(mp_normal(z, [0, 0], 1.25))) / 2)
    ref = mp_sensor_log(z) - log_psi
    assert dm_log_weight(z, SENSOR.target(), comps) == pytest.approx(float(ref), abs=1e-11)


def test_zero_target_gives_zero_weight_and_zero_proposal_raises():
    t = TargetDensity(2, lambda x: np.full(x.shape[:-1], -np.inf))
    q = GaussianProposal.independent([0.0, 0.0], 1.0)
    assert importance_log_weight(np.zeros(2), t, q) == -np.inf

    class Zero:
        def log_density(self, z, condition=None):
            return np.full(np.shape(z)[:-1], -np.inf)

    with pytest.raises(InvariantViolation):
        importance_log_weight(np.zeros(2), gaussian_target([0, 0], np.eye(2)), Zero())


def test_liu_with_importance_lambda_is_importance_weight():
    t = SENSOR.target()
    q = GaussianProposal.independent([-1.0, -2.0], 1.3)
    z, x = np.array([0.4, -2.2]), np.array([-3.0, 1.0])
    lam = named_log_lambda("importance", q)
    assert liu_log_weight(z, x, t, q, lam) == pytest.approx(importance_log_weight(z, t, q), abs=1e-12)


@given(arrays(np.float64, 2, elements=st.floats(-8, 8)), arrays(np.float64, 2, elements=st.floats(-8, 8)))
def test_named_lambdas_are_symmetric(z, x):
    q = GaussianProposal.independent([-1.0, -2.0], 1.3)
    for name in ("constant", "importance", "inverse-sum"):
        lam = named_log_lambda(name, q)
        assert lam(z, x) == pytest.approx(lam(x, z), abs=1e-12)


def test_liu_rejects_non_positive_lambda():
    q = GaussianProposal.independent([0.0, 0.0], 1.0)
    with pytest.raises(ConfigurationError):
        liu_log_weight(np.zeros(2), np.ones(2), SENSOR.target(), q, lambda z, x: np.array(-np.inf))
    with pytest.raises(ConfigurationError):
        named_log_lambda("cubic", q)


def test_weight_spec_validation():
    with pytest.raises(ConfigurationError):
        WeightSpec("nope")
    with pytest.raises(ConfigurationError):
        WeightSpec(LIU_LAMBDA)
    with pytest.raises(ConfigurationError):
        WeightSpec("importance", log_lambda=lambda z, x: 0.0)
    with pytest.raises(ConfigurationError):
        WeightSpec(DM_MIXTURE, components=[])


def test_selection_probabilities_and_frequencies(rng):
    log_w = np.log([0.1, 0.6, 0.3])
    sel = normalize_and_select(log_w, rng)
    np.testing.assert_allclose(sel.probs, [0.1, 0.6, 0.3], rtol=1e-14)
    counts = np.bincount([normalize_and_select(log_w, rng).index for _ in range(30_000)], minlength=3)
    np.testing.assert_allclose(counts / 30_000, [0.1, 0.6, 0.3], atol=0.015)


def test_selection_survives_huge_gaps(rng):
    sel = normalize_and_select(np.array([-1000.0, 0.0, -2000.0]), rng)
    assert sel.index == 1
    assert np.all(np.isfinite(sel.probs))
    assert sel.probs[1] == 1.0
    sel = normalize_and_select(np.array([-1e6, -1e6 + 1e3]), rng)
    assert sel.index == 1 and np.isfinite(sel.probs).all()


def test_degenerate_weights_draw_nothing():
    rng = np.random.default_rng(3)
    before = rng.bit_generator.state
    sel = normalize_and_select(np.full(4, -np.inf), rng)
    assert sel.degenerate and sel.index is None
    assert np.all(sel.probs == 0.0)
    assert rng.bit_generator.state == before


@pytest.mark.parametrize("bad", [[np.nan, 0.0], [np.inf, 0.0], [], [[0.0]]])
def test_bad_log_weights(bad, rng):
    with pytest.raises((InvariantViolation, UsageError)):
        normalize_and_select(np.array(bad, dtype=float), rng)


@given(
    arrays(np.float64, st.integers(1, 12), elements=st.floats(-700, 700)),
    st.floats(-1e4, 1e4),
    st.integers(0, 2**32 - 1),
)
def test_selection_is_shift_invariant(log_w, c, seed):
    a = normalize_and_select(log_w, np.random.default_rng(seed))
    b = normalize_and_select(log_w + c, np.random.default_rng(seed))
    np.testing.assert_allclose(a.probs, b.probs, atol=1e-12)
    assert abs(a.probs.sum() - 1.0) < 1e-12
    # Gumbel keys shift uniformly, so the argmax cannot move unless two keys
    # are within rounding of each other
    if a.index != b.index:
        keys = log_w + np.random.default_rng(seed).gumbel(size=log_w.size)
        assert abs(keys[a.index] - keys[b.index]) < 1e-9 * (1 + abs(c))


def test_log_mean_weight():
    assert log_mean_weight(np.log([1.0, 2.0, 3.0])) == pytest.approx(np.log(2.0), abs=1e-15)
    assert log_mean_weight(np.array([-np.inf, -np.inf])) == -np.inf


def test_normalizing_constant_of_scaled_gaussian(rng):
    t = gaussian_target([0.0, 0.0], np.eye(2), normalized=False)
    q = GaussianProposal.independent([0.5, 0.0], 2.0)
    est = [normalizing_constant_estimate(q.sample(rng, size=10), t, q) for _ in range(4000)]
    assert np.mean(est) == pytest.approx(t.known_normalizer, rel=0.03)
    with pytest.raises(UsageError):
        normalizing_constant_estimate(np.empty((0, 2)), t, q)
