import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from rbmshape import synth
from rbmshape.energy import Standardizer, TrainConfig
from rbmshape.frontal import SamplerConfig
from rbmshape.pose import (
    TRANSFER_OFFSET, PosePriorModel, ThreeWayParams, correct_pose_shape, h_given_xy, reconstruct_y,
    sample_pose_prior, threeway_energy, threeway_update, train_threeway, x_mean_given_hy, y_mean_given_xh,
)


def random_threeway(rng, v=4, k=6, f=3, scale=0.5):
    return ThreeWayParams(scale * rng.normal(size=(v, f)), scale * rng.normal(size=(v, f)),
                          scale * rng.normal(size=(k, f)), rng.normal(size=v), rng.normal(size=v),
                          rng.normal(size=k))


def args(p):
    return p.factor_x, p.factor_y, p.factor_h, p.bias_x, p.bias_y, p.bias_h


def rms(a, b):
    return float(np.sqrt(np.mean((np.asarray(a) - np.asarray(b)) ** 2)))


class TestEnergy:
    def test_zero(self):
        assert threeway_energy(np.zeros(2), np.zeros(2), np.zeros(3), ThreeWayParams.zeros(2, 3, 2)) == 0.0

    def test_unit(self):
        p = ThreeWayParams([[1.0]], [[1.0]], [[1.0]], [0.0], [0.0], [0.0])
        assert threeway_energy([1.0], [1.0], [1.0], p) == pytest.approx(0.0, abs=1e-15)

    def test_matches_loops(self):
        rng = np.random.default_rng(0)
        for _ in range(10):
            p = random_threeway(rng)
            x, y = rng.normal(size=4), rng.normal(size=4)
            h = (rng.uniform(size=6) < 0.5).astype(float)
            assert threeway_energy(x, y, h, p) == pytest.approx(oracles.threeway_energy_loops(x, y, h, *args(p)), abs=1e-12)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 10_000))
    def test_swap_symmetry(self, seed):
        rng = np.random.default_rng(seed)
        p = random_threeway(rng)
        x, y = rng.normal(size=4), rng.normal(size=4)
        h = (rng.uniform(size=6) < 0.5).astype(float)
        assert threeway_energy(y, x, h, p.swapped()) == threeway_energy(x, y, h, p)

    def test_dimension_mismatch(self):
        p = ThreeWayParams.zeros(3, 2, 2)
        with pytest.raises(ValueError):
            threeway_energy(np.zeros(4), np.zeros(3), np.zeros(2), p)
        with pytest.raises(ValueError):
            h_given_xy(np.zeros(3), np.zeros(2), p)
        with pytest.raises(ValueError):
            y_mean_given_xh(np.zeros(3), np.zeros(5), p)

    def test_validation(self):
        with pytest.raises(ValueError):
            ThreeWayParams(np.zeros((3, 2)), np.zeros((3, 3)), np.zeros((2, 2)), np.zeros(3), np.zeros(3), np.zeros(2))
        with pytest.raises(ValueError):
            ThreeWayParams([[np.inf]], [[0.0]], [[0.0]], [0.0], [0.0], [0.0])


class TestConditionals:
    def test_zero_model(self):
        p = ThreeWayParams.zeros(3, 4, 2)
        np.testing.assert_array_equal(h_given_xy(np.ones(3), np.ones(3), p), 0.5)
        np.testing.assert_array_equal(y_mean_given_xh(np.ones(3), np.ones(4), p), 0.0)

    def test_unit_sigmoid(self):
        p = ThreeWayParams([[1.0]], [[1.0]], [[1.0]], [0.0], [0.0], [0.0])
        assert h_given_xy([1.0], [1.0], p)[0] == pytest.approx(0.731059, abs=1e-6)

    def test_zero_hidden_gives_bias(self):
        p = random_threeway(np.random.default_rng(1))
        np.testing.assert_array_equal(x_mean_given_hy(np.zeros(6), np.ones(4), p), p.bias_x)

    def test_hidden_enumeration(self):
        rng = np.random.default_rng(2)
        for _ in range(10):
            p = random_threeway(rng)
            x, y = rng.normal(size=4), rng.normal(size=4)
            ref = oracles.conditional_by_enumeration(lambda h: oracles.threeway_energy_loops(x, y, h, *args(p)), 6)
            np.testing.assert_allclose(h_given_xy(x, y, p), ref, atol=1e-10)

    def test_visible_means_complete_square(self):
        rng = np.random.default_rng(3)
        for _ in range(10):
            p = random_threeway(rng)
            x, y = rng.normal(size=4), rng.normal(size=4)
            h = (rng.uniform(size=6) < 0.5).astype(float)
            mx = oracles.quadratic_minimizer(lambda v: oracles.threeway_energy_loops(v, y, h, *args(p)), x)
            my = oracles.quadratic_minimizer(lambda v: oracles.threeway_energy_loops(x, v, h, *args(p)), y)
            np.testing.assert_allclose(x_mean_given_hy(h, y, p), mx, atol=1e-6)
            np.testing.assert_allclose(y_mean_given_xh(x, h, p), my, atol=1e-6)


class TestPartitionOracle:
    def test_analytic_matches_quadrature(self):
        rng = np.random.default_rng(0)
        p = replace(random_threeway(rng, v=1, k=2, f=2), bias_x=np.array([0.3]), bias_y=np.array([-0.2]))
        assert oracles.threeway_log_partition(*args(p)) == pytest.approx(
            oracles.threeway_log_partition_quadrature(*args(p)), abs=1e-6)

    def test_zero_model(self):
        # K binary units, two V-dim standard Gaussians
        log_z = oracles.threeway_log_partition(*args(ThreeWayParams.zeros(2, 3, 2)))
        assert log_z == pytest.approx(3 * math.log(2) + 2 * math.log(2 * math.pi), abs=1e-12)


class TestTraining:
    def test_zero_learning_rate(self):
        rng = np.random.default_rng(0)
        p = random_threeway(rng)
        new = threeway_update(p, rng.normal(size=(5, 4)), rng.normal(size=(5, 4)),
                              TrainConfig(learning_rate=0.0), rng)
        for name in ThreeWayParams._FIELDS:
            np.testing.assert_array_equal(getattr(new, name), getattr(p, name))

    def test_unpaired(self):
        with pytest.raises(ValueError):
            train_threeway(np.zeros((5, 3)), np.zeros((4, 3)), (2, 2))
        with pytest.raises(ValueError):
            train_threeway(np.zeros((1, 3)), np.zeros((1, 3)), (2, 2))

    def test_deterministic(self):
        rng = np.random.default_rng(0)
        x, y = rng.normal(size=(40, 5)), rng.normal(size=(40, 5))
        cfg = TrainConfig(epochs=5, rng_seed=9)
        a, b = train_threeway(x, y, (3, 2), cfg), train_threeway(x, y, (3, 2), cfg)
        assert repr(a.to_json()) == repr(b.to_json())

    def test_divergence_raises(self):
        rng = np.random.default_rng(0)
        x = 3 * rng.normal(size=(40, 5))
        with np.errstate(all="ignore"), pytest.raises(FloatingPointError):
            train_threeway(x, x, (4, 4), TrainConfig(epochs=200, learning_rate=50.0), rng)

    def test_joint_likelihood_increases(self):
        # y depends linearly on x with unit-variance noise, the model's own conditional form
        th = 0.6
        rot = np.array([[math.cos(th), math.sin(th), 0], [-math.sin(th), math.cos(th), 0], [0, 0, 1]])
        cfg = TrainConfig(epochs=300, learning_rate=0.01, batch_size=10, momentum=0.5, weight_decay=0.0)
        wins = 0
        for seed in range(20):
            rng = np.random.default_rng(500 + seed)
            x = rng.normal(size=(10, 3)) + [1.0, -1.0, 0.5]
            y = 0.4 * x @ rot.T + rng.normal(size=x.shape)
            init = ThreeWayParams.random(3, 4, 3, rng, scale=0.1)
            trained = train_threeway(x, y, (4, 3), cfg, rng, init=init)
            wins += oracles.threeway_loglik(x, y, *args(trained)) > oracles.threeway_loglik(x, y, *args(init))
        assert wins >= 18

    def test_identity_transfer(self, corpus):
        rng = np.random.default_rng(0)
        train, test = corpus[0][:200], corpus[1]
        std = Standardizer.fit(train, offset=TRANSFER_OFFSET)
        p = train_threeway(std.transform(train), std.transform(train), (10, 16),
                           TrainConfig(epochs=200, rng_seed=4), rng)
        zt = std.transform(test)
        assert rms(std.inverse(reconstruct_y(p, zt, zt)), test) < 0.1


class TestPoseModel:
    def test_transfer_accuracy(self, pose_model, corpus):
        x = corpus[1]
        for theta in (-22.5, 22.5):
            y = synth.project_pose(x, theta)
            assert rms(pose_model.transfer_shape(x, y), y) < 0.05

    def test_zero_transfer_centers_on_bias(self, pose_model):
        rng = np.random.default_rng(0)
        bias = rng.normal(size=synth.DIM)
        zero = replace(ThreeWayParams.zeros(synth.DIM, 4, 3), bias_y=bias)
        m = PosePriorModel(pose_model.frontal, zero, pose_model.x_standardizer, pose_model.y_standardizer)
        s = sample_pose_prior(m, synth.TEMPLATE.xy, SamplerConfig(1, 5000), rng)
        z = m.y_standardizer.transform(s)
        assert np.abs(z.mean(axis=0) - bias).max() < 5 / np.sqrt(5000)

    def test_deterministic(self, pose_model, corpus):
        y = synth.project_pose(corpus[1][0], 22.5)
        a = sample_pose_prior(pose_model, y, SamplerConfig(), np.random.default_rng(3))
        b = sample_pose_prior(pose_model, y, SamplerConfig(), np.random.default_rng(3))
        np.testing.assert_array_equal(a, b)

    def test_locality(self, pose_model, corpus):
        y = synth.project_pose(corpus[1][1], 22.5)
        s = sample_pose_prior(pose_model, y, SamplerConfig(2, 200), np.random.default_rng(0))
        assert rms(s.mean(axis=0), y) < 0.1

    def test_chained(self, pose_model, corpus):
        y = synth.project_pose(corpus[1][2], -22.5)
        cfg = SamplerConfig(2, 8, restart_from_measurement=False)
        assert sample_pose_prior(pose_model, y, cfg, np.random.default_rng(0)).shape == (8, synth.DIM)

    def test_correct(self, pose_model, corpus, noise_model):
        y = synth.project_pose(corpus[1][4], 22.5)
        out = correct_pose_shape(pose_model, y, noise_model, rng=np.random.default_rng(0))
        assert rms(out, y) < 0.05

    def test_dimension_mismatch(self, pose_model):
        with pytest.raises(ValueError):
            sample_pose_prior(pose_model, np.zeros(10), SamplerConfig(), np.random.default_rng(0))

    def test_mismatched_submodels(self, pose_model):
        with pytest.raises(ValueError):
            PosePriorModel(pose_model.frontal, ThreeWayParams.zeros(10, 2, 2),
                           pose_model.x_standardizer, pose_model.y_standardizer)


def test_json_round_trip(pose_model):
    doc = pose_model.to_json()
    back = PosePriorModel.from_json(doc)
    for name in ThreeWayParams._FIELDS:
        np.testing.assert_array_equal(getattr(back.transfer, name), getattr(pose_model.transfer, name))
    assert (doc["transfer"]["V"], doc["transfer"]["K"], doc["transfer"]["F"]) == (52, 20, 32)
    bad = dict(doc["transfer"], K=3)
    with pytest.raises(ValueError, match="'K'"):
        ThreeWayParams.from_json(bad)
    with pytest.raises(ValueError, match="'y_standardizer'"):
        PosePriorModel.from_json({k: v for k, v in doc.items() if k != "y_standardizer"})
