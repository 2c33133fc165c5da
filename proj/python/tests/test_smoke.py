import math

import numpy as np
import pytest

import sdrom

OU = {
    "kind": "ou", "D": 6, "n_times": 21, "t_end": 2.0, "seed": 1,
    "counts": {"train": 4, "validation": 2, "test": 2},
    "ou": {"d": 2, "rate": 0.5, "noise": 0.1, "stationary_start": False, "z0": 2.0},
}

TRAIN = {
    "model": {"d": 2, "encoder": {"hidden": [8]}, "decoder": {"hidden": [8]},
              "drift": {"hidden": [8], "time_encoding": False}, "kernel": {"hidden": [4]}},
    "M": 6, "batch_size": 4, "max_steps": 20, "validation": {"every_epochs": 1, "n_samples": 4},
}


def test_generate_shapes():
    train, val, test = sdrom.generate(OU)
    assert len(train) == 4 and len(val) == 2 and len(test) == 2
    assert train.state_dim == 6
    assert train.trajectories[0].states.shape == (21, 6)
    assert train.split == sdrom.SplitTag.train


def test_generate_rejects_unknown_key():
    with pytest.raises(sdrom.SdromError) as err:
        sdrom.generate({"kind": "ou", "gird": 3})
    assert err.value.code == "schema-violation"
    assert "gird" in str(err.value)


def test_dataset_roundtrip(tmp_path):
    train, _, _ = sdrom.generate(OU)
    path = str(tmp_path / "train.sdrom")
    sdrom.write_dataset(path, train)
    back = sdrom.read_dataset(path)
    np.testing.assert_array_equal(back.trajectories[2].states, train.trajectories[2].states)


def test_train_evaluate_predict(tmp_path):
    train, val, test = sdrom.generate(OU)
    state, elbo, val_eps = sdrom.train(TRAIN, train, val)
    assert state.step == 20
    assert len(elbo) == 20 and all(math.isfinite(e) for e in elbo)
    assert any(math.isfinite(v) for v in val_eps)
    metrics = sdrom.evaluate(state, test, n_samples=4)
    assert metrics["eps_mu"] > 0 and len(metrics["eps"]) == 2
    pred = sdrom.predict(state, test.trajectories[0], n_samples=3)
    assert pred["qoi_mean"].shape == (21, 6)
    assert len(pred["latent_paths"]) == 3
    path = str(tmp_path / "ckpt.sdrom")
    sdrom.write_checkpoint(path, state)
    again = sdrom.read_checkpoint(path)
    np.testing.assert_array_equal(again.values, state.values)
    assert sdrom.evaluate(again, test, n_samples=4)["eps_mu"] == metrics["eps_mu"]


def test_training_is_deterministic():
    train, _, _ = sdrom.generate(OU)
    a, _, _ = sdrom.train(TRAIN, train)
    b, _, _ = sdrom.train(TRAIN, train)
    np.testing.assert_array_equal(a.values, b.values)


def test_user_trajectory_and_error_metric():
    t = np.linspace(0, 1, 5)
    u = np.outer(np.ones(5), [3.0, 4.0])
    traj = sdrom.Trajectory(t, u)
    assert len(traj) == 5 and traj.forcing.shape == (5, 0)
    eps = sdrom.error_metric(u, u * 0.5)
    np.testing.assert_allclose(eps, 0.5)


def test_b_matrix_scalar_ou():
    a, c2, s = 0.7, 0.3, 0.9
    b = sdrom.b_matrix_diag([s], [c2 - 2 * a * s], [c2])
    assert b[0] == pytest.approx(a, abs=1e-14)


def test_stlsq_recovers_rotation():
    t = np.linspace(0, 20, 400)
    z = np.concatenate([r * np.stack([np.cos(t), np.sin(t)], 1) for r in (0.5, 1.0, 1.7)])
    dz = np.stack([-z[:, 1], z[:, 0]], 1)
    model = sdrom.stlsq_fit(z, dz, 2, 0.1)
    expected = np.zeros((6, 2))
    expected[2, 0] = -1.0
    expected[1, 1] = 1.0
    np.testing.assert_allclose(model.coefficients, expected, atol=1e-10)


def test_pod_and_derivative():
    rng = np.random.default_rng(0)
    snaps = rng.normal(size=(30, 2)) @ rng.normal(size=(2, 7))
    basis = sdrom.pod_fit(snaps, 2)
    np.testing.assert_allclose(basis.modes.T @ basis.modes, np.eye(2), atol=1e-10)
    t = np.linspace(0, 1, 11)
    d = sdrom.numerical_time_derivative(np.stack([t ** 2], 1), t)
    np.testing.assert_allclose(d[1:-1, 0], 2 * t[1:-1], atol=1e-12)
