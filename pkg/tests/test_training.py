import numpy as np
import pytest

from expectation_pinn.metrics import Problem
from expectation_pinn.network import (ArchitectureSpec, NetworkJet, ParameterSet, forward_jet,
                                      init_xavier)
from expectation_pinn.noise import expected_forcing
from expectation_pinn.oracle import scaling_factor
from expectation_pinn.sampling import sample_interior, to_boundary
from expectation_pinn.training import (OptimizerState, TrainConfig, TrainingAborted,
                                       boundary_loss, draw_realizations,
                                       full_loss_and_gradients, initial_loss, optimizer_step,
                                       residual_loss, total_loss, train)

from conftest import random_params

SMALL = ArchitectureSpec(input_dim=2 + 2 + 2, width=12, depth=3)
PROBLEM = Problem(2, "time_dependent_gaussian", "linear")


def small_config(**kw):
    base = dict(epochs=5, n_points=32, snapshot_points=50, log_every=1, mc_samples=2)
    base.update(kw)
    return TrainConfig(**base)


def zero_params(spec):
    return init_xavier(spec, 0).zeros_like()


def batch_and_noise(seed, p=40, m=3, problem=PROBLEM):
    rng = np.random.default_rng(seed)
    interior = sample_interior(p, problem.d, problem.process, rng)
    w = draw_realizations(problem, interior, m, rng)
    return interior, w, to_boundary(interior, rng)


def test_initial_loss_of_zero_network():
    X = np.full((7, 2), 0.5)
    assert initial_loss(np.zeros(7), X, scaling_factor(2)) == pytest.approx(1.50889, abs=1e-5)
    assert initial_loss(scaling_factor(2) * np.ones(7), X, scaling_factor(2)) == pytest.approx(0.0, abs=1e-28)


def test_boundary_and_total_loss():
    assert boundary_loss([0.0, 0.0]) == 0.0
    assert boundary_loss([1.0, -3.0]) == 5.0
    assert total_loss(1.0, 1.0, 1.0, TrainConfig()) == 21.0
    assert total_loss(0.5, 0.0, 0.2, TrainConfig(lambda_boundary=1.0)) == pytest.approx(0.7)


def test_residual_loss_averages_over_realizations():
    interior, w, _ = batch_and_noise(0)
    jets = forward_jet(random_params(SMALL, 1), interior.network_inputs(), 2)
    theta = scaling_factor(2)
    per_column = [residual_loss(jets, interior, w[:, j], theta) for j in range(w.shape[1])]
    assert residual_loss(jets, interior, w, theta) == pytest.approx(np.mean(per_column), rel=1e-13)


def test_residual_loss_hand_example():
    batch = sample_interior(1, 2, "time_dependent_gaussian", np.random.default_rng(0))
    batch.X[:] = 0.5
    batch.nu[:] = 0.1
    jets = NetworkJet(value=np.zeros(1), dt=np.array([2.0]), laplacian=np.array([-10.0]))
    # r = 2 + 1 = 3, c = vartheta
    w = np.array([[0.0, 1.0]])
    theta = scaling_factor(2)
    expected = 0.5 * (9.0 + (3.0 - theta) ** 2)
    assert residual_loss(jets, batch, w, theta) == pytest.approx(expected)


def test_gradient_is_mean_of_per_realization_gradients():
    interior, w, boundary = batch_and_noise(3)
    params = random_params(SMALL, 4)
    cfg = small_config()
    parts, g = full_loss_and_gradients(params, interior, boundary, w, cfg)
    singles = [full_loss_and_gradients(params, interior, boundary, w[:, j], cfg)
               for j in range(w.shape[1])]
    np.testing.assert_allclose(g.flatten(), np.mean([s[1].flatten() for s in singles], axis=0),
                               rtol=1e-10, atol=1e-14)
    assert parts.total == pytest.approx(np.mean([s[0].total for s in singles]), rel=1e-12)


def test_residual_is_unbiased_for_mean_forcing():
    # E over realizations of the per-point residual r - c w equals r - c E[w]
    problem = Problem(2, "compound_poisson_process", "square")
    rng = np.random.default_rng(9)
    interior = sample_interior(5, 2, problem.process, rng)
    w = draw_realizations(problem, interior, 200_000, rng)
    target = problem.physics(interior)
    mean_w = expected_forcing(target.process, problem.forcing, interior.t)
    se = w.std(axis=1, ddof=1) / np.sqrt(w.shape[1])
    assert np.all(np.abs(w.mean(axis=1) - mean_w) <= 4 * se + 1e-12)


def two_layer(w, b):
    return ParameterSet([np.array([w]), np.array([[1.0]])], [np.array([b]), np.array([0.0])])


def test_sgd_step_example():
    p = two_layer([1.0, 2.0], 0.5)
    g = two_layer([0.1, -0.2], 1.0)
    new = optimizer_step(OptimizerState(kind="sgd"), p, g, 0.5)
    np.testing.assert_allclose(new.weights[0], [[0.95, 2.1]])
    np.testing.assert_allclose(new.biases[0], [0.0])
    np.testing.assert_allclose(new.weights[1], [[0.5]])


def test_adam_first_step_moves_by_learning_rate():
    p = two_layer([1.0, 2.0], 0.5)
    g = ParameterSet([np.array([[3.0, -1e-3]]), np.array([[0.0]])], [np.array([0.0]), np.array([0.0])])
    state = OptimizerState()
    new = optimizer_step(state, p, g, 0.01)
    np.testing.assert_allclose(new.weights[0], [[0.99, 2.01]], rtol=1e-6)
    assert new.biases[0][0] == 0.5
    assert state.step == 1


def test_adam_step_is_bounded():
    rng = np.random.default_rng(2)
    params = random_params(SMALL, 0)
    state = OptimizerState()
    for _ in range(20):
        g = ParameterSet([rng.normal(0, 10, w.shape) for w in params.weights],
                         [rng.normal(0, 10, b.shape) for b in params.biases])
        new = optimizer_step(state, params, g, 1e-3)
        # |m_hat / sqrt(v_hat)| <= (1 - b1) / sqrt(1 - b2) at worst
        assert np.max(np.abs(new.flatten() - params.flatten())) <= 1e-3 * 3.2
        params = new


def test_unknown_optimizer_rejected():
    with pytest.raises(ValueError):
        TrainConfig(optimizer="lbfgs")
    p = zero_params(SMALL)
    with pytest.raises(ValueError):
        optimizer_step(OptimizerState(kind="rmsprop"), p, p, 0.1)


def test_config_validation():
    for bad in (dict(epochs=0), dict(mc_samples=0), dict(lambda_initial=0.5),
                dict(learning_rate=-1.0), dict(log_every=0)):
        with pytest.raises(ValueError):
            TrainConfig(**bad)


def test_train_is_deterministic():
    init = random_params(SMALL, 5)
    a, log_a = train(init, PROBLEM, small_config(seed=3))
    b, log_b = train(init, PROBLEM, small_config(seed=3))
    c, _ = train(init, PROBLEM, small_config(seed=4))
    assert np.array_equal(a.flatten(), b.flatten())
    assert log_a.rows == log_b.rows
    assert not np.array_equal(a.flatten(), c.flatten())
    assert len(log_a.total_history) == 5
    assert [row[0] for row in log_a.rows] == [1, 2, 3, 4, 5]


def test_train_does_not_mutate_input():
    init = random_params(SMALL, 5)
    before = init.flatten()
    train(init, PROBLEM, small_config())
    assert np.array_equal(init.flatten(), before)


def test_zero_learning_rate_keeps_parameters():
    init = random_params(SMALL, 6)
    out, _ = train(init, PROBLEM, small_config(learning_rate=0.0, optimizer="sgd"))
    assert np.array_equal(out.flatten(), init.flatten())


def test_frozen_batch_sgd_decreases_loss():
    init = random_params(SMALL, 7)
    cfg = small_config(epochs=50, learning_rate=1e-3, optimizer="sgd", frozen_batch=True)
    _, history = train(init, PROBLEM, cfg)
    totals = np.array(history.total_history)
    assert np.all(np.diff(totals) <= 1e-12)
    assert totals[-1] < totals[0]


def test_checkpoint_callback():
    seen = []
    train(random_params(SMALL, 8), PROBLEM, small_config(epochs=6, checkpoint_every=2),
          on_checkpoint=lambda epoch, params: seen.append(epoch))
    assert seen == [2, 4, 6]


def test_non_finite_loss_aborts():
    bad = random_params(SMALL, 9)
    bad.weights[0][0, 0] = np.nan
    with pytest.raises(TrainingAborted) as info:
        train(bad, PROBLEM, small_config(), run_id="broken")
    assert info.value.epoch == 1
    assert info.value.run_id == "broken"


def test_log_csv(tmp_path):
    _, history = train(random_params(SMALL, 1), PROBLEM, small_config(epochs=2))
    path = tmp_path / "log.csv"
    history.write_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "epoch,residual,initial,boundary,total,rel_l2"
    assert len(lines) == 3


def test_more_realizations_reduce_loss_noise():
    # with parameters and collocation batch fixed, the epoch-to-epoch spread of
    # the total loss comes only from the forcing draws and shrinks with m
    interior, _, boundary = batch_and_noise(12, p=200, m=1)
    params = random_params(SMALL, 13)
    rng = np.random.default_rng(14)
    cfg = small_config()
    spread = {}
    for m in (1, 10):
        totals = [full_loss_and_gradients(params, interior, boundary,
                                          draw_realizations(PROBLEM, interior, m, rng), cfg)[0].total
                  for _ in range(40)]
        spread[m] = np.std(totals)
    assert spread[10] < 0.6 * spread[1]
