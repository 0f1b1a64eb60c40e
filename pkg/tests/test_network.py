import math

import numpy as np
import pytest
from conftest import random_params
from hypothesis import given, settings
from hypothesis import strategies as st

from expectation_pinn.network import (ArchitectureSpec, JetBlock, JetCotangent, NetworkJet,
                                      ParameterSet, derive_architecture, forward_jet,
                                      forward_value, init_xavier, load_checkpoint,
                                      loss_param_gradients, save_checkpoint)


@pytest.mark.parametrize("d, k, expected", [
    (2, 2, (6, 128, 6)),
    (8, 3, (13, 256, 10)),
    (6, 3, (11, 222, 9)),
    (4, 2, (8, 181, 8)),
])
def test_derive_architecture(d, k, expected):
    spec = derive_architecture(d, k)
    assert (spec.input_dim, spec.width, spec.depth) == expected
    assert spec.output_dim == 1


@pytest.mark.parametrize("d", [0, 1, 3, 5, -2])
def test_derive_architecture_rejects_bad_dims(d):
    with pytest.raises(ValueError):
        derive_architecture(d, 2)


def test_layer_shapes_chain():
    spec = derive_architecture(4, 3)
    shapes = spec.layer_shapes
    assert shapes[0] == (181, 9)
    assert all(s == (181, 181) for s in shapes[1:-1])
    assert shapes[-1] == (1, 181)
    assert len(shapes) == spec.depth


def test_xavier_is_deterministic():
    spec = derive_architecture(2, 2)
    a, b = init_xavier(spec, 7), init_xavier(spec, 7)
    assert all(np.array_equal(x, y) for x, y in zip(a.arrays(), b.arrays()))
    c = init_xavier(spec, 8)
    assert not np.array_equal(a.weights[1], c.weights[1])


def test_xavier_bounds_and_variance():
    spec = derive_architecture(2, 2)
    params = init_xavier(spec, 0)
    for w, b in zip(params.weights, params.biases):
        fan_out, fan_in = w.shape
        assert np.abs(w).max() <= math.sqrt(6.0 / (fan_in + fan_out))
        assert not b.any()
    hidden = params.weights[2]
    assert hidden.shape == (128, 128)
    # Var of U(-a, a) is a^2 / 3 = 2 / (fan_in + fan_out)
    assert hidden.var() == pytest.approx(2.0 / 256, rel=0.2)


def test_parameter_set_rejects_bad_shapes():
    with pytest.raises(ValueError):
        ParameterSet([np.zeros((4, 6)), np.zeros((1, 5))], [np.zeros(4), np.zeros(1)])
    with pytest.raises(ValueError):
        ParameterSet([np.zeros((4, 6)), np.zeros((2, 4))], [np.zeros(4), np.zeros(2)])


def test_flatten_roundtrip():
    spec = ArchitectureSpec(6, 5, 4)
    params = random_params(spec, 1)
    flat = params.flatten()
    assert flat.size == spec.n_params
    back = ParameterSet.unflatten(flat, spec)
    assert np.array_equal(back.flatten(), flat)


def test_constant_network():
    spec = ArchitectureSpec(6, 8, 3)
    params = init_xavier(spec, 0).zeros_like()
    params.biases[-1][:] = 1.75
    jet = forward_jet(params, np.full(6, 0.3), 2)
    assert (jet.value, jet.dt, jet.laplacian) == (1.75, 0.0, 0.0)


def test_tanh_of_first_coordinate():
    # u = tanh(x_1): one hidden unit fed by x_1, unit output weight.
    w1 = np.zeros((1, 6))
    w1[0, 1] = 1.0
    params = ParameterSet([w1, np.ones((1, 1))], [np.zeros(1), np.zeros(1)])
    x = np.array([0.2, 0.5, 0.7, 0.05, 0.3, 0.4])
    jet = forward_jet(params, x, 2)
    t = math.tanh(0.5)
    assert jet.value == pytest.approx(0.46212, abs=1e-5)
    assert jet.laplacian == pytest.approx(-2 * t * (1 - t * t), rel=1e-12)
    assert jet.laplacian == pytest.approx(-0.72687, abs=1e-5)
    assert jet.dt == 0.0


def test_value_stream_matches_plain_forward(rng):
    spec = ArchitectureSpec(7, 12, 4)
    params = random_params(spec, 3)
    X = rng.uniform(0, 1, (20, 7))
    jet = forward_jet(params, X, 3)
    np.testing.assert_allclose(jet.value, forward_value(params, X), rtol=0, atol=1e-14)


def test_derivative_only_counts_spatial_axes(rng):
    # Laplacian must ignore t, nu and the noise inputs.
    spec = ArchitectureSpec(6, 8, 3)
    params = random_params(spec, 4)
    x = rng.uniform(0, 1, 6)
    h = 1e-4
    f = lambda y: forward_value(params, y[None])[0]
    e = np.eye(6)
    full = sum((f(x + h * e[i]) - 2 * f(x) + f(x - h * e[i])) / h ** 2 for i in range(6))
    spatial = sum((f(x + h * e[i]) - 2 * f(x) + f(x - h * e[i])) / h ** 2 for i in (1, 2))
    jet = forward_jet(params, x, 2)
    assert jet.laplacian == pytest.approx(spatial, rel=1e-5, abs=1e-8)
    assert abs(full - spatial) > 1e-3


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), d=st.sampled_from([2, 4]), k=st.sampled_from([2, 3]))
def test_jet_matches_finite_differences(seed, d, k):
    rng = np.random.default_rng(seed)
    params = random_params(ArchitectureSpec(d + 2 + k, 10, 3), seed)
    x = rng.uniform(0, 1, d + 2 + k)
    jet = forward_jet(params, x, d)
    f = lambda y: forward_value(params, y[None])[0]
    h = 1e-4
    e = np.eye(len(x))
    dt = (f(x + h * e[0]) - f(x - h * e[0])) / (2 * h)
    terms = [(f(x + h * e[i]) - 2 * f(x) + f(x - h * e[i])) / h ** 2 for i in range(1, d + 1)]
    assert abs(jet.dt - dt) <= 1e-5 * max(abs(dt), 1e-3)
    assert abs(jet.laplacian - sum(terms)) <= 1e-5 * max(sum(map(abs, terms)), 1e-3)


def test_spatial_permutation_symmetry(rng):
    d = 3
    spec = ArchitectureSpec(d + 4, 9, 4)
    params = random_params(spec, 5)
    x = rng.uniform(0, 1, d + 4)
    # swap x_1 and x_3 in the input and the matching first-layer columns
    perm = np.arange(d + 4)
    perm[[1, 3]] = perm[[3, 1]]
    swapped = params.copy()
    swapped.weights[0] = params.weights[0][:, perm]
    a = forward_jet(params, x, d)
    b = forward_jet(swapped, x[perm], d)
    assert (a.value, a.dt, a.laplacian) == pytest.approx((b.value, b.dt, b.laplacian), abs=1e-14)


def test_custom_index_layout(rng):
    # Same network read with time as the last column instead of the first.
    spec = ArchitectureSpec(6, 8, 3)
    params = random_params(spec, 6)
    x = rng.uniform(0, 1, (4, 6))
    ref = forward_jet(params, x, 2)
    order = [1, 2, 3, 4, 5, 0]
    moved = params.copy()
    moved.weights[0] = params.weights[0][:, order]
    got = forward_jet(moved, x[:, order], time_index=5, spatial_index=[0, 1])
    np.testing.assert_allclose(got.dt, ref.dt, atol=1e-13)
    np.testing.assert_allclose(got.laplacian, ref.laplacian, atol=1e-13)


def test_shape_mismatch_is_rejected():
    params = init_xavier(ArchitectureSpec(6, 4, 2), 0)
    with pytest.raises(ValueError):
        forward_jet(params, np.zeros((3, 5)), 2)


def _quadratic_evaluator(nu, target):
    def evaluator(jets):
        (jet,) = jets
        n = len(jet.value)
        if n == 0:
            return 0.0, [JetCotangent()]
        r = jet.dt - nu * jet.laplacian + jet.value - target
        g = 2 * r / n
        return float(np.mean(r ** 2)), [JetCotangent(value=g, dt=g, laplacian=-nu * g)]
    return evaluator


def test_empty_batch_gives_zero_gradients():
    params = random_params(ArchitectureSpec(6, 8, 3), 0)
    loss, grads = loss_param_gradients(params, [JetBlock(np.zeros((0, 6)), 2)],
                                       _quadratic_evaluator(0.05, 0.0))
    assert loss == 0.0
    assert not grads.flatten().any()


def test_duplicated_batch_same_gradients(rng):
    params = random_params(ArchitectureSpec(6, 8, 3), 1)
    X = rng.uniform(0, 1, (10, 6))
    nu = X[:, 3]
    l1, g1 = loss_param_gradients(params, [JetBlock(X, 2)], _quadratic_evaluator(nu, 0.3))
    nu2 = np.concatenate([nu, nu])
    l2, g2 = loss_param_gradients(params, [JetBlock(np.vstack([X, X]), 2)],
                                  _quadratic_evaluator(nu2, 0.3))
    assert l1 == pytest.approx(l2, rel=1e-13)
    np.testing.assert_allclose(g1.flatten(), g2.flatten(), rtol=1e-10, atol=1e-15)


def test_gradient_matches_finite_differences(rng):
    spec = ArchitectureSpec(7, 6, 4)
    params = random_params(spec, 2)
    X = rng.uniform(0, 1, (12, 7))
    blocks = [JetBlock(X, 3), JetBlock(X[:5] * 0.5, 3, derivatives=False)]
    nu = X[:, 4]

    def evaluator(jets):
        a, b = jets
        r = a.dt - nu * a.laplacian - 0.2 * a.value
        loss = np.mean(r ** 2) + 3.0 * np.mean(b.value ** 2)
        g = 2 * r / len(r)
        return loss, [JetCotangent(value=-0.2 * g, dt=g, laplacian=-nu * g),
                      JetCotangent(value=6.0 * b.value / len(b.value))]

    _, grads = loss_param_gradients(params, blocks, evaluator)
    flat, g = params.flatten(), grads.flatten()
    eps = 1e-6
    for i in range(0, flat.size, 3):
        up, down = flat.copy(), flat.copy()
        up[i] += eps
        down[i] -= eps
        fd = (loss_param_gradients(ParameterSet.unflatten(up, spec), blocks, evaluator)[0]
              - loss_param_gradients(ParameterSet.unflatten(down, spec), blocks, evaluator)[0]) / (2 * eps)
        assert abs(fd - g[i]) <= 1e-4 * max(abs(fd), abs(g[i]), 1e-9)


def test_non_finite_loss_aborts():
    from expectation_pinn.network import NonFiniteLossError
    params = random_params(ArchitectureSpec(6, 4, 2), 0)
    with pytest.raises(NonFiniteLossError):
        loss_param_gradients(params, [JetBlock(np.zeros((2, 6)), 2)],
                             lambda jets: (float("nan"), [JetCotangent()]))


def test_checkpoint_roundtrip_and_bytes(tmp_path):
    params = random_params(derive_architecture(2, 3), 4)
    a, b = tmp_path / "a.bin", tmp_path / "b.bin"
    save_checkpoint(a, params, {"note": "x"})
    save_checkpoint(b, params.copy(), {"note": "x"})
    assert a.read_bytes() == b.read_bytes()
    loaded, header = load_checkpoint(a)
    assert header["version"] == 1
    assert header["architecture"] == {"input_dim": 7, "width": 128, "depth": 6, "output_dim": 1}
    assert np.array_equal(loaded.flatten(), params.flatten())
    # payload: little-endian float64, W1 first, row-major
    raw = a.read_bytes()
    first = np.frombuffer(raw[-8 * params.spec.n_params:][:8], dtype="<f8")[0]
    assert first == params.weights[0][0, 0]


def test_checkpoint_rejects_foreign_file(tmp_path):
    path = tmp_path / "junk.bin"
    path.write_bytes(b"not a checkpoint")
    with pytest.raises(ValueError):
        load_checkpoint(path)


def test_batched_jet_returns_arrays(rng):
    params = random_params(ArchitectureSpec(6, 8, 3), 0)
    jet = forward_jet(params, rng.uniform(0, 1, (5, 6)), 2)
    assert isinstance(jet, NetworkJet)
    assert jet.value.shape == jet.dt.shape == jet.laplacian.shape == (5,)
