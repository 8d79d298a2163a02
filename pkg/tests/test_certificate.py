import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pacbarrier.certificate import NeuralCertificate, linear_certificate
from pacbarrier.dynamics import BoxRegion, jet_engine


def central_diff(fn, x, h=1e-6):
    x = np.asarray(x, dtype=float)
    out = np.empty(x.size)
    for i in range(x.size):
        e = np.zeros_like(x)
        e.flat[i] = h
        out[i] = (fn(x + e) - fn(x - e)) / (2 * h)
    return out


def rel_err(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-8)


def random_cert(rng):
    n = int(rng.integers(1, 5))
    hidden = [int(h) for h in rng.integers(1, 9, size=rng.integers(0, 3))]
    cert = NeuralCertificate.init([n] + hidden + [1], seed=int(rng.integers(1 << 30)))
    if rng.random() < 0.5:
        lo = rng.uniform(-2, 0, n)
        cert = cert.normalized_to(BoxRegion(lo, lo + rng.uniform(0.1, 3, n)))
    return cert


def test_input_gradient_matches_finite_differences(rng):
    for _ in range(30):
        cert = random_cert(rng)
        x = rng.uniform(-1, 1, cert.dim)
        assert rel_err(cert.grad_input(x), central_diff(cert.forward, x)) < 1e-5


def test_parameter_gradient_matches_finite_differences(rng):
    for _ in range(30):
        cert = random_cert(rng)
        x = rng.uniform(-1, 1, cert.dim)
        theta = cert.flatten()
        fd = central_diff(lambda th: cert.unflatten(th).forward(x), theta)
        assert rel_err(cert.grad_params(x), fd) < 1e-5


def test_batched_parameter_gradients_agree(rng):
    cert = NeuralCertificate.init([3, 5, 4, 1], seed=2)
    x = rng.normal(size=(7, 3))
    per = cert.grad_params_batch(x)
    assert per.shape == (7, cert.n_params)
    for i in range(7):
        np.testing.assert_allclose(per[i], cert.grad_params(x[i]), rtol=1e-13, atol=1e-15)
    coef = rng.normal(size=7)
    np.testing.assert_allclose(cert.grad_params_weighted(x, coef), coef @ per, rtol=1e-12, atol=1e-14)


def test_forward_matches_hand_written_network():
    w1 = np.array([[0.5, -1.0], [2.0, 0.25]])
    b1 = np.array([0.1, -0.2])
    w2 = np.array([[1.5, -0.5]])
    b2 = np.array([0.3])
    cert = NeuralCertificate((w1, w2), (b1, b2))
    x = np.array([0.2, -0.7])
    expect = w2[0] @ np.tanh(w1 @ x + b1) + b2[0]
    assert cert(x) == pytest.approx(expect, rel=1e-15)
    assert cert.forward(np.stack([x, x])).shape == (2,)


def test_normalisation_is_an_input_affine_map():
    raw = NeuralCertificate.init([2, 6, 1], seed=5)
    box = BoxRegion([-0.5, 1.0], [0.5, 2.0])
    cert = raw.normalized_to(box)
    x = np.array([0.1, 1.9])
    assert cert(x) == pytest.approx(raw((x - [0.0, 1.5]) / 0.5), rel=1e-15)
    np.testing.assert_allclose(cert.grad_input(x), raw.grad_input((x - [0.0, 1.5]) / 0.5) / 0.5)
    # the normalisation is not part of the trained parameters
    assert cert.n_params == raw.n_params
    np.testing.assert_array_equal(cert.unflatten(cert.flatten()).input_scale, cert.input_scale)


def test_flatten_layout_is_weights_then_bias_per_layer():
    cert = NeuralCertificate.init([2, 3, 1], seed=0)
    theta = cert.flatten()
    assert theta.size == 2 * 3 + 3 + 3 + 1
    np.testing.assert_array_equal(theta[:6], cert.weights[0].ravel())
    np.testing.assert_array_equal(theta[6:9], cert.biases[0])
    np.testing.assert_array_equal(theta[9:12], cert.weights[1].ravel())
    with pytest.raises(ValueError):
        cert.unflatten(theta[:-1])


def test_parameters_are_read_only():
    cert = NeuralCertificate.init([2, 3, 1], seed=0)
    with pytest.raises(ValueError):
        cert.weights[0][0, 0] = 1.0


def test_zero_network_and_linear_certificate():
    z = NeuralCertificate.zeros([2, 4, 4, 1])
    assert z(np.array([0.3, -2.0])) == 0.0
    assert not z.grad_input(np.ones(2)).any()
    lin = linear_certificate([2.0, -1.0], 0.5)
    assert lin(np.array([1.0, 1.0])) == pytest.approx(1.5)
    np.testing.assert_allclose(lin.grad_input(np.zeros((3, 2))), [[2.0, -1.0]] * 3)


def test_time_derivative_is_derivative_along_the_flow():
    cert = NeuralCertificate.init([2, 8, 1], seed=1)
    sys_ = jet_engine()
    x = np.array([0.2, -0.1])
    f = sys_.eval(x)
    h = 1e-6
    fd = (cert(x + h * f) - cert(x - h * f)) / (2 * h)
    assert cert.time_derivative(x, sys_) == pytest.approx(fd, rel=1e-7)
    with pytest.raises(ValueError):
        NeuralCertificate.init([3, 2, 1]).time_derivative(np.zeros(3), sys_)


def test_operator_norm_bound_dominates_sampled_slopes(rng):
    cert = NeuralCertificate.init([2, 8, 8, 1], seed=3).normalized_to(BoxRegion([-1, -1], [1, 1]))
    x = rng.uniform(-1, 1, (2000, 2))
    g = np.linalg.norm(cert.grad_input(x), axis=1)
    assert g.max() <= cert.operator_norm_bound()


def test_json_round_trip_is_bit_exact(tmp_path, rng):
    cert = NeuralCertificate.init([3, 7, 5, 1], seed=11).normalized_to(BoxRegion([-1, 0, 2], [1, 0.3, 5]))
    path = tmp_path / "cert.json"
    cert.save(path)
    back = NeuralCertificate.load(path)
    for a, b in zip(cert.weights + cert.biases, back.weights + back.biases):
        np.testing.assert_array_equal(a, b)
    x = rng.normal(size=(10, 3))
    np.testing.assert_array_equal(cert.forward(x), back.forward(x))
    doc = json.loads(path.read_text())
    assert doc["layer_sizes"] == [3, 7, 5, 1] and doc["activation"] == "tanh"


def test_from_dict_rejects_inconsistent_shapes():
    d = NeuralCertificate.init([2, 3, 1]).to_dict()
    d["layer_sizes"] = [2, 4, 1]
    with pytest.raises(ValueError):
        NeuralCertificate.from_dict(d)
    with pytest.raises(ValueError):
        NeuralCertificate((np.ones((3, 2)), np.ones((2, 3))), (np.ones(3), np.ones(2)))
    with pytest.raises(ValueError):
        NeuralCertificate((np.ones((1, 2)),), (np.ones(1),), activation="relu")


finite = st.floats(allow_nan=False, allow_infinity=False, width=64)


@settings(max_examples=60, deadline=None)
@given(st.lists(finite, min_size=9, max_size=9))
def test_round_trip_any_finite_doubles(values):
    w1 = np.array(values[:4]).reshape(2, 2)
    b1 = np.array(values[4:6])
    w2 = np.array([values[6:8]])
    b2 = np.array(values[8:9])
    cert = NeuralCertificate((w1, w2), (b1, b2))
    back = NeuralCertificate.from_dict(json.loads(json.dumps(cert.to_dict())))
    np.testing.assert_array_equal(back.flatten(), cert.flatten())
