import math

import numpy as np
import pytest

from dispatchclust import autodiff as ad
from dispatchclust.optim import AdamState, ParameterSet, adam_step, finite_diff_check


def test_sigmoid_at_zero():
    assert ad.sigmoid(ad.Tensor(0.0)).value == 0.5


def test_affine_identity():
    x = ad.Tensor([[1.0, 2.0], [3.0, 4.0]])
    out = ad.affine(x, ad.Tensor(np.eye(2)), ad.Tensor(np.zeros(2)))
    np.testing.assert_array_equal(out.value, x.value)


def test_cross_entropy_uniform_logits():
    logits = ad.Tensor([[2.0, 2.0, 2.0]])
    loss = ad.softmax_cross_entropy(logits, np.array([1]))
    assert loss.value == pytest.approx(math.log(3.0), abs=1e-12)


def test_cross_entropy_shift_invariance():
    rng = np.random.default_rng(4)
    logits = rng.normal(size=(7, 3))
    targets = rng.integers(0, 3, size=7)
    base = ad.softmax_cross_entropy(ad.Tensor(logits), targets).value
    for c in (-50.0, 1e-3, 123.456):
        shifted = ad.softmax_cross_entropy(ad.Tensor(logits + c), targets).value
        assert shifted == pytest.approx(float(base), rel=1e-12)


def test_backward_linear_and_unreachable():
    params = ParameterSet()
    w = params.add("w", np.array([[1.0, 2.0], [3.0, 4.0]]))
    unused = params.add("unused", np.ones(3))
    x = np.array([[1.0, -1.0]])
    loss = ad.total(ad.affine(ad.Tensor(x), w, ad.Tensor(np.zeros(2))))
    params.zero_grad()
    ad.backward(loss)
    grads = params.grads()
    # d(sum(x @ w))/dw = x^T 1
    np.testing.assert_allclose(grads["w"], np.array([[1.0, 1.0], [-1.0, -1.0]]))
    np.testing.assert_array_equal(grads["unused"], np.zeros(3))


def test_backward_rejects_nonscalar():
    x = ad.Tensor(np.ones(3))
    with pytest.raises(ValueError):
        ad.backward(x)


def test_shape_mismatch_names_operands():
    w = ad.Tensor(np.ones((3, 2)), name="w_out")
    with pytest.raises(ad.ShapeError, match="w_out"):
        ad.affine(ad.Tensor(np.ones((4, 2))), w, ad.Tensor(np.zeros(2)))


def test_concat_roundtrip_gradient():
    params = ParameterSet()
    a = params.add("a", np.arange(6.0).reshape(2, 3))
    b = params.add("b", np.ones((2, 2)))
    loss = ad.total(ad.mul(ad.concat([a, b], axis=-1), 2.0))
    params.zero_grad()
    ad.backward(loss)
    np.testing.assert_array_equal(params.grads()["a"], np.full((2, 3), 2.0))
    np.testing.assert_array_equal(params.grads()["b"], np.full((2, 2), 2.0))


def test_row_lookup_gradient_accumulates_repeats():
    params = ParameterSet()
    table = params.add("emb", np.zeros((4, 2)))
    out = ad.row_lookup(table, np.array([1, 1, 3]))
    loss = ad.total(out)
    params.zero_grad()
    ad.backward(loss)
    expected = np.zeros((4, 2))
    expected[1] = 2.0
    expected[3] = 1.0
    np.testing.assert_array_equal(params.grads()["emb"], expected)


def _composite_loss(params, x, targets):
    h = ad.tanh(ad.affine(ad.Tensor(x, name="x"), params["w1"], params["b1"]))
    g = ad.sigmoid(ad.affine(h, params["w2"], params["b2"]))
    emb = ad.row_lookup(params["emb"], np.array([0, 1, 0]))
    joined = ad.concat([g, emb], axis=-1)
    logits = ad.affine(joined, params["w3"], params["b3"])
    return ad.softmax_cross_entropy(logits, targets)


def test_finite_diff_composite():
    rng = np.random.default_rng(11)
    params = ParameterSet()
    params.add("w1", rng.normal(size=(4, 5)) * 0.4)
    params.add("b1", rng.normal(size=5) * 0.1)
    params.add("w2", rng.normal(size=(5, 3)) * 0.4)
    params.add("b2", rng.normal(size=3) * 0.1)
    params.add("emb", rng.normal(size=(2, 2)) * 0.4)
    params.add("w3", rng.normal(size=(5, 3)) * 0.4)
    params.add("b3", rng.normal(size=3) * 0.1)
    x = rng.normal(size=(3, 4))
    targets = np.array([0, 2, 1])
    err = finite_diff_check(lambda: _composite_loss(params, x, targets), params)
    assert err <= 1e-4


def test_finite_diff_linear_exact():
    params = ParameterSet()
    params.add("w", np.array([[0.3, -0.2], [0.1, 0.5]]))
    x = np.array([[1.0, 2.0]])

    def loss():
        return ad.total(ad.affine(ad.Tensor(x), params["w"], ad.Tensor(np.zeros(2))))

    assert finite_diff_check(loss, params) <= 1e-8


def test_finite_diff_detects_corrupted_gradient():
    params = ParameterSet()
    params.add("w", np.array([[0.3, -0.2], [0.1, 0.5]]))
    x = np.array([[1.0, 2.0]])

    def loss():
        out = ad.affine(ad.Tensor(x), params["w"], ad.Tensor(np.zeros(2)))
        bad = ad.Tensor(out.value, parents=(params["w"],),
                        backward=lambda g: (np.zeros_like(params["w"].value),))
        return ad.total(bad)

    assert finite_diff_check(loss, params) > 1e-4


def test_adam_first_step_magnitude():
    params = ParameterSet()
    params.add("p", np.array([1.0]))
    state = AdamState(params, lr=0.05)
    adam_step(params, {"p": np.array([0.3])}, state)
    # bias correction makes m_hat = g and v_hat = g^2 on step 1
    assert abs(1.0 - params["p"].value[0]) == pytest.approx(0.05, rel=1e-6)


def test_adam_zero_gradient_no_move():
    params = ParameterSet()
    params.add("p", np.array([2.0, -1.0]))
    state = AdamState(params)
    adam_step(params, {"p": np.zeros(2)}, state)
    np.testing.assert_array_equal(params["p"].value, np.array([2.0, -1.0]))
    assert state.t == 1


def test_adam_deterministic_trajectory():
    def run():
        rng = np.random.default_rng(7)
        params = ParameterSet()
        params.add("p", rng.normal(size=(3, 2)))
        state = AdamState(params, lr=0.01)
        for _ in range(25):
            g = rng.normal(size=(3, 2))
            adam_step(params, {"p": g}, state)
        return params["p"].value

    a, b = run(), run()
    assert np.array_equal(a, b)


def test_adam_rejects_nonfinite_gradient():
    params = ParameterSet()
    params.add("p", np.zeros(2))
    state = AdamState(params)
    with pytest.raises(FloatingPointError, match="p"):
        adam_step(params, {"p": np.array([np.nan, 0.0])}, state)
