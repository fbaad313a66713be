"""Kernel backend checks: compiled vs fallback, fused GRU vs composed ops,
finite differences, and the memoized DTW oracle."""

from functools import lru_cache

import numpy as np
import pytest

from dispatchclust import _kernels
from dispatchclust import autodiff as ad
from dispatchclust._kernels import fallback
from dispatchclust.optim import ParameterSet, finite_diff_check

try:
    from dispatchclust._kernels import _core
except ImportError:
    _core = None


def _random_gru_inputs(rng, T, B, I, H):
    return (rng.normal(size=(T, B, I)), rng.normal(size=(B, H)),
            rng.normal(size=(I, 3 * H)) * 0.5, rng.normal(size=(H, 3 * H)) * 0.5,
            rng.normal(size=3 * H) * 0.2, rng.normal(size=3 * H) * 0.2)


@pytest.mark.skipif(_core is None, reason="compiled kernels not built")
def test_backends_agree():
    rng = np.random.default_rng(3)
    for T, B, I, H in [(1, 1, 1, 1), (4, 3, 5, 6), (12, 7, 2, 9)]:
        x, h0, w_ih, w_hh, b_ih, b_hh = _random_gru_inputs(rng, T, B, I, H)
        h1, c1 = _core.gru_forward(x, h0, w_ih, w_hh, b_ih, b_hh)
        h2, c2 = fallback.gru_forward(x, h0, w_ih, w_hh, b_ih, b_hh)
        np.testing.assert_allclose(h1, h2, atol=1e-13)

        dh = rng.normal(size=(T, B, H))
        dhl = rng.normal(size=(B, H))
        g1 = _core.gru_backward(dh, dhl, x, h0, h1, c1, w_ih, w_hh)
        g2 = fallback.gru_backward(dh, dhl, x, h0, h2, c2, w_ih, w_hh)
        for a, b in zip(g1, g2):
            np.testing.assert_allclose(np.asarray(a), np.asarray(b), atol=1e-12)


def _composed_gru(params, x, T, H):
    """GRU built from primitive tape ops; reference for the fused kernel."""
    h = params["h0"]
    outs = []
    for t in range(T):
        xt = ad.Tensor(x[t])
        gi_r = ad.affine(xt, params["wi_r"], params["bi_r"])
        gi_z = ad.affine(xt, params["wi_z"], params["bi_z"])
        gi_n = ad.affine(xt, params["wi_n"], params["bi_n"])
        gh_r = ad.affine(h, params["wh_r"], params["bh_r"])
        gh_z = ad.affine(h, params["wh_z"], params["bh_z"])
        gh_n = ad.affine(h, params["wh_n"], params["bh_n"])
        r = ad.sigmoid(gi_r + gh_r)
        z = ad.sigmoid(gi_z + gh_z)
        n = ad.tanh(gi_n + ad.mul(r, gh_n))
        h = (1.0 - z) * n + ad.mul(z, h)
        outs.append(h)
    return outs


def test_fused_gru_matches_composed_ops():
    rng = np.random.default_rng(5)
    T, B, I, H = 5, 3, 4, 6
    x, h0, w_ih, w_hh, b_ih, b_hh = _random_gru_inputs(rng, T, B, I, H)
    weights = rng.normal(size=(T, B, H))  # mixes every output coordinate

    fused = ParameterSet()
    fused.add("h0", h0)
    fused.add("w_ih", w_ih)
    fused.add("w_hh", w_hh)
    fused.add("b_ih", b_ih)
    fused.add("b_hh", b_hh)
    h_seq = ad.gru_sequence(ad.Tensor(x), fused["h0"], fused["w_ih"],
                            fused["w_hh"], fused["b_ih"], fused["b_hh"])
    loss_f = ad.total(ad.mul(h_seq, ad.Tensor(weights)))
    fused.zero_grad()
    ad.backward(loss_f)
    gf = fused.grads()

    comp = ParameterSet()
    comp.add("h0", h0)
    for gate, sl in [("r", slice(0, H)), ("z", slice(H, 2 * H)),
                     ("n", slice(2 * H, 3 * H))]:
        comp.add(f"wi_{gate}", w_ih[:, sl])
        comp.add(f"wh_{gate}", w_hh[:, sl])
        comp.add(f"bi_{gate}", b_ih[sl])
        comp.add(f"bh_{gate}", b_hh[sl])
    outs = _composed_gru(comp, x, T, H)
    loss_c = None
    for t, h in enumerate(outs):
        term = ad.total(ad.mul(h, ad.Tensor(weights[t])))
        loss_c = term if loss_c is None else loss_c + term
    comp.zero_grad()
    ad.backward(loss_c)
    gc = comp.grads()

    assert float(loss_f.value) == pytest.approx(float(loss_c.value), rel=1e-12)
    np.testing.assert_allclose(gf["h0"], gc["h0"], atol=1e-11)
    for gate, sl in [("r", slice(0, H)), ("z", slice(H, 2 * H)),
                     ("n", slice(2 * H, 3 * H))]:
        np.testing.assert_allclose(gf["w_ih"][:, sl], gc[f"wi_{gate}"], atol=1e-11)
        np.testing.assert_allclose(gf["w_hh"][:, sl], gc[f"wh_{gate}"], atol=1e-11)
        np.testing.assert_allclose(gf["b_ih"][sl], gc[f"bi_{gate}"], atol=1e-11)
        np.testing.assert_allclose(gf["b_hh"][sl], gc[f"bh_{gate}"], atol=1e-11)


def test_tiny_gru_finite_differences():
    rng = np.random.default_rng(9)
    T, B, I, H = 3, 2, 3, 8
    x = rng.normal(size=(T, B, I))
    targets = rng.integers(0, 3, size=(T, B))
    params = ParameterSet()
    params.add("w_ih", rng.normal(size=(I, 3 * H)) * 0.4)
    params.add("w_hh", rng.normal(size=(H, 3 * H)) * 0.4)
    params.add("b_ih", rng.normal(size=3 * H) * 0.1)
    params.add("b_hh", rng.normal(size=3 * H) * 0.1)
    params.add("w_out", rng.normal(size=(H, 3)) * 0.4)
    params.add("b_out", np.zeros(3))

    def loss():
        h = ad.gru_sequence(ad.Tensor(x), ad.Tensor(np.zeros((B, H))),
                            params["w_ih"], params["w_hh"],
                            params["b_ih"], params["b_hh"])
        logits = ad.affine(h, params["w_out"], params["b_out"])
        return ad.softmax_cross_entropy(logits, targets)

    assert finite_diff_check(loss, params) <= 1e-4


def _dtw_memo(x, y):
    @lru_cache(maxsize=None)
    def d(i, j):
        c = abs(x[i] - y[j])
        if i == 0 and j == 0:
            return c
        if i == 0:
            return c + d(0, j - 1)
        if j == 0:
            return c + d(i - 1, 0)
        return c + min(d(i - 1, j), d(i, j - 1), d(i - 1, j - 1))

    return d(len(x) - 1, len(y) - 1)


def test_dtw_matches_memoized_oracle():
    rng = np.random.default_rng(17)
    for _ in range(200):
        n = int(rng.integers(1, 11))
        m = int(rng.integers(1, 11))
        x = tuple(rng.normal(size=n))
        y = tuple(rng.normal(size=m))
        expect = _dtw_memo(x, y)
        assert _kernels.dtw_cost(np.array(x), np.array(y)) == expect
        assert fallback.dtw_cost(list(x), list(y)) == expect


def test_dtw_identity_symmetry_and_bound():
    rng = np.random.default_rng(23)
    for _ in range(30):
        n = int(rng.integers(2, 40))
        x = rng.normal(size=n)
        y = rng.normal(size=n)
        assert _kernels.dtw_cost(x, x) == 0.0
        d_xy = _kernels.dtw_cost(x, y)
        assert d_xy == _kernels.dtw_cost(y, x)
        assert d_xy <= np.abs(x - y).sum() + 1e-12


def test_dtw_hand_example():
    assert _kernels.dtw_cost(np.array([0.0, 0.0]), np.array([1.0, 1.0])) == 2.0


def test_dtw_rejects_empty():
    with pytest.raises(ValueError):
        _kernels.dtw_cost(np.array([]), np.array([1.0]))
    with pytest.raises(ValueError):
        fallback.dtw_cost([], [1.0])
