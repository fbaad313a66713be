"""Named parameter collections, the Adam optimizer, and gradient checking."""

from __future__ import annotations

import numpy as np

from .autodiff import Tensor, backward


class ParameterSet:
    """Ordered mapping of name -> parameter Tensor with frozen shapes."""

    def __init__(self):
        self._params: dict[str, Tensor] = {}

    def add(self, name: str, value: np.ndarray) -> Tensor:
        if name in self._params:
            raise ValueError(f"duplicate parameter name: {name}")
        t = Tensor(np.asarray(value, dtype=np.float64).copy(), name=name)
        self._params[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __iter__(self):
        return iter(self._params.items())

    def names(self):
        return list(self._params)

    def zero_grad(self):
        for t in self._params.values():
            t.grad = None

    def grads(self) -> dict[str, np.ndarray]:
        """Gradients per parameter; unreachable parameters get zeros."""
        return {name: (t.grad if t.grad is not None else np.zeros_like(t.value))
                for name, t in self._params.items()}

    def values(self) -> dict[str, np.ndarray]:
        return {name: t.value.copy() for name, t in self._params.items()}

    def load_values(self, values: dict[str, np.ndarray]):
        for name, t in self._params.items():
            v = np.asarray(values[name], dtype=np.float64)
            if v.shape != t.value.shape:
                raise ValueError(f"parameter {name}: shape {v.shape} does not "
                                 f"match {t.value.shape}")
            t.value = v.copy()

    def n_coordinates(self) -> int:
        return sum(t.value.size for t in self._params.values())


class AdamState:
    """Per-parameter first/second moment accumulators and step counter."""

    def __init__(self, params: ParameterSet, lr=1e-3, beta1=0.9, beta2=0.999,
                 eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {name: np.zeros_like(t.value) for name, t in params}
        self.v = {name: np.zeros_like(t.value) for name, t in params}


def adam_step(params: ParameterSet, grads: dict[str, np.ndarray],
              state: AdamState):
    """One bias-corrected Adam update, in place on the parameter values."""
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1 ** state.t
    bc2 = 1.0 - b2 ** state.t
    for name, p in params:
        g = grads[name]
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient for parameter {name}")
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        m_hat = m / bc1
        v_hat = v / bc2
        p.value -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)


def finite_diff_check(loss_fn, params: ParameterSet, h=1e-5,
                      max_coords_per_param=None, rng=None) -> float:
    """Max relative error between analytic and central-difference gradients.

    loss_fn rebuilds the graph from the current parameter values and
    returns a scalar Tensor. Checks every coordinate unless
    max_coords_per_param caps it (sampled with rng).
    """
    params.zero_grad()
    loss = loss_fn()
    backward(loss)
    analytic = params.grads()

    worst = 0.0
    for name, t in params:
        flat = t.value.reshape(-1)
        n = flat.size
        if max_coords_per_param is not None and n > max_coords_per_param:
            if rng is None:
                rng = np.random.default_rng(0)
            coords = rng.choice(n, size=max_coords_per_param, replace=False)
        else:
            coords = range(n)
        a_flat = analytic[name].reshape(-1)
        for i in coords:
            orig = flat[i]
            flat[i] = orig + h
            up = float(loss_fn().value)
            flat[i] = orig - h
            down = float(loss_fn().value)
            flat[i] = orig
            numeric = (up - down) / (2.0 * h)
            a = a_flat[i]
            err = abs(a - numeric) / (abs(a) + abs(numeric) + 1e-12)
            if err > worst:
                worst = err
    return worst
