"""Fully connected ReLU network with hand-written backpropagation and Adam."""

from __future__ import annotations

import numpy as np

from .lifting import DimensionMismatch
from .numerics import make_rng

TOY_TOPOLOGY = (3, 256, 256, 2)
EXCAVATION_TOPOLOGY = (9, 256, 4)


class Mlp:
    """Affine layers with ReLU between them and a linear output.

    Parameters
    ----------
    sizes : sequence of int
        ``(d_in, hidden..., m)``.
    seed : int, optional
        Seeds Glorot-uniform weight initialization; biases start at zero.
        Without a seed all parameters are zero.
    """

    def __init__(self, sizes, seed=None):
        sizes = tuple(int(s) for s in sizes)
        if len(sizes) < 2 or min(sizes) < 1:
            raise ValueError(f"invalid layer sizes {sizes}")
        self.sizes = sizes
        rng = None if seed is None else make_rng(seed, 0x4D4C50)
        self.weights, self.biases = [], []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            if rng is None:
                W = np.zeros((fan_out, fan_in))
            else:
                bound = np.sqrt(6.0 / (fan_in + fan_out))
                W = rng.uniform(-bound, bound, size=(fan_out, fan_in))
            self.weights.append(W)
            self.biases.append(np.zeros(fan_out))

    @property
    def n_inputs(self):
        return self.sizes[0]

    @property
    def n_outputs(self):
        return self.sizes[-1]

    def parameters(self):
        """Flat list ``[W0, b0, W1, b1, ...]`` of the live parameter arrays."""
        out = []
        for W, b in zip(self.weights, self.biases):
            out += [W, b]
        return out

    def set_parameters(self, params):
        params = [np.array(p, dtype=np.float64) for p in params]
        self.weights = params[0::2]
        self.biases = params[1::2]

    def copy(self):
        clone = Mlp.__new__(Mlp)
        clone.sizes = self.sizes
        clone.weights = [W.copy() for W in self.weights]
        clone.biases = [b.copy() for b in self.biases]
        return clone

    def forward(self, v, cache=False):
        """Evaluate on ``v`` of shape ``(d_in,)`` or ``(N, d_in)``.

        With ``cache=True`` also returns the per-layer activations that
        :meth:`backward` needs.
        """
        v = np.asarray(v, dtype=np.float64)
        single = v.ndim == 1
        h = np.atleast_2d(v)
        if h.shape[1] != self.n_inputs:
            raise DimensionMismatch(
                f"network expects {self.n_inputs} inputs, got {h.shape[1]}")
        acts = [h]
        last = len(self.weights) - 1
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ W.T + b
            if i < last:
                h = np.maximum(h, 0.0)
            acts.append(h)
        out = h[0] if single else h
        return (out, acts) if cache else out

    __call__ = forward

    def backward(self, acts, grad_out):
        """Parameter gradients of ``sum(grad_out * output)`` over the batch.

        ``acts`` comes from ``forward(..., cache=True)``. Returns gradients
        in :meth:`parameters` order and the gradient with respect to the
        network input.
        """
        delta = np.atleast_2d(np.asarray(grad_out, dtype=np.float64))
        grads = [None] * (2 * len(self.weights))
        for i in range(len(self.weights) - 1, -1, -1):
            grads[2 * i] = delta.T @ acts[i]
            grads[2 * i + 1] = delta.sum(axis=0)
            delta = delta @ self.weights[i]
            if i > 0:
                delta = delta * (acts[i] > 0)
        return grads, delta


def forward(net, v):
    return net.forward(v)


def backward(net, inputs, grad_out):
    """Gradients of ``sum_i grad_out[i] . net(inputs[i])`` w.r.t. parameters."""
    _, acts = net.forward(np.atleast_2d(inputs), cache=True)
    return net.backward(acts, grad_out)[0]


class AdamState:
    """Bias-corrected Adam moments for a list of parameter arrays."""

    def __init__(self, params, lr=1e-5, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, params, grads):
        """Update ``params`` in place.

        Equivalent to ``p -= lr * m_hat / (sqrt(v_hat) + eps)`` with
        ``m_hat = m / (1 - beta1**t)`` and ``v_hat = v / (1 - beta2**t)``.
        """
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            buf = np.multiply(g, g)
            buf *= 1.0 - b2
            v *= b2
            v += buf
            np.multiply(g, 1.0 - b1, out=buf)
            m *= b1
            m += buf
            np.divide(v, c2, out=buf)
            np.sqrt(buf, out=buf)
            buf += self.eps
            np.divide(m, buf, out=buf)
            buf *= self.lr / c1
            p -= buf
        return params


def adam_step(params, grads, state):
    return state.step(params, grads)
