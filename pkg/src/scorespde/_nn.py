"""Minimal two-hidden-layer perceptron with manual backprop.

Deliberately tiny: tanh hidden layers, linear output, SGD or Adam updates.
Used for the trainable score field and the density-ratio classifier; inputs
here are low-dimensional points, so there is no need for anything bigger.
"""

from __future__ import annotations

import numpy as np


class MLP:
    """Fully-connected net sizes[0] -> sizes[1] -> ... -> sizes[-1]."""

    def __init__(self, sizes: list[int], rng: np.random.Generator):
        self.sizes = list(sizes)
        self.weights = []
        self.biases = []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            scale = np.sqrt(1.0 / fan_in)
            self.weights.append(rng.standard_normal((fan_in, fan_out)) * scale)
            self.biases.append(np.zeros(fan_out))

    def forward(self, x: np.ndarray) -> np.ndarray:
        h = x
        for W, b in zip(self.weights[:-1], self.biases[:-1]):
            h = np.tanh(h @ W + b)
        return h @ self.weights[-1] + self.biases[-1]

    def forward_cached(self, x: np.ndarray):
        acts = [x]
        h = x
        for W, b in zip(self.weights[:-1], self.biases[:-1]):
            h = np.tanh(h @ W + b)
            acts.append(h)
        out = h @ self.weights[-1] + self.biases[-1]
        return out, acts

    def backward(self, acts, dout: np.ndarray):
        """Gradients of the loss given d(loss)/d(output); acts from forward_cached."""
        grads_w = [None] * len(self.weights)
        grads_b = [None] * len(self.biases)
        delta = dout
        for layer in range(len(self.weights) - 1, -1, -1):
            grads_w[layer] = acts[layer].T @ delta
            grads_b[layer] = delta.sum(axis=0)
            if layer > 0:
                h = acts[layer]
                delta = (delta @ self.weights[layer].T) * (1.0 - h * h)
        return grads_w, grads_b

    def copy(self) -> "MLP":
        dup = object.__new__(MLP)
        dup.sizes = list(self.sizes)
        dup.weights = [W.copy() for W in self.weights]
        dup.biases = [b.copy() for b in self.biases]
        return dup

    def sgd_step(self, grads_w, grads_b, lr: float) -> None:
        for W, g in zip(self.weights, grads_w):
            W -= lr * g
        for b, g in zip(self.biases, grads_b):
            b -= lr * g


class Adam:
    """Standard Adam state for one MLP."""

    def __init__(self, net: MLP, lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m_w = [np.zeros_like(W) for W in net.weights]
        self.v_w = [np.zeros_like(W) for W in net.weights]
        self.m_b = [np.zeros_like(b) for b in net.biases]
        self.v_b = [np.zeros_like(b) for b in net.biases]

    def step(self, net: MLP, grads_w, grads_b) -> None:
        self.t += 1
        corr1 = 1.0 - self.beta1 ** self.t
        corr2 = 1.0 - self.beta2 ** self.t
        for i, (W, g) in enumerate(zip(net.weights, grads_w)):
            self.m_w[i] = self.beta1 * self.m_w[i] + (1 - self.beta1) * g
            self.v_w[i] = self.beta2 * self.v_w[i] + (1 - self.beta2) * g * g
            W -= self.lr * (self.m_w[i] / corr1) / (np.sqrt(self.v_w[i] / corr2) + self.eps)
        for i, (b, g) in enumerate(zip(net.biases, grads_b)):
            self.m_b[i] = self.beta1 * self.m_b[i] + (1 - self.beta1) * g
            self.v_b[i] = self.beta2 * self.v_b[i] + (1 - self.beta2) * g * g
            b -= self.lr * (self.m_b[i] / corr1) / (np.sqrt(self.v_b[i] / corr2) + self.eps)
