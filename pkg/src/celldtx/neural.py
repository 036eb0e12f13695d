"""Fully connected ReLU Q-network with smooth-L1 loss and Adam, in float64 numpy."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


@dataclass
class Mlp:
    """Stack of affine layers, ReLU between them, linear output.

    ``weights[k]`` has shape (fan_in, fan_out).
    """

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def __post_init__(self):
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ValueError("need one bias per weight matrix")
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise ValueError(f"layer {k}: weight {w.shape} / bias {b.shape} mismatch")
            if k and w.shape[0] != self.weights[k - 1].shape[1]:
                raise ValueError(f"layer {k} input does not match previous output")

    @property
    def layer_sizes(self) -> list[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    def params(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def copy(self) -> "Mlp":
        return Mlp([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(p)) for p in self.params())


def init(rng: np.random.Generator, layer_sizes: Sequence[int]) -> Mlp:
    """Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), zero biases."""
    if len(layer_sizes) < 2 or any(s <= 0 for s in layer_sizes):
        raise ValueError("need at least two positive layer sizes")
    weights, biases = [], []
    for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return Mlp(weights, biases)


def _prepare(net, states, normalizers):
    x = np.asarray(states, dtype=float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[1] != net.weights[0].shape[0]:
        raise ValueError(f"expected {net.weights[0].shape[0]} features, got {x.shape[1]}")
    if normalizers is not None:
        norm = np.asarray(normalizers, dtype=float)
        if norm.shape != (x.shape[1],):
            raise ValueError("normalizer shape does not match input")
        if np.any(norm <= 0):
            raise ValueError("normalizers must be strictly positive")
        x = x / norm
    return x, single


def _forward_cached(net, x):
    acts = [x]
    h = x
    last = len(net.weights) - 1
    for k, (w, b) in enumerate(zip(net.weights, net.biases)):
        h = h @ w + b
        if k < last:
            h = np.maximum(h, 0.0)
        acts.append(h)
    return acts


def forward(net: Mlp, states, normalizers=None) -> np.ndarray:
    """Predicted reward per action for one state (1-D) or a batch (2-D)."""
    x, single = _prepare(net, states, normalizers)
    out = _forward_cached(net, x)[-1]
    return out[0] if single else out


def smooth_l1(predicted, target, beta: float = 1.0):
    """Huber-style loss and its derivative w.r.t. ``predicted`` (elementwise)."""
    if beta <= 0:
        raise ValueError("beta must be positive")
    d = np.asarray(predicted, dtype=float) - np.asarray(target, dtype=float)
    ad = np.abs(d)
    loss = np.where(ad < beta, 0.5 * d * d / beta, ad - 0.5 * beta)
    grad = np.clip(d / beta, -1.0, 1.0)
    if loss.ndim == 0:
        return float(loss), float(grad)
    return loss, grad


def backward(
    net: Mlp,
    states,
    actions,
    targets,
    normalizers=None,
    beta: float = 1.0,
) -> tuple[float, list[np.ndarray]]:
    """Mean smooth-L1 loss on each entry's chosen output, with exact gradients.

    Gradients are returned in ``net.params()`` order.  Outputs other than
    the entry's action contribute nothing.
    """
    x, _ = _prepare(net, states, normalizers)
    actions = np.asarray(actions, dtype=np.int64).ravel()
    targets = np.asarray(targets, dtype=float).ravel()
    n = x.shape[0]
    if n == 0:
        raise ValueError("empty batch")
    if len(actions) != n or len(targets) != n:
        raise ValueError("states, actions and targets must have equal length")
    n_out = net.weights[-1].shape[1]
    if np.any(actions < 0) or np.any(actions >= n_out):
        raise IndexError(f"action index outside [0, {n_out})")

    acts = _forward_cached(net, x)
    rows = np.arange(n)
    pred = acts[-1][rows, actions]
    loss, dpred = smooth_l1(pred, targets, beta)

    delta = np.zeros_like(acts[-1])
    delta[rows, actions] = dpred / n
    grads = [None] * (2 * len(net.weights))
    for k in range(len(net.weights) - 1, -1, -1):
        grads[2 * k] = acts[k].T @ delta
        grads[2 * k + 1] = delta.sum(axis=0)
        if k:
            delta = (delta @ net.weights[k].T) * (acts[k] > 0)
    return float(loss.mean()), grads


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    @classmethod
    def for_net(cls, net: Mlp, **hyper) -> "AdamState":
        params = net.params()
        return cls(
            m=[np.zeros_like(p) for p in params],
            v=[np.zeros_like(p) for p in params],
            **hyper,
        )


def adam_step(net: Mlp, grads: Sequence[np.ndarray], adam: AdamState) -> Mlp:
    """One bias-corrected Adam update, applied to ``net`` in place."""
    params = net.params()
    if len(grads) != len(params) or not adam.m:
        raise ValueError("gradient / optimizer state does not match the network")
    adam.step += 1
    c1 = 1.0 - adam.beta1 ** adam.step
    c2 = 1.0 - adam.beta2 ** adam.step
    for p, g, m, v in zip(params, grads, adam.m, adam.v):
        if g.shape != p.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {p.shape}")
        m *= adam.beta1
        m += (1.0 - adam.beta1) * g
        v *= adam.beta2
        v += (1.0 - adam.beta2) * g * g
        p -= adam.lr * (m / c1) / (np.sqrt(v / c2) + adam.eps)
    return net
