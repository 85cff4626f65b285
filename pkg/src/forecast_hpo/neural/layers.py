"""Numpy building blocks with hand-written backward passes.

Every forward function returns its output and a cache; the matching
backward function takes the upstream gradient and the cache.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def softplus(x):
    return np.logaddexp(0.0, x)


@dataclass
class LstmCellParams:
    """Stacked gate weights: W is (D + H, 4H), columns ordered forget, input, output, candidate."""

    W: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        if self.W.ndim != 2 or self.W.shape[1] % 4 or self.b.shape != (self.W.shape[1],):
            raise ValueError(f"inconsistent LSTM shapes W{self.W.shape} b{self.b.shape}")
        if self.W.shape[0] <= self.hidden_size:
            raise ValueError("W must have D + H rows with D >= 1")

    @property
    def hidden_size(self) -> int:
        return self.W.shape[1] // 4

    @property
    def input_size(self) -> int:
        return self.W.shape[0] - self.hidden_size


def lstm_cell_forward(x, h, c, params: LstmCellParams):
    H = params.hidden_size
    if x.shape[-1] != params.input_size or h.shape[-1] != H or c.shape[-1] != H:
        raise ValueError(
            f"dimension mismatch: x{x.shape} h{h.shape} c{c.shape} for D={params.input_size}, H={H}"
        )
    xh = np.concatenate([x, h], axis=-1)
    z = xh @ params.W + params.b
    f = sigmoid(z[..., :H])
    i = sigmoid(z[..., H : 2 * H])
    o = sigmoid(z[..., 2 * H : 3 * H])
    g = np.tanh(z[..., 3 * H :])
    c_new = f * c + i * g
    tc = np.tanh(c_new)
    h_new = o * tc
    return h_new, c_new, (xh, c, f, i, o, g, tc)


def lstm_cell_step(x, h, c, params: LstmCellParams):
    h_new, c_new, _ = lstm_cell_forward(np.asarray(x, float), np.asarray(h, float), np.asarray(c, float), params)
    return h_new, c_new


def lstm_cell_backward(dh_new, dc_new, cache, params: LstmCellParams):
    """Returns (dx, dh, dc, dW, db) for one step."""
    xh, c, f, i, o, g, tc = cache
    D = params.input_size
    do = dh_new * tc
    dc = dc_new + dh_new * o * (1.0 - tc * tc)
    dz = np.concatenate(
        [dc * c * f * (1.0 - f), dc * g * i * (1.0 - i), do * o * (1.0 - o), dc * i * (1.0 - g * g)],
        axis=-1,
    )
    xh2 = xh.reshape(-1, xh.shape[-1])
    dz2 = dz.reshape(-1, dz.shape[-1])
    dW = xh2.T @ dz2
    db = dz2.sum(axis=0)
    dxh = dz @ params.W.T
    return dxh[..., :D], dxh[..., D:], dc * f, dW, db


def _shift(x, d):
    out = np.zeros_like(x)
    if d < x.shape[1]:
        out[:, d:] = x[:, :-d]
    return out


def causal_conv_forward(x, W, b, dilation: int):
    """Kernel-2 causal convolution: y_t = x_{t-d} W[0] + x_t W[1] + b, zero padded on the left.

    x is (B, T, C_in), W is (2, C_in, C_out).
    """
    xs = _shift(x, dilation)
    return xs @ W[0] + x @ W[1] + b, (x, xs, dilation)


def causal_conv_backward(dy, cache, W):
    x, xs, d = cache
    ci = x.shape[-1]
    dy2 = dy.reshape(-1, dy.shape[-1])
    dW = np.stack([xs.reshape(-1, ci).T @ dy2, x.reshape(-1, ci).T @ dy2])
    db = dy2.sum(axis=0)
    dxs = dy @ W[0].T
    dx = dy @ W[1].T
    if d < x.shape[1]:
        dx[:, :-d] += dxs[:, d:]
    return dx, dW, db


def dense_forward(x, W, b):
    return x @ W + b, x


def dense_backward(dy, cache, W):
    x = cache
    x2 = x.reshape(-1, x.shape[-1])
    dy2 = dy.reshape(-1, dy.shape[-1])
    return dy @ W.T, x2.T @ dy2, dy2.sum(axis=0)
