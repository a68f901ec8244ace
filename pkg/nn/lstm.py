"""
LSTM layer with backpropagation through time.

Input is channel-first (N, C, L); the recurrence runs along L. Gate order
in the fused weight matrices is input, forget, cell, output.
"""
from typing import Optional

import numpy as np
from scipy.special import expit

import sys
from pathlib import Path
sys.path.insert(0, str(Path(__file__).parent.parent))

from errors import ShapeError
from nn.layers import Layer, glorot_uniform


class LSTM(Layer):
    kind = "lstm"

    def __init__(self, in_channels: int, hidden: int, return_sequences: bool = False,
                 rng: Optional[np.random.Generator] = None):
        super().__init__()
        self.in_channels, self.hidden = in_channels, hidden
        self.return_sequences = return_sequences
        self.params["Wx"] = glorot_uniform(rng, (in_channels, 4 * hidden), in_channels, 4 * hidden)
        self.params["Wh"] = glorot_uniform(rng, (hidden, 4 * hidden), hidden, 4 * hidden)
        b = np.zeros(4 * hidden)
        if rng is not None:
            b[hidden:2 * hidden] = 1.0          # forget gate starts open
        self.params["b"] = b

    def config(self):
        return {"in_channels": self.in_channels, "hidden": self.hidden,
                "return_sequences": self.return_sequences}

    def forward(self, x, training=False):
        if x.ndim != 3 or x.shape[1] != self.in_channels:
            raise ShapeError(f"{self.kind} expects (N, {self.in_channels}, L), got {x.shape}")
        n, _, length = x.shape
        hd = self.hidden
        wx, wh, b = self.params["Wx"], self.params["Wh"], self.params["b"]
        xs = x.transpose(2, 0, 1)
        h = np.zeros((n, hd))
        c = np.zeros((n, hd))
        hs = np.empty((length, n, hd))
        steps = []
        for t in range(length):
            z = xs[t] @ wx + h @ wh + b
            i = expit(z[:, :hd])
            f = expit(z[:, hd:2 * hd])
            g = np.tanh(z[:, 2 * hd:3 * hd])
            o = expit(z[:, 3 * hd:])
            c_prev, h_prev = c, h
            c = f * c_prev + i * g
            tc = np.tanh(c)
            h = o * tc
            hs[t] = h
            if training:
                steps.append((xs[t], h_prev, c_prev, i, f, g, o, tc))
        if training:
            self._cache = (x.shape, steps)
        return hs.transpose(1, 2, 0) if self.return_sequences else h

    def backward(self, grad):
        self._need_cache()
        (n, cin, length), steps = self._cache
        hd = self.hidden
        wx, wh = self.params["Wx"], self.params["Wh"]
        if self.return_sequences:
            dhs = grad.transpose(2, 0, 1)
        else:
            dhs = np.zeros((length, n, hd))
            dhs[-1] = grad

        dwx = np.zeros_like(wx)
        dwh = np.zeros_like(wh)
        db = np.zeros(4 * hd)
        dx = np.empty((length, n, cin))
        dh_next = np.zeros((n, hd))
        dc_next = np.zeros((n, hd))
        for t in range(length - 1, -1, -1):
            x_t, h_prev, c_prev, i, f, g, o, tc = steps[t]
            dh = dhs[t] + dh_next
            do = dh * tc
            dc = dh * o * (1.0 - tc ** 2) + dc_next
            dz = np.concatenate([
                dc * g * i * (1.0 - i),
                dc * c_prev * f * (1.0 - f),
                dc * i * (1.0 - g ** 2),
                do * o * (1.0 - o),
            ], axis=1)
            dwx += x_t.T @ dz
            dwh += h_prev.T @ dz
            db += dz.sum(axis=0)
            dx[t] = dz @ wx.T
            dh_next = dz @ wh.T
            dc_next = dc * f
        self.grads = {"Wx": dwx, "Wh": dwh, "b": db}
        return dx.transpose(1, 2, 0)
