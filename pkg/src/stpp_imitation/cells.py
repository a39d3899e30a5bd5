"""Batched recurrent cells with hand-written backward passes.

Weights live in a flat ``dict[str, ndarray]``:

* ``rnn``:  ``V (h, 3)``, ``W (h, h)``, ``B (h,)``;  ``h' = tanh(V a + W h + B)``
* ``lstm``: ``Wx (4h, 3)``, ``Wh (4h, h)``, ``b (4h,)``; gates ordered i, f, g, o
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

MODES = ("lstm", "rnn")


class HiddenState(NamedTuple):
    h: np.ndarray
    c: np.ndarray | None = None


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def softplus(x):
    return np.logaddexp(0.0, x)


def init_cell(mode: str, hidden: int, rng: np.random.Generator) -> dict[str, np.ndarray]:
    if mode == "rnn":
        return {
            "V": rng.uniform(-1, 1, (hidden, 3)) / np.sqrt(3),
            "W": rng.uniform(-1, 1, (hidden, hidden)) / np.sqrt(hidden),
            "B": np.zeros(hidden),
        }
    if mode == "lstm":
        return {
            "Wx": rng.uniform(-1, 1, (4 * hidden, 3)) / np.sqrt(3),
            "Wh": rng.uniform(-1, 1, (4 * hidden, hidden)) / np.sqrt(hidden),
            "b": np.zeros(4 * hidden),
        }
    raise ValueError(f"unknown recurrent mode {mode!r}; expected one of {MODES}")


def cell_names(mode: str) -> tuple[str, ...]:
    return ("V", "W", "B") if mode == "rnn" else ("Wx", "Wh", "b")


def zero_state(mode: str, batch: int, hidden: int) -> HiddenState:
    h = np.zeros((batch, hidden))
    return HiddenState(h, np.zeros((batch, hidden)) if mode == "lstm" else None)


def cell_forward(mode: str, w: dict, a: np.ndarray, state: HiddenState):
    """One step for a batch: ``a (B, 3)``, state rows ``(B, h)``. Returns (state, cache)."""
    h = state.h
    if mode == "rnn":
        h_new = np.tanh(a @ w["V"].T + h @ w["W"].T + w["B"])
        return HiddenState(h_new), (a, h, h_new)
    n = h.shape[1]
    z = a @ w["Wx"].T + h @ w["Wh"].T + w["b"]
    i = sigmoid(z[:, :n])
    f = sigmoid(z[:, n : 2 * n])
    g = np.tanh(z[:, 2 * n : 3 * n])
    o = sigmoid(z[:, 3 * n :])
    c_new = f * state.c + i * g
    tc = np.tanh(c_new)
    h_new = o * tc
    return HiddenState(h_new, c_new), (a, h, state.c, i, f, g, o, tc)


def cell_backward(mode: str, w: dict, cache, dh: np.ndarray, dc: np.ndarray | None, grads: dict):
    """Backward of :func:`cell_forward`; accumulates into ``grads``.

    Returns ``(da, dh_prev, dc_prev)``.
    """
    if mode == "rnn":
        a, h, h_new = cache
        dz = dh * (1.0 - h_new * h_new)
        grads["V"] += dz.T @ a
        grads["W"] += dz.T @ h
        grads["B"] += dz.sum(0)
        return dz @ w["V"], dz @ w["W"], None
    a, h, c, i, f, g, o, tc = cache
    dc_tot = dh * o * (1.0 - tc * tc)
    if dc is not None:
        dc_tot = dc_tot + dc
    dz = np.concatenate(
        [
            dc_tot * g * i * (1.0 - i),
            dc_tot * c * f * (1.0 - f),
            dc_tot * i * (1.0 - g * g),
            dh * tc * o * (1.0 - o),
        ],
        axis=1,
    )
    grads["Wx"] += dz.T @ a
    grads["Wh"] += dz.T @ h
    grads["b"] += dz.sum(0)
    return dz @ w["Wx"], dz @ w["Wh"], dc_tot * f
