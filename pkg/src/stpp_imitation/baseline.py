"""Likelihood-trained comparator with a prespecified emission density.

Same recurrent history embedding as the generator, but the next event is drawn
from ``delta_t ~ Exp(lambda(h))`` and ``u ~ N(mu(h), diag(var(h)))`` where one
linear head on ``[h; f]`` produces all five raw outputs. Because the hazard is
constant between events, the likelihood's integral term is the analytic survival
term ``-lambda * gap``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .cells import cell_backward, cell_forward, cell_names, init_cell, sigmoid, softplus, zero_state
from .events import EventSequence, require_valid
from .optim import clip_by_global_norm, make_optimizer

LOG_2PI = math.log(2.0 * math.pi)


@dataclass
class BaselineParams:
    mode: str
    hidden: int
    feature_dim: int
    weights: dict[str, np.ndarray]
    feature_names: tuple[str, ...] = field(default=())

    def __post_init__(self):
        self.weights = {k: np.asarray(v, dtype=float) for k, v in self.weights.items()}
        expected = self.shapes()
        if set(self.weights) != set(expected):
            raise ValueError(f"weight names {sorted(self.weights)} do not match {sorted(expected)}")
        for k, shape in expected.items():
            if self.weights[k].shape != shape:
                raise ValueError(f"weight {k} has shape {self.weights[k].shape}, expected {shape}")
        self.feature_names = tuple(self.feature_names)

    def shapes(self) -> dict[str, tuple[int, ...]]:
        h = self.hidden
        g = 4 * h if self.mode == "lstm" else h
        rec = dict(zip(cell_names(self.mode), [(g, 3), (g, h), (g,)]))
        return {**rec, "Hd": (5, h + self.feature_dim), "bd": (5,)}

    def with_weights(self, weights) -> BaselineParams:
        return BaselineParams(self.mode, self.hidden, self.feature_dim,
                              {k: np.array(v, dtype=float) for k, v in weights.items()}, self.feature_names)

    def copy(self) -> BaselineParams:
        return self.with_weights(self.weights)

    def zeros_like(self) -> dict[str, np.ndarray]:
        return {k: np.zeros_like(v) for k, v in self.weights.items()}


def init_baseline(hidden: int = 64, feature_dim: int = 0, mode: str = "lstm", seed=0,
                  feature_names: Sequence[str] = ()) -> BaselineParams:
    rng = np.random.default_rng(seed)
    w = init_cell(mode, hidden, rng)
    fan = hidden + feature_dim
    w["Hd"] = rng.uniform(-1, 1, (5, fan)) / np.sqrt(fan)
    w["bd"] = np.zeros(5)
    return BaselineParams(mode, hidden, feature_dim, w, tuple(feature_names))


def _feats(params: BaselineParams, f, batch: int) -> np.ndarray:
    if params.feature_dim == 0:
        return np.zeros((batch, 0))
    if f is None:
        raise ValueError(f"baseline expects {params.feature_dim} static features")
    f = np.asarray(getattr(f, "values", f), dtype=float)
    return np.broadcast_to(f, (batch, params.feature_dim)) if f.ndim == 1 else f


def head_outputs(params: BaselineParams, h, f=None):
    """``(rate, mean (.., 2), variance (.., 2))`` for hidden rows ``h``."""
    h = np.atleast_2d(np.asarray(getattr(h, "h", h), dtype=float))
    x = np.concatenate([h, _feats(params, f, h.shape[0])], axis=1)
    raw = x @ params.weights["Hd"].T + params.weights["bd"]
    return softplus(raw[:, 0]), raw[:, 1:3], softplus(raw[:, 3:5])


def _log_density(rate, mean, var, dt, loc):
    r = loc - mean
    return np.log(rate) - rate * dt - 0.5 * np.sum(r * r / var + np.log(var), axis=-1) - LOG_2PI


def cond_log_density(params: BaselineParams, h, delta_t: float, location, f=None) -> float:
    """``log Exp(delta_t; rate) + log N(location; mean, diag(var))`` at hidden state ``h``."""
    if not delta_t > 0:
        raise ValueError(f"inter-arrival time must be positive, got {delta_t}")
    rate, mean, var = head_outputs(params, h, f)
    return float(_log_density(rate, mean, var, delta_t, np.asarray(location, dtype=float).reshape(1, 2))[0])


def _pad(seqs: Sequence[EventSequence]):
    B = len(seqs)
    n = np.array([len(s) for s in seqs])
    N = int(n.max(initial=0))
    ev = np.zeros((B, N, 3))
    for b, s in enumerate(seqs):
        ev[b, : n[b]] = s.data
    return ev, n, N


def _forward(params: BaselineParams, seqs: Sequence[EventSequence], keep_cache: bool = False):
    """Per-sequence log-likelihoods, computed in lockstep over padded sequences."""
    w, mode = params.weights, params.mode
    B = len(seqs)
    ev, n, N = _pad(seqs)
    horizon = np.array([s.horizon for s in seqs])
    feats = (np.stack([np.asarray(s.features, dtype=float) for s in seqs])
             if params.feature_dim else np.zeros((B, 0)))
    state = zero_state(mode, B, params.hidden)
    t_prev = np.zeros(B)
    ll = np.zeros(B)
    caches = []
    for i in range(N + 1):
        x = np.concatenate([state.h, feats], axis=1)
        raw = x @ w["Hd"].T + w["bd"]
        rate, mean, var = softplus(raw[:, 0]), raw[:, 1:3], softplus(raw[:, 3:5])
        is_event = i < n
        is_tail = i == n
        if i < N:
            dt = ev[:, i, 0] - t_prev
            loc = ev[:, i, 1:]
        else:
            dt, loc = np.zeros(B), mean
        dens = np.where(is_event, _log_density(rate, mean, var, np.where(is_event, dt, 1.0), loc), 0.0)
        gap = np.where(is_tail, horizon - t_prev, 0.0)
        ll += dens - rate * gap
        cell_cache = None
        if i < N:
            new_state, cell_cache = cell_forward(mode, w, ev[:, i], state)
            t_prev = np.where(is_event, ev[:, i, 0], t_prev)
            state = new_state
        if keep_cache:
            caches.append((x, raw, is_event, dt, loc, gap, cell_cache))
    return ll, caches


def _backward(params: BaselineParams, caches, dll: np.ndarray) -> dict[str, np.ndarray]:
    w, mode, H = params.weights, params.mode, params.hidden
    grads = params.zeros_like()
    B = dll.shape[0]
    dh = np.zeros((B, H))
    dc = np.zeros((B, H)) if mode == "lstm" else None
    for i in reversed(range(len(caches))):
        x, raw, is_event, dt, loc, gap, cell_cache = caches[i]
        if cell_cache is not None:
            _, dh, dc = cell_backward(mode, w, cell_cache, dh, dc, grads)
        rate, mean, var = softplus(raw[:, 0]), raw[:, 1:3], softplus(raw[:, 3:5])
        ev = is_event.astype(float)
        resid = loc - mean
        d_rate = ev * (1.0 / rate - dt) - gap
        d_mean = ev[:, None] * resid / var
        d_var = ev[:, None] * 0.5 * (resid * resid / (var * var) - 1.0 / var)
        draw = np.column_stack([d_rate * sigmoid(raw[:, 0]), d_mean, d_var * sigmoid(raw[:, 3:5])]) * dll[:, None]
        grads["Hd"] += draw.T @ x
        grads["bd"] += draw.sum(0)
        dh = dh + (draw @ w["Hd"])[:, :H]
    return grads


def sequence_log_likelihood(params: BaselineParams, seq: EventSequence) -> float:
    """Sum of conditional log-densities plus the survival term for ``(t_n, T)``."""
    require_valid(seq)
    ll, _ = _forward(params, [seq])
    return float(ll[0])


def mean_log_likelihood(params: BaselineParams, seqs: Sequence[EventSequence]) -> float:
    ll, _ = _forward(params, seqs)
    return float(np.mean(ll))


def log_likelihood_grad(params: BaselineParams, seqs: Sequence[EventSequence]) -> tuple[float, dict[str, np.ndarray]]:
    """Mean sequence log-likelihood and its exact gradient."""
    ll, caches = _forward(params, seqs, keep_cache=True)
    grads = _backward(params, caches, np.full(len(seqs), 1.0 / len(seqs)))
    return float(np.mean(ll)), grads


@dataclass(frozen=True)
class BaselineFitConfig:
    lr: float = 1e-3
    iterations: int = 1000
    batch_size: int | None = 32
    seed: int = 0
    clip_norm: float | None = 5.0
    freeze_recurrent: bool = False


def fit_mle(data: Sequence[EventSequence], cfg: BaselineFitConfig, params: BaselineParams,
            trace: list | None = None) -> BaselineParams:
    """Maximise the mean sequence log-likelihood with Adam.

    ``trace`` (if given) receives the minibatch mean log-likelihood per iteration.
    """
    if not data:
        raise ValueError("no training sequences")
    for s in data:
        require_valid(s)
    params = params.copy()
    opt = make_optimizer("adam", cfg.lr)
    rng = np.random.default_rng((cfg.seed, 3))
    frozen = set(cell_names(params.mode)) if cfg.freeze_recurrent else set()
    for k in range(cfg.iterations):
        if cfg.batch_size is None or cfg.batch_size >= len(data):
            batch = data
        else:
            batch = [data[i] for i in rng.choice(len(data), cfg.batch_size, replace=False)]
        ll, grads = log_likelihood_grad(params, batch)
        if not math.isfinite(ll):
            raise FloatingPointError(f"non-finite log-likelihood at iteration {k}")
        neg = {name: (np.zeros_like(g) if name in frozen else -g) for name, g in grads.items()}
        opt.step(params.weights, clip_by_global_norm(neg, cfg.clip_norm))
        if trace is not None:
            trace.append(ll)
    return params


def sample(params: BaselineParams, f=None, horizon: float = 2.0, seed=0, max_events: int = 100_000) -> EventSequence:
    """Draw one sequence on ``[0, horizon)`` by iterating the emission density."""
    rng = np.random.default_rng(seed)
    feats = _feats(params, f, 1)
    state = zero_state(params.mode, 1, params.hidden)
    t = 0.0
    rows = []
    while len(rows) < max_events:
        x = np.concatenate([state.h, feats], axis=1)
        raw = (x @ params.weights["Hd"].T + params.weights["bd"])[0]
        rate, mean, var = softplus(raw[0]), raw[1:3], softplus(raw[3:5])
        t = t + rng.exponential(1.0 / rate)
        if t >= horizon:
            break
        loc = mean + np.sqrt(var) * rng.standard_normal(2)
        a = np.array([t, loc[0], loc[1]])
        rows.append(a)
        state, _ = cell_forward(params.mode, params.weights, a.reshape(1, 3), state)
    else:
        raise RuntimeError(f"baseline sample exceeded {max_events} events")
    fv = None if f is None else np.asarray(getattr(f, "values", f), dtype=float)
    return EventSequence(np.array(rows).reshape(-1, 3), horizon, fv)
