"""Intensity-free generative policy.

A recurrent cell embeds the events emitted so far; a two-layer MLP maps
``[hidden; noise; features]`` to the next event. Noise is ``U(0, 1)^m`` and is the
only source of randomness, so a rollout is a deterministic function of the
parameters and the recorded noise (which is what makes exact pathwise gradients
possible).

Output convention: the MLP emits ``o in R^3``; the inter-arrival time is
``softplus(o[0])`` and the location is ``(o[1], o[2])``. The recurrent input is
the absolute ``(t, x, y)`` of the previous event.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .cells import (
    HiddenState,
    cell_backward,
    cell_forward,
    cell_names,
    init_cell,
    sigmoid,
    softplus,
    zero_state,
)
from .events import EventSequence, common_horizon, require_valid

EMISSION_NAMES = ("H1", "U1", "H2", "U2")
DEFAULT_MAX_EVENTS = 10_000


@dataclass
class GeneratorParams:
    """All learnable weights plus the dimensions that fix their shapes.

    Treat instances as values: training returns new instances, rollouts never
    mutate them.
    """

    mode: str
    hidden: int
    mlp_hidden: int
    noise_dim: int
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
            if not np.all(np.isfinite(self.weights[k])):
                raise ValueError(f"weight {k} contains non-finite values")
        if self.feature_names and len(self.feature_names) != self.feature_dim:
            raise ValueError("feature_names length differs from feature_dim")
        self.feature_names = tuple(self.feature_names)

    def shapes(self) -> dict[str, tuple[int, ...]]:
        h, hp = self.hidden, self.mlp_hidden
        g = 4 * h if self.mode == "lstm" else h
        rec = dict(zip(cell_names(self.mode), [(g, 3), (g, h), (g,)]))
        return {
            **rec,
            "H1": (hp, h + self.noise_dim + self.feature_dim),
            "U1": (hp,),
            "H2": (3, hp),
            "U2": (3,),
        }

    def with_weights(self, weights: dict[str, np.ndarray]) -> GeneratorParams:
        return GeneratorParams(
            self.mode, self.hidden, self.mlp_hidden, self.noise_dim, self.feature_dim,
            {k: np.array(v, dtype=float) for k, v in weights.items()}, self.feature_names,
        )

    def copy(self) -> GeneratorParams:
        return self.with_weights(self.weights)

    def zeros_like(self) -> dict[str, np.ndarray]:
        return {k: np.zeros_like(v) for k, v in self.weights.items()}

    @property
    def n_params(self) -> int:
        return sum(v.size for v in self.weights.values())


def init_params(hidden: int = 64, mlp_hidden: int = 32, noise_dim: int = 10, feature_dim: int = 0,
                mode: str = "lstm", seed=0, feature_names: Sequence[str] = ()) -> GeneratorParams:
    """Uniform ``[-1/sqrt(fan_in), 1/sqrt(fan_in)]`` weights, zero biases."""
    rng = np.random.default_rng(seed)
    w = init_cell(mode, hidden, rng)
    fan1 = hidden + noise_dim + feature_dim
    w["H1"] = rng.uniform(-1, 1, (mlp_hidden, fan1)) / np.sqrt(fan1)
    w["U1"] = np.zeros(mlp_hidden)
    w["H2"] = rng.uniform(-1, 1, (3, mlp_hidden)) / np.sqrt(mlp_hidden)
    w["U2"] = np.zeros(3)
    return GeneratorParams(mode, hidden, mlp_hidden, noise_dim, feature_dim, w, tuple(feature_names))


def match_event_rate(params: GeneratorParams, sequences: Sequence[EventSequence]) -> GeneratorParams:
    """Copy of ``params`` whose inter-arrival bias gives the data's mean gap.

    With the bias set to ``softplus^-1(T / mean count)`` a fresh network starts
    out emitting roughly as many events per sequence as the data holds, instead
    of the ``T / log 2`` implied by a zero bias.
    """
    if not sequences:
        raise ValueError("need at least one sequence")
    mean_count = float(np.mean([len(s) for s in sequences]))
    if mean_count <= 0:
        raise ValueError("sequences contain no events")
    gap = common_horizon(sequences) / mean_count
    w = dict(params.weights)
    w["U2"] = w["U2"].copy()
    w["U2"][0] = gap + np.log(-np.expm1(-gap))  # inverse softplus, stable for large gaps
    return params.with_weights(w)


def _features(params: GeneratorParams, f, batch: int) -> np.ndarray:
    if params.feature_dim == 0:
        if f is not None and np.size(f):
            raise ValueError("model was built without static features")
        return np.zeros((batch, 0))
    if f is None:
        raise ValueError(f"model expects {params.feature_dim} static features")
    f = np.asarray(getattr(f, "values", f), dtype=float)
    if f.ndim == 1:
        f = np.broadcast_to(f, (batch, f.shape[0]))
    if f.shape != (batch, params.feature_dim):
        raise ValueError(f"features have shape {f.shape}, expected ({batch}, {params.feature_dim})")
    return f


def _emission_forward(w, h, z, f):
    x_in = np.concatenate([h, z, f], axis=1)
    q = np.tanh(x_in @ w["H1"].T + w["U1"])
    o = q @ w["H2"].T + w["U2"]
    return o, (x_in, q, o)


def _emission_backward(w, cache, do, grads, hidden: int) -> np.ndarray:
    x_in, q, _ = cache
    grads["H2"] += do.T @ q
    grads["U2"] += do.sum(0)
    dp = (do @ w["H2"]) * (1.0 - q * q)
    grads["H1"] += dp.T @ x_in
    grads["U1"] += dp.sum(0)
    return (dp @ w["H1"])[:, :hidden]


def _as_state(params: GeneratorParams, h) -> HiddenState:
    if isinstance(h, HiddenState):
        hh = np.atleast_2d(np.asarray(h.h, dtype=float))
        cc = None if h.c is None else np.atleast_2d(np.asarray(h.c, dtype=float))
    else:
        hh, cc = np.atleast_2d(np.asarray(h, dtype=float)), None
    if params.mode == "lstm" and cc is None:
        cc = np.zeros_like(hh)
    if hh.shape[1] != params.hidden:
        raise ValueError(f"hidden state has size {hh.shape[1]}, expected {params.hidden}")
    return HiddenState(hh, cc if params.mode == "lstm" else None)


def rnn_step(params: GeneratorParams, a, h) -> HiddenState:
    """Advance the history embedding by one event ``a = (t, x, y)``."""
    a = np.asarray(tuple(a), dtype=float).reshape(1, 3)
    state, _ = cell_forward(params.mode, params.weights, a, _as_state(params, h))
    return HiddenState(state.h[0], None if state.c is None else state.c[0])


def emit_event(params: GeneratorParams, h, z, f=None) -> tuple[float, tuple[float, float]]:
    """Map (hidden, noise, features) to ``(delta_t, (x, y))``; ``delta_t > 0``."""
    state = _as_state(params, h)
    z = np.asarray(z, dtype=float).reshape(1, -1)
    if z.shape[1] != params.noise_dim:
        raise ValueError(f"noise has size {z.shape[1]}, expected {params.noise_dim}")
    o, _ = _emission_forward(params.weights, state.h, z, _features(params, f, 1))
    return float(softplus(o[0, 0])), (float(o[0, 1]), float(o[0, 2]))


@dataclass(frozen=True)
class RolloutTrace:
    """A generated sequence with the noise and hidden states that produced it.

    ``noise[i]`` produced event ``i``; ``hidden[i]`` is the state it was emitted
    from (``hidden[0]`` is the zero state), so ``hidden`` has one more row.
    """

    sequence: EventSequence
    noise: np.ndarray
    hidden: np.ndarray
    cell: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.sequence)


class _NoiseStream:
    """Per-rollout U(0,1)^m stream drawn in blocks (same values as row-by-row draws)."""

    def __init__(self, seed, dim: int, block: int = 32):
        self.rng = np.random.default_rng(seed)
        self.dim, self.block = dim, block
        self.buf = np.zeros((0, dim))
        self.pos = 0

    def next(self) -> np.ndarray:
        if self.pos == self.buf.shape[0]:
            self.buf = self.rng.random((self.block, self.dim))
            self.pos = 0
        self.pos += 1
        return self.buf[self.pos - 1]


def _run(params, f, streams, horizon, state, t0, n_events=None, max_events=DEFAULT_MAX_EVENTS):
    """Shared free-running loop from a given state.

    Stops each row when the next time reaches ``horizon`` (if given) or after
    ``n_events`` events. Returns per-row event arrays, noise and state histories.
    """
    w, mode = params.weights, params.mode
    B = len(streams)
    feats = _features(params, f, B)
    t = np.array(t0, dtype=float).reshape(B).copy()
    active = np.ones(B, dtype=bool)
    counts = np.zeros(B, dtype=int)
    ev_steps, z_steps, h_steps, c_steps = [], [], [state.h], [state.c]
    limit = n_events if n_events is not None else max_events
    zero = np.zeros(params.noise_dim)
    while active.any() and len(ev_steps) < limit:
        z = np.stack([s.next() if act else zero for s, act in zip(streams, active)])
        o, _ = _emission_forward(w, state.h, z, feats)
        t_new = t + softplus(o[:, 0])
        if horizon is not None:
            active &= t_new < horizon
        a = np.column_stack([t_new, o[:, 1], o[:, 2]])
        counts += active
        t = np.where(active, t_new, t)
        ev_steps.append(a)
        z_steps.append(z)
        if not active.any():
            break
        state, _ = cell_forward(mode, w, a, state)
        h_steps.append(state.h)
        c_steps.append(state.c)
    if horizon is not None and active.any():
        raise RuntimeError(f"rollout exceeded {limit} events before reaching the horizon")
    ev = np.stack(ev_steps, 1) if ev_steps else np.zeros((B, 0, 3))
    zz = np.stack(z_steps, 1) if z_steps else np.zeros((B, 0, params.noise_dim))
    hh = np.stack(h_steps, 1)
    cc = np.stack(c_steps, 1) if mode == "lstm" else None
    return counts, ev, zz, hh, cc


def rollout_batch(params: GeneratorParams, horizon: float, seeds: Sequence, features=None,
                  max_events: int = DEFAULT_MAX_EVENTS) -> list[RolloutTrace]:
    """Free-running rollouts on ``[0, horizon)``; rollout ``b`` draws noise from ``seeds[b]``.

    The event that would land at or beyond the horizon is discarded.
    """
    if not horizon > 0:
        raise ValueError("horizon must be positive")
    B = len(seeds)
    streams = [_NoiseStream(s, params.noise_dim) for s in seeds]
    feats = _features(params, features, B)
    counts, ev, zz, hh, cc = _run(params, feats, streams, horizon, zero_state(params.mode, B, params.hidden),
                                  np.zeros(B), max_events=max_events)
    traces = []
    for b in range(B):
        n = counts[b]
        fb = feats[b] if params.feature_dim else None
        seq = EventSequence(ev[b, :n], horizon, fb)
        traces.append(RolloutTrace(seq, zz[b, :n].copy(), hh[b, : n + 1].copy(),
                                   None if cc is None else cc[b, : n + 1].copy()))
    return traces


def rollout(params: GeneratorParams, f=None, horizon: float = 2.0, seed=0,
            max_events: int = DEFAULT_MAX_EVENTS) -> RolloutTrace:
    return rollout_batch(params, horizon, [seed], None if f is None else [np.asarray(getattr(f, "values", f))],
                         max_events=max_events)[0]


def encode_history(params: GeneratorParams, history: EventSequence) -> HiddenState:
    """Last hidden state after feeding the observed events through the cell."""
    state = zero_state(params.mode, 1, params.hidden)
    for a in history.data:
        state, _ = cell_forward(params.mode, params.weights, a.reshape(1, 3), state)
    return state


def condition_and_predict(params: GeneratorParams, history: EventSequence, f=None, n_events: int = 10,
                          seed=0) -> EventSequence:
    """Generate ``n_events`` events continuing an observed history.

    Each prediction is fed back into the cell before the next one is drawn.
    """
    require_valid(history)
    state = encode_history(params, history)
    t0 = history.times[-1] if len(history) else 0.0
    if n_events <= 0:
        return EventSequence.empty(history.horizon, f)
    _, ev, _, _, _ = _run(params, f, [_NoiseStream(seed, params.noise_dim)], None, state, [t0], n_events=n_events)
    data = ev[0]
    horizon = max(history.horizon, float(np.nextafter(data[-1, 0], np.inf)))
    return EventSequence(data, horizon, f)


def predict_until(params: GeneratorParams, history: EventSequence, horizon: float, f=None, seed=0,
                  max_events: int = DEFAULT_MAX_EVENTS) -> EventSequence:
    """Continue an observed history with generated events up to ``horizon``."""
    require_valid(history)
    state = encode_history(params, history)
    t0 = history.times[-1] if len(history) else 0.0
    counts, ev, _, _, _ = _run(params, f, [_NoiseStream(seed, params.noise_dim)], horizon, state, [t0],
                               max_events=max_events)
    return EventSequence(ev[0, : counts[0]], horizon, f)


def replay(params: GeneratorParams, noise: np.ndarray, features: np.ndarray, n_steps: int):
    """Fixed-length lockstep forward pass with given noise ``(B, n, m)``.

    Returns ``(events (B, n, 3), caches)``; the caches feed :func:`replay_backward`.
    """
    w, mode = params.weights, params.mode
    B = noise.shape[0]
    feats = _features(params, features, B)
    state = zero_state(mode, B, params.hidden)
    t = np.zeros(B)
    events = np.zeros((B, n_steps, 3))
    em_caches, cell_caches = [], []
    for i in range(n_steps):
        o, ec = _emission_forward(w, state.h, noise[:, i], feats)
        t = t + softplus(o[:, 0])
        a = np.column_stack([t, o[:, 1], o[:, 2]])
        events[:, i] = a
        em_caches.append(ec)
        if i < n_steps - 1:
            state, cc = cell_forward(mode, w, a, state)
            cell_caches.append(cc)
    return events, (em_caches, cell_caches)


def replay_backward(params: GeneratorParams, caches, event_grads: np.ndarray) -> dict[str, np.ndarray]:
    """Reverse-mode gradient of ``sum_i <event_grads[:, i], a_i>`` through :func:`replay`.

    The time coordinate is a running sum of inter-arrival times, so its adjoint
    accumulates backwards along the sequence.
    """
    w, mode, H = params.weights, params.mode, params.hidden
    em_caches, cell_caches = caches
    grads = params.zeros_like()
    n = len(em_caches)
    B = event_grads.shape[0]
    dh = np.zeros((B, H))
    dc = np.zeros((B, H)) if mode == "lstm" else None
    dt_acc = np.zeros(B)
    for i in reversed(range(n)):
        da = event_grads[:, i].copy()
        if i < n - 1:
            da_cell, dh, dc = cell_backward(mode, w, cell_caches[i], dh, dc, grads)
            da += da_cell
        else:
            dh = np.zeros((B, H))
            dc = np.zeros((B, H)) if mode == "lstm" else None
        dt_acc = dt_acc + da[:, 0]
        o = em_caches[i][2]
        do = np.column_stack([dt_acc * sigmoid(o[:, 0]), da[:, 1], da[:, 2]])
        dh = dh + _emission_backward(w, em_caches[i], do, grads, H)
    return grads


def traces_to_arrays(params: GeneratorParams, traces: Sequence[RolloutTrace], event_grads=None):
    """Pad traces to a common length for lockstep replay."""
    B = len(traces)
    n = max((len(tr) for tr in traces), default=0)
    noise = np.zeros((B, n, params.noise_dim))
    grads = np.zeros((B, n, 3))
    feats = np.zeros((B, params.feature_dim))
    for b, tr in enumerate(traces):
        k = len(tr)
        noise[b, :k] = tr.noise
        if event_grads is not None:
            g = np.asarray(event_grads[b], dtype=float).reshape(-1, 3)
            if g.shape[0] != k:
                raise ValueError(f"trace {b} has {k} events but {g.shape[0]} gradient rows")
            grads[b, :k] = g
        if params.feature_dim:
            feats[b] = tr.sequence.features
    return noise, feats, grads, n
