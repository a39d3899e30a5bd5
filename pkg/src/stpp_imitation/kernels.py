"""Gaussian RKHS kernel on ``(t, x, y)`` and the finite-sample discrepancy between
the mean embeddings of two collections of event sequences.

The discrepancy uses the counting-measure embedding: each batch is represented by
``(1/L) sum_l sum_i k(e_i^l, .)``, so the per-batch normalisation is by the number
of sequences, not the number of events.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np

from .events import Event, EventSequence, common_horizon, stack_events

NEG_TOL = 1e-9


@dataclass(frozen=True)
class KernelConfig:
    bandwidth: float = 1.0
    kind: Literal["gaussian", "matern"] = "gaussian"
    unbiased: bool = False

    def __post_init__(self):
        if not (math.isfinite(self.bandwidth) and self.bandwidth > 0):
            raise ValueError(f"bandwidth must be positive, got {self.bandwidth}")
        if self.kind not in ("gaussian", "matern"):
            raise ValueError(f"unknown kernel kind {self.kind!r}")

    def check_supported(self) -> None:
        if self.kind != "gaussian":
            raise NotImplementedError(f"kernel kind {self.kind!r} is reserved but not implemented")


@dataclass(frozen=True)
class EmbeddingBatch:
    """A nonempty list of sequences (individual sequences may be empty)."""

    sequences: tuple[EventSequence, ...]
    role: Literal["expert", "learner"] = "expert"

    def __init__(self, sequences: Sequence[EventSequence], role: str = "expert"):
        seqs = tuple(sequences)
        if not seqs:
            raise ValueError(f"{role} batch must contain at least one sequence")
        common_horizon(seqs)
        object.__setattr__(self, "sequences", seqs)
        object.__setattr__(self, "role", role)

    def __len__(self) -> int:
        return len(self.sequences)

    @property
    def events(self) -> np.ndarray:
        return stack_events(self.sequences)

    @property
    def owner(self) -> np.ndarray:
        """Index of the sequence each stacked event belongs to."""
        return np.repeat(np.arange(len(self.sequences)), [len(s) for s in self.sequences])

    @property
    def horizon(self) -> float:
        return self.sequences[0].horizon


def _as_batch(b, role: str) -> EmbeddingBatch:
    return b if isinstance(b, EmbeddingBatch) else EmbeddingBatch(b, role)


def kernel_eval(e, e2, cfg: KernelConfig = KernelConfig()) -> float:
    cfg.check_supported()
    a = np.asarray(tuple(e), dtype=float)
    b = np.asarray(tuple(e2), dtype=float)
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise ValueError("kernel arguments must be finite")
    d2 = float(np.sum((a - b) ** 2))
    return math.exp(-d2 / (2.0 * cfg.bandwidth**2))


def gram(x: np.ndarray, y: np.ndarray, bandwidth: float) -> np.ndarray:
    """Kernel matrix ``k(x_i, y_j)`` for row-stacked 3-vectors."""
    x = np.asarray(x, dtype=float).reshape(-1, 3)
    y = np.asarray(y, dtype=float).reshape(-1, 3)
    # direct differences rather than the |x|^2+|y|^2-2xy expansion: avoids cancellation
    d2 = np.zeros((x.shape[0], y.shape[0]))
    for k in range(3):
        diff = x[:, k, None] - y[None, :, k]
        d2 += diff * diff
    return np.exp(d2 * (-0.5 / bandwidth**2))


def _self_term(events: np.ndarray, owner: np.ndarray, n_seq: int, cfg: KernelConfig) -> float:
    k = gram(events, events, cfg.bandwidth)
    if not cfg.unbiased:
        return float(k.sum()) / n_seq**2
    if n_seq < 2:
        raise ValueError("unbiased estimator needs at least two sequences per batch")
    same = owner[:, None] == owner[None, :]
    return float(k[~same].sum()) / (n_seq * (n_seq - 1))


def mmd_squared(expert, learner, cfg: KernelConfig = KernelConfig()) -> float:
    """Squared RKHS distance between the empirical mean embeddings of two batches.

    ``(1/L^2) sum k(e, e') + (1/M^2) sum k(a, a') - (2/(L M)) sum k(e, a)`` with all
    sums running over every event pair of the respective batches. Values in
    ``[-1e-9, 0)`` from cancellation are clamped to zero.
    """
    cfg.check_supported()
    xb, yb = _as_batch(expert, "expert"), _as_batch(learner, "learner")
    if xb.horizon != yb.horizon:
        raise ValueError(f"expert horizon {xb.horizon} differs from learner horizon {yb.horizon}")
    L, M = len(xb), len(yb)
    x, y = xb.events, yb.events
    d2 = (
        _self_term(x, xb.owner, L, cfg)
        + _self_term(y, yb.owner, M, cfg)
        - 2.0 * float(gram(x, y, cfg.bandwidth).sum()) / (L * M)
    )
    if d2 < 0.0 and not cfg.unbiased:
        if d2 < -NEG_TOL:
            raise FloatingPointError(f"negative squared discrepancy {d2}")
        d2 = 0.0
    return d2


def mmd_grad_events(expert, learner, cfg: KernelConfig = KernelConfig()) -> list[np.ndarray]:
    """Gradient of :func:`mmd_squared` w.r.t. every learner event coordinate.

    Returns one ``(n_m, 3)`` array per learner sequence. Event counts are held
    fixed; only the learner-learner and cross terms depend on the learner events.
    """
    cfg.check_supported()
    xb, yb = _as_batch(expert, "expert"), _as_batch(learner, "learner")
    L, M = len(xb), len(yb)
    x, y = xb.events, yb.events
    inv_bw2 = 1.0 / cfg.bandwidth**2
    grad = np.zeros_like(y)
    if y.shape[0]:
        kyy = gram(y, y, cfg.bandwidth)
        if cfg.unbiased:
            owner = yb.owner
            kyy = np.where(owner[:, None] == owner[None, :], 0.0, kyy)
            self_w = 2.0 / (M * (M - 1))
        else:
            self_w = 2.0 / M**2
        # d/dy_a k(y_a, y_b) = -k (y_a - y_b) / bw^2; symmetric pairs double the term
        grad -= self_w * inv_bw2 * (kyy.sum(1)[:, None] * y - kyy @ y)
        if x.shape[0]:
            kyx = gram(y, x, cfg.bandwidth)
            grad += (2.0 / (L * M)) * inv_bw2 * (kyx.sum(1)[:, None] * y - kyx @ x)
    splits = np.cumsum([len(s) for s in yb.sequences])[:-1]
    return np.split(grad, splits)


def reward_field(expert, learner, query, cfg: KernelConfig = KernelConfig()) -> float | np.ndarray:
    """Unnormalised optimal reward: expert kernel mass minus learner kernel mass.

    ``query`` may be one event or an ``(n, 3)`` array; the result is positive where
    the expert places more mass than the learner.
    """
    cfg.check_supported()
    xb, yb = _as_batch(expert, "expert"), _as_batch(learner, "learner")
    q = np.asarray(tuple(query) if isinstance(query, Event) else query, dtype=float)
    single = q.ndim == 1
    q = q.reshape(-1, 3)
    r = gram(q, xb.events, cfg.bandwidth).sum(1) / len(xb) - gram(q, yb.events, cfg.bandwidth).sum(1) / len(yb)
    return float(r[0]) if single else r


def reward_grid(expert, learner, cfg: KernelConfig, t_slice: float, xy_slice=(0.0, 0.0),
                n_space: int = 41, n_time: int = 41, space=(-2.0, 2.0), time=(0.0, 2.0)) -> np.ndarray:
    """Reward values on a fixed-time spatial grid and a fixed-location time line.

    Returns rows ``(t, x, y, r)``: first the ``n_space**2`` points at ``t = t_slice``,
    then the ``n_time`` points at ``(x, y) = xy_slice``.
    """
    xs = np.linspace(*space, n_space)
    gx, gy = np.meshgrid(xs, xs, indexing="ij")
    plane = np.column_stack([np.full(gx.size, t_slice), gx.ravel(), gy.ravel()])
    ts = np.linspace(*time, n_time)
    line = np.column_stack([ts, np.full(n_time, xy_slice[0]), np.full(n_time, xy_slice[1])])
    pts = np.vstack([plane, line])
    return np.column_stack([pts, reward_field(expert, learner, pts, cfg)])
