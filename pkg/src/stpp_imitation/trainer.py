"""Fit the generator by gradient descent on the squared kernel discrepancy.

Each iteration draws ``L`` expert sequences, rolls out ``M`` learner sequences
with recorded noise, takes the gradient of D^2 with respect to the generated
event coordinates and pushes it through the unrolled generator. The number of
generated events is treated as fixed: no gradient flows through the stopping rule.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .events import EventSequence, common_horizon
from .generator import (
    DEFAULT_MAX_EVENTS,
    GeneratorParams,
    RolloutTrace,
    replay,
    replay_backward,
    rollout_batch,
    traces_to_arrays,
)
from .kernels import KernelConfig, mmd_grad_events, mmd_squared
from .optim import clip_by_global_norm, global_norm, make_optimizer

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    optimizer: str = "adam"
    batch_expert: int = 32
    batch_learner: int = 32
    iterations: int = 1000
    kernel: KernelConfig = field(default_factory=KernelConfig)
    seed: int = 0
    clip_norm: float | None = 5.0
    max_events: int = DEFAULT_MAX_EVENTS

    def __post_init__(self):
        if self.lr < 0 or not math.isfinite(self.lr):
            raise ValueError("learning rate must be finite and non-negative")
        if self.batch_expert < 1 or self.batch_learner < 1:
            raise ValueError("batch sizes must be at least 1")
        if self.iterations < 0:
            raise ValueError("iterations must be non-negative")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")


@dataclass
class TrainReport:
    d2: list[float]
    params: GeneratorParams
    wall_clock: float
    seed: int
    grad_norms: list[float] = field(default_factory=list)


def backprop_batch(params: GeneratorParams, traces: Sequence[RolloutTrace], event_grads) -> dict[str, np.ndarray]:
    """Summed parameter gradient of ``sum_b sum_i <event_grads[b][i], a_i^b>``.

    The traces are replayed with their recorded noise; a replay that does not
    reproduce the trace means the trace came from different parameters.
    """
    noise, feats, grads, n = traces_to_arrays(params, traces, event_grads)
    if n == 0:
        return params.zeros_like()
    events, caches = replay(params, noise, feats, n)
    for b, tr in enumerate(traces):
        k = len(tr)
        if k and not np.allclose(events[b, :k], tr.sequence.data, rtol=1e-9, atol=1e-9):
            raise ValueError(f"trace {b} was not produced by these parameters")
    return replay_backward(params, caches, grads)


def backprop_rollout(params: GeneratorParams, trace: RolloutTrace, event_grads) -> dict[str, np.ndarray]:
    """Exact parameter gradient for a single trace with per-event gradient triples."""
    return backprop_batch(params, [trace], [event_grads])


def _learner_features(expert_batch: Sequence[EventSequence], M: int, params: GeneratorParams):
    if params.feature_dim == 0:
        return None
    return np.stack([expert_batch[j % len(expert_batch)].features for j in range(M)])


def learner_seeds(seed: int, iteration: int, M: int) -> list[tuple[int, ...]]:
    return [(seed, 1, iteration, j) for j in range(M)]


def train(expert: Sequence[EventSequence], cfg: TrainConfig, params: GeneratorParams,
          callback: Callable[[int, float, GeneratorParams], None] | None = None) -> TrainReport:
    """Minimise D^2 between expert sequences and generator rollouts.

    Deterministic given ``cfg.seed``: expert minibatches come from one stream and
    rollout ``j`` of iteration ``k`` uses noise seeded by ``(seed, 1, k, j)``.
    """
    if not expert:
        raise ValueError("expert dataset is empty")
    horizon = common_horizon(expert)
    if params.feature_dim and any(s.features is None for s in expert):
        raise ValueError("model uses static features but some expert sequences have none")
    start = time.perf_counter()
    params = params.copy()
    opt = make_optimizer(cfg.optimizer, cfg.lr)
    pick = np.random.default_rng((cfg.seed, 0))
    L, M = cfg.batch_expert, cfg.batch_learner
    report = TrainReport([], params, 0.0, cfg.seed)
    for k in range(cfg.iterations):
        idx = pick.choice(len(expert), size=L, replace=len(expert) < L)
        batch = [expert[i] for i in idx]
        traces = rollout_batch(params, horizon, learner_seeds(cfg.seed, k, M),
                               _learner_features(batch, M, params), max_events=cfg.max_events)
        learner = [tr.sequence for tr in traces]
        d2 = mmd_squared(batch, learner, cfg.kernel)
        if not math.isfinite(d2):
            raise FloatingPointError(f"non-finite discrepancy {d2} at iteration {k}")
        grads = backprop_batch(params, traces, mmd_grad_events(batch, learner, cfg.kernel))
        gnorm = global_norm(grads)
        if not math.isfinite(gnorm):
            raise FloatingPointError(f"non-finite gradient norm at iteration {k} (D^2={d2})")
        opt.step(params.weights, clip_by_global_norm(grads, cfg.clip_norm))
        report.d2.append(d2)
        report.grad_norms.append(gnorm)
        if callback is not None:
            callback(k, d2, params)
    report.params = params
    report.wall_clock = time.perf_counter() - start
    return report


def expert_self_discrepancy(expert: Sequence[EventSequence], kernel: KernelConfig = KernelConfig(),
                            batch: int = 32, resamples: int = 20, seed: int = 0) -> float:
    """Mean D^2 between disjoint random ``batch``-subsets of the expert data.

    This is the noise floor a learner matching the expert exactly would reach at
    the same batch size.
    """
    if len(expert) < 2 * batch:
        raise ValueError(f"need at least {2 * batch} sequences, got {len(expert)}")
    rng = np.random.default_rng(seed)
    vals = []
    for _ in range(resamples):
        perm = rng.permutation(len(expert))
        a = [expert[i] for i in perm[:batch]]
        b = [expert[i] for i in perm[batch : 2 * batch]]
        vals.append(mmd_squared(a, b, kernel))
    return float(np.mean(vals))


def heldout_discrepancy(params: GeneratorParams, expert: Sequence[EventSequence], kernel: KernelConfig = KernelConfig(),
                        batch: int = 32, resamples: int = 20, seed: int = 0) -> float:
    """Mean D^2 between fresh rollouts and random ``batch``-subsets of ``expert``."""
    horizon = common_horizon(expert)
    rng = np.random.default_rng(seed)
    vals = []
    for r in range(resamples):
        idx = rng.choice(len(expert), size=batch, replace=len(expert) < batch)
        ex = [expert[i] for i in idx]
        traces = rollout_batch(params, horizon, [(seed, 2, r, j) for j in range(batch)],
                               _learner_features(ex, batch, params))
        vals.append(mmd_squared(ex, [t.sequence for t in traces], kernel))
    return float(np.mean(vals))
