"""Recovery metrics: discrepancy against held-out expert data and intensity errors."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .events import EventSequence, common_horizon
from .hawkes import EmpiricalIntensity, empirical_intensity, intensity_error
from .kernels import KernelConfig, mmd_squared
from .trainer import expert_self_discrepancy

METRIC_KEYS = (
    "version", "d2", "self_discrepancy", "d2_ratio", "batch", "resamples",
    "mae_spacetime", "peak_spacetime", "mae_space", "peak_space", "mae_time", "peak_time",
    "n_expert", "n_generated", "expert_intensity", "generated_intensity",
)


@dataclass
class EvalMetrics:
    version: str
    d2: float
    self_discrepancy: float
    d2_ratio: float
    batch: int
    resamples: int
    mae_spacetime: float
    peak_spacetime: float
    mae_space: float
    peak_space: float
    mae_time: float
    peak_time: float
    n_expert: int
    n_generated: int
    expert_intensity: dict
    generated_intensity: dict

    def to_dict(self) -> dict:
        return asdict(self)

    def write(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1))


def read_metrics(path: str | Path) -> EvalMetrics:
    d = json.loads(Path(path).read_text())
    missing = [k for k in METRIC_KEYS if k not in d]
    if missing:
        raise ValueError(f"metrics file lacks keys {missing}")
    return EvalMetrics(**{k: d[k] for k in METRIC_KEYS})


def cross_discrepancy(expert: Sequence[EventSequence], generated: Sequence[EventSequence],
                      kernel: KernelConfig, batch: int, resamples: int = 20, seed: int = 0) -> float:
    """Mean D^2 between random ``batch``-subsets of the two sets."""
    rng = np.random.default_rng(seed)
    vals = []
    for _ in range(resamples):
        a = [expert[i] for i in rng.choice(len(expert), batch, replace=len(expert) < batch)]
        b = [generated[i] for i in rng.choice(len(generated), batch, replace=len(generated) < batch)]
        vals.append(mmd_squared(a, b, kernel))
    return float(np.mean(vals))


def evaluate(expert: Sequence[EventSequence], generated: Sequence[EventSequence],
             kernel: KernelConfig = KernelConfig(), batch: int = 32, resamples: int = 20,
             bins: int = 10, seed: int = 0) -> EvalMetrics:
    if not generated:
        raise ValueError("generated set is empty: nothing to evaluate")
    if not expert:
        raise ValueError("expert set is empty")
    if common_horizon(expert) != common_horizon(generated):
        raise ValueError("expert and generated sequences use different horizons")
    batch = min(batch, len(expert) // 2)
    if batch < 1:
        raise ValueError("need at least two expert sequences")
    d2 = cross_discrepancy(expert, generated, kernel, batch, resamples, seed)
    base = expert_self_discrepancy(expert, kernel, batch, resamples, seed)
    ie = empirical_intensity(expert, bins, bins)
    ig = empirical_intensity(generated, bins, bins)
    err = {w: intensity_error(ie, ig, w) for w in ("spacetime", "space", "time")}
    return EvalMetrics(
        __version__, d2, base, d2 / base if base > 0 else float("inf"), batch, resamples,
        *err["spacetime"], *err["space"], *err["time"], len(expert), len(generated),
        ie.to_dict(), ig.to_dict(),
    )


def intensity_from_dict(d: dict) -> EmpiricalIntensity:
    arr = {k: np.asarray(v) for k, v in d.items() if k != "n_sequences"}
    return EmpiricalIntensity(n_sequences=int(d["n_sequences"]), **arr)
