"""Ground-truth self-exciting spatio-temporal process and empirical intensities.

The conditional intensity is

    lambda(t, u) = beta0(u) + sum_{t_i < t} a0 * omega * exp(-omega (t - t_i)) * N(u - u_i; 0, s^2 I)

on ``[0, T) x region``. Each event has on average ``a0`` direct offspring (before
boundary censoring), so ``a0 < 1`` is required.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .events import EventSequence, SpaceRegion

TRUNCATE_SIGMAS = 6.0


@dataclass(frozen=True)
class TriggeringModel:
    """Exogenous rate plus ``exp_gauss`` triggering kernel.

    ``background`` is either a constant rate (events per unit time per unit area)
    or an ``(nx, ny)`` grid of rates tabulated on equal cells of ``region``.
    """

    background: float | np.ndarray = 1.0
    a0: float = 0.0
    omega: float = 1.0
    sigma: float = 0.1
    horizon: float = 2.0
    region: SpaceRegion = field(default_factory=SpaceRegion)

    def __post_init__(self):
        bg = np.asarray(self.background, dtype=float)
        if bg.ndim not in (0, 2):
            raise ValueError("background must be a scalar or a 2-D grid")
        if np.any(bg < 0) or not np.all(np.isfinite(bg)):
            raise ValueError("background rate must be finite and non-negative")
        if bg.ndim == 2:
            bg = bg.copy()
            bg.setflags(write=False)
            object.__setattr__(self, "background", bg)
        if not (0.0 <= self.a0 < 1.0):
            raise ValueError(f"branching ratio a0={self.a0} must lie in [0, 1)")
        if self.omega <= 0 or self.sigma <= 0 or self.horizon <= 0:
            raise ValueError("omega, sigma and horizon must be positive")

    @property
    def is_gridded(self) -> bool:
        return np.ndim(self.background) == 2

    def _cell(self, u) -> tuple[np.ndarray, np.ndarray]:
        nx, ny = self.background.shape
        r = self.region
        u = np.asarray(u, dtype=float)
        i = np.clip(((u[..., 0] - r.x_min) / (r.x_max - r.x_min) * nx).astype(int), 0, nx - 1)
        j = np.clip(((u[..., 1] - r.y_min) / (r.y_max - r.y_min) * ny).astype(int), 0, ny - 1)
        return i, j

    def background_rate(self, u):
        u = np.asarray(u, dtype=float)
        inside = self.region.contains(u)
        if not self.is_gridded:
            return np.where(inside, float(self.background), 0.0)
        i, j = self._cell(u)
        return np.where(inside, self.background[i, j], 0.0)

    @property
    def background_mass(self) -> float:
        """Expected exogenous events per unit time over the region."""
        if not self.is_gridded:
            return float(self.background) * self.region.area
        return float(self.background.sum()) * self.region.area / self.background.size

    def sample_background(self, rng: np.random.Generator) -> np.ndarray:
        r = self.region
        if not self.is_gridded:
            return np.array([rng.uniform(r.x_min, r.x_max), rng.uniform(r.y_min, r.y_max)])
        nx, ny = self.background.shape
        p = self.background.ravel() / self.background.sum()
        k = rng.choice(p.size, p=p)
        i, j = divmod(k, ny)
        dx, dy = (r.x_max - r.x_min) / nx, (r.y_max - r.y_min) / ny
        return np.array([r.x_min + (i + rng.random()) * dx, r.y_min + (j + rng.random()) * dy])

    def expected_count(self) -> float:
        """Mean event count ignoring edge effects: ``mass * T / (1 - a0)``."""
        return self.background_mass * self.horizon / (1.0 - self.a0)

    def to_dict(self) -> dict:
        bg = self.background
        return {
            "background": bg.tolist() if self.is_gridded else float(bg),
            "a0": self.a0, "omega": self.omega, "sigma": self.sigma, "horizon": self.horizon,
            "region": [self.region.x_min, self.region.x_max, self.region.y_min, self.region.y_max],
        }

    @classmethod
    def from_dict(cls, d: dict) -> TriggeringModel:
        bg = d.get("background", 1.0)
        return cls(
            np.asarray(bg, dtype=float) if isinstance(bg, list) else float(bg),
            float(d.get("a0", 0.0)), float(d.get("omega", 1.0)), float(d.get("sigma", 0.1)),
            float(d.get("horizon", 2.0)), SpaceRegion(*d.get("region", (-2.0, 2.0, -2.0, 2.0))),
        )


def triggering_kernel(model: TriggeringModel, du, dt):
    """``g(du, dt)`` for displacement rows ``du (..., 2)`` and lags ``dt``."""
    du = np.asarray(du, dtype=float)
    dt = np.asarray(dt, dtype=float)
    s2 = model.sigma**2
    spatial = np.exp(-0.5 * np.sum(du * du, axis=-1) / s2) / (2.0 * math.pi * s2)
    return model.a0 * model.omega * np.exp(-model.omega * dt) * spatial


def intensity(model: TriggeringModel, history: EventSequence, t: float, u) -> float:
    """Conditional intensity at ``(t, u)`` given ``history``; ``t`` must not precede it."""
    if len(history) and t < history.times[-1]:
        raise ValueError(f"query time {t} precedes the last history event at {history.times[-1]}")
    u = np.asarray(u, dtype=float)
    base = float(model.background_rate(u))
    past = history.data[history.times < t]
    if past.shape[0] == 0 or model.a0 == 0.0:
        return base
    return base + float(np.sum(triggering_kernel(model, u - past[:, 1:], t - past[:, 0])))


def _gauss_offset(rng: np.random.Generator, sigma: float) -> np.ndarray:
    lim = TRUNCATE_SIGMAS * sigma
    while True:
        d = rng.normal(0.0, sigma, 2)
        if abs(d[0]) <= lim and abs(d[1]) <= lim:
            return d


def simulate(model: TriggeringModel, seed=0, max_events: int = 1_000_000) -> EventSequence:
    """Draw one realisation by thinning.

    Between events the total (unrestricted) intensity only decays, so its value
    right after the last proposal bounds it until the next accepted event. An
    accepted time picks its source (background or one parent) in proportion to
    the source's current rate and draws a location from it; locations outside
    the region are rejected, which censors offspring at the boundary.
    """
    rng = np.random.default_rng(seed)
    T, omega, jump = model.horizon, model.omega, model.a0 * model.omega
    bg = model.background_mass
    times: list[float] = []
    locs: list[np.ndarray] = []
    t, excite = 0.0, 0.0
    while True:
        bound = bg + excite
        if bound <= 0.0:
            break
        t_new = t + rng.exponential(1.0 / bound)
        if t_new >= T:
            break
        excite *= math.exp(-omega * (t_new - t))
        t = t_new
        lam = bg + excite
        if lam > bound * (1.0 + 1e-12):
            raise AssertionError(f"thinning bound violated: {lam} > {bound}")
        if rng.random() * bound > lam:
            continue
        if rng.random() * lam < bg:
            u = model.sample_background(rng)
        else:
            w = np.exp(-omega * (t - np.asarray(times)))
            parent = rng.choice(len(times), p=w / w.sum())
            u = locs[parent] + _gauss_offset(rng, model.sigma)
        if not model.region.contains(u):
            continue
        times.append(t)
        locs.append(u)
        excite += jump
        if len(times) > max_events:
            raise RuntimeError(f"simulation exceeded {max_events} events")
    data = np.column_stack([times, np.array(locs).reshape(-1, 2)]) if times else np.zeros((0, 3))
    return EventSequence(data, T)


def simulate_many(model: TriggeringModel, n: int, seed=0) -> list[EventSequence]:
    return [simulate(model, (seed, i)) for i in range(n)]


@dataclass(frozen=True)
class EmpiricalIntensity:
    """Per-sequence mean event counts divided by bin measure.

    ``time`` is events per unit time, ``space`` events per unit area, and
    ``spacetime`` events per unit time per unit area.
    """

    time_edges: np.ndarray
    x_edges: np.ndarray
    y_edges: np.ndarray
    time: np.ndarray
    space: np.ndarray
    spacetime: np.ndarray
    n_sequences: int

    def to_dict(self) -> dict:
        return {k: (v.tolist() if isinstance(v, np.ndarray) else v) for k, v in self.__dict__.items()}


def _edges(bins, lo: float, hi: float) -> np.ndarray:
    edges = np.linspace(lo, hi, int(bins) + 1) if np.isscalar(bins) else np.asarray(bins, dtype=float)
    if edges.ndim != 1 or edges.size < 2 or np.any(np.diff(edges) <= 0):
        raise ValueError("bin edges must be strictly increasing with non-zero width")
    return edges


def empirical_intensity(sequences: Sequence[EventSequence], time_bins=10, space_bins=10,
                        time_range: tuple[float, float] | None = None,
                        region: SpaceRegion | None = None) -> EmpiricalIntensity:
    if not sequences:
        raise ValueError("need at least one sequence")
    if time_range is None:
        time_range = (0.0, max(s.horizon for s in sequences))
    region = region or SpaceRegion()
    te = _edges(time_bins, *time_range)
    if isinstance(space_bins, tuple) and len(space_bins) == 2 and not np.isscalar(space_bins[0]):
        xe, ye = _edges(space_bins[0], region.x_min, region.x_max), _edges(space_bins[1], region.y_min, region.y_max)
    else:
        xe, ye = _edges(space_bins, region.x_min, region.x_max), _edges(space_bins, region.y_min, region.y_max)
    data = np.concatenate([s.data for s in sequences]).reshape(-1, 3)
    n = len(sequences)
    counts, _ = np.histogramdd(data, bins=(te, xe, ye))
    dt, dx, dy = np.diff(te), np.diff(xe), np.diff(ye)
    st = counts / n / (dt[:, None, None] * dx[None, :, None] * dy[None, None, :])
    t_counts, _ = np.histogram(data[:, 0], te)
    s_counts, _, _ = np.histogram2d(data[:, 1], data[:, 2], bins=(xe, ye))
    return EmpiricalIntensity(te, xe, ye, t_counts / n / dt, s_counts / n / np.outer(dx, dy), st, n)


def intensity_error(a: EmpiricalIntensity, b: EmpiricalIntensity, which: str = "spacetime") -> tuple[float, float]:
    """Mean absolute per-bin difference and the peak of ``a`` for grid ``which``."""
    ga, gb = getattr(a, which), getattr(b, which)
    if ga.shape != gb.shape:
        raise ValueError("intensity grids differ in shape")
    return float(np.mean(np.abs(ga - gb))), float(np.max(ga))
