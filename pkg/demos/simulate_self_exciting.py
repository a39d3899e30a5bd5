"""
Simulating a self-exciting spatio-temporal process
==================================================

A triggering model has an exogenous rate plus excitation from past events that
decays exponentially in time and spreads as a Gaussian in space. Thinning draws
exact samples; the mean count grows by ``1 / (1 - a0)`` with the branching ratio.
"""

from __future__ import annotations

import numpy as np

from stpp_imitation.events import EventSequence
from stpp_imitation.hawkes import TriggeringModel, empirical_intensity, intensity, simulate_many

# a homogeneous process: 1 event per unit time per unit area on [0, 2) x [-2, 2]^2
poisson = TriggeringModel(background=1.0, a0=0.0)
print("expected count", poisson.expected_count())

# a short decay and narrow spread keep offspring inside the window
for a0 in (0.0, 0.3, 0.5):
    model = TriggeringModel(1.0, a0, omega=100.0, sigma=0.02)
    counts = [len(s) for s in simulate_many(model, 500, seed=int(a0 * 10))]
    print(f"a0={a0}: mean count {np.mean(counts):.1f}, expected {model.expected_count():.1f}")

# conditional intensity just after a single event at the origin
model = TriggeringModel(0.0, 0.5, omega=1.0, sigma=0.2)
history = EventSequence([[0.0, 0.0, 0.0]], 2.0)
for t in (0.1, 0.5, 1.0):
    print(f"intensity at t={t}, u=(0,0): {intensity(model, history, t, (0.0, 0.0)):.4f}")

# a spatially varying background: all exogenous events in one corner cell
grid = np.zeros((4, 4))
grid[0, 0] = 4.0
corner = TriggeringModel(grid, 0.3, omega=2.0, sigma=0.2)
est = empirical_intensity(simulate_many(corner, 200, seed=1), 10, 10)
print("fraction of spatial mass in the lower-left quadrant",
      est.space[:5, :5].sum() / est.space.sum())
