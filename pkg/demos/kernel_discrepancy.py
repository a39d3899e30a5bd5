"""
Kernel discrepancy between sets of event sequences
==================================================

Each sequence is embedded as the sum of Gaussian kernels centred on its events.
The squared distance between mean embeddings compares two sets of sequences
without any intensity; its gradient says how to move each learner event, and
the reward field says where learner mass is missing.
"""

from __future__ import annotations

import numpy as np

from stpp_imitation.events import EventSequence
from stpp_imitation.hawkes import TriggeringModel, simulate_many
from stpp_imitation.kernels import KernelConfig, mmd_grad_events, mmd_squared, reward_field

kernel = KernelConfig(bandwidth=1.0)
a = simulate_many(TriggeringModel(1.0), 64, seed=1)
b = simulate_many(TriggeringModel(1.0), 64, seed=2)
c = simulate_many(TriggeringModel(2.0), 64, seed=3)

print("same process      ", mmd_squared(a[:32], b[:32], kernel))
print("double the rate   ", mmd_squared(a[:32], c[:32], kernel))

# gradient of the discrepancy with respect to the first learner sequence's events
grads = mmd_grad_events(a[:32], c[:32], kernel)
print("gradient rows for the first learner sequence:\n", np.round(grads[0][:3], 4))

# the reward is largest where the learner is missing expert mass
expert = simulate_many(TriggeringModel(1.0), 16, seed=4)
learner = [EventSequence(s.data[s.data[:, 1] < 0], s.horizon) for s in expert]  # misses x > 0
for x in (-1.0, 1.0):
    print(f"reward at (t=1, x={x}, y=0): {reward_field(expert, learner, (1.0, x, 0.0), kernel):+.3f}")
