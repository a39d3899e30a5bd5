from __future__ import annotations

import math

import numpy as np
import pytest
from scipy import stats

from stpp_imitation.events import EventSequence, SpaceRegion, validate_sequence
from stpp_imitation.hawkes import (
    TriggeringModel,
    empirical_intensity,
    intensity,
    intensity_error,
    simulate,
    simulate_many,
    triggering_kernel,
)


def test_intensity_with_empty_history_is_background():
    m = TriggeringModel(0.3, 0.5, 1.0, 0.2)
    assert intensity(m, EventSequence.empty(2.0), 0.7, (0.1, 0.2)) == pytest.approx(0.3)


def test_no_excitation_ignores_history():
    m = TriggeringModel(0.3, 0.0, 1.0, 0.2)
    hist = EventSequence.from_events([(0.1, 0, 0), (0.5, 0.1, 0.1)], 2.0)
    assert intensity(m, hist, 0.6, (0.0, 0.0)) == pytest.approx(0.3)


def test_intensity_hand_value():
    m = TriggeringModel(0.1, 0.5, 1.0, 0.2)
    hist = EventSequence.from_events([(0.0, 0.0, 0.0)], 2.0)
    val = intensity(m, hist, 1.0, (0.0, 0.0))
    assert val == pytest.approx(0.1 + 0.5 * math.exp(-1) / (2 * math.pi * 0.04), rel=1e-12)
    assert val - 0.1 == pytest.approx(0.731873, abs=1e-6)


def test_intensity_rejects_query_before_history():
    m = TriggeringModel(0.1, 0.5)
    with pytest.raises(ValueError):
        intensity(m, EventSequence.from_events([(1.0, 0, 0)], 2.0), 0.5, (0, 0))


def test_model_validation():
    with pytest.raises(ValueError):
        TriggeringModel(1.0, a0=1.0)
    with pytest.raises(ValueError):
        TriggeringModel(-1.0)
    with pytest.raises(ValueError):
        TriggeringModel(np.ones(3))


def test_kernel_integrates_to_branching_ratio():
    m = TriggeringModel(1.0, 0.4, 3.0, 0.3)
    ts = np.linspace(0, 20, 20001)
    xs = np.linspace(-3, 3, 301)
    gx, gy = np.meshgrid(xs, xs, indexing="ij")
    du = np.stack([gx, gy], -1)
    space = np.trapezoid(np.trapezoid(triggering_kernel(m, du, 0.0), xs, axis=1), xs) / (m.a0 * m.omega)
    time_part = np.trapezoid(m.a0 * m.omega * np.exp(-m.omega * ts), ts)
    assert space * time_part == pytest.approx(0.4, rel=1e-4)


def test_intensity_decays_between_events():
    m = TriggeringModel(0.5, 0.5, 2.0, 0.3)
    seq = simulate(m, seed=4)
    assert len(seq) >= 3
    u = (0.2, -0.1)
    for a, b in zip(seq.times[:-1], seq.times[1:]):
        hist = EventSequence(seq.data[seq.times <= a], seq.horizon)
        vals = [intensity(m, hist, t, u) for t in np.linspace(a + 1e-9, b, 20)]
        assert np.all(np.diff(vals) <= 1e-15)


def test_simulation_is_seeded_and_valid():
    m = TriggeringModel(1.0, 0.3, 2.0, 0.2)
    a, b = simulate(m, seed=7), simulate(m, seed=7)
    assert a == b and validate_sequence(a) is None
    assert np.all(SpaceRegion().contains(a.locations))


def test_homogeneous_interarrivals_are_exponential():
    m = TriggeringModel(1.0, 0.0, horizon=2.0)
    gaps = []
    for s in simulate_many(m, 600, seed=1):
        # the first five gaps are almost never censored by the horizon at 32 expected events
        gaps.extend(np.diff(np.concatenate([[0.0], s.times[:5]])))
    assert stats.kstest(gaps, "expon", args=(0, 1 / 16)).pvalue > 0.01


@pytest.mark.parametrize("a0", [0.0, 0.3, 0.5])
def test_mean_count_formula(a0):
    m = TriggeringModel(1.0, a0, 100.0, 0.02)
    counts = [len(s) for s in simulate_many(m, 2000, seed=2)]
    assert np.mean(counts) == pytest.approx(m.expected_count(), rel=0.05)


def test_gridded_background_respects_cells():
    grid = np.zeros((4, 4))
    grid[0, 3] = 2.0  # x in [-2,-1], y in [1,2]
    m = TriggeringModel(grid, 0.0)
    assert m.background_mass == pytest.approx(2.0)
    seqs = simulate_many(m, 50, seed=3)
    pts = np.concatenate([s.locations for s in seqs])
    assert np.all((pts[:, 0] <= -1) & (pts[:, 1] >= 1))
    assert np.mean([len(s) for s in seqs]) == pytest.approx(4.0, rel=0.2)


def test_model_dict_roundtrip():
    m = TriggeringModel(np.arange(4.0).reshape(2, 2), 0.2, 3.0, 0.1, 1.5)
    back = TriggeringModel.from_dict(m.to_dict())
    assert back.to_dict() == m.to_dict()


def test_single_event_empirical_intensity():
    ei = empirical_intensity([EventSequence.from_events([(0.55, 0.1, 0.1)], 2.0)], 10, 10)
    assert np.count_nonzero(ei.time) == 1
    assert ei.time.max() == pytest.approx(1 / 0.2)


def test_empirical_mass_conservation():
    seqs = simulate_many(TriggeringModel(1.0, 0.3, 2.0, 0.2), 20, seed=5)
    ei = empirical_intensity(seqs, 7, 5)
    total = sum(len(s) for s in seqs)
    dt, dx, dy = np.diff(ei.time_edges), np.diff(ei.x_edges), np.diff(ei.y_edges)
    assert np.sum(ei.time * dt) * ei.n_sequences == pytest.approx(total, rel=1e-12)
    assert np.sum(ei.space * np.outer(dx, dy)) * ei.n_sequences == pytest.approx(total, rel=1e-12)
    vol = dt[:, None, None] * dx[None, :, None] * dy[None, None, :]
    assert np.sum(ei.spacetime * vol) * ei.n_sequences == pytest.approx(total, rel=1e-12)


def test_homogeneous_profile_is_flat():
    seqs = simulate_many(TriggeringModel(1.0, 0.0), 1000, seed=6)
    ei = empirical_intensity(seqs, 5, 4)
    np.testing.assert_allclose(ei.time, 16.0, rtol=0.05)
    np.testing.assert_allclose(ei.space, 2.0, rtol=0.05)


def test_bad_bins_rejected():
    seqs = [EventSequence.empty(2.0)]
    with pytest.raises(ValueError):
        empirical_intensity(seqs, [0.0, 1.0, 1.0])
    with pytest.raises(ValueError):
        empirical_intensity([], 5)


def test_intensity_error():
    seqs = simulate_many(TriggeringModel(1.0, 0.0), 10, seed=8)
    ei = empirical_intensity(seqs)
    mae, peak = intensity_error(ei, ei)
    assert mae == 0 and peak == ei.spacetime.max()
