from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stpp_imitation.events import EventSequence
from stpp_imitation.kernels import (
    KernelConfig,
    kernel_eval,
    mmd_grad_events,
    mmd_squared,
    reward_field,
    reward_grid,
)


def naive_mmd(expert, learner, bw=1.0):
    """Plain triple loop over sequence pairs and event pairs."""

    def k(a, b):
        return math.exp(-sum((p - q) ** 2 for p, q in zip(a, b)) / (2 * bw * bw))

    def block(xs, ys):
        return sum(k(a, b) for s in xs for a in s.data for t in ys for b in t.data)

    L, M = len(expert), len(learner)
    return block(expert, expert) / L**2 + block(learner, learner) / M**2 - 2 * block(expert, learner) / (L * M)


def random_batch(rng, n_seq, max_events, horizon=2.0):
    out = []
    for _ in range(n_seq):
        n = rng.integers(0, max_events + 1)
        t = np.sort(rng.uniform(0, horizon, n))
        out.append(EventSequence(np.column_stack([t, rng.uniform(-2, 2, (n, 2))]), horizon))
    return out


def test_kernel_examples():
    assert kernel_eval((0.3, 1, 2), (0.3, 1, 2)) == 1.0
    assert kernel_eval((0, 0, 0), (1, 0, 0)) == pytest.approx(0.6065306597126334, abs=1e-12)
    assert kernel_eval((0, 0, 0), (1, 1, 1), KernelConfig(bandwidth=1e6)) == pytest.approx(1.0)


def test_kernel_rejects_nonfinite():
    with pytest.raises(ValueError):
        kernel_eval((np.nan, 0, 0), (0, 0, 0))


def test_matern_not_supported():
    with pytest.raises(NotImplementedError):
        mmd_squared([EventSequence.empty(2.0)], [EventSequence.empty(2.0)], KernelConfig(kind="matern"))


def test_identical_batches_give_zero():
    rng = np.random.default_rng(0)
    batch = random_batch(rng, 5, 8)
    assert abs(mmd_squared(batch, batch)) <= 1e-12


def test_single_event_vs_empty():
    e = [EventSequence.from_events([(0.5, 0, 0)], 2.0)]
    assert mmd_squared(e, [EventSequence.empty(2.0)]) == pytest.approx(1.0)


@pytest.mark.parametrize("d", [0.1, 0.5, 1.0, 3.0])
def test_single_pair_closed_form(d):
    e = [EventSequence.from_events([(0.5, 0, 0)], 2.0)]
    a = [EventSequence.from_events([(0.5, d, 0)], 2.0)]
    assert mmd_squared(e, a) == pytest.approx(2 - 2 * math.exp(-d * d / 2), abs=1e-12)


def test_matches_naive_double_sum():
    rng = np.random.default_rng(1)
    for _ in range(20):
        ex, le = random_batch(rng, 4, 10), random_batch(rng, 3, 10)
        bw = rng.uniform(0.3, 2)
        assert mmd_squared(ex, le, KernelConfig(bw)) == pytest.approx(naive_mmd(ex, le, bw), abs=1e-10)


def test_unbiased_drops_same_sequence_pairs():
    rng = np.random.default_rng(2)
    ex, le = random_batch(rng, 4, 6), random_batch(rng, 3, 6)

    def k(a, b):
        return math.exp(-float(np.sum((a - b) ** 2)) / 2)

    def off_diag(batch):
        n = len(batch)
        tot = sum(k(a, b) for i, s in enumerate(batch) for j, t in enumerate(batch) if i != j
                  for a in s.data for b in t.data)
        return tot / (n * (n - 1))

    cross = sum(k(a, b) for s in ex for a in s.data for t in le for b in t.data) / (len(ex) * len(le))
    expected = off_diag(ex) + off_diag(le) - 2 * cross
    assert mmd_squared(ex, le, KernelConfig(unbiased=True)) == pytest.approx(expected, abs=1e-10)


def test_horizon_mismatch_rejected():
    with pytest.raises(ValueError):
        mmd_squared([EventSequence.empty(1.0)], [EventSequence.empty(2.0)])


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_nonnegative_and_symmetric(seed):
    rng = np.random.default_rng(seed)
    a, b = random_batch(rng, 3, 6), random_batch(rng, 2, 6)
    d_ab, d_ba = mmd_squared(a, b), mmd_squared(b, a)
    assert d_ab >= 0
    assert d_ab == pytest.approx(d_ba, rel=1e-12, abs=1e-12)


def finite_diff_grad(expert, learner, cfg, step=1e-5):
    out = []
    for j, s in enumerate(learner):
        g = np.zeros_like(s.data)
        for i in range(len(s)):
            for c in range(3):
                vals = []
                for sgn in (1, -1):
                    d = s.data.copy()
                    d[i, c] += sgn * step
                    mod = list(learner)
                    mod[j] = EventSequence(d, s.horizon)
                    vals.append(mmd_squared(expert, mod, cfg))
                g[i, c] = (vals[0] - vals[1]) / (2 * step)
        out.append(g)
    return out


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(3)
    for _ in range(10):
        ex, le = random_batch(rng, 3, 5), random_batch(rng, 2, 5)
        cfg = KernelConfig(rng.uniform(0.5, 2))
        for g, fd in zip(mmd_grad_events(ex, le, cfg), finite_diff_grad(ex, le, cfg)):
            np.testing.assert_allclose(g, fd, rtol=1e-6, atol=1e-8)


def test_gradient_zero_at_symmetric_center():
    pts = [(1.0, -0.5, 0.0), (1.0, 0.5, 0.0), (1.0, 0.0, 0.0)]
    ex = [EventSequence.from_events(pts, 2.0)]
    le = [EventSequence.from_events(pts, 2.0)]
    g = mmd_grad_events(ex, le)[0]
    np.testing.assert_allclose(g[2], 0.0, atol=1e-14)


def test_far_event_gradient_vanishes():
    ex = [EventSequence.from_events([(0.5, 0, 0)], 2.0)]
    le = [EventSequence.from_events([(0.5, 40.0, 40.0)], 2.0)]
    assert np.linalg.norm(mmd_grad_events(ex, le)[0]) < 1e-100


def test_reward_field_examples():
    ex = [EventSequence.from_events([(0.5, 1, 1), (1.0, 1.2, 0.9)], 2.0)]
    empty = [EventSequence.empty(2.0)]
    q = np.array([0.7, 1.0, 1.0])
    expected = (kernel_eval(q, ex[0].data[0]) + kernel_eval(q, ex[0].data[1])) / 1
    assert reward_field(ex, empty, q) == pytest.approx(expected)
    assert reward_field(ex, ex, q) == pytest.approx(0.0, abs=1e-15)


def test_reward_sign_on_separated_clusters():
    rng = np.random.default_rng(4)
    p, q = np.array([1.0, 1.5, 1.5]), np.array([1.0, -1.5, -1.5])
    ex = [EventSequence(np.sort(p + 0.1 * rng.standard_normal((6, 3)), axis=0), 3.0)]
    le = [EventSequence(np.sort(q + 0.1 * rng.standard_normal((6, 3)), axis=0), 3.0)]
    assert reward_field(ex, le, p) > 0 > reward_field(ex, le, q)


def test_reward_grid_shape():
    ex = [EventSequence.from_events([(0.5, 1, 1)], 2.0)]
    grid = reward_grid(ex, [EventSequence.empty(2.0)], KernelConfig(), 1.0, (0, 0), n_space=5, n_time=7)
    assert grid.shape == (25 + 7, 4)
    assert np.all(grid[:25, 0] == 1.0)
