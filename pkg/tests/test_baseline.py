from __future__ import annotations

import math

import numpy as np
import pytest
from scipy import integrate

from stpp_imitation.baseline import (
    BaselineFitConfig,
    BaselineParams,
    cond_log_density,
    fit_mle,
    head_outputs,
    init_baseline,
    log_likelihood_grad,
    mean_log_likelihood,
    sample,
    sequence_log_likelihood,
)
from stpp_imitation.cells import cell_forward, cell_names, zero_state
from stpp_imitation.events import EventSequence, validate_sequence

SOFTPLUS_INV_1 = math.log(math.e - 1.0)


def constant_head(rate=1.0, mean=(0.0, 0.0), var=(1.0, 1.0), mode="lstm", hidden=3):
    """Recurrent weights zeroed so the hidden state stays at zero and the heads are constant."""
    p = init_baseline(hidden, mode=mode, seed=0)
    w = {k: np.zeros_like(v) for k, v in p.weights.items()}
    inv = lambda v: math.log(math.expm1(v))  # noqa: E731
    w["bd"] = np.array([inv(rate), mean[0], mean[1], inv(var[0]), inv(var[1])])
    return p.with_weights(w)


def test_hand_value_of_conditional_density():
    p = constant_head()
    val = cond_log_density(p, np.zeros(3), 1.0, (0.0, 0.0))
    assert val == pytest.approx(-1 + math.log(1 / (2 * math.pi)), abs=1e-12)
    assert val == pytest.approx(-2.83788, abs=1e-5)


def test_density_integrates_to_one():
    p = init_baseline(3, seed=4)
    h = np.array([0.3, -0.2, 0.5])
    rate, mean, var = head_outputs(p, h)
    mu = mean[0]
    dens = lambda d, x, y: math.exp(cond_log_density(p, h, d, (x, y)))  # noqa: E731
    # the joint density is a product, so integrate each factor through slices and divide out the overlap
    dts = np.linspace(1e-12, 40 / rate[0], 8001)
    t_part = integrate.trapezoid([dens(d, *mu) for d in dts], dts)
    sx, sy = 8 * math.sqrt(var[0, 0]), 8 * math.sqrt(var[0, 1])
    xs, ys = np.linspace(mu[0] - sx, mu[0] + sx, 161), np.linspace(mu[1] - sy, mu[1] + sy, 161)
    grid = np.array([[dens(1.0, x, y) for y in ys] for x in xs])
    s_part = integrate.trapezoid(integrate.trapezoid(grid, ys, axis=1), xs)
    assert t_part * s_part / dens(1.0, *mu) == pytest.approx(1.0, abs=1e-3)


def test_density_mode_at_mean():
    p = init_baseline(3, seed=5)
    h = np.array([0.1, 0.2, -0.4])
    _, mean, _ = head_outputs(p, h)
    best = cond_log_density(p, h, 0.5, mean[0])
    for d in ([0.01, 0], [0, -0.01], [0.3, 0.3]):
        assert cond_log_density(p, h, 0.5, mean[0] + np.array(d)) < best


def test_nonpositive_gap_rejected():
    with pytest.raises(ValueError):
        cond_log_density(constant_head(), np.zeros(3), 0.0, (0, 0))


def test_empty_sequence_pure_survival():
    assert sequence_log_likelihood(constant_head(), EventSequence.empty(2.0)) == pytest.approx(-2.0, abs=1e-12)


def test_single_event_is_density_plus_tail():
    p = init_baseline(3, seed=1)
    seq = EventSequence.from_events([(0.4, 0.3, -0.2)], 2.0)
    h0 = np.zeros(3)
    st, _ = cell_forward(p.mode, p.weights, seq.data, zero_state(p.mode, 1, 3))
    rate1, _, _ = head_outputs(p, st.h)
    expected = cond_log_density(p, h0, 0.4, (0.3, -0.2)) - rate1[0] * 1.6
    assert sequence_log_likelihood(p, seq) == pytest.approx(expected, abs=1e-12)


@pytest.mark.parametrize("mode", ["lstm", "rnn"])
def test_quadrature_oracle_two_events(mode):
    p = init_baseline(4, mode=mode, seed=2)
    seq = EventSequence.from_events([(0.3, 0.5, -0.5), (1.1, -0.2, 0.8)], 2.0)
    states = [zero_state(mode, 1, 4)]
    for a in seq.data:
        states.append(cell_forward(mode, p.weights, a.reshape(1, 3), states[-1])[0])
    heads = [head_outputs(p, s.h) for s in states]
    bounds = [0.0, 0.3, 1.1, 2.0]

    def hazard(t):
        i = int(np.searchsorted(bounds[1:-1], t, side="left"))
        return heads[i][0][0]

    compensator = sum(integrate.quad(hazard, bounds[i], bounds[i + 1])[0] for i in range(3))
    total = -compensator
    for i, (t, x, y) in enumerate(seq.data):
        rate, mean, var = heads[i]
        total += math.log(rate[0])
        total += -0.5 * ((x - mean[0, 0]) ** 2 / var[0, 0] + (y - mean[0, 1]) ** 2 / var[0, 1]) \
            - 0.5 * math.log(var[0, 0] * var[0, 1]) - math.log(2 * math.pi)
    assert sequence_log_likelihood(p, seq) == pytest.approx(total, abs=1e-4)


def random_seqs(rng, n, horizon=2.0):
    out = []
    for _ in range(n):
        k = rng.integers(0, 5)
        t = np.sort(rng.uniform(0, horizon, k))
        out.append(EventSequence(np.column_stack([t, rng.normal(size=(k, 2))]), horizon))
    return out


@pytest.mark.parametrize("mode", ["lstm", "rnn"])
def test_likelihood_gradient_matches_finite_differences(mode):
    rng = np.random.default_rng(0)
    p = init_baseline(3, feature_dim=0, mode=mode, seed=3)
    p = p.with_weights({k: v + rng.normal(0, 0.3, v.shape) for k, v in p.weights.items()})
    seqs = random_seqs(rng, 4)
    _, grads = log_likelihood_grad(p, seqs)
    eps = 1e-6
    for name, w in p.weights.items():
        for idx in np.ndindex(w.shape):
            plus, minus = dict(p.weights), dict(p.weights)
            plus[name], minus[name] = w.copy(), w.copy()
            plus[name][idx] += eps
            minus[name][idx] -= eps
            fd = (mean_log_likelihood(p.with_weights(plus), seqs) - mean_log_likelihood(p.with_weights(minus), seqs)) / (2 * eps)
            assert grads[name][idx] == pytest.approx(fd, rel=1e-4, abs=1e-8), (name, idx)


def test_gradient_with_features():
    rng = np.random.default_rng(1)
    p = init_baseline(3, feature_dim=2, seed=3)
    seqs = [s.with_features(rng.normal(size=2)) for s in random_seqs(rng, 3)]
    _, grads = log_likelihood_grad(p, seqs)
    eps = 1e-6
    w = p.weights["Hd"]
    plus, minus = dict(p.weights), dict(p.weights)
    plus["Hd"], minus["Hd"] = w.copy(), w.copy()
    plus["Hd"][0, 4] += eps
    minus["Hd"][0, 4] -= eps
    fd = (mean_log_likelihood(p.with_weights(plus), seqs) - mean_log_likelihood(p.with_weights(minus), seqs)) / (2 * eps)
    assert grads["Hd"][0, 4] == pytest.approx(fd, rel=1e-4)


def test_recovers_constant_heads():
    truth = constant_head(rate=10.0, mean=(0.5, -1.0), var=(0.25, 0.64), hidden=4)
    data = [sample(truth, horizon=2.0, seed=(0, i)) for i in range(500)]
    n_events = sum(len(s) for s in data)
    assert n_events > 9000
    start = constant_head(rate=math.log(2), hidden=4)
    start = start.with_weights({**start.weights, "bd": np.zeros(5)})
    fitted = fit_mle(data, BaselineFitConfig(lr=0.05, iterations=1500, batch_size=None, freeze_recurrent=True), start)
    rate, mean, var = head_outputs(fitted, np.zeros(4))
    mle_rate = n_events / (2.0 * len(data))
    assert rate[0] == pytest.approx(mle_rate, rel=1e-3)
    assert rate[0] == pytest.approx(10.0, rel=0.05)
    np.testing.assert_allclose(mean[0], [0.5, -1.0], atol=0.05 * 1.0)
    np.testing.assert_allclose(var[0], [0.25, 0.64], rtol=0.05)


def test_fit_trace_trends_upward():
    rng = np.random.default_rng(2)
    data = random_seqs(rng, 40)
    trace = []
    fit_mle(data, BaselineFitConfig(lr=1e-2, iterations=300, batch_size=None), init_baseline(4, seed=0), trace)
    windows = [np.mean(trace[i:i + 100]) for i in range(0, 300, 100)]
    assert windows[0] < windows[1] < windows[2]


def test_sample_determinism_and_validity():
    p = init_baseline(4, seed=6)
    a, b = sample(p, horizon=3.0, seed=5), sample(p, horizon=3.0, seed=5)
    assert a == b and validate_sequence(a) is None


def test_params_validation():
    p = init_baseline(3)
    with pytest.raises(ValueError):
        BaselineParams(p.mode, 3, 0, {**p.weights, "Hd": np.zeros((4, 3))})
    assert set(cell_names("lstm")) < set(p.weights)
