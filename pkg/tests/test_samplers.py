import math

import numpy as np
import pytest

from oracles import hidden_marginal, tv, visible_marginal
from rbmtemper.rbm import DimensionError, RbmParams, all_states, exact_log_z, free_energy_h, free_energy_v, sample_h, state_index
from rbmtemper.samplers import (
    CastEnsemble,
    ChainBank,
    DeepEnsemble,
    SwapStats,
    TemperedEnsemble,
    cast_step,
    check_betas,
    dt_neg_swaps,
    dt_swap_log_ratio,
    linear_betas,
    pt_step,
    pt_swap_log_ratio,
    sml_step,
)


def states_from(probs, n_bits, size, rng):
    return all_states(n_bits)[rng.choice(len(probs), size=size, p=probs)]


# ---------------------------------------------------------------- sml


def test_sml_step_k0_unchanged(rng):
    bank = ChainBank.init(4, 10, rng)
    before = bank.states.copy()
    g = np.random.default_rng(1)
    sml_step(RbmParams.random(4, 3, rng), bank, 0, g)
    np.testing.assert_array_equal(bank.states, before)
    assert g.random() == np.random.default_rng(1).random()


def test_sml_step_uniform_model():
    r = np.random.default_rng(2)
    bank = ChainBank.init(6, 10_000, r)
    sml_step(RbmParams.zeros(6, 3), bank, 1, r)
    means = bank.states.mean(axis=0)
    assert np.all(np.abs(means - 0.5) < 3 * 0.5 / math.sqrt(10_000))


def test_sml_step_dimension_error(rng):
    with pytest.raises(DimensionError):
        sml_step(RbmParams.zeros(4, 3), ChainBank(np.zeros((2, 5))), 1, rng)


def test_sml_stationarity():
    p = RbmParams.random(4, 4, np.random.default_rng(8), 2.0)
    probs = visible_marginal(p)
    r = np.random.default_rng(9)
    bank = ChainBank.init(4, 100, r)
    counts = np.zeros(16)
    for t in range(10_500):
        sml_step(p, bank, 1, r)
        if t >= 500:
            counts += np.bincount(state_index(bank.states), minlength=16)
    assert tv(counts, probs) <= 0.02


# ---------------------------------------------------------------- PT


def test_pt_log_ratio_identical_states(rng):
    p = RbmParams.random(4, 4, rng)
    v = np.array([1.0, 0, 0, 1])
    assert pt_swap_log_ratio(p, 1.0, 0.3, v, v) == 0.0


def test_pt_log_ratio_equal_betas(rng):
    p = RbmParams.random(4, 4, rng)
    assert pt_swap_log_ratio(p, 0.7, 0.7, np.array([1.0, 0, 0, 1]), np.array([0.0, 1, 1, 1])) == pytest.approx(0, abs=1e-12)


def test_pt_log_ratio_matches_tempered_enumeration(rng):
    p = RbmParams.random(4, 4, rng, 2.0)
    p_lo, p_hi = visible_marginal(p, 1.0), visible_marginal(p, 0.5)
    a, b = 3, 12
    v_lo, v_hi = all_states(4)[a], all_states(4)[b]
    expected = math.log(p_lo[b] * p_hi[a] / (p_lo[a] * p_hi[b]))
    assert pt_swap_log_ratio(p, 1.0, 0.5, v_lo, v_hi) == pytest.approx(expected, rel=1e-10)


def test_pt_log_ratio_antisymmetric(rng):
    p = RbmParams.random(4, 4, rng, 2.0)
    x, y = all_states(4)[5], all_states(4)[9]
    assert pt_swap_log_ratio(p, 1.0, 0.2, x, y) == pytest.approx(-pt_swap_log_ratio(p, 1.0, 0.2, y, x), abs=1e-12)


def test_pt_log_ratio_factorial_model_is_linear_in_beta_gap(rng):
    # without couplings the tempered free energy is beta * F(v) up to a constant
    p = RbmParams(np.zeros((4, 3)), rng.normal(size=4), rng.normal(size=3))
    for _ in range(10):
        x, y = (rng.random((2, 4)) < 0.5).astype(float)
        b_lo, b_hi = sorted(rng.uniform(0, 1, 2), reverse=True)
        expected = (b_lo - b_hi) * (free_energy_v(p, x) - free_energy_v(p, y))
        assert pt_swap_log_ratio(p, b_lo, b_hi, x, y) == pytest.approx(expected, abs=1e-12)


def test_pt_log_ratio_monotone_in_density_ratio(rng):
    # log r = phi(v_lo) - phi(v_hi) with phi(v) = log p_hi(v) / p_lo(v) + const
    p = RbmParams.random(4, 4, rng, 2.0)
    p_lo, p_hi = visible_marginal(p, 0.9), visible_marginal(p, 0.3)
    phi = np.log(p_hi / p_lo)
    vs = all_states(4)
    pairs = [(i, j) for i in range(16) for j in range(16)]
    keys = np.array([phi[i] - phi[j] for i, j in pairs])
    vals = np.array([pt_swap_log_ratio(p, 0.9, 0.3, vs[i], vs[j]) for i, j in pairs])
    order = np.argsort(keys, kind="stable")
    assert np.all(np.diff(vals[order]) >= -1e-9)
    np.testing.assert_allclose(vals, keys, atol=1e-9)


def test_pt_log_ratio_dimension_error(rng):
    with pytest.raises(DimensionError):
        pt_swap_log_ratio(RbmParams.zeros(4, 2), 1.0, 0.5, np.zeros(3), np.zeros(4))


def test_betas_validation():
    np.testing.assert_allclose(linear_betas(5), [1, 0.75, 0.5, 0.25, 0])
    with pytest.raises(ValueError):
        check_betas([0.9, 0.5])
    with pytest.raises(ValueError):
        check_betas([1.0, 0.5, 0.7])
    with pytest.raises(ValueError):
        check_betas([1.0, -0.1])


def test_pt_single_temperature_is_sml(rng):
    p = RbmParams.random(5, 3, rng)
    init = (np.random.default_rng(1).random((7, 5)) < 0.5).astype(float)
    ens = TemperedEnsemble(p, [1.0], init[None].copy())
    bank = ChainBank(init.copy())
    g1, g2 = np.random.default_rng(4), np.random.default_rng(4)
    for _ in range(200):
        pt_step(ens, g1)
        sml_step(p, bank, 1, g2)
        np.testing.assert_array_equal(ens.nominal, bank.states)


def test_pt_equal_betas_accept_everything(rng):
    p = RbmParams.random(4, 4, rng, 2.0)
    ens = TemperedEnsemble.init(p, np.ones(4), 6, rng)
    for _ in range(20):
        pt_step(ens, rng)
    np.testing.assert_array_equal(ens.stats.accepted, ens.stats.proposed)


def test_pt_parity_schedule(rng):
    ens = TemperedEnsemble.init(RbmParams.random(4, 4, rng), linear_betas(5), 3, rng)
    pt_step(ens, rng)
    np.testing.assert_array_equal(ens.stats.proposed, [3, 0, 3, 0])
    pt_step(ens, rng)
    np.testing.assert_array_equal(ens.stats.proposed, [3, 3, 3, 3])
    assert np.all(ens.stats.accepted <= ens.stats.proposed)


def test_pt_stationarity():
    p = RbmParams.random(4, 4, np.random.default_rng(31), 2.0)
    probs = visible_marginal(p)
    r = np.random.default_rng(32)
    ens = TemperedEnsemble.init(p, linear_betas(5), 50, r)
    counts = np.zeros(16)
    for t in range(5200):
        pt_step(ens, r)
        if t >= 200:
            counts += np.bincount(state_index(ens.nominal), minlength=16)
    assert tv(counts, probs) <= 0.02


def test_pt_preserves_stationary_marginals():
    p = RbmParams.random(4, 4, np.random.default_rng(41), 2.0)
    betas = linear_betas(3)
    r = np.random.default_rng(42)
    marg = [visible_marginal(p, b) for b in betas]
    k = 10_000
    states = np.stack([states_from(m, 4, k, r) for m in marg])
    ens = TemperedEnsemble(p, betas, states)
    counts = np.zeros((3, 16))
    for _ in range(10):
        pt_step(ens, r)
        for i in range(3):
            counts[i] += np.bincount(state_index(ens.states[i]), minlength=16)
    for i in range(3):
        assert tv(counts[i], marg[i]) <= 0.01


# ---------------------------------------------------------------- DT


def test_dt_log_ratio_identical_states(rng):
    lo, up = RbmParams.random(4, 3, rng), RbmParams.random(3, 4, rng)
    x = np.array([1.0, 0, 1])
    assert dt_swap_log_ratio(lo, up, x, x) == 0.0


def test_dt_log_ratio_uniform_upper(rng):
    lo, up = RbmParams.random(4, 3, rng), RbmParams.zeros(3, 4)
    h, v = np.array([1.0, 0, 1]), np.array([0.0, 1, 1])
    assert dt_swap_log_ratio(lo, up, h, v) == pytest.approx(free_energy_h(lo, h) - free_energy_h(lo, v), abs=1e-12)


def test_dt_log_ratio_matches_enumerated_marginals(rng):
    lo, up = RbmParams.random(4, 3, rng, 2.0), RbmParams.random(3, 4, rng, 2.0)
    ph, pv = hidden_marginal(lo), visible_marginal(up)
    a, b = 2, 5  # indices of h_lower and v_upper in the 3-bit space
    h, v = all_states(3)[a], all_states(3)[b]
    expected = math.log(ph[b] * pv[a] / (ph[a] * pv[b]))
    assert dt_swap_log_ratio(lo, up, h, v) == pytest.approx(expected, rel=1e-10)


def test_dt_adjacency_errors(rng):
    lo, up = RbmParams.random(4, 3, rng), RbmParams.random(2, 4, rng)
    with pytest.raises(DimensionError):
        dt_swap_log_ratio(lo, up, np.zeros(3), np.zeros(2))
    with pytest.raises(DimensionError):
        DeepEnsemble.init([lo, up], 2, rng)


def test_dt_single_layer_is_sml(rng):
    p = RbmParams.random(5, 3, rng)
    init = (np.random.default_rng(1).random((7, 5)) < 0.5).astype(float)
    ens = DeepEnsemble([p], [init.copy()], [np.zeros((7, 3))])
    bank = ChainBank(init.copy())
    g1, g2 = np.random.default_rng(4), np.random.default_rng(4)
    for _ in range(200):
        _, neg = dt_neg_swaps(ens, g1)
        ens.isodd = not ens.isodd
        sml_step(p, bank, 1, g2)
        np.testing.assert_array_equal(neg[0], bank.states)


def test_dt_identical_states_swap_is_noop(rng):
    lo, up = RbmParams.random(4, 3, rng), RbmParams.random(3, 4, rng)
    h = np.array([[1.0, 0, 1]])
    ens = DeepEnsemble([lo, up], [np.zeros((1, 4)), h.copy()], [h.copy(), np.zeros((1, 4))])
    ref = DeepEnsemble([lo, up], [np.zeros((1, 4)), h.copy()], [h.copy(), np.zeros((1, 4))])
    g1, g2 = np.random.default_rng(0), np.random.default_rng(0)
    dt_neg_swaps(ens, g1)
    # same draws with the proposal forced to be rejected: identical result
    log_r = dt_swap_log_ratio(lo, up, ref.h[0], ref.v[1])
    assert log_r == 0.0
    dt_neg_swaps(ref, g2)
    for a, b in zip(ens.v + ens.h, ref.v + ref.h):
        np.testing.assert_array_equal(a, b)
    assert ens.stats.accepted[0] == 1


def test_dt_parity_schedule(rng):
    layers = [RbmParams.random(4, 3, rng), RbmParams.random(3, 3, rng), RbmParams.random(3, 2, rng)]
    ens = DeepEnsemble.init(layers, 4, rng)
    dt_neg_swaps(ens, rng)
    np.testing.assert_array_equal(ens.stats.proposed, [4, 0])
    ens.isodd = False
    dt_neg_swaps(ens, rng)
    np.testing.assert_array_equal(ens.stats.proposed, [4, 4])
    assert ens.isodd is False  # parity belongs to the caller


def test_dt_stationarity_two_layers():
    g = np.random.default_rng(51)
    lo, up = RbmParams.random(4, 3, g, 2.0), RbmParams.random(3, 4, g, 2.0)
    probs = visible_marginal(lo)
    r = np.random.default_rng(52)
    ens = DeepEnsemble.init([lo, up], 100, r)
    counts = np.zeros(16)
    for t in range(10_500):
        dt_neg_swaps(ens, r)
        ens.isodd = not ens.isodd
        if t >= 500:
            counts += np.bincount(state_index(ens.v[0]), minlength=16)
    assert tv(counts, probs) <= 0.02
    assert 0 < ens.stats.accepted[0] < ens.stats.proposed[0]


def test_dt_preserves_stationary_marginals():
    g = np.random.default_rng(61)
    lo, up = RbmParams.random(4, 3, g, 2.0), RbmParams.random(3, 4, g, 2.0)
    r = np.random.default_rng(62)
    k = 10_000
    v0 = states_from(visible_marginal(lo), 4, k, r)
    v1 = states_from(visible_marginal(up), 3, k, r)
    ens = DeepEnsemble([lo, up], [v0, v1], [sample_h(lo, v0, r), sample_h(up, v1, r)])
    c0, c1 = np.zeros(16), np.zeros(8)
    for _ in range(10):
        dt_neg_swaps(ens, r)
        ens.isodd = not ens.isodd
        c0 += np.bincount(state_index(ens.v[0]), minlength=16)
        c1 += np.bincount(state_index(ens.v[1]), minlength=8)
    assert tv(c0, visible_marginal(lo)) <= 0.01
    assert tv(c1, visible_marginal(up)) <= 0.01


# ---------------------------------------------------------------- CAST


def test_cast_single_temperature_is_sml(rng):
    p = RbmParams.random(5, 3, rng)
    x, groups = 3, 2
    init = (np.random.default_rng(1).random((groups * (x + 1), 5)) < 0.5).astype(float)
    ens = CastEnsemble(p, [1.0], x, init.copy(), np.zeros(groups, dtype=int), np.zeros(1))
    bank = ChainBank(init.copy())
    g1, g2 = np.random.default_rng(4), np.random.default_rng(4)
    for _ in range(200):
        cast_step(ens, g1)
        sml_step(p, bank, 1, g2)
        np.testing.assert_array_equal(ens.states, bank.states)
        assert ens.nominal_mask().all()


def test_cast_validation(rng):
    p = RbmParams.zeros(3, 2)
    with pytest.raises(ValueError):
        CastEnsemble(p, [1.0, 0.5], 0, np.zeros((1, 3)), np.zeros(1, dtype=int), np.zeros(2))
    with pytest.raises(ValueError):
        CastEnsemble(p, [1.0, 0.5], 1, np.zeros((2, 3)), np.array([2]), np.zeros(2))


def test_cast_uniform_model_occupancy():
    r = np.random.default_rng(71)
    m, groups, steps = 5, 20, 20_000
    ens = CastEnsemble.init(RbmParams.zeros(4, 4), linear_betas(m), 2, groups, r)
    trace = np.zeros((steps, m))
    for t in range(steps):
        cast_step(ens, r)
        trace[t] = np.bincount(ens.temp_idx, minlength=m) / groups
    freq = trace.mean(axis=0)
    # batch means give a correlation-aware standard error
    batches = trace.reshape(100, -1, m).mean(axis=1)
    se = batches.std(axis=0, ddof=1) / math.sqrt(100)
    assert np.all(np.abs(freq - 1 / m) <= 3 * se + 1e-3)
    np.testing.assert_allclose(ens.log_weights, 0.0, atol=1e-9)


def test_cast_stationarity_and_weights():
    p = RbmParams.random(4, 4, np.random.default_rng(81), 2.0)
    probs = visible_marginal(p)
    r = np.random.default_rng(82)
    ens = CastEnsemble.init(p, linear_betas(5), 10, 10, r, t0=100)
    counts = np.zeros(16)
    for t in range(10_500):
        cast_step(ens, r)
        if t >= 500:
            counts += np.bincount(state_index(ens.states[:100]), minlength=16)
    assert tv(counts, probs) <= 0.02
    log_z = np.array([exact_log_z(p, beta=b) for b in ens.betas])
    np.testing.assert_allclose(-ens.log_weights, log_z - log_z[0], atol=0.1)
    assert np.all(ens.stats.accepted <= ens.stats.proposed)


def test_cast_exchange_only_at_nominal(rng):
    p = RbmParams.random(4, 4, rng)
    ens = CastEnsemble.init(p, linear_betas(3), 2, 3, rng)
    for _ in range(50):
        cast_step(ens, rng)
        assert ens.states.shape == (9, 4)
        assert ens.nominal_mask().sum() == 6 + (ens.temp_idx == 0).sum()
    assert ens.occupancy.sum() == 150


# ---------------------------------------------------------------- stats


def test_swap_stats_windows():
    s = SwapStats(2, window=3)
    for t in range(7):
        s.record(0, 2, 1)
        s.tick()
    assert s.proposed.tolist() == [14, 0]
    assert len(s.history) == 2
    prop, acc = s.window_counts()
    assert prop.tolist() == [2, 0] and acc.tolist() == [1, 0]
    t = SwapStats.from_dict(s.to_dict())
    assert t.to_dict() == s.to_dict()
