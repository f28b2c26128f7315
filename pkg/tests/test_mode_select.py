import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from d2dcache.beamforming import MessagePlan, solve_max_min
from d2dcache.channel import ScenarioConfig, sample
from d2dcache.combinatorics import ParameterError, binom, default_demands, place, subfile_size, subsets
from d2dcache.d2d import build_schedule, remaining_message_plan
from d2dcache.mode_select import (
    SearchTooLarge,
    SelectionState,
    approx_power,
    approx_rate,
    approx_t_d2d,
    approx_t_dl,
    evaluate_schedule,
    exhaustive_select,
    heuristic_select,
)

from conftest import make_chans

def k3():
    return place(3, 3, 1), default_demands(3, 3)


def k4():
    return place(4, 4, 2), default_demands(4, 4)


PAIRS = [(1, 2), (1, 3), (2, 3)]


def test_symmetric_pool_returns_first_subset(unit_config):
    ch = make_chans(np.ones((3, 2)))
    V, per = approx_t_d2d(PAIRS, ch, unit_config)
    assert V == (1, 2)
    assert per == pytest.approx(1 / 3)  # (1/2)(C/1 + C/1) with C = 1/3 and unit rates


def test_strong_pair_is_cheapest(unit_config):
    g = np.ones((3, 3))
    g[0, 1] = g[1, 0] = math.sqrt(10)
    ch = make_chans(np.ones((3, 2)), gains=g)
    V, per = approx_t_d2d([(2, 3), (1, 3), (1, 2)], ch, unit_config)
    assert V == (1, 2)
    assert per == pytest.approx((1 / 3) / math.log2(11))


def test_empty_pool_rejected(unit_config):
    with pytest.raises(ParameterError):
        approx_t_d2d([], make_chans(np.ones((3, 2))), unit_config)


def two_user_plan():
    return MessagePlan(2, ((1,), (2,)), (frozenset({0}), frozenset({1})))


def test_approx_power_examples():
    H = np.array([[1.0, 0.0], [0.0, math.sqrt(2)]])
    assert np.allclose(approx_power(two_user_plan(), H, 3.0), [2.0, 1.0])
    plan = MessagePlan.full(3, 1)
    assert np.allclose(approx_power(plan, np.ones((3, 2)), 6.0), [2.0, 2.0, 2.0])
    with pytest.raises(ParameterError):
        approx_power(two_user_plan(), np.zeros((2, 2)), 1.0)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from([(3, 1), (4, 2), (4, 1)]))
def test_approx_power_equalises_weakest_snr(seed, kt):
    K, tau = kt
    rng = np.random.default_rng(seed)
    H = rng.standard_normal((K, 2)) * rng.uniform(0.1, 3, size=(K, 1))
    plan = MessagePlan.full(K, tau)
    P = approx_power(plan, H, 5.0)
    assert P.sum() == pytest.approx(5.0, rel=1e-12)
    norms = np.sum(H ** 2, axis=1)
    snr = [min(norms[k - 1] for k in plan.recipients(j)) * P[j] for j in range(len(plan))]
    assert np.allclose(snr, snr[0], rtol=1e-10)


def test_approx_t_dl_unit_bottleneck():
    H = np.array([[1.0, 0.0], [0.0, 10.0]])
    plan = two_user_plan()
    # user 1 needs one message with SNR term exactly 1
    assert approx_t_dl(plan, H, np.array([1.0, 1.0]), 3, 1, 2, 1.0, 1.0) == pytest.approx(1 / 3)
    empty = MessagePlan(2, (), (frozenset(), frozenset()))
    assert approx_t_dl(empty, H, None, 3, 1, 2, 1.0, 1.0) == 0.0


def test_approx_t_dl_equal_channels_simplified_form():
    plan = MessagePlan.full(4, 2)
    H = np.tile([0.3, 0.4], (4, 1))
    P_T, N0 = 10.0, 0.5
    norm2 = 0.25
    w = len(plan.needed[0])
    simplified = (1 / 6) / (math.log2(1 + w * norm2 * P_T / (len(plan) * N0)) / w)
    assert approx_t_dl(plan, H, None, 4, 2, 2, 1.0, N0, P_T) == pytest.approx(simplified)


def test_approx_rate_against_solver_is_diagnostic(caplog):
    cfg = ScenarioConfig(K=4, N=4, M=2, inner_radius_m=10)
    plan = MessagePlan.full(4, 2)
    ratios = []
    for seed in range(20):
        ch = sample(cfg, seed)
        approx = approx_rate(plan, ch.dl_channels, approx_power(plan, ch.dl_channels, cfg.bs_power), cfg.N0)
        exact = solve_max_min(plan, ch.dl_channels, cfg.bs_power, cfg.N0).rate
        ratios.append(approx / exact)
    print("approx/solver rate ratios:", np.round(ratios, 3))
    assert all(np.isfinite(ratios))


def strong_d2d(cfg, K, gain):
    rng = np.random.default_rng(0)
    H = (rng.standard_normal((K, cfg.L)) + 1j * rng.standard_normal((K, cfg.L))) / math.sqrt(2)
    return make_chans(H, gains=np.full((K, K), gain))


def test_heuristic_offloads_everything_when_d2d_is_fast():
    cfg = ScenarioConfig(K=4, N=4, M=2, P_T=1.0, P_d=1.0)
    p, d = k4()
    s = heuristic_select(d, p, strong_d2d(cfg, 4, 100.0), cfg)
    assert sorted(s.members()) == subsets(range(1, 5), 3)
    assert remaining_message_plan(s).empty


def test_heuristic_stays_multicast_when_d2d_is_slow():
    cfg = ScenarioConfig(K=4, N=4, M=2, P_T=1.0, P_d=1.0)
    p, d = k4()
    s = heuristic_select(d, p, strong_d2d(cfg, 4, 1e-3), cfg, allow_general_groups=True)
    assert s.members() == []


def test_heuristic_colocated_users_take_all_groups():
    # calibrated powers, mean gains: downlink 0 dB per antenna at 100 m,
    # D2D over the 1 m floor distance at 20 dB
    cfg = ScenarioConfig()
    H = np.array([[1, 1], [1, -1], [1, 1j]]) * 100.0 ** -1.5
    ch = make_chans(H, gains=np.ones((3, 3)))
    p, d = k3()
    s = heuristic_select(d, p, ch, cfg)
    assert sorted(s.members()) == PAIRS


def test_heuristic_far_users_stay_multicast():
    # every pair 100 m apart: mean D2D SNR -20 dB against 0 dB on the downlink
    cfg = ScenarioConfig(geometry="fixed", d2d_ref_distance_m=100.0, d2d_ref_snr_db=-20)
    p, d = k3()
    for seed in range(5):
        assert heuristic_select(d, p, sample(cfg, seed), cfg).members() == []


@pytest.mark.parametrize("K,general", [(3, False), (4, False), (4, True)])
def test_selection_states(K, general):
    cfg = ScenarioConfig(K=K, N=K, M=K - 2 if K == 4 else 1, inner_radius_m=2.0)
    p, d = (k4 if K == 4 else k3)()
    tau = p.tau
    M_T = binom(tau + cfg.L, tau + 1)
    budget = sum(binom(K, j) for j in range(2, tau + 2)) if general else M_T
    for seed in range(8):
        states = []
        s = heuristic_select(d, p, sample(cfg, seed), cfg, allow_general_groups=general, state_log=states)
        assert len(states) <= budget
        for st_ in states:
            assert isinstance(st_, SelectionState)
            if len(st_.candidate) == tau + 1:
                assert st_.remaining_parts == (tau + 1) * (M_T - (st_.iteration - 1))
            assert st_.candidate in st_.pool
            assert not set(st_.pool) & set(st_.schedule.members())
        accepted = [st_.candidate for st_ in states if st_.accepted]
        assert accepted == s.members()
        if not general:
            assert all(len(V) == tau + 1 for V in s.members())


def test_heuristic_is_deterministic_and_in_search_space():
    cfg = ScenarioConfig(K=4, N=4, M=2, inner_radius_m=3.0)
    p, d = k4()
    space = set(subsets(range(1, 5), 3))
    for seed in range(5):
        ch = sample(cfg, seed)
        a = heuristic_select(d, p, ch, cfg)
        b = heuristic_select(d, p, ch, cfg)
        assert a.members() == b.members()
        assert set(a.members()) <= space
        assert len(set(a.members())) == len(a.members())


def test_heuristic_needs_cache():
    cfg = ScenarioConfig(K=2, N=2, M=0, L=2)
    with pytest.raises(ParameterError):
        heuristic_select((0, 1), place(2, 2, 0), sample(cfg, 0), cfg)


@pytest.mark.parametrize("K,count", [(3, 8), (4, 16)])
def test_exhaustive_evaluation_count(K, count):
    cfg = ScenarioConfig(K=K, N=K, M=K - 2 if K == 4 else 1, inner_radius_m=5.0)
    p, d = (k4 if K == 4 else k3)()
    seen = []
    s, total = exhaustive_select(d, p, sample(cfg, 0), cfg, on_evaluate=lambda sel, t: seen.append((sel, t)))
    assert len(seen) == count
    assert total == min(t for _, t in seen)
    td, tl, _ = evaluate_schedule(s, sample(cfg, 0), cfg)
    assert td + tl == pytest.approx(total, rel=1e-9)


def test_exhaustive_picks_the_strong_pair():
    cfg = ScenarioConfig(P_T=1.0, P_d=1.0)
    rng = np.random.default_rng(4)
    H = (rng.standard_normal((3, 2)) + 1j * rng.standard_normal((3, 2))) / math.sqrt(2)
    g = np.full((3, 3), 1e-3)
    g[0, 1] = g[1, 0] = 1e3
    p, d = k3()
    s, _ = exhaustive_select(d, p, make_chans(H, gains=g), cfg)
    assert s.members() == [(1, 2)]


def test_exhaustive_guard():
    cfg = ScenarioConfig(K=10, N=10, M=1, L=9)
    p = place(10, 10, 1)
    with pytest.raises(SearchTooLarge, match="heuristic"):
        exhaustive_select(default_demands(10, 10), p, sample(cfg, 0), cfg)


def test_heuristic_never_beats_exhaustive():
    cfg = ScenarioConfig(inner_radius_m=3.0)
    p, d = k3()
    for seed in range(5):
        ch = sample(cfg, seed)
        _, best = exhaustive_select(d, p, ch, cfg)
        td, tl, _ = evaluate_schedule(heuristic_select(d, p, ch, cfg), ch, cfg)
        assert best <= td + tl + 1e-12
