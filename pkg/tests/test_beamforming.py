import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from d2dcache.beamforming import (
    BeamformingError,
    MessagePlan,
    SolverOptions,
    audit,
    common_rate,
    enumerate_mac_constraints,
    mac_constraint_count,
    mac_rates,
    mrt_unicast,
    solve_max_min,
    t_dl,
)
from d2dcache.channel import ScenarioConfig, dl_point_rate, sample
from d2dcache.combinatorics import default_demands, place
from d2dcache.d2d import build_schedule, remaining_message_plan


def plan_after(K, groups):
    tau = {3: 1, 4: 2}[K]
    p, d = place(K, K, tau), default_demands(K, K)
    return remaining_message_plan(build_schedule(groups, d, p))


def cgauss(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2)


def check_solution(plan, H, P_T, N0, sol):
    W = sol.beamformers
    r = sol.rate
    assert audit(sol.plan, H, W, N0) >= r - 1e-6 * max(1.0, r)
    assert sol.power <= P_T * (1 + 1e-8)
    assert all(b >= a - 1e-9 for a, b in zip(sol.trace, sol.trace[1:]))


def test_example2_user4_has_seven_constraints():
    plan = plan_after(4, [(1, 2, 3)])
    cons = enumerate_mac_constraints(plan)
    assert sum(1 for k, _ in cons if k == 4) == 7
    assert len(cons) == mac_constraint_count(plan) == 16


def test_single_needed_message_single_constraint():
    plan = MessagePlan(2, ((1,), (2,)), (frozenset({0}), frozenset({1})))
    assert enumerate_mac_constraints(plan) == [(1, (0,)), (2, (1,))]


def test_no_offload_count_k10():
    plan = MessagePlan.full(10, 1)
    per_user = [2 ** len(n) - 1 for n in plan.needed]
    assert per_user == [511] * 10
    assert mac_constraint_count(plan) == 5110


def test_interference_is_messages_without_the_user():
    plan = plan_after(4, [(1, 2), (1, 3), (2, 3)])
    # user 1 needs nothing but receives (1,2,4) and (1,3,4); only (2,3,4) interferes
    assert plan.interference(1) == frozenset({2})
    for k in range(1, 5):
        assert not plan.needed[k - 1] & plan.interference(k)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from([3, 4]), st.integers(1, 4))
def test_fast_mac_rate_matches_enumeration(seed, K, L):
    rng = np.random.default_rng(seed)
    groups = [[], [(1, 2)] if K == 3 else [(1, 2, 3)], [(1, 2), (2, 3)]][seed % 3]
    plan = plan_after(K, groups).pruned()
    H = cgauss(rng, K, L)
    W = cgauss(rng, len(plan), L)
    assert common_rate(plan, H, W, 0.7) == pytest.approx(audit(plan, H, W, 0.7), rel=1e-12)


def test_mac_rate_by_hand():
    # user needing two messages with powers 1 and 3 at unit noise
    plan = MessagePlan(1, ((1,), (1,)), (frozenset({0, 1}),))
    H = np.array([[1.0]])
    W = np.array([[1.0], [math.sqrt(3)]])
    want = min(math.log2(2), math.log2(4), math.log2(5) / 2)
    assert mac_rates(plan, H, W, 1.0)[0] == pytest.approx(want)


def test_mrt_examples():
    assert np.allclose(mrt_unicast(np.array([1.0, 0.0]), 4.0), [2.0, 0.0])
    rng = np.random.default_rng(1)
    h = cgauss(rng, 3)
    assert np.linalg.norm(mrt_unicast(h, 2.5)) ** 2 == pytest.approx(2.5)
    with pytest.raises(BeamformingError):
        mrt_unicast(np.zeros(2), 1.0)


def test_mrt_beats_random_beamformers():
    rng = np.random.default_rng(2)
    h = cgauss(rng, 4)
    P = 3.0
    best = dl_point_rate(h, mrt_unicast(h, P), [], 1.0)
    for _ in range(1000):
        w = cgauss(rng, 4)
        w *= math.sqrt(P) / np.linalg.norm(w)
        assert dl_point_rate(h, w, [], 1.0) <= best + 1e-12


def test_single_message_single_user_is_mrt():
    rng = np.random.default_rng(3)
    H = cgauss(rng, 2, 3)
    plan = MessagePlan(2, ((1,),), (frozenset({0}), frozenset()))
    sol = solve_max_min(plan, H, 5.0, 0.5)
    assert sol.method == "mrt"
    assert sol.rate == pytest.approx(math.log2(1 + np.linalg.norm(H[0]) ** 2 * 5.0 / 0.5), rel=1e-12)
    assert np.allclose(sol.beamformers[0], mrt_unicast(H[0], 5.0))


def test_single_user_several_messages_share_mrt_rate():
    cfg = ScenarioConfig(K=4, N=4, M=2, inner_radius_m=5)
    ch = sample(cfg, 0)
    plan = plan_after(4, [(1, 2, 3), (1, 2), (1, 3), (2, 3)])
    sol = solve_max_min(plan, ch.dl_channels, cfg.bs_power, cfg.N0)
    mrt = math.log2(1 + np.linalg.norm(ch.h(4)) ** 2 * cfg.bs_power / cfg.N0)
    assert 3 * sol.rate == pytest.approx(mrt, rel=1e-12)
    assert audit(sol.plan, ch.dl_channels, sol.beamformers, cfg.N0) >= sol.rate * (1 - 1e-9)
    # the three parts go out back to back, so the time equals (3C) / R_MRT
    assert t_dl(plan, sol, 4, 2, 2) == pytest.approx(3 * (1 / 6) / mrt)


def test_orthogonal_users_match_power_split_grid():
    h1, h2 = np.array([1.3, 0.0]), np.array([0.0, 0.6])
    H = np.vstack([h1, h2]).astype(complex)
    plan = MessagePlan(2, ((1,), (2,)), (frozenset({0}), frozenset({1})))
    P_T, N0 = 4.0, 1.0
    grid = np.linspace(0, P_T, 1001)
    best = max(min(math.log2(1 + p * 1.69), math.log2(1 + (P_T - p) * 0.36)) for p in grid)
    sol = solve_max_min(plan, H, P_T, N0)
    check_solution(plan, H, P_T, N0, sol)
    assert sol.rate >= best - 1e-3
    # grid spacing bounds how far the exact optimum can sit above the grid
    assert sol.rate <= best + 1e-2


def test_example1_bounds_hold_at_solution():
    cfg = ScenarioConfig(inner_radius_m=10)
    ch = sample(cfg, 11)
    plan = plan_after(3, [(1, 2)])
    sol = solve_max_min(plan, ch.dl_channels, cfg.bs_power, cfg.N0)
    check_solution(plan, ch.dl_channels, cfg.bs_power, cfg.N0, sol)
    msgs = sol.plan.messages
    assert msgs == ((1, 3), (2, 3))
    W = sol.beamformers
    gam = lambda k, j: abs(np.vdot(ch.h(k), W[j])) ** 2 / (cfg.N0 + sum(abs(np.vdot(ch.h(k), W[i])) ** 2 for i in sol.plan.interference(k)))
    r = sol.rate * (1 - 1e-9)
    assert r <= 0.5 * math.log2(1 + gam(3, 0) + gam(3, 1))
    for k, j in [(3, 0), (3, 1), (1, 0), (2, 1)]:
        assert r <= math.log2(1 + gam(k, j))


@pytest.mark.parametrize("K,groups", [(3, []), (3, [(1, 2)]), (4, []), (4, [(1, 2, 3)]), (4, [(1, 2), (3, 4)])])
def test_solver_is_sound(K, groups):
    cfg = ScenarioConfig(K=K, N=K, M=K - 2 if K == 4 else 1, inner_radius_m=10)
    plan = plan_after(K, groups)
    for seed in range(5):
        ch = sample(cfg, seed)
        sol = solve_max_min(plan, ch.dl_channels, cfg.bs_power, cfg.N0)
        check_solution(plan, ch.dl_channels, cfg.bs_power, cfg.N0, sol)
        assert sol.rate > 0
        assert sol.trace[-1] == sol.rate


def test_scale_covariance():
    cfg = ScenarioConfig(K=4, N=4, M=2, inner_radius_m=10)
    ch = sample(cfg, 5)
    plan = plan_after(4, [(1, 2, 3)])
    a = solve_max_min(plan, ch.dl_channels, cfg.bs_power, cfg.N0)
    b = solve_max_min(plan, ch.dl_channels * 7.0, cfg.bs_power, cfg.N0 * 49.0)
    assert b.rate == pytest.approx(a.rate, abs=1e-6)


def test_dropping_a_message_never_hurts():
    cfg = ScenarioConfig(K=4, N=4, M=2, inner_radius_m=10)
    full = MessagePlan.full(4, 2)
    worse = 0
    for seed in range(20):
        ch = sample(cfg, seed)
        drop = seed % len(full)
        msgs = tuple(D for j, D in enumerate(full.messages) if j != drop)
        needed = tuple(frozenset(j for j, D in enumerate(msgs) if k in D) for k in range(1, 5))
        smaller = MessagePlan(4, msgs, needed)
        r_full = solve_max_min(full, ch.dl_channels, cfg.bs_power, cfg.N0).rate
        r_small = solve_max_min(smaller, ch.dl_channels, cfg.bs_power, cfg.N0).rate
        worse += r_small < r_full - 1e-3
    assert worse == 0


def test_iteration_cap_flags_non_convergence():
    cfg = ScenarioConfig(K=4, N=4, M=2, inner_radius_m=10)
    ch = sample(cfg, 1)
    sol = solve_max_min(MessagePlan.full(4, 2), ch.dl_channels, cfg.bs_power, cfg.N0, SolverOptions(max_iter=1))
    assert sol.iterations == 1
    assert not sol.converged or len(sol.trace) <= 2
    check_solution(MessagePlan.full(4, 2), ch.dl_channels, cfg.bs_power, cfg.N0, sol)


def test_failing_subproblem_restarts_then_raises():
    cfg = ScenarioConfig()
    ch = sample(cfg, 0)
    with pytest.raises(BeamformingError, match="restarts"):
        solve_max_min(MessagePlan.full(3, 1), ch.dl_channels, cfg.bs_power, cfg.N0, SolverOptions(solver="NO_SUCH_SOLVER"))


def test_t_dl_values():
    cfg = ScenarioConfig()
    ch = sample(cfg, 0)
    plan = plan_after(3, [(1, 2)])
    sol = solve_max_min(plan, ch.dl_channels, cfg.bs_power, cfg.N0)
    assert t_dl(plan, sol, 3, 1, 2) == pytest.approx((1 / 3) / sol.rate)
    plan4 = plan_after(4, [(1, 2, 3)])
    sol4 = solve_max_min(plan4, sample(ScenarioConfig(K=4, N=4, M=2), 0).dl_channels, cfg.bs_power, cfg.N0)
    assert t_dl(plan4, sol4, 4, 2, 2) == pytest.approx((1 / 6) / sol4.rate)
    empty = plan_after(3, [(1, 2), (1, 3), (2, 3)])
    assert t_dl(empty, solve_max_min(empty, ch.dl_channels, 1.0, 1.0), 3, 1, 2) == 0.0
    dead = sol.__class__(sol.beamformers, 0.0)
    assert t_dl(plan, dead, 3, 1, 2) == math.inf


def test_messages_nobody_needs_are_pruned():
    plan = MessagePlan(3, ((1, 2), (1, 3)), (frozenset({1}), frozenset(), frozenset({1})))
    assert plan.pruned().messages == ((1, 3),)
