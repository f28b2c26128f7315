"""Choosing which user groups exchange content over D2D.

Two strategies: an exhaustive search over every selection of (tau+1)-groups,
evaluated with the full beamformer solver, and a greedy threshold rule that
uses closed-form approximations of both phase durations.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from .beamforming import BeamformingError, MessagePlan, SolverOptions, solve_max_min, t_dl
from .channel import ChannelRealization, ScenarioConfig, d2d_rate
from .combinatorics import ParameterError, PlacementMap, Subset, subfile_size, subsets
from .d2d import (
    D2DSchedule,
    build_schedule,
    extend,
    group_time,
    pending_parts,
    remaining_message_plan,
    t_d2d,
)

log = logging.getLogger(__name__)

EXHAUSTIVE_GROUP_LIMIT = 20


class SearchTooLarge(ParameterError):
    pass


@dataclass
class SelectionState:
    iteration: int
    schedule: D2DSchedule
    remaining_parts: int
    pool: List[Subset]
    candidate: Subset = ()
    dl_per_part: float = math.nan
    d2d_per_part: float = math.nan
    accepted: bool = False


def _nominal_time_per_part(V: Subset, chans, config) -> float:
    C = subfile_size(config.K, config.tau, config.L, config.F)
    total = 0.0
    for k in V:
        rate = d2d_rate(k, [u for u in V if u != k], chans, config)
        total += C / (len(V) - 1) / rate if rate > 0 else math.inf
    return total / len(V)


def approx_t_d2d(
    pool: Sequence[Subset],
    chans: ChannelRealization,
    config: ScenarioConfig,
    schedule: Optional[D2DSchedule] = None,
) -> Tuple[Subset, float]:
    """Cheapest candidate group by D2D airtime per delivered subfile.

    Without a ``schedule`` every group delivers one subfile per member,
    giving (1/|D|) sum_k (C / (|D|-1)) / R_k. With a schedule, smaller
    groups are charged their full airtime over the parts still pending.
    """
    if not pool:
        raise ParameterError("empty candidate pool")
    best: Optional[Tuple[float, Subset]] = None
    for V in sorted(pool, key=lambda s: (len(s), s)):
        if schedule is None:
            per = _nominal_time_per_part(V, chans, config)
        else:
            per = _airtime_per_part(schedule, V, chans, config)
        if best is None or per < best[0]:
            best = (per, V)
    return best[1], best[0]


def _airtime_per_part(schedule: D2DSchedule, V: Subset, chans, config) -> float:
    parts = pending_parts(schedule, V)
    if not parts:
        return math.inf
    # realise the group after the current schedule to get its exact a_k counts
    trial = extend(schedule, V)
    return group_time(trial.groups[-1], chans, config) / len(parts)


def approx_power(plan: MessagePlan, H: np.ndarray, P_T: float) -> np.ndarray:
    """Per-message power equalising the weakest needing user's received SNR.

    Closed form P_D = P_T (1/m_D) / sum_V (1/m_V), with m_D the smallest
    channel norm among users that still need D. This is the product form
    prod_{U != D} m_U / sum_V prod_{U != V} m_U divided through by prod m.
    """
    plan = plan.pruned()
    if plan.empty:
        raise ParameterError("empty plan")
    norms = np.sum(np.abs(np.asarray(H)) ** 2, axis=1)
    weakest = np.array([min(norms[k - 1] for k in plan.recipients(j)) for j in range(len(plan))])
    if np.any(weakest <= 0):
        raise ParameterError("zero channel norm")
    inv = 1.0 / weakest
    return P_T * inv / inv.sum()


def approx_rate(plan: MessagePlan, H: np.ndarray, powers: np.ndarray, N0: float) -> float:
    """min_k (1/|Omega_k|) log2(1 + ||h_k||^2 / N0 * sum_{D in Omega_k} P_D)."""
    plan = plan.pruned()
    norms = np.sum(np.abs(np.asarray(H)) ** 2, axis=1)
    rates = []
    for k in plan.active_users():
        need = sorted(plan.needed[k - 1])
        rates.append(math.log2(1.0 + norms[k - 1] / N0 * float(np.sum(powers[need]))) / len(need))
    return min(rates)


def approx_t_dl(
    plan: MessagePlan,
    H: np.ndarray,
    powers: Optional[np.ndarray],
    K: int,
    tau: int,
    L: int,
    F: float,
    N0: float,
    P_T: Optional[float] = None,
) -> float:
    """Interference-free MRT approximation of the downlink duration."""
    plan = plan.pruned()
    if plan.empty:
        return 0.0
    if powers is None:
        powers = approx_power(plan, H, P_T)
    rate = approx_rate(plan, H, powers, N0)
    return subfile_size(K, tau, L, F) / rate if rate > 0 else math.inf


def heuristic_select(
    demands: Sequence[int],
    placement: PlacementMap,
    chans: ChannelRealization,
    config: ScenarioConfig,
    allow_general_groups: bool = False,
    state_log: Optional[List[SelectionState]] = None,
) -> D2DSchedule:
    """Greedy D2D group selection with the per-subfile threshold test.

    At each step the cheapest pending group (approximate D2D airtime per
    subfile) is accepted while the approximate downlink time per remaining
    subfile is at least that airtime. Groups of size tau+1 are tried first;
    with ``allow_general_groups`` the search then moves on to size tau,
    tau-1, ..., 2, each size running until its first rejection.
    """
    tau = placement.tau
    if tau < 1:
        raise ParameterError("D2D needs tau >= 1")
    K = placement.K
    H = chans.dl_channels
    schedule = build_schedule([], demands, placement)
    sizes = [tau + 1] + (list(range(tau, 1, -1)) if allow_general_groups else [])
    iteration = 0
    for size in sizes:
        pool = subsets(range(1, K + 1), size)
        while True:
            pool = [V for V in pool if pending_parts(schedule, V)]
            if not pool:
                break
            iteration += 1
            plan = remaining_message_plan(schedule).pruned()
            remaining = plan.total_parts()
            V, d2d_per_part = approx_t_d2d(pool, chans, config, schedule)
            dl = approx_t_dl(plan, H, None, K, tau, config.L, config.F, config.N0, config.bs_power)
            dl_per_part = dl / remaining if remaining else 0.0
            accept = dl_per_part >= d2d_per_part
            if state_log is not None:
                state_log.append(
                    SelectionState(iteration, schedule, remaining, list(pool), V, dl_per_part, d2d_per_part, accept)
                )
            if not accept:
                break
            schedule = extend(schedule, V)
            pool = [U for U in pool if U != V]
    return schedule


def evaluate_schedule(
    schedule: D2DSchedule,
    chans: ChannelRealization,
    config: ScenarioConfig,
    solver_opts: Optional[SolverOptions] = None,
):
    """Exact (t_d2d, t_dl, solution) of a schedule with the full beamformer solver."""
    plan = remaining_message_plan(schedule)
    sol = solve_max_min(plan, chans.dl_channels, config.bs_power, config.N0, solver_opts)
    td = t_d2d(schedule, chans, config)
    tl = t_dl(plan, sol, config.K, config.tau, config.L, config.F)
    return td, tl, sol


def exhaustive_select(
    demands: Sequence[int],
    placement: PlacementMap,
    chans: ChannelRealization,
    config: ScenarioConfig,
    solver_opts: Optional[SolverOptions] = None,
    on_evaluate: Optional[Callable[[Tuple[Subset, ...], float], None]] = None,
    return_evaluation: bool = False,
):
    """Minimise t_d2d + t_dl over every selection of (tau+1)-groups.

    Ties go to fewer groups, then to the lexicographically smaller selection.
    Returns ``(schedule, total)``, or ``(schedule, total, (t_d2d, t_dl,
    solution))`` with ``return_evaluation``.
    """
    groups = subsets(range(1, placement.K + 1), placement.tau + 1)
    if len(groups) > EXHAUSTIVE_GROUP_LIMIT:
        raise SearchTooLarge(
            f"{len(groups)} candidate groups means 2^{len(groups)} evaluations; use heuristic_select"
        )
    best = None
    for mask in range(2 ** len(groups)):
        chosen = tuple(g for b, g in enumerate(groups) if mask >> b & 1)
        schedule = build_schedule(chosen, demands, placement)
        try:
            evaluation = evaluate_schedule(schedule, chans, config, solver_opts)
        except BeamformingError as exc:
            log.warning("selection %s skipped: %s", chosen, exc)
            continue
        total = evaluation[0] + evaluation[1]
        if on_evaluate is not None:
            on_evaluate(chosen, total)
        key = (total, len(chosen), chosen)
        if best is None or key < best[0]:
            best = (key, schedule, evaluation)
    if best is None:
        raise BeamformingError("every selection failed to evaluate")
    if return_evaluation:
        return best[1], best[0][0], best[2]
    return best[1], best[0][0]
