"""D2D schedules, their TDMA airtime, and the downlink plan they leave behind."""
from __future__ import annotations

from dataclasses import dataclass
from typing import FrozenSet, List, Sequence, Set, Tuple

from .beamforming import MessagePlan
from .channel import ChannelRealization, ScenarioConfig, d2d_rate
from .combinatorics import (
    CodedMessage,
    FragmentLedger,
    ParameterError,
    PlacementMap,
    Subset,
    d2d_coded_messages,
    group_offsets,
    subfile_size,
    subsets,
)


class D2DError(RuntimeError):
    pass


@dataclass(frozen=True)
class D2DGroup:
    members: Subset
    messages: Tuple[Tuple[int, CodedMessage], ...]
    delivered: FrozenSet[Tuple[int, Subset]]  # (user, downlink message) parts served here

    def count(self, k: int) -> int:
        """a_k: number of messages user k transmits in this group."""
        return sum(1 for j, _ in self.messages if j == k)


@dataclass(frozen=True)
class D2DSchedule:
    """Ordered D2D groups; later groups never resend parts an earlier one delivered."""

    placement: PlacementMap
    demands: Tuple[int, ...]
    groups: Tuple[D2DGroup, ...] = ()

    @property
    def K(self) -> int:
        return self.placement.K

    @property
    def tau(self) -> int:
        return self.placement.tau

    @property
    def delivered(self) -> FrozenSet[Tuple[int, Subset]]:
        out: Set[Tuple[int, Subset]] = set()
        for g in self.groups:
            out |= g.delivered
        return frozenset(out)

    def members(self) -> List[Subset]:
        return [g.members for g in self.groups]

    def indicator(self, D: Sequence[int]) -> bool:
        """I_D2D(D): true for a group itself, or a (tau+1)-set whose parts all went over D2D."""
        D = tuple(sorted(D))
        if D in self.members():
            return True
        if len(D) != self.tau + 1:
            return False
        done = self.delivered
        return all((k, D) in done for k in D)

    def __len__(self) -> int:
        return len(self.groups)


def build_schedule(
    groups: Sequence[Sequence[int]],
    demands: Sequence[int],
    placement: PlacementMap,
) -> D2DSchedule:
    """Realise ``groups`` in order with the fresh-fragment ledger."""
    tau = placement.tau
    ledger = FragmentLedger()
    seen = set()
    out = []
    for V in groups:
        V = tuple(sorted(V))
        if V in seen:
            raise ParameterError(f"group {V} selected twice")
        seen.add(V)
        msgs = d2d_coded_messages(V, demands, placement, ledger)
        delivered = frozenset(
            (u, tuple(sorted(set(sub.cache_set) | {u}))) for _, m in msgs for u, sub in m.parts
        )
        out.append(D2DGroup(V, tuple(msgs), delivered))
    return D2DSchedule(placement, tuple(demands), tuple(out))


def extend(schedule: D2DSchedule, V: Sequence[int]) -> D2DSchedule:
    return build_schedule(schedule.members() + [tuple(sorted(V))], schedule.demands, schedule.placement)


def pending_parts(schedule: D2DSchedule, V: Sequence[int]) -> List[Tuple[int, Subset]]:
    """Parts group V would deliver if it were added to ``schedule``."""
    V = tuple(sorted(V))
    done = schedule.delivered
    out = []
    for T in group_offsets(V, schedule.K, schedule.tau):
        D = tuple(sorted(V + T))
        out.extend((i, D) for i in V if (i, D) not in done)
    return out


def group_time(group: D2DGroup, chans: ChannelRealization, config: ScenarioConfig) -> float:
    """Sum over members of a_k C / (|V|-1) / R_k, with R_k the rate to the rest of V."""
    V = group.members
    C = subfile_size(config.K, config.tau, config.L, config.F)
    total = 0.0
    for k in V:
        a = group.count(k)
        if a == 0:
            continue
        rate = d2d_rate(k, [u for u in V if u != k], chans, config)
        if rate <= 0:
            raise D2DError(f"zero D2D rate from user {k} in group {V}")
        total += a * C / (len(V) - 1) / rate
    return total


def t_d2d(schedule: D2DSchedule, chans: ChannelRealization, config: ScenarioConfig) -> float:
    """Total TDMA airtime of the D2D phase."""
    return sum(group_time(g, chans, config) for g in schedule.groups)


def remaining_message_plan(schedule: D2DSchedule) -> MessagePlan:
    """Downlink messages not fully served over D2D, and who still needs each."""
    K, tau = schedule.K, schedule.tau
    done = schedule.delivered
    msgs = []
    for D in subsets(range(1, K + 1), tau + 1):
        if D in schedule.members():
            continue
        if all((k, D) in done for k in D):
            continue
        msgs.append(D)
    needed = tuple(
        frozenset(j for j, D in enumerate(msgs) if k in D and (k, D) not in done) for k in range(1, K + 1)
    )
    return MessagePlan(K, tuple(msgs), needed)


def full_offload(placement: PlacementMap, demands: Sequence[int]) -> D2DSchedule:
    """Every (tau+1)-group in lexicographic order."""
    groups = subsets(range(1, placement.K + 1), placement.tau + 1)
    return build_schedule(groups, demands, placement)


def d2d_only_baseline(
    demands: Sequence[int],
    placement: PlacementMap,
    chans: ChannelRealization,
    config: ScenarioConfig,
) -> float:
    """Pure D2D delivery over all C(K, tau+1) groups, no downlink phase."""
    if placement.tau < 1:
        raise ParameterError("D2D-only delivery needs tau >= 1")
    # each group member sends a 1/tau fragment of a whole subfile F / C(K, tau)
    size = config.F / placement.subfiles_per_file() / placement.tau
    per_group = []
    for V in subsets(range(1, placement.K + 1), placement.tau + 1):
        total = 0.0
        for k in V:
            rate = d2d_rate(k, [u for u in V if u != k], chans, config)
            if rate <= 0:
                raise D2DError(f"zero D2D rate from user {k} in group {V}")
            total += size / rate
        per_group.append(total)
    # summed group by group, like t_d2d, so full offload reproduces it exactly
    return sum(per_group)
