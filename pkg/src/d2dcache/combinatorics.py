"""Cache placement, subfile bookkeeping and XOR message construction.

Users are labelled ``1..K`` and user subsets are sorted tuples. Files are
indexed ``0..N-1`` and printed as ``A, B, C, ...``. Nothing here touches
payload bytes: a subfile is an identifier plus a size, and decodability is
checked with set algebra against the placement.
"""
from __future__ import annotations

import itertools
import math
import string
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, Iterable, List, Mapping, Sequence, Tuple

Subset = Tuple[int, ...]


class ParameterError(ValueError):
    """Raised for parameter combinations the placement scheme cannot realise."""


class UnsupportedConfiguration(ParameterError):
    pass


class SchedulingError(RuntimeError):
    """A fragment was requested twice or after its subfile was exhausted."""


def binom(a: int, b: int) -> int:
    """Binomial coefficient with C(a, b) = 0 whenever b > a or b < 0."""
    if b < 0 or a < 0 or b > a:
        return 0
    return math.comb(a, b)


def subsets(users: Iterable[int], size: int) -> List[Subset]:
    """All size-``size`` subsets of ``users`` in lexicographic order."""
    return list(itertools.combinations(sorted(users), size))


def file_name(n: int) -> str:
    if n < 26:
        return string.ascii_uppercase[n]
    return f"W{n + 1}"


@dataclass(frozen=True, order=True)
class SubfileId:
    file: int
    cache_set: Subset
    fragment: int = 0
    split_count: int = 1

    def __post_init__(self):
        if not 0 <= self.fragment < self.split_count:
            raise ValueError(f"fragment {self.fragment} outside split of {self.split_count}")
        if tuple(sorted(self.cache_set)) != tuple(self.cache_set):
            raise ValueError("cache_set must be sorted")

    @property
    def whole(self) -> Tuple[int, Subset]:
        return self.file, self.cache_set

    def label(self) -> str:
        idx = ",".join(str(u) for u in self.cache_set)
        sup = f"^{self.fragment + 1}" if self.split_count > 1 else ""
        return f"{file_name(self.file)}{sup}_{{{idx}}}"


@dataclass(frozen=True)
class PlacementMap:
    K: int
    N: int
    tau: int
    cache: Mapping[int, Tuple[SubfileId, ...]]

    def has(self, user: int, sub: SubfileId) -> bool:
        return user in sub.cache_set

    def subfiles_per_file(self) -> int:
        return binom(self.K, self.tau)


@dataclass(frozen=True)
class CodedMessage:
    recipients: Subset
    parts: Tuple[Tuple[int, SubfileId], ...]
    size_bits: float

    def label(self) -> str:
        if not self.parts:
            return "0"
        return " + ".join(sub.label() for _, sub in self.parts)

    def intended_users(self) -> Subset:
        return tuple(u for u, _ in self.parts)


def cache_ratio(K: int, N: int, M) -> int:
    tau = Fraction(K) * Fraction(M) / Fraction(N)
    if tau.denominator != 1:
        raise ParameterError(f"tau = KM/N = {tau} is not an integer")
    return int(tau)


def place(K: int, N: int, M, tau: int | None = None) -> PlacementMap:
    """Uncoded centralized placement: user k caches W_{n,v} iff k is in v."""
    t = cache_ratio(K, N, M)
    if tau is not None and tau != t:
        raise ParameterError(f"tau={tau} inconsistent with KM/N={t}")
    if not 0 <= t <= K:
        raise ParameterError(f"tau={t} must lie in [0, K]")
    cache: Dict[int, Tuple[SubfileId, ...]] = {}
    sets = subsets(range(1, K + 1), t)
    for k in range(1, K + 1):
        cache[k] = tuple(SubfileId(n, v) for n in range(N) for v in sets if k in v)
    return PlacementMap(K=K, N=N, tau=t, cache=cache)


def subfile_size(K: int, tau: int, L: int, F: float = 1.0) -> float:
    """Size of one transmitted subfile, F / (C(K,tau) C(K-tau-1, L-1))."""
    if tau + 1 > K:
        raise UnsupportedConfiguration(f"tau+1={tau + 1} exceeds K={K}")
    denom = binom(K, tau) * binom(K - (tau + 1), L - 1)
    if denom == 0:
        raise UnsupportedConfiguration(f"C(K,tau,L) undefined for K={K}, tau={tau}, L={L}")
    return F / denom


def default_demands(K: int, N: int) -> Tuple[int, ...]:
    """Distinct worst-case demands: user k asks for file k-1 (wrapping when N < K)."""
    return tuple((k - 1) % N for k in range(1, K + 1))


def needed_part(user: int, message: Subset, demands: Sequence[int]) -> SubfileId:
    """The whole subfile of ``user``'s file carried by message ``message``."""
    rest = tuple(u for u in message if u != user)
    return SubfileId(demands[user - 1], rest)


@dataclass
class FragmentLedger:
    """Fresh-fragment allocator (the NEW operator).

    Keyed per (intended user, cache set). The first request fixes how many
    fragments the subfile is split into; later requests must agree.
    """

    issued: Dict[Tuple[int, int, Subset], Tuple[int, int]] = field(default_factory=dict)

    def new(self, user: int, sub: SubfileId, split: int) -> SubfileId:
        key = (user, sub.file, sub.cache_set)
        count, fixed = self.issued.get(key, (0, split))
        if fixed != split:
            raise SchedulingError(f"{sub.label()} already split into {fixed}, asked for {split}")
        if count >= split:
            raise SchedulingError(f"all fragments of {sub.label()} for user {user} already sent")
        self.issued[key] = (count + 1, split)
        return SubfileId(sub.file, sub.cache_set, count, split)

    def complete(self, user: int, sub: SubfileId) -> bool:
        count, split = self.issued.get((user, sub.file, sub.cache_set), (0, 1))
        return count > 0 and count >= split

    def touched(self, user: int, sub: SubfileId) -> bool:
        return (user, sub.file, sub.cache_set) in self.issued

    def copy(self) -> "FragmentLedger":
        return FragmentLedger(dict(self.issued))


def dl_coded_message(
    D: Sequence[int],
    demands: Sequence[int],
    placement: PlacementMap,
    ledger: FragmentLedger | None = None,
    size_bits: float = 1.0,
) -> CodedMessage:
    """XOR over k in D of NEW(W_{d_k, D minus k}), skipping parts already delivered."""
    D = tuple(sorted(D))
    if len(D) != placement.tau + 1:
        raise ParameterError(f"downlink message needs |D| = tau+1 = {placement.tau + 1}")
    ledger = ledger if ledger is not None else FragmentLedger()
    parts = []
    for k in D:
        sub = needed_part(k, D, demands)
        if placement.has(k, sub) or ledger.complete(k, sub):
            continue
        if ledger.touched(k, sub):
            raise SchedulingError(f"{sub.label()} for user {k} is partially delivered")
        parts.append((k, ledger.new(k, sub, 1)))
    return CodedMessage(D, tuple(parts), size_bits)


def group_offsets(V: Sequence[int], K: int, tau: int) -> List[Subset]:
    """Outside-user sets T with |V| + |T| = tau + 1; each T pairs V with message V u T."""
    outside = [u for u in range(1, K + 1) if u not in V]
    return subsets(outside, tau + 1 - len(V))


def d2d_coded_messages(
    V: Sequence[int],
    demands: Sequence[int],
    placement: PlacementMap,
    ledger: FragmentLedger | None = None,
    size_bits: float = 1.0,
) -> List[Tuple[int, CodedMessage]]:
    """Messages exchanged inside D2D group ``V``.

    For every offset T the members of V jointly deliver, to each member i,
    the subfile W_{d_i, (V-i) u T}. That subfile is cached by every other
    member, so it is split into |V|-1 fragments and each other member sends
    one of them, XOR-ed with its fragments for the remaining receivers.
    Parts already delivered (recorded in ``ledger``) are skipped. ``size_bits``
    is the size of a whole subfile; each message carries 1/(|V|-1) of it.
    """
    V = tuple(sorted(V))
    tau = placement.tau
    if not 2 <= len(V) <= tau + 1:
        raise ParameterError(f"D2D group size must be in [2, tau+1], got {len(V)}")
    ledger = ledger if ledger is not None else FragmentLedger()
    split = len(V) - 1
    out: List[Tuple[int, CodedMessage]] = []
    for T in group_offsets(V, placement.K, tau):
        message = tuple(sorted(V + T))
        pending = []
        for i in V:
            sub = needed_part(i, message, demands)
            # groups send whole subfiles, so any earlier fragment means it is done
            if ledger.touched(i, sub):
                continue
            pending.append((i, sub))
        if not pending:
            continue
        for j in V:
            parts = tuple((i, ledger.new(i, sub, split)) for i, sub in pending if i != j)
            if parts:
                recipients = tuple(u for u in V if u != j)
                out.append((j, CodedMessage(recipients, parts, size_bits / split)))
    return out


def is_decodable(msg: CodedMessage, placement: PlacementMap) -> bool:
    """Every recipient caches all parts except its own."""
    for r in msg.recipients:
        for u, sub in msg.parts:
            if u == r:
                if placement.has(r, sub):
                    return False
            elif not placement.has(r, sub):
                return False
    return all(u in msg.recipients for u, _ in msg.parts)
