"""Closed-form bounds on downlink beamformer design size, and exact counts.

Design size is measured by two numbers: the MAC conditions (one per user
and nonempty subset of its needed messages) and the quadratic terms in the
SINR constraints (per needed message: its own received power plus one term
per interfering message). Offloading i full (tau+1)-groups and m extra
subfiles to D2D shrinks both. The minimum MAC count arises when offloading
is spread evenly over users, the maximum when it is packed onto as few
users as possible; the quadratic count is extremal the other way round.

All counts are exact integers.
"""
from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple, Union

from .beamforming import MessagePlan
from .combinatorics import ParameterError, Subset, binom, subsets


@dataclass(frozen=True)
class ComplexityInput:
    """``i`` offloaded (tau+1)-groups, ``m`` subfiles sent by smaller groups.

    ``alpha`` replaces L in the user count tau+L; ``beta`` and ``P`` replace
    the message totals by M_T = P C(tau+beta, tau+1) and W = C(tau+beta-1, tau).
    """

    tau: int
    L: int
    i: int = 0
    m: int = 0
    alpha: Optional[int] = None
    beta: Optional[int] = None
    P: Optional[int] = None

    def __post_init__(self):
        if self.tau < 1 or self.L < 1:
            raise ParameterError("tau and L must be >= 1")
        if self.i < 0 or self.m < 0:
            raise ParameterError("i and m must be nonnegative")
        if self.i > self.M_T:
            raise ParameterError(f"i={self.i} exceeds M_T={self.M_T}")
        if self.remaining < 0:
            raise ParameterError("more subfiles offloaded than remain")

    @property
    def users(self) -> int:
        return self.tau + (self.alpha if self.alpha is not None else self.L)

    @property
    def M_T(self) -> int:
        if self.beta is None:
            return binom(self.tau + self.L, self.tau + 1)
        return (self.P or 1) * binom(self.tau + self.beta, self.tau + 1)

    @property
    def W(self) -> int:
        if self.beta is None:
            return binom(self.tau + self.L - 1, self.tau)
        return binom(self.tau + self.beta - 1, self.tau)

    @property
    def remaining(self) -> int:
        """Subfiles still to be sent on the downlink, (tau+1)(M_T - i) - m."""
        return (self.tau + 1) * (self.M_T - self.i) - self.m

    def replace(self, **kw) -> "ComplexityInput":
        return ComplexityInput(**{**asdict(self), **kw})


@dataclass(frozen=True)
class ComplexityBounds:
    mac_min: int
    mac_max: int
    q_min: int
    q_max: int
    a: int
    b: int
    U: int
    X: int
    phi: int
    W: int
    M_T: int
    L_m: int
    U_m: int
    A: Tuple[int, int]  # A1, A2 of the even-spread quadratic count
    B: Tuple[int, int]
    A_prime: Tuple[int, int, int]  # A1', A2', A3' of the packed quadratic count
    B_prime: Tuple[int, int, int]


def _ceil_div(p: int, q: int) -> int:
    return -(-p // q)


def _spread(inp: ComplexityInput) -> Tuple[int, int]:
    a, b = divmod(inp.remaining, inp.users)
    return a, b


def _packing(inp: ComplexityInput) -> Tuple[int, int, int, int]:
    """(U, X, phi, W_hat): users touched, k_r's groups, fully served users, per-user need in S_hat."""
    tau, W, i = inp.tau, inp.W, inp.i
    if i == 0:
        return 0, 0, 0, W
    U = tau + 1
    while binom(U, tau + 1) < i:
        U += 1
    X = i - binom(U - 1, tau + 1)
    w_hat = W - binom(U - 2, tau)
    phi = inp.m // w_hat if w_hat > 0 else 0
    phi = min(phi, U - 1)
    return U, X, phi, w_hat


def mac_bounds(inp: ComplexityInput) -> Tuple[int, int]:
    a, b = _spread(inp)
    n = inp.users
    mac_min = (n - b) * (2 ** a - 1) + b * (2 ** (a + 1) - 1)
    W = inp.W
    if inp.i == 0:
        if inp.m == 0:
            return mac_min, n * (2 ** W - 1)
        # no group structure: the m subfiles complete whole users first
        served = min(inp.m // W, n)
        return mac_min, (n - served) * (2 ** W - 1)
    U, X, phi, w_hat = _packing(inp)
    mac_max = (n - U) * (2 ** W - 1) + (U - (phi + 1)) * (2 ** w_hat - 1) + (2 ** (W - X) - 1)
    return mac_min, mac_max


def _quad_term(need: int, total: int) -> int:
    # an over-counted need can exceed the message total; such a user has nothing left
    return max(0, need * (total - need + 1))


def quad_bounds(inp: ComplexityInput) -> Tuple[int, int]:
    """(q_min, q_max). The packed bound is not guaranteed to be the smaller one."""
    n, W = inp.users, inp.W
    if inp.i == 0 and inp.m == 0:
        q = n * W * (inp.M_T - W + 1)
        return q, q
    a, b = _spread(inp)
    U_m = inp.M_T - inp.i
    q_max = b * _quad_term(a + 1, U_m) + (n - b) * _quad_term(a, U_m)
    L_m = _ceil_div(inp.remaining, inp.tau + 1)
    if inp.i == 0:
        served = min(inp.m // W, n)
        q_min = (n - served) * _quad_term(W, L_m)
        return q_min, q_max
    U, X, phi, w_hat = _packing(inp)
    q_min = (n - U) * _quad_term(W, L_m) + (U - (phi + 1)) * _quad_term(w_hat, L_m) + _quad_term(W - X, L_m)
    return q_min, q_max


def bounds(inp: ComplexityInput) -> ComplexityBounds:
    mac_min, mac_max = mac_bounds(inp)
    q_min, q_max = quad_bounds(inp)
    a, b = _spread(inp)
    U, X, phi, w_hat = _packing(inp)
    U_m = inp.M_T - inp.i
    L_m = _ceil_div(inp.remaining, inp.tau + 1)
    A = (a, a + 1)
    Ap = (inp.W, w_hat, inp.W - X)
    return ComplexityBounds(
        mac_min, mac_max, q_min, q_max, a, b, U, X, phi, inp.W, inp.M_T, L_m, U_m,
        A, tuple(U_m - x + 1 for x in A), Ap, tuple(L_m - x + 1 for x in Ap),
    )


# --- exact counting ------------------------------------------------------


def count_actual(plan) -> Tuple[int, int]:
    """(MAC conditions, quadratic terms) of a MessagePlan or D2DSchedule.

    Per user: 2^|Omega_k| - 1 MAC conditions and |Omega_k| (1 + |I_k|)
    quadratic terms, where I_k is every remaining message the user does not
    need.
    """
    if not isinstance(plan, MessagePlan):
        from .d2d import remaining_message_plan

        plan = remaining_message_plan(plan)
    total = len(plan.messages)
    mac = quad = 0
    for need in plan.needed:
        w = len(need)
        if w == 0:
            continue
        mac += 2 ** w - 1
        quad += w * (1 + total - w)
    return mac, quad


def _plan_without(users: int, tau: int, removed: Sequence[Subset], ignored: Dict[int, Sequence[Subset]] = None) -> MessagePlan:
    """Plan after offloading ``removed``; user k still counts messages in ``ignored[k]`` as needed."""
    gone = set(removed)
    ignored = ignored or {}
    keep = {k: set(ignored.get(k, ())) for k in range(1, users + 1)}
    msgs = tuple(D for D in subsets(range(1, users + 1), tau + 1) if D not in gone or any(D in v for v in keep.values()))
    needed = tuple(
        frozenset(j for j, D in enumerate(msgs) if k in D and (D not in gone or D in keep[k]))
        for k in range(1, users + 1)
    )
    return MessagePlan(users, msgs, needed)


def uniform_groups(tau: int, L: int, i: int) -> List[Subset]:
    """i distinct (tau+1)-groups whose user degrees differ by at most one."""
    n = tau + L
    pool = subsets(range(1, n + 1), tau + 1)
    if not 0 <= i <= len(pool):
        raise ParameterError(f"i={i} outside [0, {len(pool)}]")
    lo, high = divmod((tau + 1) * i, n)
    deg = [0] * (n + 1)
    chosen: List[Subset] = []
    used = set()

    def ok(V) -> bool:
        at_top = sum(1 for k in range(1, n + 1) if deg[k] > lo)
        for k in V:
            if deg[k] + 1 > lo + (1 if high else 0):
                return False
            if deg[k] == lo:
                at_top += 1
        return at_top <= high

    def search() -> bool:
        if len(chosen) == i:
            return True
        for V in sorted(pool, key=lambda V: (sum(deg[k] for k in V), V)):
            if V in used or not ok(V):
                continue
            used.add(V)
            chosen.append(V)
            for k in V:
                deg[k] += 1
            if search():
                return True
            for k in V:
                deg[k] -= 1
            chosen.pop()
            used.discard(V)
        return False

    if not search():
        raise ParameterError(f"no balanced selection of {i} groups for tau={tau}, L={L}")
    return sorted(chosen)


def uniform_plan(tau: int, L: int, i: int) -> MessagePlan:
    return _plan_without(tau + L, tau, uniform_groups(tau, L, i))


def limited_groups(tau: int, L: int, i: int) -> Tuple[List[Subset], List[Subset]]:
    """(groups inside S_hat = {1..U-1}, the X groups pairing user U with tau of them)."""
    inp = ComplexityInput(tau, L, i)
    if i == 0:
        return [], []
    U, X, _, _ = _packing(inp)
    inner = subsets(range(1, U), tau + 1)
    outer = [tuple(sorted(S + (U,))) for S in subsets(range(1, U), tau)][:X]
    return inner, outer


def limited_plan(tau: int, L: int, i: int, ignore_outer: bool = True) -> MessagePlan:
    """Offloading packed onto the fewest users.

    With ``ignore_outer`` the users of S_hat keep counting the messages that
    the X groups involving user U delivered to them, as the maximum-count
    bound does.
    """
    inner, outer = limited_groups(tau, L, i)
    ignored = {}
    if ignore_outer and outer:
        for V in outer:
            for k in V[:-1]:
                ignored.setdefault(k, []).append(V)
    return _plan_without(tau + L, tau, inner + outer, ignored)


# --- sweeps --------------------------------------------------------------

SWEEP_COLUMNS = ("i", "m", "mac_min", "mac_max", "q_min", "q_max", "mac_min_norm", "mac_max_norm", "q_min_norm", "q_max_norm")


def sweep(
    tau: int,
    L: int,
    i_values: Optional[Sequence[int]] = None,
    m: int = 0,
    alpha: Optional[int] = None,
    beta: Optional[int] = None,
    P: Optional[int] = None,
) -> List[Dict[str, Union[int, Fraction]]]:
    """Bounds for each i, normalised by the no-offload count."""
    base = ComplexityInput(tau, L, 0, 0, alpha, beta, P)
    mac0, _ = mac_bounds(base)
    q0, _ = quad_bounds(base)
    if i_values is None:
        i_values = range(0, base.M_T + 1)
    rows = []
    for i in i_values:
        if (tau + 1) * (base.M_T - i) < m:
            continue  # fewer subfiles left than m
        inp = base.replace(i=i, m=m)
        mac_min, mac_max = mac_bounds(inp)
        q_min, q_max = quad_bounds(inp)
        rows.append(
            dict(
                i=i, m=m, mac_min=mac_min, mac_max=mac_max, q_min=q_min, q_max=q_max,
                mac_min_norm=Fraction(mac_min, mac0), mac_max_norm=Fraction(mac_max, mac0),
                q_min_norm=Fraction(q_min, q0), q_max_norm=Fraction(q_max, q0),
            )
        )
    return rows


def sweep_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_COLUMNS)
    for row in rows:
        w.writerow([f"{float(row[c]):.6f}" if c.endswith("_norm") else row[c] for c in SWEEP_COLUMNS])
    return buf.getvalue()
