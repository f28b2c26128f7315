"""Max-min common-rate multicast beamforming for the downlink phase.

Each user decodes its needed messages with a successive-interference-
cancellation receiver, so its achievable common rate is the minimum over
every nonempty subset B of needed messages of
``log2(1 + sum_{D in B} |h^H w_D|^2 / (N0 + interference)) / |B|``.
The design problem maximises the minimum of that quantity over users.

The solver is successive convex approximation. The rate constraints are
kept exact (exponential cones); each SINR constraint ``gamma * beta <=
|h^H w|^2`` is convexified around the previous iterate by linearising the
right-hand side and bounding the bilinear product from above with
``(beta0 / 2 gamma0) gamma^2 + (gamma0 / 2 beta0) beta^2``. Both
approximations are tight at the previous point, so the true objective
never decreases between accepted iterates.
"""
from __future__ import annotations

import itertools
import logging
import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Dict, FrozenSet, List, Optional, Sequence, Tuple

import numpy as np

from .combinatorics import Subset, subfile_size, subsets

log = logging.getLogger(__name__)

LN2 = math.log(2.0)


class BeamformingError(RuntimeError):
    pass


@dataclass(frozen=True)
class MessagePlan:
    """Downlink messages and which users still need each of them.

    ``needed[k-1]`` holds indices into ``messages``. A user's interference
    set is every message it is not a member of; messages that contain the
    user but are no longer needed by it are known to it in full (its own
    part arrived over D2D, the rest is cached) and are cancelled.
    """

    K: int
    messages: Tuple[Subset, ...]
    needed: Tuple[FrozenSet[int], ...]

    def __post_init__(self):
        if len(self.needed) != self.K:
            raise ValueError("needed must have one entry per user")
        for k, need in enumerate(self.needed, 1):
            for j in need:
                if k not in self.messages[j]:
                    raise ValueError(f"user {k} cannot need message {self.messages[j]}")

    @classmethod
    def full(cls, K: int, tau: int) -> "MessagePlan":
        msgs = tuple(subsets(range(1, K + 1), tau + 1))
        needed = tuple(frozenset(j for j, D in enumerate(msgs) if k in D) for k in range(1, K + 1))
        return cls(K, msgs, needed)

    def __len__(self) -> int:
        return len(self.messages)

    @property
    def empty(self) -> bool:
        return not self.messages

    def interference(self, k: int) -> FrozenSet[int]:
        return frozenset(j for j, D in enumerate(self.messages) if k not in D)

    def active_users(self) -> List[int]:
        return [k for k in range(1, self.K + 1) if self.needed[k - 1]]

    def recipients(self, j: int) -> List[int]:
        return [k for k in range(1, self.K + 1) if j in self.needed[k - 1]]

    def pruned(self) -> "MessagePlan":
        """Drop messages nobody needs and re-index."""
        keep = [j for j in range(len(self.messages)) if self.recipients(j)]
        remap = {j: n for n, j in enumerate(keep)}
        msgs = tuple(self.messages[j] for j in keep)
        needed = tuple(frozenset(remap[j] for j in need) for need in self.needed)
        return MessagePlan(self.K, msgs, needed)

    def total_parts(self) -> int:
        return sum(len(n) for n in self.needed)

    def structure(self) -> Tuple:
        """Hashable shape of the problem: per active user, needed and interfering indices."""
        return (len(self.messages),) + tuple(
            (tuple(sorted(self.needed[k - 1])), tuple(sorted(self.interference(k)))) for k in self.active_users()
        )


@dataclass(frozen=True)
class SolverOptions:
    rel_tol: float = 1e-4
    max_iter: int = 50
    max_restarts: int = 3
    gamma_floor: float = 1e-9
    solver: str = "CLARABEL"


@dataclass
class BeamformerSolution:
    beamformers: np.ndarray  # (n_messages, L) complex, row j is w for messages[j]
    rate: float
    iterations: int = 0
    trace: List[float] = field(default_factory=list)
    converged: bool = True
    restarts: int = 0
    method: str = "sca"
    plan: Optional[MessagePlan] = None  # the pruned plan the rows of ``beamformers`` index

    @property
    def power(self) -> float:
        return float(np.sum(np.abs(self.beamformers) ** 2))


def enumerate_mac_constraints(plan: MessagePlan) -> List[Tuple[int, Tuple[int, ...]]]:
    """Every (user, nonempty subset of its needed messages) pair."""
    out = []
    for k in plan.active_users():
        need = sorted(plan.needed[k - 1])
        for size in range(1, len(need) + 1):
            out.extend((k, B) for B in itertools.combinations(need, size))
    return out


def mac_constraint_count(plan: MessagePlan) -> int:
    return sum(2 ** len(n) - 1 for n in plan.needed if n)


def received_powers(H: np.ndarray, W: np.ndarray) -> np.ndarray:
    """``|h_k^H w_j|^2`` as a (K, n_messages) array."""
    return np.abs(np.conj(H) @ W.T) ** 2


def mac_rates(plan: MessagePlan, H: np.ndarray, W: np.ndarray, N0: float) -> np.ndarray:
    """Per-user MAC-min rate; ``inf`` for users with nothing left to decode.

    For a fixed subset size the binding constraint is the one with the
    smallest received powers, so only the sorted prefixes are evaluated.
    """
    P = received_powers(H, W)
    out = np.full(plan.K, np.inf)
    for k in plan.active_users():
        need = sorted(plan.needed[k - 1])
        den = N0 + P[k - 1, sorted(plan.interference(k))].sum()
        s = np.cumsum(np.sort(P[k - 1, need]))
        sizes = np.arange(1, len(need) + 1)
        out[k - 1] = np.min(np.log2(1.0 + s / den) / sizes)
    return out


def common_rate(plan: MessagePlan, H: np.ndarray, W: np.ndarray, N0: float) -> float:
    if plan.empty:
        return math.inf
    return float(np.min(mac_rates(plan, H, W, N0)))


def mrt_unicast(h: np.ndarray, P_T: float) -> np.ndarray:
    """Full-power maximum-ratio beamformer sqrt(P_T) h / ||h||."""
    h = np.asarray(h, dtype=complex)
    norm = np.linalg.norm(h)
    if norm == 0:
        raise BeamformingError("MRT undefined for a zero channel")
    return math.sqrt(P_T) * h / norm


# --- SCA subproblem -------------------------------------------------------


def _real_map(g: np.ndarray) -> np.ndarray:
    """2 x 2L matrix G with G @ [Re w; Im w] = [Re g^H w; Im g^H w]."""
    a, b = g.real, g.imag
    return np.vstack([np.concatenate([a, b]), np.concatenate([-b, a])])


class _Subproblem:
    """Compiled convex subproblem for one plan structure; only parameters change."""

    def __init__(self, L: int, structure: Tuple):
        import cvxpy as cp

        n = structure[0]
        users = structure[1:]
        self.X = cp.Variable((2 * L, n))
        self.r = cp.Variable()
        cons = [cp.sum_squares(self.X) <= 1.0]
        self.params = []
        self.gammas = []
        self.betas = []
        for need, intf in users:
            m = len(need)
            G = cp.Parameter((2, 2 * L))
            C = cp.Parameter((m, 2 * L))
            e = cp.Parameter(m)
            p1 = cp.Parameter(m, nonneg=True)
            p2 = cp.Parameter(m, nonneg=True)
            gam = cp.Variable(m, nonneg=True)
            beta = cp.Variable()
            if intf:
                cons.append(beta >= 1.0 + cp.sum_squares(G @ self.X[:, list(intf)]))
            else:
                cons.append(beta >= 1.0)
            lin = cp.sum(cp.multiply(C, self.X[:, list(need)].T), axis=1) - e
            cons.append(cp.multiply(p1, cp.square(gam)) + p2 * cp.square(beta) <= lin)
            masks = [B for size in range(1, m + 1) for B in itertools.combinations(range(m), size)]
            S = np.zeros((len(masks), m))
            for row, B in enumerate(masks):
                S[row, list(B)] = 1.0
            sizes = S.sum(axis=1)
            cons.append(LN2 * sizes * self.r <= cp.log(1.0 + S @ gam))
            self.params.append((G, C, e, p1, p2))
            self.gammas.append(gam)
            self.betas.append(beta)
        self.problem = cp.Problem(cp.Maximize(self.r), cons)
        self._primed = set()

    def prime(self, solver: str) -> None:
        # cvxpy's first solve of a parametrised problem takes a different code
        # path than later ones and rounds differently; burn it on dummy data
        # so every real solve is reproducible bit for bit
        for G, C, e, p1, p2 in self.params:
            G.value = np.zeros(G.shape)
            C.value = np.zeros(C.shape)
            e.value = np.zeros(e.shape)
            p1.value = np.ones(p1.shape)
            p2.value = np.zeros(p2.shape)
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", UserWarning)
                self.problem.solve(solver=solver)
        except Exception:  # the dummy solve only needs to exercise the compile step
            pass
        self._primed.add(solver)

    def primed(self, solver: str) -> bool:
        return solver in self._primed

    def solve(self, solver: str):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", UserWarning)  # "inaccurate" notices; status is checked by the caller
            self.problem.solve(solver=solver)
        return self.problem.status


@lru_cache(maxsize=256)
def _subproblem(L: int, structure: Tuple) -> _Subproblem:
    return _Subproblem(L, structure)


def _initial_beamformers(plan: MessagePlan, G: np.ndarray) -> np.ndarray:
    n = len(plan)
    W = np.zeros((n, G.shape[1]), dtype=complex)
    norms = np.linalg.norm(G, axis=1)
    for j in range(n):
        weakest = min(plan.recipients(j), key=lambda k: (norms[k - 1], k))
        W[j] = G[weakest - 1] / norms[weakest - 1] / math.sqrt(n)
    return W


def _random_beamformers(n: int, L: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    W = rng.standard_normal((n, L)) + 1j * rng.standard_normal((n, L))
    return W / np.linalg.norm(W)


def _unicast_solution(plan: MessagePlan, H: np.ndarray, P_T: float, N0: float) -> BeamformerSolution:
    """One user left: concatenate its messages and send them with MRT.

    With equal power on aligned beams the full-set MAC constraint binds, so
    the common per-message rate is the MRT rate divided by the message count.
    """
    (k,) = plan.active_users()
    h = H[k - 1]
    n = len(plan)
    w = mrt_unicast(h, P_T)
    W = np.tile(w / math.sqrt(n), (n, 1))
    unicast = math.log2(1.0 + np.linalg.norm(h) ** 2 * P_T / N0)
    rate = unicast / n
    return BeamformerSolution(W, rate, 0, [rate], True, 0, method="mrt", plan=plan)


def solve_max_min(
    plan: MessagePlan,
    H: np.ndarray,
    P_T: float,
    N0: float,
    opts: SolverOptions | None = None,
) -> BeamformerSolution:
    """Maximise the minimum MAC rate over users by SCA.

    ``H`` is (K, L) with row k-1 the channel of user k. The returned rate is
    always re-evaluated from the returned beamformers, never copied from a
    subproblem objective, and the trace holds that true rate per accepted
    iterate.
    """
    opts = opts or SolverOptions()
    plan = plan.pruned()
    H = np.asarray(H, dtype=complex)
    L = H.shape[1]
    if plan.empty:
        return BeamformerSolution(np.zeros((0, L), dtype=complex), math.inf, 0, [], True, 0, method="empty", plan=plan)
    if not np.all(np.isfinite(H)):
        raise BeamformingError("channels must be finite")
    if len(plan.active_users()) == 1:
        return _unicast_solution(plan, H, P_T, N0)

    # unit noise, unit power budget
    G = H * math.sqrt(P_T / N0)
    structure = plan.structure()
    sub = _subproblem(L, structure)
    if not sub.primed(opts.solver):
        sub.prime(opts.solver)
    users = plan.active_users()
    maps = [_real_map(G[k - 1]) for k in users]

    def unpack(x: np.ndarray) -> np.ndarray:
        return (x[:L] + 1j * x[L:]).T

    def true_rate(W: np.ndarray) -> float:
        return common_rate(plan, G, W, 1.0)

    restarts = 0
    W = _initial_beamformers(plan, G)
    while True:
        rate = true_rate(W)
        trace = [rate]
        converged = False
        failed_first = False
        it = 0
        for it in range(1, opts.max_iter + 1):
            P = received_powers(G, W)
            A = np.conj(G) @ W.T  # (K, n) complex amplitudes h^H w
            for (Gp, Cp, ep, p1, p2), k, Gm in zip(sub.params, users, maps):
                need = sorted(plan.needed[k - 1])
                beta0 = 1.0 + P[k - 1, sorted(plan.interference(k))].sum()
                gam0 = np.maximum(P[k - 1, need] / beta0, opts.gamma_floor)
                a = A[k - 1, need]
                Gp.value = Gm
                Cp.value = 2.0 * (a.real[:, None] * Gm[0][None, :] + a.imag[:, None] * Gm[1][None, :])
                ep.value = np.abs(a) ** 2
                p1.value = beta0 / (2.0 * gam0)
                p2.value = gam0 / (2.0 * beta0)
            try:
                status = sub.solve(opts.solver)
            except Exception as exc:  # solver backends raise their own error types
                log.debug("subproblem failed: %s", exc)
                status = "error"
            if status not in ("optimal", "optimal_inaccurate") or sub.X.value is None:
                failed_first = it == 1
                break
            Wn = unpack(sub.X.value)
            power = float(np.sum(np.abs(Wn) ** 2))
            if power > 0:
                # scaling every beam up raises every SINR, so spend the whole budget
                Wn = Wn / math.sqrt(power)
            new = true_rate(Wn)
            if new < rate:
                converged = True
                break
            gain = new - rate
            W, rate = Wn, new
            trace.append(rate)
            if gain <= opts.rel_tol * max(abs(rate), 1e-12):
                converged = True
                break
        if failed_first and restarts < opts.max_restarts:
            restarts += 1
            W = _random_beamformers(len(plan), L, restarts)
            continue
        if failed_first:
            raise BeamformingError(f"subproblem infeasible after {restarts} restarts")
        break

    Wout = W * math.sqrt(P_T)
    return BeamformerSolution(Wout, rate, it, trace, converged, restarts, plan=plan)


def audit(plan: MessagePlan, H: np.ndarray, W: np.ndarray, N0: float) -> float:
    """Minimum over users of the MAC rate, enumerating every constraint explicitly."""
    plan = plan.pruned()
    best: Dict[int, float] = {}
    for k, B in enumerate_mac_constraints(plan):
        h = H[k - 1]
        intf = sum(abs(np.vdot(h, W[j])) ** 2 for j in plan.interference(k))
        sig = sum(abs(np.vdot(h, W[j])) ** 2 for j in B)
        rate = math.log2(1.0 + sig / (N0 + intf)) / len(B)
        best[k] = min(best.get(k, math.inf), rate)
    return min(best.values()) if best else math.inf


def t_dl(plan: MessagePlan, solution: BeamformerSolution, K: int, tau: int, L: int, F: float = 1.0) -> float:
    """C(K, tau, L) / r; zero for an empty plan, ``inf`` when the rate is zero."""
    if plan.pruned().empty:
        return 0.0
    if not solution.rate > 0:
        return math.inf
    return subfile_size(K, tau, L, F) / solution.rate
