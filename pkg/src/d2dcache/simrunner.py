"""Monte Carlo trials, delivery schemes and experiment tables."""
from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .beamforming import BeamformingError, MessagePlan, SolverOptions, mac_constraint_count
from .channel import ScenarioConfig, sample
from .combinatorics import (
    ParameterError,
    UnsupportedConfiguration,
    binom,
    default_demands,
    dl_coded_message,
    d2d_coded_messages,
    place,
)
from .d2d import D2DError, build_schedule, d2d_only_baseline, remaining_message_plan
from .mode_select import (
    EXHAUSTIVE_GROUP_LIMIT,
    evaluate_schedule,
    exhaustive_select,
    heuristic_select,
)

log = logging.getLogger(__name__)

SCHEMES = (
    "multicast-only",
    "d2d-only",
    "hybrid-exhaustive",
    "hybrid-heuristic",
    "hybrid-heuristic-general",
)

CSV_COLUMNS = ("sweep_value", "scheme", "mean_rate", "stderr_rate", "mean_t_d2d", "mean_t_dl", "n_ok", "n_failed")


@dataclass
class DeliveryReport:
    scheme: str
    seed: int
    t_d2d: float = 0.0
    t_dl: float = 0.0
    groups: Tuple[Tuple[int, ...], ...] = ()
    ok: bool = True
    error: str = ""
    solver: Dict[str, object] = field(default_factory=dict)
    F: float = 1.0

    @property
    def total_time(self) -> float:
        return self.t_d2d + self.t_dl

    @property
    def per_user_rate(self) -> float:
        """F / (t_d2d + t_dl); zero for failed or infinitely long deliveries."""
        t = self.total_time
        if not self.ok or not math.isfinite(t):
            return 0.0
        if t == 0:
            return math.inf
        return self.F / t

    def lines(self) -> List[str]:
        out = [
            f"scheme: {self.scheme}",
            f"seed: {self.seed}",
            f"ok: {self.ok}",
            f"t_d2d: {self.t_d2d:.10g}",
            f"t_dl: {self.t_dl:.10g}",
            f"per_user_rate: {self.per_user_rate:.10g}",
            "groups: " + (" ".join("{" + ",".join(map(str, g)) + "}" for g in self.groups) or "none"),
        ]
        for k in sorted(self.solver):
            out.append(f"solver.{k}: {self.solver[k]}")
        if self.error:
            out.append(f"error: {self.error}")
        return out


def check_regime(config: ScenarioConfig) -> None:
    if config.K != config.tau + config.L:
        raise UnsupportedConfiguration(
            f"K={config.K} but tau+L={config.tau + config.L}; only K = tau + L is supported"
        )


def default_schemes(config: ScenarioConfig) -> List[str]:
    if config.tau < 1:
        return ["multicast-only"]
    out = list(SCHEMES)
    if binom(config.K, config.tau + 1) > EXHAUSTIVE_GROUP_LIMIT:
        out.remove("hybrid-exhaustive")
    return out


def _solver_info(sol) -> Dict[str, object]:
    return dict(
        method=sol.method,
        iterations=sol.iterations,
        converged=sol.converged,
        restarts=sol.restarts,
        rate=f"{sol.rate:.10g}",
    )


def run_trial(
    config: ScenarioConfig,
    seed: int,
    scheme: str,
    solver_opts: Optional[SolverOptions] = None,
) -> DeliveryReport:
    """Sample one channel draw and deliver every demand with ``scheme``.

    Solver and D2D rate failures are caught and returned as a report with
    ``ok=False``; bad parameters raise.
    """
    if scheme not in SCHEMES:
        raise ParameterError(f"unknown scheme {scheme!r}; choose from {', '.join(SCHEMES)}")
    check_regime(config)
    if scheme != "multicast-only" and config.tau < 1:
        raise ParameterError(f"{scheme} needs tau >= 1")
    chans = sample(config, seed)
    placement = place(config.K, config.N, config.M)
    demands = default_demands(config.K, config.N)
    report = DeliveryReport(scheme, seed, F=config.F)
    try:
        if scheme == "d2d-only":
            report.t_d2d = d2d_only_baseline(demands, placement, chans, config)
            return report
        if scheme == "hybrid-exhaustive":
            schedule, _, (td, tl, sol) = exhaustive_select(
                demands, placement, chans, config, solver_opts, return_evaluation=True
            )
        else:
            if scheme == "multicast-only":
                schedule = build_schedule([], demands, placement)
            else:
                general = scheme == "hybrid-heuristic-general"
                schedule = heuristic_select(demands, placement, chans, config, allow_general_groups=general)
            td, tl, sol = evaluate_schedule(schedule, chans, config, solver_opts)
        report.t_d2d, report.t_dl = td, tl
        report.groups = tuple(schedule.members())
        report.solver = _solver_info(sol)
        if not math.isfinite(tl):
            report.ok = False
            report.error = "zero downlink rate"
    except (BeamformingError, D2DError) as exc:
        report.ok = False
        report.error = str(exc)
    return report


def _stats(values: Sequence[float]) -> Tuple[float, float]:
    if not values:
        return math.nan, math.nan
    arr = np.asarray(values, dtype=float)
    if len(arr) < 2:
        return float(arr.mean()), 0.0
    return float(arr.mean()), float(arr.std(ddof=1) / math.sqrt(len(arr)))


def run_experiment(
    config: ScenarioConfig,
    sweep_var: Optional[str],
    values: Sequence[float],
    trials: int = 200,
    seed: int = 0,
    schemes: Optional[Sequence[str]] = None,
    solver_opts: Optional[SolverOptions] = None,
    progress=None,
) -> List[Dict[str, object]]:
    """Mean per-user rate and phase times per scheme and sweep value.

    Trial t uses seed ``seed + t`` for every scheme and sweep value, so the
    comparisons are paired.
    """
    if trials < 1:
        raise ParameterError("trials must be >= 1")
    if sweep_var is None:
        points = [(None, config)]
    else:
        points = [(v, config.replace(**{sweep_var: v})) for v in values]
    rows = []
    for value, cfg in points:
        check_regime(cfg)
        names = list(schemes) if schemes else default_schemes(cfg)
        for scheme in names:
            reports = []
            for t in range(trials):
                reports.append(run_trial(cfg, seed + t, scheme, solver_opts))
                if progress is not None:
                    progress(value, scheme, t)
            good = [r for r in reports if r.ok]
            mean_rate, se = _stats([r.per_user_rate for r in good])
            rows.append(
                dict(
                    sweep_value=value,
                    scheme=scheme,
                    mean_rate=mean_rate,
                    stderr_rate=se,
                    mean_t_d2d=_stats([r.t_d2d for r in good])[0],
                    mean_t_dl=_stats([r.t_dl for r in good])[0],
                    n_ok=len(good),
                    n_failed=len(reports) - len(good),
                    reports=reports,
                )
            )
    return rows


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return f"{x:.10g}"
    return str(x)


def experiment_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for row in rows:
        w.writerow([_fmt(row[c]) for c in CSV_COLUMNS])
    return buf.getvalue()


# --- golden vectors -------------------------------------------------------


def selftest() -> List[Tuple[str, bool, str]]:
    """Check the two worked examples: coded messages and MAC condition counts."""
    checks = []

    def check(name, got, want):
        checks.append((name, got == want, f"got {got!r}, want {want!r}"))

    p3 = place(3, 3, 1)
    d3 = default_demands(3, 3)
    check("K=3 user 1 cache", [s.label() for s in p3.cache[1]], ["A_{1}", "B_{1}", "C_{1}"])
    check("K=3 downlink {1,3}", dl_coded_message((1, 3), d3, p3).label(), "A_{3} + C_{1}")
    check(
        "K=3 D2D {1,2}",
        [(j, m.label()) for j, m in d2d_coded_messages((1, 2), d3, p3)],
        [(1, "B_{1}"), (2, "A_{2}")],
    )
    check("K=3 MAC count, no D2D", mac_constraint_count(MessagePlan.full(3, 1)), 9)
    s3 = build_schedule([(1, 2)], d3, p3)
    check("K=3 MAC count after {1,2}", mac_constraint_count(remaining_message_plan(s3)), 5)

    p4 = place(4, 4, 2)
    d4 = default_demands(4, 4)
    check("K=4 downlink {1,2,4}", dl_coded_message((1, 2, 4), d4, p4).label(), "A_{2,4} + B_{1,4} + D_{1,2}")
    check(
        "K=4 D2D {1,2,3}",
        [(j, m.label()) for j, m in d2d_coded_messages((1, 2, 3), d4, p4)],
        [(1, "B^1_{1,3} + C^1_{1,2}"), (2, "A^1_{2,3} + C^2_{1,2}"), (3, "A^2_{2,3} + B^2_{1,3}")],
    )
    s4 = build_schedule([(1, 2, 3)], d4, p4)
    plan4 = remaining_message_plan(s4)
    check("K=4 downlink after {1,2,3}", list(plan4.messages), [(1, 2, 4), (1, 3, 4), (2, 3, 4)])
    check("K=4 MAC count after {1,2,3}", mac_constraint_count(plan4), 16)
    check("K=4 user 4 MAC count", 2 ** len(plan4.needed[3]) - 1, 7)
    general = build_schedule([(1, 2, 3), (1, 2), (1, 3), (2, 3)], d4, p4)
    sent_by_1 = [m.label() for g in general.groups[1:] for j, m in g.messages if j == 1]
    check("K=4 user 1 in pair groups", sent_by_1, ["B_{1,4}", "C_{1,4}"])
    check("K=4 pair groups, transmissions", sum(len(g.messages) for g in general.groups[1:]), 6)
    plan_pairs = remaining_message_plan(general)
    check("K=4 pairs leave users 1-3 done", [len(n) for n in plan_pairs.needed], [0, 0, 0, 3])
    return checks
