"""Scenario parameters, channel sampling and point-to-point rate formulas."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence, Tuple

import numpy as np

from .combinatorics import ParameterError, cache_ratio

GEOMETRIES = ("disc", "fixed")


@dataclass(frozen=True)
class ScenarioConfig:
    """All scalar parameters of one scenario.

    Powers left as ``None`` are calibrated from the reference SNRs: the BS
    power gives ``dl_ref_snr_db`` average per-antenna SNR at
    ``dl_ref_distance_m`` and the user power gives ``d2d_ref_snr_db`` at
    ``d2d_ref_distance_m``.

    ``geometry = "fixed"`` places every user at the DL reference distance and
    every user pair at the D2D reference distance, so the reference SNRs are
    the mean link SNRs (fading is still drawn). ``attenuated_pairs`` lists
    user pairs such as ``"1-3,2-4"`` whose D2D gain is reduced by
    ``attenuation_db`` in both directions.
    """

    K: int = 3
    N: int = 3
    M: float = 1
    L: int = 2
    F: float = 1.0
    cell_radius_m: float = 100.0
    inner_radius_m: float = 10.0
    n_dl: float = 3.0
    n_d2d: float = 2.0
    P_T: Optional[float] = None
    P_d: Optional[float] = None
    N0: float = 1.0
    dl_ref_snr_db: float = 0.0
    d2d_ref_snr_db: float = 0.0
    dl_ref_distance_m: float = 100.0
    d2d_ref_distance_m: float = 10.0
    min_distance_m: float = 1.0
    geometry: str = "disc"
    attenuated_pairs: str = ""
    attenuation_db: float = 10.0
    dof_alpha: Optional[int] = None
    dof_beta: Optional[int] = None
    dof_groups: Optional[int] = None

    def __post_init__(self):
        self.validate()

    @property
    def tau(self) -> int:
        return cache_ratio(self.K, self.N, self.M)

    def validate(self) -> None:
        tau = self.tau
        if self.L < 1:
            raise ParameterError("L must be >= 1")
        if not 0 <= tau <= self.K:
            raise ParameterError(f"tau={tau} outside [0, K]")
        if self.cell_radius_m <= 0 or self.inner_radius_m < 0:
            raise ParameterError("radii must be positive")
        if self.inner_radius_m > self.cell_radius_m:
            raise ParameterError("inner radius exceeds the cell radius")
        if self.geometry not in GEOMETRIES:
            raise ParameterError(f"geometry must be one of {GEOMETRIES}")
        if self.N0 <= 0 or self.F <= 0:
            raise ParameterError("N0 and F must be positive")
        self.pairs()

    def pairs(self) -> Tuple[Tuple[int, int], ...]:
        out = []
        for item in self.attenuated_pairs.replace(" ", "").split(","):
            if not item:
                continue
            try:
                i, k = (int(x) for x in item.split("-"))
            except ValueError as exc:
                raise ParameterError(f"bad attenuated pair {item!r}") from exc
            if not (1 <= i <= self.K and 1 <= k <= self.K) or i == k:
                raise ParameterError(f"bad attenuated pair {item!r}")
            out.append((i, k))
        return tuple(out)

    @property
    def bs_power(self) -> float:
        if self.P_T is not None:
            return float(self.P_T)
        snr = 10.0 ** (self.dl_ref_snr_db / 10.0)
        return snr * self.N0 * self.dl_ref_distance_m ** self.n_dl

    @property
    def user_power(self) -> float:
        if self.P_d is not None:
            return float(self.P_d)
        snr = 10.0 ** (self.d2d_ref_snr_db / 10.0)
        return snr * self.N0 * self.d2d_ref_distance_m ** self.n_d2d

    def replace(self, **changes) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)

    def to_text(self) -> str:
        lines = []
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if value is None:
                continue
            lines.append(f"{f.name} = {value}")
        return "\n".join(lines) + "\n"


def _coerce(name: str, raw: str):
    kind = {f.name: f.type for f in dataclasses.fields(ScenarioConfig)}[name]
    raw = raw.strip()
    if "str" in str(kind):
        return raw.strip("\"'")
    if raw.lower() in ("none", ""):
        if "Optional" not in str(kind):
            raise ParameterError(f"{name} cannot be empty")
        return None
    if "int" in str(kind):
        value = float(raw)
        if value != int(value):
            raise ParameterError(f"{name} must be an integer, got {raw}")
        return int(value)
    return float(raw)


def parse_config(text: str, base: ScenarioConfig | None = None) -> ScenarioConfig:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    names = {f.name for f in dataclasses.fields(ScenarioConfig)}
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParameterError(f"line {lineno}: expected 'key = value'")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in names:
            raise ParameterError(f"line {lineno}: unknown key {key!r}")
        try:
            values[key] = _coerce(key, raw)
        except ValueError as exc:
            raise ParameterError(f"line {lineno}: {exc}") from exc
    base = base or ScenarioConfig()
    return base.replace(**values)


def load_config(path) -> ScenarioConfig:
    return parse_config(Path(path).read_text())


@dataclass(frozen=True)
class ChannelRealization:
    user_positions: np.ndarray  # (K, 2), metres, BS at origin
    dl_channels: np.ndarray  # (K, L) complex, row k-1 is h_k
    d2d_gains: np.ndarray  # (K, K) complex, [i-1, k-1] is h_ik; diagonal zero
    dl_distances: np.ndarray = field(repr=False, default=None)
    d2d_distances: np.ndarray = field(repr=False, default=None)

    @property
    def K(self) -> int:
        return self.dl_channels.shape[0]

    def h(self, k: int) -> np.ndarray:
        return self.dl_channels[k - 1]


def _cn(rng: np.random.Generator, shape) -> np.ndarray:
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def _uniform_disc(rng: np.random.Generator, radius: float, n: int) -> np.ndarray:
    rho = radius * np.sqrt(rng.random(n))
    phi = 2 * np.pi * rng.random(n)
    return np.stack([rho * np.cos(phi), rho * np.sin(phi)], axis=-1)


def sample(config: ScenarioConfig, seed: int) -> ChannelRealization:
    """Draw user positions and Rayleigh fading for one Monte Carlo trial.

    The inner disc's centre is uniform over the part of the cell that keeps
    the whole disc inside it, users are uniform in the inner disc, and every
    distance is floored at ``min_distance_m``.
    """
    rng = np.random.default_rng(seed)
    K, L = config.K, config.L
    floor = config.min_distance_m
    if config.geometry == "fixed":
        pos = np.zeros((K, 2))
        d_k = np.full(K, config.dl_ref_distance_m)
        d_ik = np.full((K, K), config.d2d_ref_distance_m)
    else:
        centre = _uniform_disc(rng, max(config.cell_radius_m - config.inner_radius_m, 0.0), 1)[0]
        pos = centre + _uniform_disc(rng, config.inner_radius_m, K)
        d_k = np.maximum(np.hypot(pos[:, 0], pos[:, 1]), floor)
        diff = pos[:, None, :] - pos[None, :, :]
        d_ik = np.maximum(np.hypot(diff[..., 0], diff[..., 1]), floor)
    np.fill_diagonal(d_ik, 0.0)

    h = (d_k ** (-config.n_dl / 2.0))[:, None] * _cn(rng, (K, L))
    g = _cn(rng, (K, K))
    with np.errstate(divide="ignore"):
        amp = np.where(d_ik > 0, d_ik, 1.0) ** (-config.n_d2d / 2.0)
    gains = amp * g
    for i, k in config.pairs():
        att = 10.0 ** (-config.attenuation_db / 20.0)
        gains[i - 1, k - 1] *= att
        gains[k - 1, i - 1] *= att
    np.fill_diagonal(gains, 0.0)
    return ChannelRealization(pos, h, gains, d_k, d_ik)


def d2d_rate(i: int, receivers: Iterable[int], chans: ChannelRealization, config: ScenarioConfig) -> float:
    """Multicast rate of user ``i`` to ``receivers``, limited by the weakest one."""
    receivers = list(receivers)
    if not receivers or i in receivers:
        raise ParameterError("receivers must be nonempty and exclude the transmitter")
    gains = np.abs(chans.d2d_gains[i - 1, [k - 1 for k in receivers]]) ** 2
    return float(np.log2(1.0 + config.user_power * gains.min() / config.N0))


def dl_point_rate(h: np.ndarray, w: np.ndarray, interferers: Sequence[np.ndarray], N0: float) -> float:
    """log2(1 + |h^H w|^2 / (N0 + sum |h^H w'|^2))."""
    h = np.asarray(h)
    sig = np.abs(np.vdot(h, w)) ** 2
    intf = sum(np.abs(np.vdot(h, v)) ** 2 for v in interferers)
    return float(np.log2(1.0 + sig / (N0 + intf)))
