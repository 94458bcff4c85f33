"""Seeded synthetic wind farm standing in for proprietary site data."""
from __future__ import annotations

from dataclasses import asdict, dataclass
from datetime import datetime

import numpy as np
from scipy.signal import lfilter

from .data import TEN_MINUTES, Channel, Role, TimeSeriesFrame

RELEVANT_NWP_NAMES = ("F100", "F10")


@dataclass(frozen=True)
class SyntheticFarmSpec:
    """Parameters of the synthetic farm.

    The target speed is a clipped AR(1) process. Relevant NWP channels are the
    (scaled) target plus a smooth AR(1) error, so their skill does not depend on
    the forecast horizon; decoy NWP channels are independent of everything.
    Power is a cubic ramp between cut-in and rated speed, plus noise, with an
    optional fraction of time clamped to a curtailment level.
    """

    n: int = 40000
    ar_coef: float = 0.99
    mean_speed: float = 7.0
    speed_std: float = 2.5
    nwp_error_std: float = 1.0
    nwp_error_ar: float = 0.995
    n_relevant_nwp: int = 2
    n_decoy_nwp: int = 2
    cut_in: float = 3.0
    rated_speed: float = 12.0
    rated_power: float = 2000.0
    power_noise: float = 0.02
    clamp_fraction: float = 0.0
    clamp_level: float = 0.5
    clamp_block: int = 36
    direction: bool = True
    seed: int = 0
    start: str = "2017-01-01T00:00:00"

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("n must be at least 2")
        if not -1 < self.ar_coef < 1 or not -1 < self.nwp_error_ar < 1:
            raise ValueError("autoregressive coefficients must lie in (-1, 1)")
        if min(self.speed_std, self.nwp_error_std, self.power_noise) < 0:
            raise ValueError("amplitudes must be non-negative")
        if not 0 <= self.clamp_fraction < 1:
            raise ValueError("clamp fraction must lie in [0, 1)")
        if self.n_relevant_nwp < 1 or self.n_decoy_nwp < 0:
            raise ValueError("need at least one relevant NWP channel")
        if not self.cut_in < self.rated_speed:
            raise ValueError("cut-in speed must be below rated speed")

    @classmethod
    def from_dict(cls, doc: dict) -> "SyntheticFarmSpec":
        return cls(**doc)

    def to_dict(self) -> dict:
        return asdict(self)


def ar1(rng: np.random.Generator, n: int, phi: float, std: float) -> np.ndarray:
    """Stationary AR(1) path with marginal standard deviation ``std``."""
    eps = rng.standard_normal(n) * std * np.sqrt(1.0 - phi**2)
    eps[0] = rng.standard_normal() * std
    return lfilter([1.0], [1.0, -phi], eps)


def power_function(ws, spec: SyntheticFarmSpec) -> np.ndarray:
    ramp = np.clip((np.asarray(ws) - spec.cut_in) / (spec.rated_speed - spec.cut_in), 0.0, 1.0)
    return spec.rated_power * ramp**3


def nwp_names(spec: SyntheticFarmSpec) -> list[str]:
    relevant = [RELEVANT_NWP_NAMES[i] if i < len(RELEVANT_NWP_NAMES) else f"R{i + 1}" for i in range(spec.n_relevant_nwp)]
    return relevant + [f"D{i + 1}" for i in range(spec.n_decoy_nwp)]


def synth_generate(spec: SyntheticFarmSpec) -> TimeSeriesFrame:
    rng = np.random.default_rng(spec.seed)
    n = spec.n
    ws = np.maximum(spec.mean_speed + ar1(rng, n, spec.ar_coef, spec.speed_std), 0.0)

    channels = [Channel("WS", Role.INSITU, ws, "m/s")]
    pw = power_function(ws, spec) + rng.standard_normal(n) * spec.power_noise * spec.rated_power
    pw = np.clip(pw, 0.0, spec.rated_power)
    if spec.clamp_fraction > 0:
        clamped = np.zeros(n, dtype=bool)
        target = spec.clamp_fraction * n
        while clamped.sum() < target:
            s = rng.integers(0, n)
            clamped[s : s + spec.clamp_block] = True
        pw = np.where(clamped, np.minimum(pw, spec.clamp_level * spec.rated_power), pw)
    channels.append(Channel("PW", Role.INSITU, pw, "kW"))
    if spec.direction:
        heading = np.mod(200.0 + np.cumsum(rng.standard_normal(n) * 3.0), 360.0)
        channels.append(Channel("DIR", Role.INSITU, heading, "deg"))

    names = nwp_names(spec)
    for i, name in enumerate(names):
        if i < spec.n_relevant_nwp:
            scale = 0.8**i  # lower levels see weaker wind
            err = ar1(rng, n, spec.nwp_error_ar, spec.nwp_error_std)
            channels.append(Channel(name, Role.NWP, scale * ws + err, "m/s"))
        else:
            channels.append(Channel(name, Role.NWP, ar1(rng, n, spec.ar_coef, 1.0), ""))
    return TimeSeriesFrame(datetime.fromisoformat(spec.start), TEN_MINUTES, tuple(channels))
