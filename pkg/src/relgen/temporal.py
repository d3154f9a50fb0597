"""Per-table temporal signatures built from trend, seasonality and spike primitives.

A signature evaluates to a 4-vector ``[intensity, trend, seasonality, spike]``.
The three channels are the weighted component values; ``intensity`` is
``1 + trend + seasonality + spike`` and drives timestamp density after
flooring at ``INTENSITY_FLOOR``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError
from .rng import Rng

PRIMITIVES = ("trend", "seasonality", "spike")
TEMPORAL_DIM = 4
INTENSITY_FLOOR = 0.05
_GRID = 2048


@dataclass(frozen=True)
class TemporalComponent:
    primitive: str
    weight: float
    slope: float = 0.0
    period: float = 1.0
    phase: float = 0.0
    amplitude: float = 0.0
    event_times: tuple = ()
    magnitudes: tuple = ()
    width: float = 0.01

    def __post_init__(self):
        if self.primitive not in PRIMITIVES:
            raise ContractError(f"unknown temporal primitive {self.primitive!r}")
        if self.weight < 0:
            raise ContractError("mixture weights must be >= 0")
        if self.primitive == "seasonality" and self.period <= 0:
            raise ContractError("seasonality period must be > 0")
        if self.primitive == "spike" and (
            len(self.event_times) != len(self.magnitudes) or not np.all(np.isfinite(self.magnitudes)) or self.width <= 0
        ):
            raise ContractError("spike events need matching finite magnitudes and width > 0")

    def channel(self, t):
        t = np.asarray(t, dtype=np.float64)
        if self.primitive == "trend":
            v = self.slope * t
        elif self.primitive == "seasonality":
            v = self.amplitude * np.sin(2.0 * np.pi * t / self.period + self.phase)
        else:
            v = np.zeros_like(t)
            for e, m in zip(self.event_times, self.magnitudes):
                v = v + m * np.exp(-0.5 * ((t - e) / self.width) ** 2)
        return self.weight * v


@dataclass(frozen=True)
class TemporalSignature:
    components: tuple
    horizon: float = 1.0

    def __post_init__(self):
        if len(self.components) == 0:
            raise ContractError("a temporal signature needs at least one component")

    @property
    def primitives(self) -> tuple:
        return tuple(c.primitive for c in self.components)


def sample_temporal_signature(rng: Rng, config) -> TemporalSignature:
    """Include each primitive independently with its configured probability.

    Draws are repeated until at least one primitive is included, so the
    marginal frequency of primitive k is ``p_k / (1 - prod(1 - p_j))``.
    """
    probs = {k: float(config.temporal_probs.get(k, 0.0)) for k in PRIMITIVES}
    H = float(config.time_horizon)
    while True:
        chosen = [k for k in PRIMITIVES if rng.random() < probs[k]]
        if chosen:
            break
    comps = []
    for k in chosen:
        w = float(rng.uniform(0.5, 1.0))
        if k == "trend":
            comps.append(TemporalComponent("trend", w, slope=float(rng.uniform(-0.9, 2.0)) / H))
        elif k == "seasonality":
            comps.append(
                TemporalComponent(
                    "seasonality", w,
                    period=float(rng.uniform(0.05, 0.5)) * H,
                    phase=float(rng.uniform(0.0, 2 * np.pi)),
                    amplitude=float(rng.uniform(0.2, 0.9)),
                )
            )
        else:
            n_ev = int(rng.integers(1, 4))
            comps.append(
                TemporalComponent(
                    "spike", w,
                    event_times=tuple(float(x) for x in rng.uniform(0.0, H, n_ev)),
                    magnitudes=tuple(float(x) for x in rng.uniform(2.0, 8.0, n_ev)),
                    width=float(rng.uniform(0.005, 0.02)) * H,
                )
            )
    return TemporalSignature(tuple(comps), H)


def eval_temporal(sig: TemporalSignature, t) -> np.ndarray:
    """Feature vector(s) ``[intensity, trend, seasonality, spike]`` at time(s) ``t``."""
    t = np.asarray(t, dtype=np.float64)
    if not np.all(np.isfinite(t)):
        raise ContractError("timestamps must be finite")
    out = np.zeros(t.shape + (TEMPORAL_DIM,))
    for c in sig.components:
        out[..., 1 + PRIMITIVES.index(c.primitive)] += c.channel(t)
    out[..., 0] = 1.0 + out[..., 1:].sum(axis=-1)
    return out


def intensity(sig: TemporalSignature, t) -> np.ndarray:
    return np.maximum(eval_temporal(sig, t)[..., 0], INTENSITY_FLOOR)


def sample_timestamps(sig: TemporalSignature, n: int, rng: Rng) -> np.ndarray:
    """Draw ``n`` times on [0, horizon] with density proportional to the intensity.

    Inverse CDF of the intensity made piecewise constant on a fine grid; a
    constant intensity therefore gives exactly uniform draws.
    """
    H = sig.horizon
    edges = np.linspace(0.0, H, _GRID + 1)
    mids = 0.5 * (edges[:-1] + edges[1:])
    mass = intensity(sig, mids)
    cdf = np.concatenate([[0.0], np.cumsum(mass)])
    cdf /= cdf[-1]
    u = rng.random(n)
    cell = np.clip(np.searchsorted(cdf, u, side="right") - 1, 0, _GRID - 1)
    frac = (u - cdf[cell]) / np.maximum(cdf[cell + 1] - cdf[cell], 1e-300)
    return edges[cell] + np.clip(frac, 0.0, 1.0) * (H / _GRID)
