"""Reward-processing bias profiles.

A profile is the four weights used by split Q-learning:

* ``phi1``: memory factor of the positive stream
* ``phi2``: weight of the positive stream at action selection
* ``phi3``: memory factor of the negative stream
* ``phi4``: weight of the negative stream at action selection
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class BiasProfile:
    label: str
    phi1: float
    phi2: float
    phi3: float
    phi4: float
    # half-widths used by sample_profile, same order as the weights
    ranges: tuple[float, float, float, float] = (0.0, 0.0, 0.0, 0.0)

    def __post_init__(self):
        for name, value in zip(("phi1", "phi2", "phi3", "phi4"), self.weights):
            if not math.isfinite(value) or value < 0:
                raise ValueError(f"{name} must be finite and >= 0, got {value!r}")
        if len(self.ranges) != 4:
            raise ValueError("ranges must hold exactly four half-widths")
        for value in self.ranges:
            if not math.isfinite(value) or value < 0:
                raise ValueError(f"perturbation half-widths must be finite and >= 0, got {self.ranges!r}")

    @property
    def weights(self) -> tuple[float, float, float, float]:
        return (self.phi1, self.phi2, self.phi3, self.phi4)

    @classmethod
    def from_weights(cls, weights, label: str = "custom") -> "BiasProfile":
        phi1, phi2, phi3, phi4 = (float(w) for w in weights)
        return cls(label, phi1, phi2, phi3, phi4)


_R = (0.1, 0.1, 0.1, 0.1)

PRESETS: dict[str, BiasProfile] = {
    p.label: p
    for p in (
        BiasProfile("AD", 1.0, 1.0, 0.5, 1.0, _R),
        BiasProfile("ADHD", 0.2, 1.0, 0.2, 1.0, _R),
        BiasProfile("AZ", 0.1, 1.0, 0.1, 1.0, _R),
        BiasProfile("CP", 0.5, 0.5, 1.0, 1.0, _R),
        BiasProfile("bvFTD", 0.5, 100.0, 0.5, 1.0, (0.1, 10.0, 0.1, 0.1)),
        BiasProfile("PD", 0.5, 1.0, 0.5, 100.0, (0.1, 0.1, 0.1, 10.0)),
        BiasProfile("M", 0.5, 1.0, 0.5, 1.0, _R),
        BiasProfile("standard", 1.0, 1.0, 1.0, 1.0),
    )
}

DESCRIPTIONS = {
    "AD": "addiction",
    "ADHD": "attention-deficit/hyperactivity disorder",
    "AZ": "Alzheimer's disease",
    "CP": "chronic pain",
    "bvFTD": "behavioral-variant frontotemporal dementia",
    "PD": "Parkinson's disease",
    "M": "moderate",
    "standard": "standard split Q-learning",
}


def get_profile(label: str) -> BiasProfile:
    try:
        return PRESETS[label]
    except KeyError:
        raise KeyError(f"unknown profile {label!r}; known: {', '.join(PRESETS)}") from None


def sample_profile(preset: BiasProfile, rng: np.random.Generator, deterministic: bool = False) -> BiasProfile:
    """Draw each weight uniformly from ``mean +/- half-width``, clamped at 0.

    Coordinates with a zero half-width are returned unchanged and consume no
    random numbers, so the standard profile never touches ``rng``.
    """
    if deterministic:
        return preset
    drawn = []
    for mean, half in zip(preset.weights, preset.ranges):
        if half == 0:
            drawn.append(mean)
        else:
            drawn.append(max(0.0, float(rng.uniform(mean - half, mean + half))))
    return BiasProfile(preset.label, *drawn, ranges=preset.ranges)
