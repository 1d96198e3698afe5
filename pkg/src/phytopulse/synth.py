"""Deterministic synthetic pulse dataset generator.

Each species template describes, per channel, a number of Gaussian bumps
with sampled amplitude and width, plus additive zero-mean Gaussian noise.
Generation is reproducible across platforms: every profile draws from its
own PCG64 stream seeded by SeedSequence((seed, species_index, cell_index)),
so output is independent of generation order or worker count.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .signals import CHANNELS, Dataset, PulseProfile

_SEED_MASK = 0xFFFFFFFFFFFFFFFF

# Bump centers are spread evenly along the pulse, each jittered by this
# fraction of the length so the bump order never flips.
_CENTER_JITTER = 0.04


@dataclass(frozen=True)
class ChannelPulseSpec:
    """Gaussian-bump recipe for one channel."""

    bumps: int
    amplitude_range: tuple[float, float]
    width_range: tuple[float, float]

    def __post_init__(self):
        object.__setattr__(self, "amplitude_range", tuple(float(v) for v in self.amplitude_range))
        object.__setattr__(self, "width_range", tuple(float(v) for v in self.width_range))
        if self.bumps < 0:
            raise ValueError("bumps must be >= 0")
        alo, ahi = self.amplitude_range
        if not (0 <= alo <= ahi):
            raise ValueError("amplitude_range must be nonnegative and ordered")
        wlo, whi = self.width_range
        if not (0 < wlo <= whi < 1):
            raise ValueError("width_range must lie inside (0, 1) and be ordered")


@dataclass(frozen=True)
class SpeciesTemplate:
    name: str
    length_range: tuple[int, int]
    channels: dict[str, ChannelPulseSpec]
    noise_std: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "length_range", tuple(int(v) for v in self.length_range))
        if not self.name:
            raise ValueError("template name must be nonempty")
        lmin, lmax = self.length_range
        if lmin < 4:
            raise ValueError(f"template {self.name!r}: minimum length must be >= 4")
        if lmax < lmin:
            raise ValueError(f"template {self.name!r}: length_range must be ordered")
        if self.noise_std < 0:
            raise ValueError(f"template {self.name!r}: noise_std must be >= 0")
        missing = [c for c in CHANNELS if c not in self.channels]
        if missing:
            raise ValueError(f"template {self.name!r}: missing channel spec {missing[0]}")
        unknown = sorted(set(self.channels) - set(CHANNELS))
        if unknown:
            raise ValueError(f"template {self.name!r}: unknown channel {unknown[0]}")


@dataclass(frozen=True)
class SynthSpec:
    templates: tuple[SpeciesTemplate, ...]
    cells_per_species: int
    seed: int

    def __post_init__(self):
        object.__setattr__(self, "templates", tuple(self.templates))
        if not self.templates:
            raise ValueError("at least one species template is required")
        names = [t.name for t in self.templates]
        if len(set(names)) != len(names):
            raise ValueError("template names must be distinct")
        if self.cells_per_species < 1:
            raise ValueError("cells_per_species must be >= 1")


def _generate_channel(rng: np.random.Generator, spec: ChannelPulseSpec, length: int) -> np.ndarray:
    t = np.arange(length, dtype=np.float64)
    signal = np.zeros(length, dtype=np.float64)
    nb = spec.bumps
    for b in range(nb):
        amplitude = rng.uniform(*spec.amplitude_range)
        width = rng.uniform(*spec.width_range) * length
        jitter = rng.uniform(-_CENTER_JITTER, _CENTER_JITTER)
        center = ((b + 1) / (nb + 1) + jitter) * (length - 1)
        signal += amplitude * np.exp(-0.5 * ((t - center) / width) ** 2)
    return signal


def generate_profile(
    template: SpeciesTemplate, species_index: int, cell_index: int, seed: int
) -> PulseProfile:
    """Generate one particle from its own (seed, species, cell) substream."""
    rng = np.random.default_rng(
        np.random.SeedSequence((seed & _SEED_MASK, species_index, cell_index))
    )
    lmin, lmax = template.length_range
    length = int(rng.integers(lmin, lmax + 1))
    channels = {}
    for name in CHANNELS:
        signal = _generate_channel(rng, template.channels[name], length)
        signal += rng.normal(0.0, template.noise_std, size=length)
        channels[name] = np.maximum(signal, 0.0)
    return PulseProfile(
        id=f"{template.name}-{cell_index:04d}",
        label=template.name,
        channels=channels,
    )


def generate_dataset(spec: SynthSpec) -> Dataset:
    """Generate cells_per_species profiles per template, species-major order."""
    profiles = [
        generate_profile(template, s, c, spec.seed)
        for s, template in enumerate(spec.templates)
        for c in range(spec.cells_per_species)
    ]
    return Dataset.from_profiles(profiles)


def synth_spec_from_dict(data: dict) -> SynthSpec:
    """Parse the JSON config form of a SynthSpec."""
    if not isinstance(data, dict):
        raise ValueError("synth spec must be a JSON object")
    for key in ("templates", "cells_per_species", "seed"):
        if key not in data:
            raise ValueError(f"synth spec is missing {key!r}")
    templates = []
    for tdata in data["templates"]:
        channels = {
            name: ChannelPulseSpec(
                bumps=cdata["bumps"],
                amplitude_range=tuple(cdata["amplitude_range"]),
                width_range=tuple(cdata["width_range"]),
            )
            for name, cdata in tdata["channels"].items()
        }
        templates.append(
            SpeciesTemplate(
                name=tdata["name"],
                length_range=tuple(tdata["length_range"]),
                channels=channels,
                noise_std=tdata.get("noise_std", 0.0),
            )
        )
    return SynthSpec(
        templates=tuple(templates),
        cells_per_species=int(data["cells_per_species"]),
        seed=int(data["seed"]),
    )


def load_synth_spec(path: str | Path) -> SynthSpec:
    with Path(path).open("r", encoding="utf-8") as fh:
        return synth_spec_from_dict(json.load(fh))
