import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from phytopulse import (
    CHANNELS,
    ChannelPulseSpec,
    Dataset,
    PulseProfile,
    SpeciesTemplate,
    SynthSpec,
    generate_dataset,
)

REPO_ROOT = Path(__file__).resolve().parent.parent
CONFIG_DIR = REPO_ROOT / "configs"


def make_profile(values, profile_id="p0", label=None, sampling_step=0.5, channels=None):
    """Profile with every channel set to `values` (or per-channel overrides)."""
    base = {c: list(values) for c in CHANNELS}
    if channels:
        base.update({k: list(v) for k, v in channels.items()})
    return PulseProfile(id=profile_id, label=label, channels=base, sampling_step=sampling_step)


def small_synth_spec(n_species=3, cells=8, seed=7, noise=0.5):
    rng = np.random.default_rng(seed)
    templates = []
    for s in range(n_species):
        channels = {}
        for ci, c in enumerate(CHANNELS):
            bumps = 1 + (s + ci) % 2
            lo = 8.0 + 6.0 * s + 2.0 * ci
            channels[c] = ChannelPulseSpec(
                bumps=bumps, amplitude_range=(lo, lo + 3.0), width_range=(0.08, 0.16)
            )
        templates.append(
            SpeciesTemplate(
                name=f"sp{s + 1:02d}",
                length_range=(10 + 4 * s, 14 + 4 * s),
                channels=channels,
                noise_std=noise,
            )
        )
    return SynthSpec(templates=tuple(templates), cells_per_species=cells, seed=seed)


@pytest.fixture(scope="session")
def small_dataset() -> Dataset:
    return generate_dataset(small_synth_spec())


@pytest.fixture()
def tiny_profiles():
    rng = np.random.default_rng(42)
    profiles = []
    for i in range(6):
        values = np.abs(rng.normal(5, 2, size=5))
        profiles.append(make_profile(values, profile_id=f"t{i}", label="a" if i < 3 else "b"))
    return profiles
