"""Particle pulse data model and JSON-lines dataset I/O.

A particle is described by 8 equal-length sample sequences (mV), one per
optical channel. The channel order below is canonical and fixes the layout
of every feature vector built downstream.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

CHANNELS: tuple[str, ...] = (
    "FWS",
    "SWS_HS",
    "SWS_LS",
    "FLR_HS",
    "FLR_LS",
    "FLO_LS",
    "FLY_HS",
    "FLY_LS",
)

CHANNEL_INDEX: dict[str, int] = {name: i for i, name in enumerate(CHANNELS)}

# Micrometres of flow displacement per sample.
DEFAULT_SAMPLING_STEP = 0.5


class DatasetFormatError(ValueError):
    """A dataset file or record violates the expected JSON-lines format."""


@dataclass(frozen=True, eq=False)
class PulseProfile:
    """One particle: per-channel sample sequences plus identity and label.

    All 8 channels must be present, equal-length (length >= 1) and finite.
    Negative samples are accepted; downstream statistics define their own
    handling.
    """

    id: str
    label: str | None
    channels: dict[str, np.ndarray]
    sampling_step: float = DEFAULT_SAMPLING_STEP

    def __post_init__(self):
        if not isinstance(self.id, str) or not self.id:
            raise ValueError("profile id must be a nonempty string")
        if self.label is not None and not isinstance(self.label, str):
            raise ValueError(f"profile {self.id!r}: label must be a string or None")
        if not (isinstance(self.sampling_step, (int, float)) and self.sampling_step > 0):
            raise ValueError(f"profile {self.id!r}: sampling_step must be > 0")
        missing = [c for c in CHANNELS if c not in self.channels]
        if missing:
            raise ValueError(f"profile {self.id!r}: missing channel {missing[0]}")
        unknown = sorted(set(self.channels) - set(CHANNELS))
        if unknown:
            raise ValueError(f"profile {self.id!r}: unknown channel {unknown[0]}")
        arrays: dict[str, np.ndarray] = {}
        length = None
        for name in CHANNELS:
            arr = np.asarray(self.channels[name], dtype=np.float64)
            if arr.ndim != 1 or arr.size < 1:
                raise ValueError(
                    f"profile {self.id!r}: channel {name} must be a nonempty 1-d sequence"
                )
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"profile {self.id!r}: channel {name} has non-finite samples")
            if length is None:
                length = arr.size
            elif arr.size != length:
                raise ValueError(
                    f"profile {self.id!r}: unequal channel lengths "
                    f"({name} has {arr.size}, expected {length})"
                )
            arr.setflags(write=False)
            arrays[name] = arr
        object.__setattr__(self, "channels", arrays)

    @property
    def length(self) -> int:
        """Number of samples per channel."""
        return self.channels[CHANNELS[0]].size

    def stacked(self) -> np.ndarray:
        """Samples as a (length, 8) array in canonical channel order."""
        return np.column_stack([self.channels[c] for c in CHANNELS])

    def __eq__(self, other) -> bool:
        if not isinstance(other, PulseProfile):
            return NotImplemented
        return (
            self.id == other.id
            and self.label == other.label
            and self.sampling_step == other.sampling_step
            and all(np.array_equal(self.channels[c], other.channels[c]) for c in CHANNELS)
        )


@dataclass(frozen=True, eq=False)
class Dataset:
    """Ordered collection of profiles with the ordered set of species names."""

    profiles: tuple[PulseProfile, ...]
    label_set: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "profiles", tuple(self.profiles))
        object.__setattr__(self, "label_set", tuple(self.label_set))
        seen_ids = set()
        for p in self.profiles:
            if p.id in seen_ids:
                raise ValueError(f"duplicate profile id {p.id!r}")
            seen_ids.add(p.id)
        if len(set(self.label_set)) != len(self.label_set):
            raise ValueError("label_set contains duplicates")
        known = set(self.label_set)
        for p in self.profiles:
            if p.label is not None and p.label not in known:
                raise ValueError(f"profile {p.id!r} has label {p.label!r} not in label_set")

    @classmethod
    def from_profiles(cls, profiles) -> "Dataset":
        """Build a dataset, deriving label_set in first-appearance order."""
        profiles = tuple(profiles)
        labels: list[str] = []
        for p in profiles:
            if p.label is not None and p.label not in labels:
                labels.append(p.label)
        return cls(profiles=profiles, label_set=tuple(labels))

    def __len__(self) -> int:
        return len(self.profiles)

    def ids(self) -> tuple[str, ...]:
        return tuple(p.id for p in self.profiles)

    def labels(self) -> tuple[str | None, ...]:
        return tuple(p.label for p in self.profiles)

    def index_of(self, profile_id: str) -> int:
        if not hasattr(self, "_id_index"):
            object.__setattr__(self, "_id_index", {p.id: i for i, p in enumerate(self.profiles)})
        idx = self._id_index.get(profile_id)
        if idx is None:
            raise ValueError(f"unknown profile id {profile_id!r}")
        return idx

    def __eq__(self, other) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.label_set == other.label_set
            and len(self.profiles) == len(other.profiles)
            and all(a == b for a, b in zip(self.profiles, other.profiles))
        )


def _profile_from_record(record: dict) -> PulseProfile:
    if not isinstance(record, dict):
        raise ValueError("record is not a JSON object")
    for key in ("id", "channels"):
        if key not in record:
            raise ValueError(f"record is missing required key {key!r}")
    channels = record["channels"]
    if not isinstance(channels, dict):
        raise ValueError("'channels' must be an object mapping channel name to samples")
    return PulseProfile(
        id=record["id"],
        label=record.get("label"),
        channels={k: v for k, v in channels.items()},
        sampling_step=record.get("sampling_step", DEFAULT_SAMPLING_STEP),
    )


def load_dataset(path: str | Path) -> Dataset:
    """Read a JSON-lines dataset.

    One particle per line; blank lines are ignored. Raises DatasetFormatError
    naming the line number for malformed records, missing channels, unequal
    channel lengths, and duplicate ids. Record order is preserved.
    """
    path = Path(path)
    profiles: list[PulseProfile] = []
    seen: set[str] = set()
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetFormatError(f"{path}: line {lineno}: invalid JSON: {exc.msg}") from exc
            try:
                profile = _profile_from_record(record)
            except (ValueError, TypeError) as exc:
                raise DatasetFormatError(f"{path}: line {lineno}: {exc}") from exc
            if profile.id in seen:
                raise DatasetFormatError(f"{path}: line {lineno}: duplicate profile id {profile.id!r}")
            seen.add(profile.id)
            profiles.append(profile)
    return Dataset.from_profiles(profiles)


def save_dataset(dataset: Dataset, path: str | Path) -> None:
    """Write a dataset as JSON-lines; load_dataset(save_dataset(d)) == d.

    Sample values are serialized with full round-trip precision (shortest
    decimal repr of the float64 value).
    """
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for p in dataset.profiles:
            record = {
                "id": p.id,
                "label": p.label,
                "sampling_step": p.sampling_step,
                "channels": {name: p.channels[name].tolist() for name in CHANNELS},
            }
            fh.write(json.dumps(record) + "\n")
