"""Per-channel statistics and the derived / proposed feature families.

Every statistic treats one channel's samples q_1..q_n as a plain value
sequence. Moment statistics use the population (1/n) convention throughout.
Feature vectors are channel-major: for each channel in canonical order the
full statistic block is emitted, so the layout is fixed by
``signals.CHANNELS`` x the family's statistic order.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .signals import CHANNELS, Dataset, PulseProfile

FAMILY_DERIVED = "derived"
FAMILY_PROPOSED = "proposed"
FAMILY_DISSIMILARITY = "dissimilarity"

FAMILIES = (FAMILY_DERIVED, FAMILY_PROPOSED, FAMILY_DISSIMILARITY)

# Statistic order inside one channel block. Changing either tuple changes
# the on-disk feature layout, so they are part of the file contract. The two
# length statistics are distinct on purpose: the proposed family counts
# samples, the derived family measures micrometres (samples x sampling step).
PROPOSED_STATS = (
    "percentile30",
    "max",
    "mean",
    "std",
    "median",
    "third_moment",
    "nop",
    "length_samples",
    "entropy",
)
DERIVED_STATS = ("length_um", "height", "integral", "nop")

DERIVED_DIM = len(CHANNELS) * len(DERIVED_STATS)  # 32
PROPOSED_DIM = len(CHANNELS) * len(PROPOSED_STATS)  # 72


@dataclass(frozen=True, eq=False)
class FeatureMatrix:
    """n x p matrix of one feature family with names, row ids and labels."""

    family: str
    names: tuple[str, ...]
    rows: np.ndarray
    row_ids: tuple[str, ...]
    labels: tuple[str | None, ...]

    def __post_init__(self):
        object.__setattr__(self, "names", tuple(self.names))
        object.__setattr__(self, "row_ids", tuple(self.row_ids))
        object.__setattr__(self, "labels", tuple(self.labels))
        rows = np.asarray(self.rows, dtype=np.float64)
        if rows.ndim != 2:
            raise ValueError("rows must be a 2-d matrix")
        if self.family not in FAMILIES:
            raise ValueError(f"unknown feature family {self.family!r}")
        expected = {FAMILY_DERIVED: DERIVED_DIM, FAMILY_PROPOSED: PROPOSED_DIM}.get(self.family)
        if expected is not None and rows.shape[1] != expected:
            raise ValueError(
                f"{self.family} family must have {expected} features, got {rows.shape[1]}"
            )
        if rows.shape[1] != len(self.names):
            raise ValueError("names length does not match feature count")
        if rows.shape[0] != len(self.row_ids) or rows.shape[0] != len(self.labels):
            raise ValueError("row_ids/labels length does not match row count")
        if rows.size and not np.all(np.isfinite(rows)):
            raise ValueError("feature matrix contains non-finite entries")
        rows.setflags(write=False)
        object.__setattr__(self, "rows", rows)

    @property
    def n(self) -> int:
        return self.rows.shape[0]

    @property
    def p(self) -> int:
        return self.rows.shape[1]

    def column(self, name: str) -> np.ndarray:
        return self.rows[:, self.names.index(name)]

    def __eq__(self, other) -> bool:
        if not isinstance(other, FeatureMatrix):
            return NotImplemented
        return (
            self.family == other.family
            and self.names == other.names
            and self.row_ids == other.row_ids
            and self.labels == other.labels
            and np.array_equal(self.rows, other.rows)
        )


def _as_values(values) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError("values must be a nonempty 1-d sequence")
    if not np.all(np.isfinite(arr)):
        raise ValueError("values must be finite")
    return arr


def percentile(values, m: float = 30.0) -> float:
    """m-th percentile under linear interpolation on h = (n-1) * m/100.

    With v the ascending sort, returns v[floor(h)] + (h - floor(h)) *
    (v[floor(h)+1] - v[floor(h)]). m=0 gives the minimum, m=100 the maximum.
    """
    arr = _as_values(values)
    if not 0 <= m <= 100:
        raise ValueError("percentile m must lie in [0, 100]")
    v = np.sort(arr)
    h = (v.size - 1) * (m / 100.0)
    lo = int(np.floor(h))
    frac = h - lo
    if lo + 1 >= v.size:
        return float(v[-1])
    return float(v[lo] + frac * (v[lo + 1] - v[lo]))


def third_central_moment(values) -> float:
    """Population third central moment mu3 = (1/n) sum (q_i - mean)^3."""
    arr = _as_values(values)
    centered = arr - arr.mean()
    return float(np.mean(centered**3))


def shannon_entropy(values) -> float:
    """Entropy of the sample mass distribution, natural log.

    Values below 0 are clamped to 0 before normalization; p_i = q_i / sum(q).
    Terms with p_i = 0 contribute 0, and an all-zero mass returns 0.
    """
    arr = np.maximum(_as_values(values), 0.0)
    total = arr.sum()
    if total <= 0:
        return 0.0
    p = arr / total
    nz = p[p > 0]
    return float(-np.sum(nz * np.log(nz)))


def count_peaks(values) -> int:
    """Number of interior local maxima.

    A peak is a strict rise followed (possibly after a flat plateau) by a
    strict fall; a plateau counts once and endpoints never count.
    """
    arr = _as_values(values)
    signs = np.sign(np.diff(arr))
    signs = signs[signs != 0]
    if signs.size < 2:
        return 0
    return int(np.sum((signs[:-1] > 0) & (signs[1:] < 0)))


def _channel_proposed(values: np.ndarray) -> list[float]:
    mean = float(values.mean())
    mu2 = float(np.mean((values - mean) ** 2))
    return [
        percentile(values, 30.0),
        float(values.max()),
        mean,
        float(np.sqrt(mu2)),
        float(np.median(values)),
        third_central_moment(values),
        float(count_peaks(values)),
        float(values.size),
        shannon_entropy(values),
    ]


def proposed_features(profile: PulseProfile) -> np.ndarray:
    """72-vector: 9 statistics per channel, channel-major.

    Per channel: 30th percentile, max, mean, population std, median,
    third central moment, peak count, sample count, Shannon entropy.
    """
    out: list[float] = []
    for name in CHANNELS:
        out.extend(_channel_proposed(profile.channels[name]))
    return np.array(out, dtype=np.float64)


def derived_features(profile: PulseProfile) -> np.ndarray:
    """32-vector: physical length, height, integral and peak count per channel.

    Length is n * sampling_step (micrometres); height is the channel maximum;
    integral is the plain sample sum.
    """
    out: list[float] = []
    for name in CHANNELS:
        values = profile.channels[name]
        out.extend(
            [
                values.size * profile.sampling_step,
                float(values.max()),
                float(values.sum()),
                float(count_peaks(values)),
            ]
        )
    return np.array(out, dtype=np.float64)


def feature_names(family: str) -> tuple[str, ...]:
    if family == FAMILY_DERIVED:
        stats = DERIVED_STATS
    elif family == FAMILY_PROPOSED:
        stats = PROPOSED_STATS
    else:
        raise ValueError(f"no fixed name layout for family {family!r}")
    return tuple(f"{channel.lower()}_{stat}" for channel in CHANNELS for stat in stats)


def extract_features(dataset: Dataset, family: str) -> FeatureMatrix:
    """Compute the derived or proposed family for every profile."""
    if family == FAMILY_DERIVED:
        extractor = derived_features
    elif family == FAMILY_PROPOSED:
        extractor = proposed_features
    else:
        raise ValueError(f"cannot extract family {family!r} directly from profiles")
    rows = (
        np.vstack([extractor(p) for p in dataset.profiles])
        if dataset.profiles
        else np.zeros((0, len(feature_names(family))))
    )
    return FeatureMatrix(
        family=family,
        names=feature_names(family),
        rows=rows,
        row_ids=dataset.ids(),
        labels=dataset.labels(),
    )


def with_scaled_feature(features: FeatureMatrix, name: str, factor: float) -> FeatureMatrix:
    """Return a copy with one column multiplied by factor (> 0).

    Positive scaling is a strictly increasing transform, so partition-based
    classifiers are unaffected while raw-distance ones see the column's
    dynamic range blown up.
    """
    if factor <= 0:
        raise ValueError("factor must be > 0")
    rows = features.rows.copy()
    rows[:, features.names.index(name)] *= factor
    return FeatureMatrix(
        family=features.family,
        names=features.names,
        rows=rows,
        row_ids=features.row_ids,
        labels=features.labels,
    )


def save_features_csv(features: FeatureMatrix, path) -> None:
    """Write `id,label,<feature...>` rows; floats keep full precision."""
    path = Path(path)
    for rid in features.row_ids:
        if "," in rid or "\n" in rid:
            raise ValueError(f"profile id {rid!r} cannot be written to CSV")
    with path.open("w", encoding="utf-8") as fh:
        fh.write("id,label," + ",".join(features.names) + "\n")
        for i, rid in enumerate(features.row_ids):
            label = features.labels[i] if features.labels[i] is not None else ""
            row = ",".join(repr(v) for v in features.rows[i].tolist())
            fh.write(f"{rid},{label},{row}\n")
