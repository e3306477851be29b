"""Trait types, meta-traits and temporal aggregation of window predictions."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import NoDataError, ValidationError

TRAIT_NAMES = (
    "openness",
    "conscientiousness",
    "extraversion",
    "agreeableness",
    "emotional_stability",
)
META_NAMES = ("plasticity", "stability")

# Unit-weight composition of the meta-traits, rows follow META_NAMES.
META_WEIGHTS = np.array(
    [
        [1.0, 0.0, 1.0, 0.0, 0.0],
        [0.0, 1.0, 0.0, 1.0, 1.0],
    ]
)
META_COUNTS = META_WEIGHTS.sum(axis=1)


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class TraitVector:
    """Five perceived trait scores on a common [0, 1] scale.

    ``emotional_stability`` is the reversed neuroticism axis: a low value
    means high neuroticism.
    """

    openness: float
    conscientiousness: float
    extraversion: float
    agreeableness: float
    emotional_stability: float

    def __post_init__(self):
        for name in TRAIT_NAMES:
            v = getattr(self, name)
            if not isinstance(v, (int, float, np.floating, np.integer)) or isinstance(v, bool):
                raise ValidationError(f"{name} must be a real number, got {v!r}")
            v = float(v)
            if not math.isfinite(v) or v < 0.0 or v > 1.0:
                raise ValidationError(f"{name}={v!r} outside [0, 1]")
            object.__setattr__(self, name, v)

    @classmethod
    def from_array(cls, values) -> "TraitVector":
        arr = np.asarray(values, dtype=float)
        if arr.shape != (5,):
            raise ValidationError(f"expected 5 trait values, got shape {arr.shape}")
        return cls(*(float(x) for x in arr))

    def to_array(self) -> np.ndarray:
        return np.array([getattr(self, n) for n in TRAIT_NAMES])

    def as_dict(self) -> dict[str, float]:
        return {n: getattr(self, n) for n in TRAIT_NAMES}


@dataclass(frozen=True)
class MetaTraitVector:
    plasticity: float
    stability: float

    def to_array(self) -> np.ndarray:
        return np.array([self.plasticity, self.stability])

    def as_dict(self) -> dict[str, float]:
        return {"plasticity": self.plasticity, "stability": self.stability}


def meta_matrix(values, normalize: bool = False) -> np.ndarray:
    """Apply the meta-trait linear map to raw arrays of shape ``(..., 5)``.

    No range checks are made, so this is the unconstrained linear map.
    ``normalize`` divides each meta-trait by its number of constituent
    traits, which brings it back to [0, 1].
    """
    arr = np.asarray(values, dtype=float)
    if arr.shape[-1] != 5:
        raise ValidationError(f"last axis must have 5 traits, got {arr.shape}")
    out = arr @ META_WEIGHTS.T
    if normalize:
        out = out / META_COUNTS
    return out


def meta_traits(t: TraitVector, normalize: bool = False) -> MetaTraitVector:
    """Plasticity (O + E) and stability (C + A + ES) as unit-weight sums."""
    if not isinstance(t, TraitVector):
        raise ValidationError(f"expected TraitVector, got {type(t).__name__}")
    pla, sta = meta_matrix(t.to_array(), normalize=normalize)
    return MetaTraitVector(float(pla), float(sta))


@dataclass(frozen=True)
class WindowConfig:
    window_s: float = 15.0
    stride_s: float = 1.0
    snapshot_s: float = 30.0

    def __post_init__(self):
        for name in ("window_s", "stride_s", "snapshot_s"):
            v = getattr(self, name)
            if not math.isfinite(v) or v <= 0:
                raise ValidationError(f"{name} must be positive, got {v!r}")
        if self.snapshot_s < self.stride_s:
            raise ValidationError("snapshot_s must be >= stride_s")
        ratio = self.snapshot_s / self.stride_s
        if abs(ratio - round(ratio)) > 1e-9 * ratio:
            raise ValidationError("snapshot_s must be an integer multiple of stride_s")


@dataclass(frozen=True)
class TraitTrajectory:
    """Time-indexed trait snapshots for one participant.

    ``times`` holds snapshot start times in seconds and ``values`` the
    matching ``(n, 5)`` trait matrix. Non-speaking intervals are simply
    absent; ``silences`` optionally declares them so that they can be
    checked.
    """

    participant_id: str
    times: np.ndarray = field(default_factory=lambda: np.zeros(0))
    values: np.ndarray = field(default_factory=lambda: np.zeros((0, 5)))
    silences: tuple[tuple[float, float], ...] = ()

    def __post_init__(self):
        times = _frozen(self.times).reshape(-1)
        values = _frozen(self.values).reshape(-1, 5) if np.size(self.values) else _frozen(np.zeros((0, 5)))
        if len(times) != len(values):
            raise ValidationError("times and values differ in length")
        if len(times) and np.any(np.diff(times) <= 0):
            raise ValidationError(f"sample times of {self.participant_id!r} not strictly increasing")
        if not np.all(np.isfinite(values)) or np.any(values < 0) or np.any(values > 1):
            raise ValidationError(f"trait values of {self.participant_id!r} outside [0, 1]")
        for start, end in self.silences:
            if np.any((times >= start) & (times < end)):
                raise ValidationError(
                    f"{self.participant_id!r} has a sample inside silence [{start}, {end})"
                )
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "silences", tuple((float(a), float(b)) for a, b in self.silences))

    def __len__(self) -> int:
        return len(self.times)

    @property
    def samples(self) -> list[tuple[float, TraitVector]]:
        return [(float(t), TraitVector.from_array(v)) for t, v in zip(self.times, self.values)]

    @classmethod
    def from_samples(cls, participant_id: str, samples: Iterable[tuple[float, TraitVector]]):
        samples = list(samples)
        times = [t for t, _ in samples]
        values = [v.to_array() for _, v in samples] if samples else np.zeros((0, 5))
        return cls(participant_id, np.asarray(times, dtype=float), np.asarray(values, dtype=float))


def snapshot_arrays(
    times, values, cfg: WindowConfig = WindowConfig(), end: float | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Array form of :func:`snapshot_series`.

    The snapshot grid starts at the first prediction time. A snapshot is
    emitted when at least one prediction falls into ``[T, T + snapshot_s)``
    and, if ``end`` is given, when ``T + snapshot_s <= end``.
    """
    times = np.asarray(times, dtype=float).reshape(-1)
    values = np.asarray(values, dtype=float).reshape(len(times), -1) if len(times) else np.zeros((0, 5))
    if len(times) == 0:
        return np.zeros(0), np.zeros((0, values.shape[1] if values.ndim == 2 else 5))
    if np.any(np.diff(times) <= 0):
        raise ValidationError("prediction times must be strictly increasing")
    t0 = times[0]
    steps = (times - t0) / cfg.stride_s
    if np.any(np.abs(steps - np.round(steps)) > 1e-6):
        raise ValidationError("prediction times are not aligned to the stride grid")
    per_snapshot = int(round(cfg.snapshot_s / cfg.stride_s))
    idx = np.round(steps).astype(np.int64) // per_snapshot
    uniq, inverse = np.unique(idx, return_inverse=True)
    sums = np.zeros((len(uniq), values.shape[1]))
    np.add.at(sums, inverse, values)
    counts = np.bincount(inverse, minlength=len(uniq)).astype(float)
    means = sums / counts[:, None]
    # The mean can leave [min, max] of its inputs by one ulp; pin it back.
    lo = np.full_like(means, np.inf)
    hi = np.full_like(means, -np.inf)
    np.minimum.at(lo, inverse, values)
    np.maximum.at(hi, inverse, values)
    means = np.clip(means, lo, hi)
    snap_times = t0 + uniq * cfg.snapshot_s
    if end is not None:
        keep = snap_times + cfg.snapshot_s <= end + 1e-9
        snap_times, means = snap_times[keep], means[keep]
    return snap_times, means


def snapshot_series(
    preds: Sequence[tuple[float, TraitVector]],
    cfg: WindowConfig = WindowConfig(),
    participant_id: str = "",
    end: float | None = None,
) -> TraitTrajectory:
    """Average stride-resolution predictions into snapshots.

    Each snapshot at time ``T`` is the per-trait mean of every prediction
    with ``t`` in ``[T, T + snapshot_s)``; intervals without predictions
    become gaps. Empty input gives an empty trajectory.
    """
    if len(preds) == 0:
        return TraitTrajectory(participant_id)
    times = np.array([t for t, _ in preds], dtype=float)
    values = np.array([v.to_array() for _, v in preds])
    snap_t, snap_v = snapshot_arrays(times, values, cfg, end=end)
    return TraitTrajectory(participant_id, snap_t, snap_v)


def session_average(tr: TraitTrajectory) -> TraitVector:
    """Equal-weight mean over the snapshots that are present."""
    if len(tr) == 0:
        raise NoDataError(f"trajectory {tr.participant_id!r} has no data")
    return TraitVector.from_array(np.clip(tr.values.mean(axis=0), 0.0, 1.0))


def group_average(members: Sequence[TraitVector]) -> TraitVector:
    if len(members) == 0:
        raise NoDataError("group has no members")
    arr = np.array([m.to_array() for m in members])
    return TraitVector.from_array(np.clip(arr.mean(axis=0), 0.0, 1.0))


@dataclass(frozen=True)
class SessionRecord:
    group_id: str
    session_id: str
    task_label: str | None
    participant_id: str
    trajectory: TraitTrajectory


@dataclass(frozen=True)
class SessionTable:
    """Participants grouped into sessions, with optional performance scores."""

    rows: tuple[SessionRecord, ...]
    performance: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        rows = tuple(self.rows)
        seen = set()
        members: dict[str, set[str]] = {}
        for r in rows:
            key = (r.session_id, r.participant_id)
            if key in seen:
                raise ValidationError(f"duplicate (session, participant) {key}")
            seen.add(key)
            members.setdefault(r.group_id, set()).add(r.participant_id)
        for g, ps in members.items():
            if len(ps) < 2:
                raise ValidationError(f"group {g!r} has fewer than 2 participants")
        perf = {str(k): float(v) for k, v in dict(self.performance).items()}
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "performance", perf)

    @property
    def group_ids(self) -> list[str]:
        return sorted({r.group_id for r in self.rows})

    @property
    def task_labels(self) -> list[str]:
        return sorted({r.task_label or "" for r in self.rows})

    def for_task(self, task: str) -> list[SessionRecord]:
        return [r for r in self.rows if (r.task_label or "") == task]
