"""CSV readers and writers for every file format the tools exchange."""

from __future__ import annotations

import csv
import hashlib
import math
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .core import TRAIT_NAMES, SessionRecord, SessionTable, TraitTrajectory, TraitVector
from .errors import ValidationError

TRAIT_CSV_COLUMNS = (
    "group_id",
    "session_id",
    "task_label",
    "participant_id",
    "t_start_s",
    *TRAIT_NAMES,
)
RATINGS_COLUMNS = ("rater_id", "subject_id", "trait", "score")
PREDICTIONS_COLUMNS = ("subject_id", "trait", "score")
PERFORMANCE_COLUMNS = ("group_id", "performance_score")
SELF_REPORT_COLUMNS = ("participant_id", *TRAIT_NAMES)
MODALITIES = ("acoustic", "textual", "visual")


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def fmt(x: float) -> str:
    """Shortest round-trip representation, so files are byte-stable."""
    return repr(float(x))


def _reader(path, expected: tuple[str, ...]):
    fh = open(path, newline="", encoding="utf-8")
    reader = csv.DictReader(fh)
    header = tuple(reader.fieldnames or ())
    if header != expected:
        fh.close()
        raise ValidationError(f"{path}: expected header {','.join(expected)}, got {','.join(header)}")
    return fh, reader


def _float(value: str, where: str) -> float:
    try:
        x = float(value)
    except (TypeError, ValueError):
        raise ValidationError(f"{where}: not a number: {value!r}") from None
    if not math.isfinite(x):
        raise ValidationError(f"{where}: non-finite value {value!r}")
    return x


def read_trait_csv(path) -> SessionTable:
    """Parse a trait-window CSV into a :class:`SessionTable`."""
    fh, reader = _reader(path, TRAIT_CSV_COLUMNS)
    series: dict[tuple[str, str], dict] = {}
    with fh:
        for lineno, row in enumerate(reader, start=2):
            where = f"{path}:{lineno}"
            key = (row["session_id"], row["participant_id"])
            entry = series.setdefault(
                key,
                {"group_id": row["group_id"], "task_label": row["task_label"] or None, "t": [], "v": []},
            )
            if entry["group_id"] != row["group_id"] or entry["task_label"] != (row["task_label"] or None):
                raise ValidationError(f"{where}: inconsistent group/task for session {key[0]!r}")
            entry["t"].append(_float(row["t_start_s"], where))
            entry["v"].append([_float(row[n], where) for n in TRAIT_NAMES])
    rows = []
    for (sid, pid), e in series.items():
        order = np.argsort(e["t"], kind="stable")
        times = np.asarray(e["t"])[order]
        if np.any(np.diff(times) == 0):
            raise ValidationError(f"{path}: duplicate t_start_s for ({sid}, {pid})")
        traj = TraitTrajectory(pid, times, np.asarray(e["v"])[order])
        rows.append(SessionRecord(e["group_id"], sid, e["task_label"], pid, traj))
    return SessionTable(tuple(rows))


def trait_rows(table: SessionTable) -> list[list[str]]:
    out = []
    recs = sorted(table.rows, key=lambda r: (r.group_id, r.session_id, r.participant_id))
    for r in recs:
        for t, v in zip(r.trajectory.times, r.trajectory.values):
            out.append([r.group_id, r.session_id, r.task_label or "", r.participant_id, fmt(t), *map(fmt, v)])
    return out


def write_csv(path, header: Iterable[str], rows: Iterable[Iterable]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(header))
        w.writerows(rows)


def write_trait_csv(table: SessionTable, path) -> None:
    write_csv(path, TRAIT_CSV_COLUMNS, trait_rows(table))


def read_performance_csv(path) -> dict[str, float]:
    fh, reader = _reader(path, PERFORMANCE_COLUMNS)
    out: dict[str, float] = {}
    with fh:
        for lineno, row in enumerate(reader, start=2):
            g = row["group_id"]
            if g in out:
                raise ValidationError(f"{path}:{lineno}: duplicate group {g!r}")
            out[g] = _float(row["performance_score"], f"{path}:{lineno}")
    return out


def write_performance_csv(performance: Mapping[str, float], path) -> None:
    write_csv(path, PERFORMANCE_COLUMNS, [[g, fmt(v)] for g, v in sorted(performance.items())])


def read_self_report_csv(path, rescale: bool = False) -> dict[str, TraitVector]:
    """Self-reports keyed by participant.

    Raw scales are allowed only with ``rescale=True``, which min-max maps
    each trait column to [0, 1] across participants.
    """
    fh, reader = _reader(path, SELF_REPORT_COLUMNS)
    raw: dict[str, list[float]] = {}
    with fh:
        for lineno, row in enumerate(reader, start=2):
            pid = row["participant_id"]
            if pid in raw:
                raise ValidationError(f"{path}:{lineno}: duplicate participant {pid!r}")
            raw[pid] = [_float(row[n], f"{path}:{lineno}") for n in TRAIT_NAMES]
    if not raw:
        return {}
    mat = np.array(list(raw.values()))
    if rescale:
        mat = minmax_rescale(mat)
    return {pid: TraitVector.from_array(v) for pid, v in zip(raw, mat)}


def minmax_rescale(mat) -> np.ndarray:
    """Column-wise min-max to [0, 1]; constant columns map to 0.5."""
    mat = np.asarray(mat, dtype=float)
    lo = mat.min(axis=0)
    span = mat.max(axis=0) - lo
    safe = np.where(span > 0, span, 1.0)
    return np.where(span > 0, (mat - lo) / safe, 0.5)


def write_self_report_csv(reports: Mapping[str, np.ndarray], path) -> None:
    write_csv(path, SELF_REPORT_COLUMNS, [[p, *map(fmt, v)] for p, v in sorted(reports.items())])


def read_ratings_csv(path) -> list[tuple[str, str, str, float]]:
    """Rows of ``(rater_id, subject_id, trait, score)``; duplicates rejected."""
    fh, reader = _reader(path, RATINGS_COLUMNS)
    seen = set()
    out = []
    with fh:
        for lineno, row in enumerate(reader, start=2):
            key = (row["rater_id"], row["subject_id"], row["trait"])
            if key in seen:
                raise ValidationError(f"{path}:{lineno}: duplicate rating {key}")
            if row["trait"] not in TRAIT_NAMES:
                raise ValidationError(f"{path}:{lineno}: unknown trait {row['trait']!r}")
            seen.add(key)
            out.append((*key, _float(row["score"], f"{path}:{lineno}")))
    return out


def read_predictions_csv(path) -> dict[tuple[str, str], float]:
    fh, reader = _reader(path, PREDICTIONS_COLUMNS)
    out: dict[tuple[str, str], float] = {}
    with fh:
        for lineno, row in enumerate(reader, start=2):
            key = (row["subject_id"], row["trait"])
            if key in out:
                raise ValidationError(f"{path}:{lineno}: duplicate prediction {key}")
            if row["trait"] not in TRAIT_NAMES:
                raise ValidationError(f"{path}:{lineno}: unknown trait {row['trait']!r}")
            out[key] = _float(row["score"], f"{path}:{lineno}")
    return out


def read_feature_csv(path) -> tuple[np.ndarray, np.ndarray]:
    """A modality feature file: ``t_s`` followed by feature columns."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0] != "t_s":
            raise ValidationError(f"{path}: first column must be t_s")
        rows = [[_float(x, f"{path}:{i}") for x in r] for i, r in enumerate(reader, start=2) if r]
    if not rows:
        return np.zeros(0), np.zeros((0, len(header) - 1))
    arr = np.array(rows)
    if arr.ndim != 2 or arr.shape[1] != len(header):
        raise ValidationError(f"{path}: ragged rows")
    if np.any(np.diff(arr[:, 0]) <= 0):
        raise ValidationError(f"{path}: t_s must be strictly increasing")
    return arr[:, 0], arr[:, 1:]


def write_feature_csv(path, times, features) -> None:
    features = np.asarray(features, dtype=float)
    header = ["t_s", *(f"f{i}" for i in range(features.shape[1]))]
    write_csv(path, header, [[fmt(t), *map(fmt, row)] for t, row in zip(times, features)])


def discover_features(features_dir) -> list[dict]:
    """Locate ``<dir>/<session>/<participant>/<modality>.csv`` inputs.

    An optional ``<dir>/sessions.csv`` with ``group_id,session_id,task_label``
    supplies grouping; otherwise each session is its own group.
    """
    root = Path(features_dir)
    if not root.is_dir():
        raise ValidationError(f"{root} is not a directory")
    index: dict[str, tuple[str, str | None]] = {}
    idx_path = root / "sessions.csv"
    if idx_path.exists():
        fh, reader = _reader(idx_path, ("group_id", "session_id", "task_label"))
        with fh:
            for row in reader:
                index[row["session_id"]] = (row["group_id"], row["task_label"] or None)
    found = []
    for sdir in sorted(p for p in root.iterdir() if p.is_dir()):
        for pdir in sorted(p for p in sdir.iterdir() if p.is_dir()):
            files = {}
            for m in MODALITIES:
                f = pdir / f"{m}.csv"
                if not f.exists():
                    raise ValidationError(
                        f"missing modality file: session={sdir.name} participant={pdir.name} modality={m}"
                    )
                files[m] = f
            group, task = index.get(sdir.name, (sdir.name, None))
            found.append(
                {"group_id": group, "session_id": sdir.name, "task_label": task, "participant_id": pdir.name, "files": files}
            )
    return found
