"""Synthetic sessions with controlled group effects, for test oracles.

Generative model per trait, all on the [0, 1] scale around 0.5:

    group mean   = 0.5 + N(0, sigma_between)
    member mean  = group mean + N(0, sigma_within)
    snapshot     = clip(member mean + task shift + AR(1) noise, 0, 1)

``sigma_between = 0`` is the null regime: group labels carry no
information. A ``missing_fraction`` of each trajectory is removed in
contiguous runs to mimic non-speaking intervals.

The optional performance score is a fixed function of the realized
group-average traits: ``20 + 30 * sum_j (g_j - 0.5) + N(0, noise)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import SessionRecord, SessionTable, TraitTrajectory
from .errors import ValidationError

PERFORMANCE_OFFSET = 20.0
PERFORMANCE_SLOPE = 30.0


@dataclass(frozen=True)
class SynthConfig:
    n_groups: int = 17
    group_size: tuple[int, int] = (3, 4)
    session_length_s: float = 600.0
    snapshot_s: float = 30.0
    sigma_between: float = 0.1
    sigma_within: float = 0.05
    sigma_time: float = 0.02
    ar_coefficient: float = 0.8
    missing_fraction: float = 0.0
    performance_noise_std: float = 1.0
    with_performance: bool = True
    tasks: tuple[str, ...] = ()
    sigma_task: float = 0.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "group_size", tuple(int(x) for x in self.group_size))
        object.__setattr__(self, "tasks", tuple(self.tasks))
        lo, hi = self.group_size
        if self.n_groups < 1:
            raise ValidationError("n_groups must be >= 1")
        if lo < 2 or hi < lo:
            raise ValidationError(f"group_size must satisfy 2 <= min <= max, got {self.group_size}")
        for name in ("sigma_between", "sigma_within", "sigma_time", "performance_noise_std", "sigma_task"):
            if getattr(self, name) < 0:
                raise ValidationError(f"{name} must be >= 0")
        if not 0 <= self.ar_coefficient < 1:
            raise ValidationError("ar_coefficient must lie in [0, 1)")
        if not 0 <= self.missing_fraction < 1:
            raise ValidationError("missing_fraction must lie in [0, 1)")
        if self.snapshot_s <= 0:
            raise ValidationError("snapshot_s must be positive")
        if self.session_length_s < self.snapshot_s:
            raise ValidationError("session shorter than one snapshot")
        if len(set(self.tasks)) != len(self.tasks):
            raise ValidationError("task labels must be distinct")

    @property
    def n_snapshots(self) -> int:
        return int(self.session_length_s // self.snapshot_s)


def _ar1(n: int, phi: float, sigma: float, rng: np.random.Generator) -> np.ndarray:
    """Stationary AR(1) noise, shape (n, 5)."""
    out = np.empty((n, 5))
    out[0] = rng.normal(0.0, sigma / np.sqrt(1.0 - phi**2), 5)
    eps = rng.normal(0.0, sigma, (n, 5))
    for t in range(1, n):
        out[t] = phi * out[t - 1] + eps[t]
    return out


def missing_mask(n: int, fraction: float, rng: np.random.Generator) -> np.ndarray:
    """Boolean mask of present snapshots with ``round(fraction * n)`` removed.

    Removed snapshots form contiguous runs separated by at least one
    present snapshot; at least one snapshot always stays.
    """
    n_missing = min(int(round(fraction * n)), n - 1)
    present = np.ones(n, dtype=bool)
    if n_missing == 0:
        return present
    n_present = n - n_missing
    max_runs = min(n_missing, n_present + 1)
    n_runs = int(rng.integers(1, max(1, min(max_runs, 1 + n_missing // 5)) + 1))
    # Run lengths: a random composition of n_missing into n_runs parts.
    cuts = np.sort(rng.choice(np.arange(1, n_missing), size=n_runs - 1, replace=False)) if n_runs > 1 else []
    runs = np.diff(np.concatenate([[0], cuts, [n_missing]])).astype(int)
    # Gaps: n_runs + 1 slots, interior ones at least 1.
    spare = n_present - (n_runs - 1)
    split = np.sort(rng.integers(0, spare + 1, size=n_runs))
    gaps = np.diff(np.concatenate([[0], split, [spare]])).astype(int)
    gaps[1:-1] += 1
    pos = 0
    for gap, run in zip(gaps[:-1], runs):
        pos += gap
        present[pos : pos + run] = False
        pos += run
    return present


def gen_sessions(cfg: SynthConfig) -> SessionTable:
    rng = np.random.default_rng(cfg.seed)
    n_snap = cfg.n_snapshots
    times_all = np.arange(n_snap) * cfg.snapshot_s
    tasks = cfg.tasks or ("",)
    task_shift = {t: rng.normal(0.0, cfg.sigma_task, 5) for t in tasks}
    rows = []
    group_values: dict[str, list[np.ndarray]] = {}
    for gi in range(cfg.n_groups):
        gid = f"G{gi + 1:02d}"
        size = int(rng.integers(cfg.group_size[0], cfg.group_size[1] + 1))
        gmean = 0.5 + rng.normal(0.0, cfg.sigma_between, 5)
        members = [(f"{gid}-P{j + 1}", gmean + rng.normal(0.0, cfg.sigma_within, 5)) for j in range(size)]
        for task in tasks:
            sid = f"{gid}-{task}" if task else gid
            for pid, mmean in members:
                vals = np.clip(mmean + task_shift[task] + _ar1(n_snap, cfg.ar_coefficient, cfg.sigma_time, rng), 0.0, 1.0)
                keep = missing_mask(n_snap, cfg.missing_fraction, rng)
                traj = TraitTrajectory(pid, times_all[keep], vals[keep])
                rows.append(SessionRecord(gid, sid, task or None, pid, traj))
                group_values.setdefault(gid, []).append(vals[keep].mean(axis=0))
    performance = {}
    if cfg.with_performance:
        for gid in sorted(group_values):
            g = np.mean(group_values[gid], axis=0)
            noise = rng.normal(0.0, cfg.performance_noise_std)
            performance[gid] = float(PERFORMANCE_OFFSET + PERFORMANCE_SLOPE * (g - 0.5).sum() + noise)
    return SessionTable(tuple(rows), performance)


def gen_self_reports(table: SessionTable, seed: int = 0, low: float = 1.0, high: float = 5.0) -> dict[str, np.ndarray]:
    """Raw-scale self-reports drawn independently of everything else."""
    rng = np.random.default_rng(seed)
    pids = sorted({r.participant_id for r in table.rows})
    return {p: np.round(rng.uniform(low, high, 5), 2) for p in pids}
