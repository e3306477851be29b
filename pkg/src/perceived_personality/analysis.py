"""Dataset-level analyses that produce JSON-ready result records.

Each function takes parsed inputs and returns ``(results, warnings)``;
warnings are plain dicts and never abort an analysis.
"""

from __future__ import annotations

import itertools
import math
from collections import defaultdict
from typing import Mapping

import numpy as np

from .core import (
    META_NAMES,
    TRAIT_NAMES,
    SessionTable,
    TraitVector,
    WindowConfig,
    meta_matrix,
    session_average,
    snapshot_arrays,
)
from .errors import DegenerateError, ValidationError
from .predict import GbtConfig, compare_predictors
from .stats import (
    holm_adjust,
    icc2k,
    mauchly_gg,
    paired_t,
    permanova,
    permutation_histogram,
    rm_anova,
    tost_equivalence,
    welch_t,
)

DV_NAMES = TRAIT_NAMES + META_NAMES


def format_p(p: float) -> str:
    """APA-style p: ``p < .001`` or ``p = .017``."""
    if p < 0.001:
        return "p < .001"
    s = f"{p:.3f}"
    return "p = " + (s[1:] if s.startswith("0") else s)


def format_f_p(f: float, p: float) -> str:
    f_txt = "inf" if math.isinf(f) else f"{f:.2f}"
    return f"F = {f_txt}, {format_p(p)}"


def dv_matrix(values5: np.ndarray, normalize_meta: bool = False) -> np.ndarray:
    """Stack the 5 traits with the 2 meta-traits, shape (..., 7)."""
    return np.concatenate([values5, meta_matrix(values5, normalize_meta)], axis=-1)


def _session_points(table: SessionTable, task: str):
    """Session-average trait vectors for every participant in a task."""
    per: dict[tuple[str, str], list[np.ndarray]] = defaultdict(list)
    for rec in table.for_task(task):
        if len(rec.trajectory):
            per[(rec.group_id, rec.participant_id)].append(session_average(rec.trajectory).to_array())
    keys = sorted(per)
    return keys, np.array([np.mean(per[k], axis=0) for k in keys]) if keys else np.zeros((0, 5))


def cluster_analysis(
    table: SessionTable,
    traits: str = "big5",
    n_permutations: int = 10_000,
    seed: int = 0,
    by_task: bool = True,
    normalize_meta: bool = False,
    bins: int = 50,
    mode: str = "auto",
):
    """PERMANOVA of session-averaged traits by group, per task."""
    if traits not in ("big5", "meta"):
        raise ValidationError(f"traits must be big5 or meta, got {traits!r}")
    tasks = table.task_labels if by_task else [None]
    results, warnings = [], []
    for task in tasks:
        if task is None:
            keys, pts = [], []
            for t in table.task_labels:
                k, p = _session_points(table, t)
                keys += k
                pts.append(p)
            pts = np.concatenate(pts) if pts else np.zeros((0, 5))
        else:
            keys, pts = _session_points(table, task)
        label = "all" if task is None else task
        groups = [g for g, _ in keys]
        if len(set(groups)) < 2:
            warnings.append({"task": label, "warning": "fewer than 2 groups; skipped"})
            continue
        if len(groups) <= len(set(groups)):
            warnings.append({"task": label, "warning": "no within-group replication; skipped"})
            continue
        X = pts if traits == "big5" else meta_matrix(pts, normalize_meta)
        try:
            res = permanova(X, groups, n_permutations=n_permutations, seed=seed, mode=mode)
        except DegenerateError as exc:
            warnings.append({"task": label, "warning": f"degenerate: {exc}"})
            continue
        results.append(
            {
                "task": label,
                "n_observations": len(groups),
                "n_groups": len(set(groups)),
                "traits": traits,
                "permanova": res.to_dict(),
                "histogram": permutation_histogram(res, bins=bins),
                "summary": format_f_p(res.f_observed, res.p_value),
            }
        )
    return results, warnings


def _task_matrix(table: SessionTable, level: str, normalize_meta: bool):
    """Subjects x tasks x 7 DV array for complete subjects, plus drop count."""
    tasks = table.task_labels
    if level == "individual":
        per: dict[str, dict[str, list[np.ndarray]]] = defaultdict(lambda: defaultdict(list))
        for rec in table.rows:
            if len(rec.trajectory):
                per[rec.participant_id][rec.task_label or ""].append(session_average(rec.trajectory).to_array())
        cells = {s: {t: np.mean(v, axis=0) for t, v in d.items()} for s, d in per.items()}
    elif level == "group":
        per_g: dict[str, dict[str, dict[str, list[np.ndarray]]]] = defaultdict(lambda: defaultdict(lambda: defaultdict(list)))
        for rec in table.rows:
            if len(rec.trajectory):
                per_g[rec.group_id][rec.task_label or ""][rec.participant_id].append(
                    session_average(rec.trajectory).to_array()
                )
        cells = {
            g: {t: np.mean([np.mean(v, axis=0) for v in members.values()], axis=0) for t, members in d.items()}
            for g, d in per_g.items()
        }
    else:
        raise ValidationError(f"level must be individual or group, got {level!r}")
    complete = sorted(s for s, d in cells.items() if all(t in d for t in tasks))
    dropped = len(cells) - len(complete)
    if not complete:
        return tasks, complete, np.zeros((0, len(tasks), 7)), dropped
    arr = np.array([[cells[s][t] for t in tasks] for s in complete])
    return tasks, complete, dv_matrix(arr, normalize_meta), dropped


def tasks_analysis(
    table: SessionTable,
    level: str = "individual",
    posthoc: str = "welch",
    sphericity_alpha: float = 0.05,
    normalize_meta: bool = False,
):
    """Repeated-measures ANOVA across tasks for every dependent variable.

    The Greenhouse-Geisser correction is applied exactly when Mauchly's
    test rejects sphericity at ``sphericity_alpha``.
    """
    if posthoc not in ("welch", "paired"):
        raise ValidationError(f"posthoc must be welch or paired, got {posthoc!r}")
    tasks, subjects, data, dropped = _task_matrix(table, level, normalize_meta)
    warnings = []
    if dropped:
        warnings.append({"warning": "incomplete subjects dropped", "count": dropped})
    k = len(tasks)
    if k < 2:
        raise ValidationError(f"need at least 2 tasks, found {tasks}")
    n = len(subjects)
    if n < 2:
        raise ValidationError(f"need at least 2 complete subjects, found {n}")
    test = welch_t if posthoc == "welch" else paired_t
    results = []
    for j, dv in enumerate(DV_NAMES):
        m = data[:, :, j]
        entry: dict = {"dependent_variable": dv}
        sphericity = None
        if k < 3:
            entry["sphericity_note"] = "k = 2: sphericity holds trivially; Mauchly test disabled"
        elif n <= k:
            entry["sphericity_note"] = f"n = {n} <= k = {k}: Mauchly test unavailable"
        else:
            sphericity = mauchly_gg(m)
            entry["mauchly"] = sphericity.to_dict()
        apply_gg = sphericity is not None and sphericity.p_value < sphericity_alpha
        entry["gg_applied"] = apply_gg
        anova = rm_anova(m, "greenhouse_geisser" if apply_gg else "none")
        entry["anova"] = anova.to_dict()
        entry["summary"] = format_f_p(anova.f, anova.p_value)
        pairs = list(itertools.combinations(range(k), 2))
        tests = [test(m[:, a], m[:, b]) for a, b in pairs]
        adjusted = holm_adjust([t.p_value for t in tests])
        entry["posthoc"] = [
            {"task_a": tasks[a], "task_b": tasks[b], **t.to_dict(), "p_holm": adj}
            for (a, b), t, adj in zip(pairs, tests, adjusted)
        ]
        results.append(entry)
    meta = {"tasks": tasks, "n_subjects": n, "level": level, "posthoc": posthoc}
    return meta, results, warnings


def agreement_analysis(
    ratings: list[tuple[str, str, str, float]],
    predictions: Mapping[tuple[str, str], float],
    alpha: float = 0.05,
    tost_mode: str = "paired",
    normalize_meta: bool = False,
):
    """ICC(2,k) per dependent variable and TOST of model vs. each rater.

    The TOST bound for a dependent variable is the mean, over raters and
    items, of ``|rating - item mean rating|``. Errors of the model and of
    each rater are absolute deviations from the item mean rating.
    """
    if tost_mode not in ("paired", "independent"):
        raise ValidationError(f"tost_mode must be paired or independent, got {tost_mode!r}")
    raters = sorted({r for r, _, _, _ in ratings})
    subjects = sorted({s for _, s, _, _ in ratings})
    if len(raters) < 2 or len(subjects) < 2:
        raise ValidationError("need at least 2 raters and 2 subjects")
    cube = np.full((len(subjects), len(raters), 5), np.nan)
    ri = {r: i for i, r in enumerate(raters)}
    si = {s: i for i, s in enumerate(subjects)}
    ti = {t: i for i, t in enumerate(TRAIT_NAMES)}
    for r, s, t, score in ratings:
        cube[si[s], ri[r], ti[t]] = score
    missing = [
        {"rater_id": raters[b], "subject_id": subjects[a], "trait": TRAIT_NAMES[c]}
        for a, b, c in np.argwhere(np.isnan(cube))
    ]
    if missing:
        raise ValidationError(f"incomplete rating matrix; missing cells: {missing}")
    pred = np.full((len(subjects), 5), np.nan)
    for (s, t), score in predictions.items():
        if s in si:
            pred[si[s], ti[t]] = score
    absent = [
        {"subject_id": subjects[a], "trait": TRAIT_NAMES[c]} for a, c in np.argwhere(np.isnan(pred))
    ]
    if absent:
        raise ValidationError(f"missing model predictions: {absent}")
    cube7 = dv_matrix(cube, normalize_meta)
    pred7 = dv_matrix(pred, normalize_meta)
    results = []
    for j, dv in enumerate(DV_NAMES):
        m = cube7[:, :, j]
        icc = icc2k(m)
        item_mean = m.mean(axis=1)
        rater_err = np.abs(m - item_mean[:, None])
        model_err = np.abs(pred7[:, j] - item_mean)
        bound = float(rater_err.mean())
        tosts = []
        for b, rater in enumerate(raters):
            if bound <= 0:
                tosts.append({"rater_id": rater, "error": "zero bound: raters agree exactly"})
                continue
            res = tost_equivalence(model_err, rater_err[:, b], bound, alpha, paired=tost_mode == "paired")
            tosts.append({"rater_id": rater, **res.to_dict()})
        n_eq = sum(1 for t in tosts if t.get("equivalent"))
        results.append(
            {
                "dependent_variable": dv,
                "icc": icc.to_dict(),
                "bound": bound,
                "tost": tosts,
                "equivalent_raters": n_eq,
                "n_raters": len(raters),
                "summary": f"ICC(2,k) = {icc.icc:.2f}; equivalent with {n_eq} out of {len(raters)} raters",
            }
        )
    return results


def predict_analysis(
    table: SessionTable,
    self_reports: Mapping[str, TraitVector] | None,
    cfg: GbtConfig,
    normalize_meta: bool = False,
):
    reports = compare_predictors(table, self_reports, cfg, normalize_meta=normalize_meta)
    out = []
    for (source, rep), r in sorted(reports.items()):
        out.append(
            {
                "source": source,
                "representation": rep,
                "n_features": 5 if rep == "big5" else 2,
                "loo": r.to_dict(),
                "summary": f"MSE = {r.summary()}",
            }
        )
    return out


def window_predictions(streams: Mapping[str, tuple[np.ndarray, np.ndarray]], params, cfg: WindowConfig):
    """Slide a window over three modality streams and score each position.

    ``streams`` maps modality to ``(times, features)``. A window starting
    at ``t`` covers ``[t, t + window_s)``; positions advance by the stride
    while the window fits inside the shared time span. Windows where any
    modality has no rows are skipped, which leaves gaps.

    Returns ``(times, scores, duration_end)``.
    """
    from .xmodal import MODALITIES, forward_scores

    starts, ends = [], []
    for m in MODALITIES:
        t, _ = streams[m]
        if len(t) == 0:
            return np.zeros(0), np.zeros((0, 5)), 0.0
        step = float(np.median(np.diff(t))) if len(t) > 1 else 0.0
        starts.append(float(t[0]))
        ends.append(float(t[-1]) + step)
    start, end = min(starts), min(ends)
    times, scores = [], []
    n_steps = int(math.floor((end - start - cfg.window_s) / cfg.stride_s + 1e-9)) + 1
    for i in range(max(n_steps, 0)):
        t0 = start + i * cfg.stride_s
        window = []
        for m in MODALITIES:
            t, x = streams[m]
            sel = (t >= t0 - 1e-9) & (t < t0 + cfg.window_s - 1e-9)
            if not sel.any():
                break
            window.append(x[sel])
        else:
            times.append(t0)
            scores.append(forward_scores(*window, params))
    return np.array(times), np.array(scores).reshape(-1, 5), end


def traits_from_features(entries: list[dict], params, cfg: WindowConfig):
    """Window predictions and snapshots for every discovered participant.

    Returns ``(prediction_rows, snapshot_rows)`` in trait-window CSV
    column order, with numbers still as floats.
    """
    from .io import read_feature_csv

    pred_rows, snap_rows = [], []
    for e in entries:
        streams = {m: read_feature_csv(path) for m, path in e["files"].items()}
        times, scores, end = window_predictions(streams, params, cfg)
        ident = [e["group_id"], e["session_id"], e["task_label"] or "", e["participant_id"]]
        for t, v in zip(times, scores):
            pred_rows.append([*ident, t, *v])
        st, sv = snapshot_arrays(times, scores, cfg, end=end)
        for t, v in zip(st, sv):
            snap_rows.append([*ident, t, *v])
    return pred_rows, snap_rows
