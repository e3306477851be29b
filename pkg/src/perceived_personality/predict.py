"""Group-performance regression with boosted regression trees and LOO CV.

Split search is exhaustive over midpoints between consecutive distinct
feature values. Ties in impurity reduction go to the lowest feature index
and then the lowest threshold.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Mapping

import numpy as np

from .core import SessionTable, TraitVector, group_average, meta_matrix, session_average
from .errors import ValidationError

# Split gains within this relative margin of the best are ties.
_GAIN_RTOL = 1e-12


@dataclass(frozen=True)
class GbtConfig:
    """Boosting hyperparameters.

    Training is deterministic; ``seed`` is carried for the run manifest.
    """

    n_trees: int = 100
    max_depth: int = 3
    learning_rate: float = 0.1
    min_samples_leaf: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValidationError("n_trees must be >= 1")
        if self.max_depth < 1:
            raise ValidationError("max_depth must be >= 1")
        if not 0 < self.learning_rate <= 1:
            raise ValidationError("learning_rate must lie in (0, 1]")
        if self.min_samples_leaf < 1:
            raise ValidationError("min_samples_leaf must be >= 1")


@dataclass
class _Node:
    value: float
    feature: int = -1
    threshold: float = 0.0
    left: "_Node | None" = None
    right: "_Node | None" = None

    @property
    def is_leaf(self) -> bool:
        return self.left is None


@dataclass
class RegressionTree:
    root: _Node

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        out = np.empty(len(X))

        def walk(node, idx):
            if node.is_leaf:
                out[idx] = node.value
                return
            go_left = X[idx, node.feature] <= node.threshold
            walk(node.left, idx[go_left])
            walk(node.right, idx[~go_left])

        walk(self.root, np.arange(len(X)))
        return out


class _SplitSearch:
    """Exhaustive split search with per-feature orderings computed once."""

    def __init__(self, X: np.ndarray, min_leaf: int):
        self.X = X
        self.min_leaf = min_leaf
        # (p, n): row indices sorted by each feature, stable.
        self.order = np.argsort(X, axis=0, kind="stable").T.copy()

    def best(self, r: np.ndarray, in_node: np.ndarray):
        """Return ``(gain, feature, threshold)`` or None; gain is the SSE drop."""
        m = int(in_node.sum())
        min_leaf = self.min_leaf
        if m < 2 * min_leaf:
            return None
        p = self.order.shape[0]
        idx = self.order[in_node[self.order]].reshape(p, m)
        xv = self.X[idx, np.arange(p)[:, None]]
        csum = np.cumsum(r[idx], axis=1)
        total = csum[0, -1]
        n_left = np.arange(1, m, dtype=float)
        left = csum[:, :-1]
        gain = left**2 / n_left + (total - left) ** 2 / (m - n_left) - total**2 / m
        valid = xv[:, 1:] > xv[:, :-1]
        if min_leaf > 1:
            valid &= (n_left >= min_leaf) & (m - n_left >= min_leaf)
        if not valid.any():
            return None
        gain = np.where(valid, gain, -np.inf)
        best = gain.max()
        if best <= 0:
            return None
        cand = np.argwhere(gain >= best - _GAIN_RTOL * abs(best))
        lo, hi = xv[:, :-1], xv[:, 1:]
        thresholds = 0.5 * (lo + hi)
        # For adjacent floats the midpoint can round up to ``hi``; ``lo`` still separates them.
        thresholds = np.where(thresholds < hi, thresholds, lo)
        # argwhere yields (feature, position) in order; lowest feature first,
        # and within a feature the thresholds increase with position.
        feat, pos = cand[0]
        return float(gain[feat, pos]), int(feat), float(thresholds[feat, pos])


def best_split(X, r, min_leaf: int = 1):
    """Variance-minimizing single split of all rows, or None."""
    X = np.asarray(X, dtype=float)
    r = np.asarray(r, dtype=float)
    return _SplitSearch(X, min_leaf).best(r, np.ones(len(r), dtype=bool))


def _grow(search: _SplitSearch, r: np.ndarray, max_depth: int, fitted: np.ndarray) -> RegressionTree:
    X = search.X

    def grow(in_node, depth):
        node = _Node(float(r[in_node].mean()))
        split = search.best(r, in_node) if depth < max_depth else None
        if split is None:
            fitted[in_node] = node.value
            return node
        _, feat, thr = split
        go_left = X[:, feat] <= thr
        node.feature, node.threshold = feat, thr
        node.left = grow(in_node & go_left, depth + 1)
        node.right = grow(in_node & ~go_left, depth + 1)
        return node

    return RegressionTree(grow(np.ones(len(r), dtype=bool), 0))


def fit_tree(X, r, max_depth: int, min_samples_leaf: int = 1) -> RegressionTree:
    X = np.asarray(X, dtype=float)
    r = np.asarray(r, dtype=float)
    return _grow(_SplitSearch(X, min_samples_leaf), r, max_depth, np.empty(len(r)))


@dataclass
class GbtModel:
    init: float
    trees: list[RegressionTree]
    learning_rate: float
    config: GbtConfig
    train_mse: list[float] = field(default_factory=list)

    def predict(self, X, n_trees: int | None = None) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        out = np.full(len(X), self.init)
        for tree in self.trees[:n_trees]:
            out += self.learning_rate * tree.predict(X)
        return out


def _check_xy(X, y):
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).reshape(-1)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2 or X.shape[0] != len(y):
        raise ValidationError(f"X has {X.shape[0] if X.ndim else 0} rows, y has {len(y)}")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise ValidationError("X and y must be finite")
    return X, y


def fit_gbt(X, y, cfg: GbtConfig = GbtConfig()) -> GbtModel:
    """Stagewise least-squares boosting of depth-limited regression trees.

    ``train_mse[i]`` is the training MSE after ``i`` trees. Constant
    targets stop boosting immediately: the initial mean is exact.
    """
    X, y = _check_xy(X, y)
    if len(y) < 2:
        raise ValidationError("need at least 2 rows")
    init = float(y.mean())
    pred = np.full(len(y), init)
    model = GbtModel(init, [], cfg.learning_rate, cfg)
    resid = y - pred
    model.train_mse.append(float((resid**2).mean()))
    search = _SplitSearch(X, cfg.min_samples_leaf)
    fitted = np.empty(len(y))
    for _ in range(cfg.n_trees):
        if not np.any(resid != 0):
            break
        tree = _grow(search, resid, cfg.max_depth, fitted)
        if tree.root.is_leaf and tree.root.value == 0.0:
            break
        model.trees.append(tree)
        pred = pred + cfg.learning_rate * fitted
        resid = y - pred
        model.train_mse.append(float((resid**2).mean()))
    return model


@dataclass(frozen=True)
class LooReport:
    squared_errors: tuple[float, ...]
    mse_mean: float
    mse_spread: float
    n_splits: int
    config: GbtConfig

    def to_dict(self) -> dict:
        return {
            "squared_errors": list(self.squared_errors),
            "mse_mean": self.mse_mean,
            "mse_spread": self.mse_spread,
            "n_splits": self.n_splits,
            "spread_definition": "population standard deviation of per-split squared errors",
            "config": asdict(self.config),
        }

    def summary(self) -> str:
        return f"{self.mse_mean:.2f} ± {self.mse_spread:.2f}"


def loo_cv(X, y, cfg: GbtConfig = GbtConfig()) -> LooReport:
    """Leave-one-out: one model per held-out row."""
    X, y = _check_xy(X, y)
    n = len(y)
    if n < 3:
        raise ValidationError("LOO needs at least 3 rows")
    errs = []
    for i in range(n):
        keep = np.arange(n) != i
        model = fit_gbt(X[keep], y[keep], cfg)
        errs.append(float((model.predict(X[i : i + 1])[0] - y[i]) ** 2))
    arr = np.array(errs)
    return LooReport(tuple(errs), float(arr.mean()), float(arr.std()), n, cfg)


def group_features(
    table: SessionTable,
    self_reports: Mapping[str, TraitVector] | None = None,
) -> dict[str, dict[str, np.ndarray]]:
    """Group-average trait features keyed by source then group id.

    Perceived features average each member's session averages over all of
    the group's sessions. Self-report features average members' reports.
    """
    perceived: dict[str, np.ndarray] = {}
    by_group: dict[str, dict[str, list[np.ndarray]]] = {}
    for rec in table.rows:
        if len(rec.trajectory) == 0:
            continue
        by_group.setdefault(rec.group_id, {}).setdefault(rec.participant_id, []).append(
            session_average(rec.trajectory).to_array()
        )
    members_of: dict[str, list[str]] = {}
    for g, parts in by_group.items():
        members = [TraitVector.from_array(np.mean(v, axis=0)) for _, v in sorted(parts.items())]
        perceived[g] = group_average(members).to_array()
        members_of[g] = sorted(parts)
    out = {"perceived": perceived}
    if self_reports is not None:
        selfrep = {}
        for g, pids in members_of.items():
            missing = [p for p in pids if p not in self_reports]
            if missing:
                raise ValidationError(f"group {g!r}: no self-report for {missing}")
            selfrep[g] = group_average([self_reports[p] for p in pids]).to_array()
        out["self_report"] = selfrep
    return out


def compare_predictors(
    table: SessionTable,
    self_reports: Mapping[str, TraitVector] | None = None,
    cfg: GbtConfig = GbtConfig(),
    normalize_meta: bool = False,
) -> dict[tuple[str, str], LooReport]:
    """LOO reports keyed by (source, representation).

    Sources are ``perceived`` and, when self-reports are given,
    ``self_report``; representations are ``big5`` (5 features) and
    ``meta`` (2 features).
    """
    groups = table.group_ids
    missing = [g for g in groups if g not in table.performance]
    if missing:
        raise ValidationError(f"missing performance score for group(s) {missing}")
    feats = group_features(table, self_reports)
    y = np.array([table.performance[g] for g in groups])
    reports = {}
    for source, per_group in feats.items():
        absent = [g for g in groups if g not in per_group]
        if absent:
            raise ValidationError(f"no trait data for group(s) {absent}")
        big5 = np.array([per_group[g] for g in groups])
        reports[(source, "big5")] = loo_cv(big5, y, cfg)
        reports[(source, "meta")] = loo_cv(meta_matrix(big5, normalize=normalize_meta), y, cfg)
    return reports
