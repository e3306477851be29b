"""PERMANOVA on Euclidean trait vectors with a pseudo F-ratio.

Observations are points in trait space, grouped by label. The statistic is

    F = (SS_A / (a - 1)) / (SS_W / (N - a))

with SS_W the summed squared distance of each point to its group mean and
SS_A the size-weighted squared distance of the group means to the grand
mean. Significance comes from label permutation, either by full
enumeration of distinct label assignments or by Monte-Carlo draws.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from ..errors import DegenerateError, ValidationError

EXACT_LIMIT = 100_000
# Relative slack when comparing permuted F against the observed F, so that
# mathematically tied partitions count as ties despite rounding.
TIE_RTOL = 1e-9
# Block size for vectorized evaluation of permuted statistics.
_BLOCK = 2048


@dataclass(frozen=True)
class PseudoF:
    f: float
    ss_between: float
    ss_within: float
    degenerate: bool = False


@dataclass(frozen=True)
class PermanovaResult:
    f_observed: float
    p_value: float
    n_permutations: int
    permutation_f: np.ndarray = field(repr=False)
    ss_between: float
    ss_within: float
    df_between: int
    df_within: int
    exact: bool = False
    degenerate: bool = False

    def to_dict(self, include_permutations: bool = False) -> dict:
        out = {
            "f_observed": _json_float(self.f_observed),
            "p_value": self.p_value,
            "n_permutations": self.n_permutations,
            "ss_between": self.ss_between,
            "ss_within": self.ss_within,
            "df_between": self.df_between,
            "df_within": self.df_within,
            "exact": self.exact,
            "degenerate": self.degenerate,
        }
        if include_permutations:
            out["permutation_f"] = [_json_float(x) for x in self.permutation_f]
        return out


def _json_float(x: float):
    return x if math.isfinite(x) else ("inf" if x > 0 else "-inf")


def _prepare(points, labels):
    X = np.asarray(points, dtype=float)
    if X.ndim != 2:
        raise ValidationError(f"points must be a 2-D array (N, d), got shape {X.shape}")
    if len(labels) != X.shape[0]:
        raise ValidationError(f"{len(labels)} labels for {X.shape[0]} points")
    if not np.all(np.isfinite(X)):
        raise ValidationError("points must be finite")
    uniq = sorted(set(labels), key=str)
    if len(uniq) < 2:
        raise ValidationError("need at least 2 groups")
    index = {g: i for i, g in enumerate(uniq)}
    codes = np.array([index[g] for g in labels], dtype=np.int64)
    if X.shape[0] <= len(uniq):
        raise ValidationError(f"need N > a, got N={X.shape[0]}, a={len(uniq)}")
    return X, codes, len(uniq)


def _as_points(points):
    if isinstance(points, np.ndarray):
        return points
    rows = [np.asarray(p, dtype=float).reshape(-1) for p in points]
    dims = {len(r) for r in rows}
    if len(dims) > 1:
        raise ValidationError(f"points differ in dimension: {sorted(dims)}")
    return np.array(rows)


def pseudo_f(points, labels) -> PseudoF:
    """Pseudo F-ratio with both sums of squares computed directly.

    If the within-group sum of squares is zero while groups differ, F is
    reported as ``inf`` with ``degenerate=True``. If there is no variance
    at all, :class:`DegenerateError` is raised.
    """
    X, codes, a = _prepare(_as_points(points), labels)
    n = X.shape[0]
    grand = X.mean(axis=0)
    ss_w = 0.0
    ss_a = 0.0
    for g in range(a):
        members = X[codes == g]
        centroid = members.mean(axis=0)
        ss_w += float(((members - centroid) ** 2).sum())
        ss_a += len(members) * float(((centroid - grand) ** 2).sum())
    ss_t = float(((X - grand) ** 2).sum())
    scale = max(ss_t, 0.0)
    if scale == 0.0 or (ss_a <= 1e-12 * scale and ss_w <= 1e-12 * scale):
        raise DegenerateError("no variance: all points identical")
    if ss_w <= 1e-12 * scale:
        return PseudoF(math.inf, ss_a, 0.0, degenerate=True)
    f = (ss_a / (a - 1)) / (ss_w / (n - a))
    return PseudoF(f, ss_a, ss_w)


def _batch_f(Xc: np.ndarray, code_rows: np.ndarray, a: int, ss_t: float) -> np.ndarray:
    """F for many label assignments at once; ``Xc`` is grand-mean centered."""
    n = Xc.shape[0]
    onehot = np.zeros((code_rows.shape[0], a, n))
    np.put_along_axis(onehot, code_rows[:, None, :], 1.0, axis=1)
    sizes = onehot.sum(axis=2)
    sums = onehot @ Xc
    ss_a = ((sums**2).sum(axis=2) / sizes).sum(axis=1)
    ss_w = ss_t - ss_a
    with np.errstate(divide="ignore", invalid="ignore"):
        f = (ss_a / (a - 1)) / (ss_w / (n - a))
    f[ss_w <= 1e-12 * ss_t] = math.inf
    return f


def n_assignments(codes) -> int:
    """Number of distinct label assignments (multinomial coefficient)."""
    counts = Counter(np.asarray(codes).tolist())
    total = math.factorial(sum(counts.values()))
    for c in counts.values():
        total //= math.factorial(c)
    return total


def distinct_assignments(codes):
    """Yield every distinct arrangement of the label multiset, lexicographic."""
    counts = Counter(np.asarray(codes).tolist())
    keys = sorted(counts)
    n = len(codes)
    current = [0] * n

    def rec(pos):
        if pos == n:
            yield tuple(current)
            return
        for k in keys:
            if counts[k]:
                counts[k] -= 1
                current[pos] = k
                yield from rec(pos + 1)
                counts[k] += 1

    yield from rec(0)


def permutation_codes(codes: np.ndarray, seed: int, index: int) -> np.ndarray:
    """The ``index``-th Monte-Carlo relabeling for ``seed``.

    Every permutation has its own RNG stream, so any subset of indices can
    be computed independently and in any order.
    """
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))
    out = codes.copy()
    rng.shuffle(out)
    return out


def permanova(
    points,
    labels,
    n_permutations: int = 10_000,
    seed: int = 0,
    mode: str = "auto",
) -> PermanovaResult:
    """Permutation test of group separation on the pseudo F-ratio.

    Parameters
    ----------
    points : array_like, shape (N, d)
    labels : sequence of hashable
        Group label per point.
    n_permutations : int
        Monte-Carlo draws. Ignored in exact mode, where every distinct
        label assignment other than the observed one is enumerated.
    seed : int
    mode : {"auto", "exact", "monte_carlo"}
        ``auto`` enumerates when there are at most 100,000 distinct
        assignments.

    Returns
    -------
    PermanovaResult
        ``p = (1 + #{F_perm >= F_obs}) / (1 + n_permutations)``. In exact
        mode this equals the fraction of all assignments with
        ``F >= F_obs``.
    """
    if mode not in ("auto", "exact", "monte_carlo"):
        raise ValidationError(f"unknown mode {mode!r}")
    if n_permutations < 1:
        raise ValidationError("n_permutations must be >= 1")
    X = _as_points(points)
    obs = pseudo_f(X, labels)
    X, codes, a = _prepare(X, labels)
    n = X.shape[0]
    Xc = X - X.mean(axis=0)
    ss_t = float((Xc**2).sum())

    total = n_assignments(codes)
    exact = mode == "exact" or (mode == "auto" and total <= EXACT_LIMIT)
    if exact:
        observed = tuple(codes.tolist())
        rows = [r for r in distinct_assignments(codes) if r != observed]
        perm_f = np.concatenate(
            [
                _batch_f(Xc, np.array(rows[i : i + _BLOCK], dtype=np.int64), a, ss_t)
                for i in range(0, len(rows), _BLOCK)
            ]
        ) if rows else np.zeros(0)
        n_perm = len(rows)
    else:
        perm_f = np.empty(n_permutations)
        for start in range(0, n_permutations, _BLOCK):
            stop = min(start + _BLOCK, n_permutations)
            block = np.stack([permutation_codes(codes, seed, i) for i in range(start, stop)])
            perm_f[start:stop] = _batch_f(Xc, block, a, ss_t)
        n_perm = n_permutations

    if math.isinf(obs.f):
        hits = int(np.count_nonzero(np.isinf(perm_f)))
    else:
        hits = int(np.count_nonzero(perm_f >= obs.f * (1.0 - TIE_RTOL)))
    p = (1 + hits) / (1 + n_perm)
    perm_f.setflags(write=False)
    return PermanovaResult(
        f_observed=obs.f,
        p_value=p,
        n_permutations=n_perm,
        permutation_f=perm_f,
        ss_between=obs.ss_between,
        ss_within=obs.ss_within,
        df_between=a - 1,
        df_within=n - a,
        exact=exact,
        degenerate=obs.degenerate,
    )


def permutation_histogram(result: PermanovaResult, bins: int = 50) -> dict:
    """Plot-ready histogram of the permutation distribution.

    Infinite statistics (zero within-group spread) are counted separately.
    """
    f = np.asarray(result.permutation_f)
    finite = f[np.isfinite(f)]
    upper = max(float(finite.max()) if finite.size else 1.0, result.f_observed if math.isfinite(result.f_observed) else 0.0)
    counts, edges = np.histogram(finite, bins=bins, range=(0.0, upper if upper > 0 else 1.0))
    return {
        "bin_edges": edges.tolist(),
        "counts": counts.tolist(),
        "n_infinite": int(f.size - finite.size),
        "f_observed": _json_float(result.f_observed),
    }
