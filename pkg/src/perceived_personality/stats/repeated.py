"""Within-subject analyses: sphericity, repeated-measures ANOVA, t-tests, Holm."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import stats as sps

from ..errors import ValidationError
from .agreement import _welch_df


@dataclass(frozen=True)
class SphericityResult:
    mauchly_w: float
    chi2: float
    df: int
    p_value: float
    gg_epsilon: float

    def to_dict(self) -> dict:
        d = asdict(self)
        if math.isinf(d["chi2"]):
            d["chi2"] = "inf"
        return d


@dataclass(frozen=True)
class AnovaResult:
    f: float
    df1: float
    df2: float
    p_value: float
    epsilon_applied: float | None = None
    ss_conditions: float = 0.0
    ss_subjects: float = 0.0
    ss_error: float = 0.0
    degenerate: bool = False

    def to_dict(self) -> dict:
        d = asdict(self)
        if math.isinf(d["f"]):
            d["f"] = "inf"
        return d


@dataclass(frozen=True)
class TTestResult:
    t: float
    df: float
    p_value: float
    paired: bool
    degenerate: bool = False

    def to_dict(self) -> dict:
        d = asdict(self)
        if math.isinf(d["t"]):
            d["t"] = "inf" if d["t"] > 0 else "-inf"
        return d


def _matrix(data, min_rows=2, min_cols=2) -> np.ndarray:
    m = np.asarray(data, dtype=float)
    if m.ndim != 2:
        raise ValidationError("data must be a 2-D subjects x conditions matrix")
    if m.shape[0] < min_rows or m.shape[1] < min_cols:
        raise ValidationError(f"need at least {min_rows}x{min_cols}, got {m.shape[0]}x{m.shape[1]}")
    if not np.all(np.isfinite(m)):
        raise ValidationError("data must be complete and finite")
    return m


def orthonormal_contrasts(k: int) -> np.ndarray:
    """k x (k-1) normalized Helmert contrasts (columns orthonormal, sum zero)."""
    c = np.zeros((k, k - 1))
    for j in range(1, k):
        c[:j, j - 1] = 1.0
        c[j, j - 1] = -float(j)
        c[:, j - 1] /= math.sqrt(j * (j + 1))
    return c


def contrast_covariance(data) -> np.ndarray:
    m = np.asarray(data, dtype=float)
    c = orthonormal_contrasts(m.shape[1])
    return np.atleast_2d(np.cov(m @ c, rowvar=False))


def gg_epsilon(s_c: np.ndarray) -> float:
    """Greenhouse-Geisser epsilon from the contrast covariance eigenvalues."""
    p = s_c.shape[0]
    lam = np.clip(np.linalg.eigvalsh(s_c), 0.0, None)
    sq = float((lam**2).sum())
    if sq == 0.0:
        return 1.0
    eps = float(lam.sum()) ** 2 / (p * sq)
    return min(max(eps, 1.0 / p), 1.0)


def mauchly_gg(data) -> SphericityResult:
    """Mauchly's sphericity test and the Greenhouse-Geisser epsilon.

    Uses the Box chi-square approximation
    ``-(n - 1 - (2p^2 + p + 2) / (6p)) ln W`` with ``p = k - 1`` and
    ``df = k(k-1)/2 - 1``. A singular contrast covariance gives ``W = 0``
    and ``p_value = 0``.
    """
    m = _matrix(data, min_rows=2, min_cols=3)
    n, k = m.shape
    if n <= k:
        raise ValidationError(f"Mauchly test needs n > k, got n={n}, k={k}")
    p = k - 1
    s_c = contrast_covariance(m)
    eps = gg_epsilon(s_c)
    lam = np.clip(np.linalg.eigvalsh(s_c), 0.0, None)
    trace = float(lam.sum())
    df = k * (k - 1) // 2 - 1
    if trace == 0.0:
        return SphericityResult(1.0, 0.0, df, 1.0, 1.0)
    # Eigenvalues this far below the largest are rounding noise.
    if lam.min() <= 1e-12 * lam.max():
        return SphericityResult(0.0, math.inf, df, 0.0, eps)
    log_w = float(np.log(lam).sum()) - p * math.log(trace / p)
    w = min(math.exp(log_w), 1.0)
    factor = (2 * p * p + p + 2) / (6 * p)
    chi2 = max(-(n - 1 - factor) * log_w, 0.0)
    pval = float(sps.chi2.sf(chi2, df))
    return SphericityResult(w, chi2, df, pval, eps)


def rm_anova(data, correction: str = "none") -> AnovaResult:
    """One-way repeated-measures ANOVA on an n subjects x k conditions matrix.

    ``correction="greenhouse_geisser"`` multiplies both degrees of freedom
    by epsilon before computing the p-value.
    """
    if correction not in ("none", "greenhouse_geisser"):
        raise ValidationError(f"unknown correction {correction!r}")
    m = _matrix(data)
    n, k = m.shape
    grand = m.mean()
    ss_total = float(((m - grand) ** 2).sum())
    ss_cond = n * float(((m.mean(axis=0) - grand) ** 2).sum())
    ss_subj = k * float(((m.mean(axis=1) - grand) ** 2).sum())
    resid = m - m.mean(axis=1, keepdims=True) - m.mean(axis=0, keepdims=True) + grand
    ss_err = float((resid**2).sum())
    df1 = float(k - 1)
    df2 = float((n - 1) * (k - 1))
    eps = None
    if correction == "greenhouse_geisser":
        eps = gg_epsilon(contrast_covariance(m))
        df1 *= eps
        df2 *= eps
    tiny = 1e-12 * max(ss_total, 1e-300)
    if ss_err <= tiny:
        if ss_cond <= tiny:
            return AnovaResult(0.0, df1, df2, 1.0, eps, 0.0, ss_subj, 0.0, degenerate=True)
        return AnovaResult(math.inf, df1, df2, 0.0, eps, ss_cond, ss_subj, 0.0, degenerate=True)
    f = (ss_cond / (k - 1)) / (ss_err / ((n - 1) * (k - 1)))
    p = float(sps.f.sf(f, df1, df2))
    return AnovaResult(f, df1, df2, p, eps, ss_cond, ss_subj, ss_err)


def _two_sided(t: float, df: float) -> float:
    return float(min(1.0, 2.0 * sps.t.sf(abs(t), df)))


def _degenerate_t(mean_diff: float, df: float, paired: bool) -> TTestResult:
    if mean_diff == 0.0:
        return TTestResult(0.0, df, 1.0, paired, degenerate=True)
    return TTestResult(math.copysign(math.inf, mean_diff), df, 0.0, paired, degenerate=True)


def welch_t(x, y) -> TTestResult:
    """Two-sided Welch t-test with Welch-Satterthwaite degrees of freedom."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) < 2 or len(y) < 2:
        raise ValidationError("each sample needs at least 2 observations")
    vx = float(x.var(ddof=1)) / len(x)
    vy = float(y.var(ddof=1)) / len(y)
    diff = float(x.mean() - y.mean())
    df = _welch_df(vx, vy, len(x), len(y))
    se = math.sqrt(vx + vy)
    if se == 0.0:
        return _degenerate_t(diff, df, False)
    t = diff / se
    return TTestResult(t, df, _two_sided(t, df), False)


def paired_t(x, y) -> TTestResult:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) != len(y):
        raise ValidationError(f"paired samples differ in length: {len(x)} vs {len(y)}")
    if len(x) < 2:
        raise ValidationError("need at least 2 pairs")
    d = x - y
    df = float(len(d) - 1)
    mean = float(d.mean())
    sd = float(d.std(ddof=1))
    if sd == 0.0:
        return _degenerate_t(mean, df, True)
    t = mean / (sd / math.sqrt(len(d)))
    return TTestResult(t, df, _two_sided(t, df), True)


def holm_adjust(p) -> list[float]:
    """Holm-Bonferroni step-down adjusted p-values, in input order."""
    p = np.asarray(p, dtype=float).reshape(-1)
    if np.any(~np.isfinite(p)) or np.any(p < 0) or np.any(p > 1):
        raise ValidationError("p-values must lie in [0, 1]")
    m = len(p)
    order = np.argsort(p, kind="stable")
    scaled = np.minimum(1.0, (m - np.arange(m)) * p[order])
    adjusted = np.maximum.accumulate(scaled)
    out = np.empty(m)
    out[order] = adjusted
    return out.tolist()
