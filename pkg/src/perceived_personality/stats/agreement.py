"""Rater agreement: ICC(2,k) and two one-sided tests for equivalence."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import stats as sps

from ..errors import DegenerateError, ValidationError


@dataclass(frozen=True)
class IccResult:
    icc: float
    ms_rows: float
    ms_cols: float
    ms_error: float
    k: int
    n: int

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class TostResult:
    bound: float
    t_lower: float
    t_upper: float
    p_lower: float
    p_upper: float
    equivalent: bool
    mean_diff: float
    df: float
    paired: bool
    alpha: float
    degenerate: bool = False

    def to_dict(self) -> dict:
        d = asdict(self)
        for key in ("t_lower", "t_upper", "df"):
            if not math.isfinite(d[key]):
                d[key] = "inf" if d[key] > 0 else ("-inf" if d[key] < 0 else "nan")
        return d


def two_way_mean_squares(m) -> tuple[float, float, float]:
    """Mean squares for rows, columns and residual of an n x k table."""
    m = np.asarray(m, dtype=float)
    n, k = m.shape
    grand = m.mean()
    row_means = m.mean(axis=1)
    col_means = m.mean(axis=0)
    ss_rows = k * float(((row_means - grand) ** 2).sum())
    ss_cols = n * float(((col_means - grand) ** 2).sum())
    resid = m - row_means[:, None] - col_means[None, :] + grand
    ss_err = float((resid**2).sum())
    return ss_rows / (n - 1), ss_cols / (k - 1), ss_err / ((n - 1) * (k - 1))


def icc2k(m) -> IccResult:
    """ICC(2,k): two-way random effects, reliability of the k-rater mean.

    ``m`` is an ``n`` subjects by ``k`` raters matrix without missing
    cells.

    ``ICC = (MS_R - MS_E) / (MS_R + (MS_C - MS_E) / n)``
    """
    m = np.asarray(m, dtype=float)
    if m.ndim != 2:
        raise ValidationError("rating matrix must be 2-D (subjects x raters)")
    n, k = m.shape
    if n < 2 or k < 2:
        raise ValidationError(f"need n >= 2 subjects and k >= 2 raters, got {n}x{k}")
    if np.isnan(m).any():
        missing = [tuple(int(i) for i in ij) for ij in np.argwhere(np.isnan(m))]
        raise ValidationError(f"missing cells at (subject, rater) {missing}")
    if not np.all(np.isfinite(m)):
        raise ValidationError("ratings must be finite")
    msr, msc, mse = two_way_mean_squares(m)
    scale = max(msr, msc, mse)
    # Cancellation noise at the level of the data's magnitude is zero.
    tiny = 1e-13 * max(scale, float(np.abs(m).max()) ** 2)
    msc = 0.0 if msc <= tiny else msc
    mse = 0.0 if mse <= tiny else mse
    msr = 0.0 if msr <= tiny else msr
    denom = msr + (msc - mse) / n
    if denom <= 0.0:
        raise DegenerateError(
            f"ICC(2,k) undefined: MS_R + (MS_C - MS_E)/n = {denom:.3g} <= 0"
        )
    icc = (msr - mse) / denom
    return IccResult(icc=min(icc, 1.0), ms_rows=msr, ms_cols=msc, ms_error=mse, k=k, n=n)


def _one_sided(mean_diff, se, bound, df):
    """Lower and upper one-sided statistics and p-values."""
    if se == 0.0:
        lo = mean_diff + bound
        hi = mean_diff - bound
        t_lower = math.copysign(math.inf, lo) if lo != 0 else 0.0
        t_upper = math.copysign(math.inf, hi) if hi != 0 else 0.0
        p_lower = 0.0 if lo > 0 else 1.0
        p_upper = 0.0 if hi < 0 else 1.0
        return t_lower, t_upper, p_lower, p_upper
    t_lower = (mean_diff + bound) / se
    t_upper = (mean_diff - bound) / se
    return t_lower, t_upper, float(sps.t.sf(t_lower, df)), float(sps.t.cdf(t_upper, df))


def tost_equivalence(
    err_model,
    err_rater,
    bound: float,
    alpha: float = 0.05,
    paired: bool = True,
) -> TostResult:
    """Two one-sided t-tests of ``|mu_model - mu_rater| < bound``.

    Paired mode tests the mean of the differences; independent mode uses
    Welch standard errors and degrees of freedom. Equivalence is declared
    when both one-sided p-values fall below ``alpha``.
    """
    x = np.asarray(err_model, dtype=float)
    y = np.asarray(err_rater, dtype=float)
    if not (bound > 0 and math.isfinite(bound)):
        raise ValidationError(f"bound must be positive, got {bound!r}")
    if not 0 < alpha < 1:
        raise ValidationError(f"alpha must lie in (0, 1), got {alpha!r}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValidationError("errors must be finite")
    if paired:
        if len(x) != len(y):
            raise ValidationError(f"paired TOST needs equal lengths, got {len(x)} and {len(y)}")
        if len(x) < 2:
            raise ValidationError("need at least 2 pairs")
        d = x - y
        mean_diff = float(d.mean())
        se = float(d.std(ddof=1)) / math.sqrt(len(d))
        df = float(len(d) - 1)
    else:
        if len(x) < 2 or len(y) < 2:
            raise ValidationError("need at least 2 observations per sample")
        mean_diff = float(x.mean() - y.mean())
        vx = float(x.var(ddof=1)) / len(x)
        vy = float(y.var(ddof=1)) / len(y)
        se = math.sqrt(vx + vy)
        df = _welch_df(vx, vy, len(x), len(y))
    # Spread below rounding level of the data is treated as none.
    if se <= 1e-14 * max(1.0, float(np.abs(x).max(initial=0.0)), float(np.abs(y).max(initial=0.0))):
        se = 0.0
    t_lower, t_upper, p_lower, p_upper = _one_sided(mean_diff, se, bound, df)
    return TostResult(
        bound=float(bound),
        t_lower=t_lower,
        t_upper=t_upper,
        p_lower=p_lower,
        p_upper=p_upper,
        equivalent=bool(p_lower < alpha and p_upper < alpha),
        mean_diff=mean_diff,
        df=df,
        paired=paired,
        alpha=alpha,
        degenerate=se == 0.0,
    )


def _welch_df(vx: float, vy: float, nx: int, ny: int) -> float:
    """Welch-Satterthwaite df from per-sample squared standard errors."""
    num = (vx + vy) ** 2
    den = vx**2 / (nx - 1) + vy**2 / (ny - 1)
    if den == 0.0:
        return float(nx + ny - 2)
    return num / den
