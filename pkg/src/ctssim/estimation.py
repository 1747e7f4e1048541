"""Difference-in-means estimation with HC2-robust standard errors.

The average treatment effect is estimated by least squares of the outcome
on the assignment indicator; the slope equals the difference in arm means.
For a binary regressor the HC2 sandwich variance reduces exactly to the
two-sample Neyman form s1^2/n1 + s0^2/n0 with (n-1)-denominator arm
variances, which is what we compute.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats


class InferenceUndefinedError(ValueError):
    """Raised when an arm has too few units for a variance estimate."""


@dataclass(frozen=True)
class EstimateResult:
    estimate: float
    se: float
    ci_low: float
    ci_high: float
    p_value: float
    n_treated: int
    n_control: int
    degenerate: bool = False  # both arms had zero variance


def estimate_ols_hc2(y, z, alpha: float = 0.05, df: str = "normal") -> EstimateResult:
    """Difference in arm means with HC2 standard error, CI, and p-value.

    Args:
        y: outcome vector.
        z: binary assignment vector (1 = treated).
        alpha: CI level is 1 - alpha.
        df: "normal" for z critical values (default), "welch" for a t
            reference with Welch-Satterthwaite degrees of freedom.
    """
    y = np.asarray(y, dtype=float)
    z = np.asarray(z)
    if y.shape != z.shape or y.ndim != 1:
        raise ValueError("y and z must be matching vectors")
    if not np.isin(z, (0, 1)).all():
        raise ValueError("z must be binary")
    if df not in ("normal", "welch"):
        raise ValueError(f"unknown df rule {df!r}")
    treated = z == 1
    n1, n0 = int(treated.sum()), int((~treated).sum())
    if n1 < 2 or n0 < 2:
        raise InferenceUndefinedError(
            f"need >= 2 units per arm for HC2 inference (treated={n1}, control={n0})"
        )
    y1, y0 = y[treated], y[~treated]
    tau = float(y1.mean() - y0.mean())
    v1, v0 = float(y1.var(ddof=1)), float(y0.var(ddof=1))
    se = float(np.sqrt(v1 / n1 + v0 / n0))

    if se == 0.0:
        p = 1.0 if tau == 0.0 else 0.0
        return EstimateResult(tau, 0.0, tau, tau, p, n1, n0, degenerate=True)

    t_stat = tau / se
    if df == "welch":
        num = (v1 / n1 + v0 / n0) ** 2
        den = (v1 / n1) ** 2 / (n1 - 1) + (v0 / n0) ** 2 / (n0 - 1)
        dof = num / den
        crit = float(stats.t.ppf(1.0 - alpha / 2.0, dof))
        p = float(2.0 * stats.t.sf(abs(t_stat), dof))
    else:
        crit = float(stats.norm.ppf(1.0 - alpha / 2.0))
        p = float(2.0 * stats.norm.sf(abs(t_stat)))
    return EstimateResult(tau, se, tau - crit * se, tau + crit * se, p, n1, n0)


def reject_null(result: EstimateResult, alpha: float = 0.05) -> bool:
    """Two-sided test decision: p strictly below alpha."""
    if not (0.0 < alpha < 1.0):
        raise ValueError("alpha must be in (0, 1)")
    return result.p_value < alpha
