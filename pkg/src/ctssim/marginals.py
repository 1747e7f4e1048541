"""Single-act zero-inflated count distributions and maximum-likelihood fitting.

A marginal is a two-part mixture: with probability ``zero_prob`` the count is
a structural zero (a "nonviolent" relationship), otherwise it is drawn from a
Poisson or negative-binomial count distribution with mean ``rate``.

Negative-binomial parameterization: mean ``rate``, dispersion ``dispersion``,
variance ``rate + rate**2 / dispersion``.  As ``dispersion`` grows the
negative binomial converges to the Poisson with the same mean.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize, stats

ZIP = "zip"
ZINB = "zinb"
FAMILIES = (ZIP, ZINB)

# Interval-censored survey categories: 0 -> {0}, 1 -> {1}, 2 -> {2..4}, 3 -> {5+}
N_CATEGORIES = 4

_MAX_EM_ITER = 500
_LOGLIK_TOL = 1e-8


class DegenerateDataError(ValueError):
    """Raised when data cannot identify the requested parameters."""


@dataclass(frozen=True)
class MarginalParams:
    """Parameters of a single-act zero-inflated count distribution.

    Attributes:
        family: "zip" (zero-inflated Poisson) or "zinb" (zero-inflated
            negative binomial).
        rate: mean count among the non-structural-zero ("violent")
            subpopulation; must be positive.
        zero_prob: probability of a structural zero, in [0, 1].
        dispersion: negative-binomial dispersion, required iff family is
            "zinb"; variance among the violent subpopulation is
            rate + rate**2 / dispersion.
    """

    family: str
    rate: float
    zero_prob: float
    dispersion: float | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}; expected one of {FAMILIES}")
        if not (math.isfinite(self.rate) and self.rate > 0):
            raise ValueError(f"rate must be positive and finite, got {self.rate}")
        if not (0.0 <= self.zero_prob <= 1.0):
            raise ValueError(f"zero_prob must be in [0, 1], got {self.zero_prob}")
        if self.family == ZINB:
            if self.dispersion is None or not (
                math.isfinite(self.dispersion) and self.dispersion > 0
            ):
                raise ValueError(f"zinb requires positive dispersion, got {self.dispersion}")
        elif self.dispersion is not None:
            raise ValueError("dispersion is only meaningful for family 'zinb'")

    @property
    def mean(self) -> float:
        return (1.0 - self.zero_prob) * self.rate

    @property
    def variance(self) -> float:
        p, lam = self.zero_prob, self.rate
        if self.family == ZIP:
            count_var = lam
        else:
            count_var = lam + lam * lam / self.dispersion
        return (1.0 - p) * count_var + p * (1.0 - p) * lam * lam

    def count_dist(self):
        """Frozen scipy distribution of the non-zero-inflated count part."""
        if self.family == ZIP:
            return stats.poisson(self.rate)
        k = self.dispersion
        return stats.nbinom(k, k / (k + self.rate))


@dataclass(frozen=True)
class FitResult:
    """Outcome of a maximum-likelihood fit.

    ``degenerate`` marks data with no positive counts: ``zero_prob`` is pinned
    at 1 and ``rate`` is NOT identified (the reported value is a placeholder).
    ``boundary_flag`` marks fits with zero_prob > 0.999 or fewer than 5
    positive observations, where estimates are unreliable.
    """

    params: MarginalParams
    loglik: float
    converged: bool
    degenerate: bool
    boundary_flag: bool
    n_obs: float
    n_iter: int


def _as_counts(values) -> np.ndarray:
    y = np.asarray(values)
    if y.size == 0:
        raise ValueError("empty sample")
    if not np.issubdtype(y.dtype, np.integer):
        yi = np.asarray(values, dtype=np.int64)
        if not np.array_equal(yi, y):
            raise ValueError("counts must be integers")
        y = yi
    if np.any(y < 0):
        raise ValueError("counts must be non-negative")
    return y.astype(np.int64)


def zi_pmf(params: MarginalParams, y) -> np.ndarray | float:
    """Probability mass at count ``y`` (scalar or array)."""
    ya = np.asarray(y)
    g = params.count_dist().pmf(ya)
    out = params.zero_prob * (ya == 0) + (1.0 - params.zero_prob) * g
    return float(out) if np.isscalar(y) else out


def zi_cdf(params: MarginalParams, y) -> np.ndarray | float:
    """P(Y <= y) for integer ``y`` (scalar or array)."""
    ya = np.asarray(y)
    g = params.count_dist().cdf(ya)
    out = np.where(ya < 0, 0.0, params.zero_prob + (1.0 - params.zero_prob) * g)
    return float(out) if np.isscalar(y) else out


def zi_quantile(params: MarginalParams, u) -> np.ndarray | int:
    """Generalized inverse CDF: smallest count y with cdf(y) >= u.

    ``u`` must lie in [0, 1).
    """
    ua = np.atleast_1d(np.asarray(u, dtype=float))
    if np.any((ua < 0.0) | (ua >= 1.0)):
        raise ValueError("u must be in [0, 1)")
    theta = params.zero_prob
    q = np.zeros(ua.shape, dtype=np.int64)
    if theta < 1.0:
        dist = params.count_dist()
        resid = (ua - theta) / (1.0 - theta)
        above = resid > dist.cdf(0)
        if np.any(above):
            q[above] = dist.ppf(resid[above]).astype(np.int64)
    # scipy's ppf uses its own cdf sweep; nudge so the generalized-inverse
    # definition holds exactly against zi_cdf.
    for _ in range(64):
        low = zi_cdf(params, q) < ua
        if not np.any(low):
            break
        q[low] += 1
    for _ in range(64):
        shrink = (q > 0) & (zi_cdf(params, q - 1) >= ua)
        if not np.any(shrink):
            break
        q[shrink] -= 1
    return int(q[0]) if np.isscalar(u) else q


@functools.lru_cache(maxsize=512)
def _cdf_table_cached(params: MarginalParams, tail_mass: float) -> np.ndarray:
    theta = params.zero_prob
    if theta >= 1.0:
        out = np.array([1.0])
    else:
        dist = params.count_dist()
        y_max = int(dist.isf(tail_mass / (1.0 - theta))) + 1
        y = np.arange(y_max + 1)
        out = theta + (1.0 - theta) * dist.cdf(y)
    out.setflags(write=False)
    return out


def cdf_table(params: MarginalParams, tail_mass: float = 1e-12) -> np.ndarray:
    """CDF values [cdf(0), cdf(1), ...] truncated where the tail is below
    ``tail_mass``.  Entry i is P(Y <= i); the last entry is ~1.

    Used for O(1) inverse-transform sampling via ``np.searchsorted``; cached
    per parameter set (hot path of the joint sampler).  The returned array
    is read-only.
    """
    return _cdf_table_cached(params, tail_mass)


def counts_from_uniforms(table: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Map uniforms in [0, 1) to counts through a cached CDF table."""
    idx = np.searchsorted(table, u, side="left")
    return np.minimum(idx, len(table) - 1).astype(np.int64)


def zi_sample(params: MarginalParams, n: int, rng: np.random.Generator) -> np.ndarray:
    """n i.i.d. draws; deterministic given the generator state."""
    if n < 1:
        raise ValueError("n must be >= 1")
    violent = rng.random(n) >= params.zero_prob
    if params.family == ZIP:
        counts = rng.poisson(params.rate, size=n)
    else:
        k = params.dispersion
        counts = rng.negative_binomial(k, k / (k + params.rate), size=n)
    return np.where(violent, counts, 0).astype(np.int64)


# ---------------------------------------------------------------------------
# Log-likelihoods


def _zip_loglik(values: np.ndarray, weights: np.ndarray, rate: float, zero_prob: float) -> float:
    zero = values == 0
    p0 = zero_prob + (1.0 - zero_prob) * math.exp(-rate)
    ll = np.sum(weights[zero]) * math.log(max(p0, 1e-300))
    pos = ~zero
    if np.any(pos):
        yp = values[pos]
        ll += math.log1p(-zero_prob) * np.sum(weights[pos]) if zero_prob < 1 else -math.inf
        ll += np.sum(weights[pos] * stats.poisson.logpmf(yp, rate))
    return float(ll)


def _zinb_loglik(
    values: np.ndarray, weights: np.ndarray, rate: float, dispersion: float, zero_prob: float
) -> float:
    k = dispersion
    p_nb = k / (k + rate)
    zero = values == 0
    log_g0 = k * math.log(p_nb)
    # log(theta + (1-theta) * g0), stable for tiny components
    if zero_prob <= 0.0:
        log_p0 = log_g0
    elif zero_prob >= 1.0:
        log_p0 = 0.0
    else:
        log_p0 = np.logaddexp(math.log(zero_prob), math.log1p(-zero_prob) + log_g0)
    ll = np.sum(weights[zero]) * log_p0
    pos = ~zero
    if np.any(pos):
        if zero_prob >= 1.0:
            return -math.inf
        ll += math.log1p(-zero_prob) * np.sum(weights[pos])
        ll += np.sum(weights[pos] * stats.nbinom.logpmf(values[pos], k, p_nb))
    return float(ll)


def zi_loglik(params: MarginalParams, values, weights=None) -> float:
    """Weighted log-likelihood of exact counts under ``params``."""
    y = _as_counts(values)
    w = np.ones(y.shape) if weights is None else np.asarray(weights, dtype=float)
    if params.family == ZIP:
        return _zip_loglik(y, w, params.rate, params.zero_prob)
    return _zinb_loglik(y, w, params.rate, params.dispersion, params.zero_prob)


def category_probs(params: MarginalParams) -> np.ndarray:
    """Interval masses of the 4 survey categories: {0}, {1}, {2..4}, {5+}."""
    theta = params.zero_prob
    dist = params.count_dist()
    p0 = theta + (1.0 - theta) * dist.pmf(0)
    p1 = (1.0 - theta) * dist.pmf(1)
    # survival-form difference keeps the {2..4} cell accurate for small rates
    p2 = (1.0 - theta) * (dist.sf(1) - dist.sf(4))
    p3 = (1.0 - theta) * dist.sf(4)
    return np.array([p0, p1, p2, p3])


def censored_loglik(params: MarginalParams, category_counts) -> float:
    """Multinomial log-likelihood of a histogram over the 4 categories."""
    n = np.asarray(category_counts, dtype=float)
    if n.shape != (N_CATEGORIES,):
        raise ValueError(f"expected {N_CATEGORIES} category counts, got shape {n.shape}")
    p = np.maximum(category_probs(params), 1e-300)
    return float(np.sum(n * np.log(p)))


# ---------------------------------------------------------------------------
# Fitting


def _moment_start(values: np.ndarray, weights: np.ndarray) -> tuple[float, float]:
    """(rate, zero_prob) starting values from zero share and positive mean."""
    w_total = np.sum(weights)
    pos = values > 0
    mean_pos = float(np.sum(weights[pos] * values[pos]) / np.sum(weights[pos]))
    rate0 = max(mean_pos, 1e-3)
    p0_hat = float(np.sum(weights[~pos]) / w_total)
    g0 = math.exp(-rate0)
    theta0 = (p0_hat - g0) / (1.0 - g0)
    return rate0, min(max(theta0, 1e-6), 1.0 - 1e-6)


def _fit_zip_em(values: np.ndarray, weights: np.ndarray) -> tuple[MarginalParams, float, bool, int]:
    rate, theta = _moment_start(values, weights)
    zero = values == 0
    w_total = float(np.sum(weights))
    sum_y = float(np.sum(weights * values))
    ll_prev = _zip_loglik(values, weights, rate, theta)
    converged = False
    it = 0
    for it in range(1, _MAX_EM_ITER + 1):
        # E-step: posterior probability each zero is structural
        denom = theta + (1.0 - theta) * math.exp(-rate)
        resp = theta / denom if denom > 0 else 1.0
        w_struct = float(np.sum(weights[zero])) * resp
        # M-step
        theta = w_struct / w_total
        w_count = w_total - w_struct
        rate = sum_y / w_count if w_count > 0 else rate
        ll = _zip_loglik(values, weights, rate, theta)
        if ll - ll_prev < _LOGLIK_TOL:
            converged = True
            ll_prev = ll
            break
        ll_prev = ll
    params = MarginalParams(ZIP, rate, min(max(theta, 0.0), 1.0))
    return params, ll_prev, converged, it


_LOGIT_BOUND = 30.0


def _fit_transformed(
    objective, x0: np.ndarray, bounds, family: str
) -> tuple[MarginalParams, float, bool, int]:
    """Minimize a negative log-likelihood over transformed parameters.

    Parameter vector is (log rate, logit zero_prob) for ZIP and
    (log rate, log dispersion, logit zero_prob) for ZINB.
    """
    best = None
    for start in x0:
        res = optimize.minimize(
            objective,
            np.asarray(start, dtype=float),
            method="L-BFGS-B",
            bounds=bounds,
            options={"ftol": 1e-12, "gtol": 1e-10, "maxiter": _MAX_EM_ITER},
        )
        if best is None or res.fun < best.fun:
            best = res
    x = best.x
    rate = math.exp(x[0])
    if family == ZIP:
        theta = 1.0 / (1.0 + math.exp(-x[1]))
        params = MarginalParams(ZIP, rate, theta)
    else:
        disp = math.exp(x[1])
        theta = 1.0 / (1.0 + math.exp(-x[2]))
        params = MarginalParams(ZINB, rate, theta, dispersion=disp)
    return params, -float(best.fun), bool(best.success), int(best.nit)


def _boundary_flag(params: MarginalParams, n_positive: float) -> bool:
    return params.zero_prob > 0.999 or n_positive < 5


def fit_mle_exact(values, family: str = ZIP, weights=None) -> FitResult:
    """Maximum-likelihood fit of a zero-inflated model to exact counts.

    All-zero data yield a degenerate result (zero_prob = 1, rate not
    identified) rather than a silent estimate.  Optional ``weights`` scale
    each observation's log-likelihood contribution.
    """
    if family not in FAMILIES:
        raise ValueError(f"unknown family {family!r}")
    y = _as_counts(values)
    w = np.ones(y.shape) if weights is None else np.asarray(weights, dtype=float)
    if w.shape != y.shape or np.any(w < 0) or np.sum(w) <= 0:
        raise ValueError("weights must be non-negative with positive total")
    n_pos = float(np.sum(w[y > 0]))
    if n_pos == 0:
        params = MarginalParams(family, 1.0, 1.0, dispersion=1.0 if family == ZINB else None)
        return FitResult(params, 0.0, True, True, True, float(np.sum(w)), 0)

    if family == ZIP:
        params, ll, converged, n_iter = _fit_zip_em(y, w)
    else:
        rate0, theta0 = _moment_start(y, w)
        pos = y > 0
        mean_pos = float(np.sum(w[pos] * y[pos]) / np.sum(w[pos]))
        var_pos = float(np.sum(w[pos] * (y[pos] - mean_pos) ** 2) / np.sum(w[pos]))
        disp0 = rate0 * rate0 / max(var_pos - rate0, rate0 * 0.1)
        logit0 = math.log(theta0 / (1.0 - theta0))
        starts = [
            [math.log(rate0), math.log(min(max(disp0, 1e-2), 1e4)), logit0],
            [math.log(rate0), math.log(1e4), logit0],
            [math.log(rate0), 0.0, logit0],
        ]
        bounds = [(-10.0, 15.0), (-10.0, 20.0), (-_LOGIT_BOUND, _LOGIT_BOUND)]

        def nll(x):
            return -_zinb_loglik(y, w, math.exp(x[0]), math.exp(x[1]), _expit(x[2]))

        params, ll, converged, n_iter = _fit_transformed(nll, starts, bounds, ZINB)

    return FitResult(params, ll, converged, False, _boundary_flag(params, n_pos), float(np.sum(w)), n_iter)


def _expit(x: float) -> float:
    return 1.0 / (1.0 + math.exp(-x)) if x > -700 else 0.0


def fit_mle_censored(category_counts, family: str = ZIP) -> FitResult:
    """Fit a zero-inflated model to an interval-censored category histogram.

    ``category_counts`` is a length-4 histogram over the survey categories
    (counts may be non-integer when rows are weighted).  A histogram with all
    mass in category 0 is degenerate.
    """
    if family not in FAMILIES:
        raise ValueError(f"unknown family {family!r}")
    n = np.asarray(category_counts, dtype=float)
    if n.shape != (N_CATEGORIES,):
        raise ValueError(f"expected {N_CATEGORIES} category counts")
    if np.any(n < 0) or np.sum(n) <= 0:
        raise ValueError("category counts must be non-negative with positive total")
    n_pos = float(np.sum(n[1:]))
    if n_pos == 0:
        params = MarginalParams(family, 1.0, 1.0, dispersion=1.0 if family == ZINB else None)
        return FitResult(params, 0.0, True, True, True, float(np.sum(n)), 0)

    # start from category midpoints (0, 1, 3, 7) among positives
    mids = np.array([0.0, 1.0, 3.0, 7.0])
    mean_pos = float(np.sum(n * mids) / n_pos)
    rate0 = max(mean_pos, 1e-3)
    p0_hat = float(n[0] / np.sum(n))
    g0 = math.exp(-rate0)
    theta0 = min(max((p0_hat - g0) / (1.0 - g0), 1e-6), 1.0 - 1e-6)
    logit0 = math.log(theta0 / (1.0 - theta0))

    if family == ZIP:
        starts = [[math.log(rate0), logit0], [math.log(rate0 * 2), logit0]]
        bounds = [(-10.0, 15.0), (-_LOGIT_BOUND, _LOGIT_BOUND)]

        def nll(x):
            p = MarginalParams(ZIP, math.exp(x[0]), _expit(x[1]))
            return -censored_loglik(p, n)

    else:
        starts = [
            [math.log(rate0), 0.0, logit0],
            [math.log(rate0), math.log(1e4), logit0],
            [math.log(rate0 * 2), math.log(0.3), logit0],
        ]
        bounds = [(-10.0, 15.0), (-10.0, 20.0), (-_LOGIT_BOUND, _LOGIT_BOUND)]

        def nll(x):
            p = MarginalParams(ZINB, math.exp(x[0]), _expit(x[2]), dispersion=math.exp(x[1]))
            return -censored_loglik(p, n)

    params, ll, converged, n_iter = _fit_transformed(nll, starts, bounds, family)
    return FitResult(params, ll, converged, False, _boundary_flag(params, n_pos), float(np.sum(n)), n_iter)
