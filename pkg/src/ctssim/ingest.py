"""Survey data ingestion, model calibration, and model-file serialization.

Surveys arrive as a delimited text file (comma-separated, UTF-8, header row)
plus a JSON descriptor declaring, for each act column, its label, category
(emotional/physical/sexual), and severity, whether the columns hold raw
counts or the 4-level survey categories, and an optional weight column.

``fit_model`` estimates each act's zero-inflated marginal by maximum
likelihood (exact or interval-censored, per the table's mode) and the
latent correlation matrix pairwise from normal scores, then projects it to
a valid correlation matrix.  ``EmpiricalResampler`` instead bootstraps
whole respondent rows, imputing latent counts inside each reported
category so count-scale effect magnitudes stay meaningful.
"""

from __future__ import annotations

import csv
import json
import os
import tempfile
from dataclasses import dataclass

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.optimize import brentq
from scipy.special import ndtr, ndtri
from scipy.stats import chi2

from . import coding
from .joint import ActSpec, MultiActModel, nearest_psd, validate_acts
from .marginals import (
    FitResult,
    MarginalParams,
    category_probs,
    cdf_table,
    fit_mle_censored,
    fit_mle_exact,
)

MODEL_SCHEMA_VERSION = 1

MISSING_TOKENS = {"", "na", "nan", "none", "null", "."}


class SurveyFormatError(ValueError):
    """Malformed survey file or descriptor."""


@dataclass
class SurveyTable:
    """Validated respondent-by-act response matrix.

    ``values`` holds either raw counts or categories in 0..3 depending on
    ``mode``; rows with any missing act value were dropped and counted in
    ``n_dropped``.
    """

    acts: tuple[ActSpec, ...]
    values: np.ndarray
    mode: str  # "categories" | "counts"
    weights: np.ndarray | None = None
    n_dropped: int = 0
    source: str | None = None

    def __post_init__(self):
        self.acts = validate_acts(self.acts)
        self.values = np.asarray(self.values, dtype=np.int64)
        if self.values.ndim != 2 or self.values.shape[1] != len(self.acts):
            raise ValueError("values must be an n x K matrix matching the act list")
        if self.mode not in ("categories", "counts"):
            raise ValueError(f"mode must be 'categories' or 'counts', got {self.mode!r}")
        if np.any(self.values < 0):
            raise ValueError("responses must be non-negative")
        if self.mode == "categories" and np.any(self.values > coding.MAX_CATEGORY):
            raise ValueError("category responses must lie in 0..3")
        if self.weights is not None:
            self.weights = np.asarray(self.weights, dtype=float)
            if self.weights.shape != (self.values.shape[0],) or np.any(self.weights < 0):
                raise ValueError("weights must be a non-negative length-n vector")

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def n_acts(self) -> int:
        return len(self.acts)

    def categories(self) -> np.ndarray:
        """Responses on the 4-level category scale (categorizing counts)."""
        if self.mode == "categories":
            return self.values
        return coding.categorize(self.values)


def _parse_descriptor(descriptor_path: str) -> dict:
    try:
        with open(descriptor_path, encoding="utf-8") as fh:
            desc = json.load(fh)
    except FileNotFoundError:
        raise SurveyFormatError(f"descriptor file not found: {descriptor_path}") from None
    except json.JSONDecodeError as exc:
        raise SurveyFormatError(f"descriptor is not valid JSON: {exc}") from None
    if desc.get("mode") not in ("categories", "counts"):
        raise SurveyFormatError("descriptor 'mode' must be 'categories' or 'counts'")
    acts = desc.get("acts")
    if not isinstance(acts, list) or not acts:
        raise SurveyFormatError("descriptor 'acts' must be a non-empty list")
    for i, a in enumerate(acts):
        for key in ("column", "label", "category", "severity"):
            if key not in a:
                raise SurveyFormatError(f"descriptor act {i + 1} is missing {key!r}")
    return desc


def read_survey(data_path: str, descriptor_path: str) -> SurveyTable:
    """Read and validate a survey file against its descriptor.

    Rows with any missing act value are dropped (and counted); a
    non-integer cell is a parse error reporting the file line; a category
    outside 0..3 is a validation error naming the row and column.
    """
    desc = _parse_descriptor(descriptor_path)
    acts = tuple(
        ActSpec(i + 1, a["label"], a["category"], a["severity"])
        for i, a in enumerate(desc["acts"])
    )
    columns = [a["column"] for a in desc["acts"]]
    weight_col = desc.get("weight_column")
    max_allowed = coding.MAX_CATEGORY if desc["mode"] == "categories" else None

    rows: list[list[int]] = []
    weights: list[float] = []
    n_dropped = 0
    with open(data_path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SurveyFormatError(f"{data_path}: file is empty") from None
        header = [h.strip() for h in header]
        missing_cols = [c for c in columns if c not in header]
        if missing_cols:
            raise SurveyFormatError(f"{data_path}: header lacks act columns {missing_cols}")
        if weight_col is not None and weight_col not in header:
            raise SurveyFormatError(f"{data_path}: header lacks weight column {weight_col!r}")
        col_idx = [header.index(c) for c in columns]
        w_idx = header.index(weight_col) if weight_col is not None else None

        for line_no, raw in enumerate(reader, start=2):
            if not raw or all(not cell.strip() for cell in raw):
                continue
            if len(raw) < len(header):
                raise SurveyFormatError(
                    f"{data_path}:{line_no}: expected {len(header)} fields, got {len(raw)}"
                )
            cells = [raw[i].strip() for i in col_idx]
            if any(c.lower() in MISSING_TOKENS for c in cells):
                n_dropped += 1
                continue
            parsed = []
            for name, cell in zip(columns, cells):
                try:
                    value = int(cell)
                except ValueError:
                    raise SurveyFormatError(
                        f"{data_path}:{line_no}: column {name!r} has non-integer value {cell!r}"
                    ) from None
                if value < 0:
                    raise SurveyFormatError(
                        f"{data_path}:{line_no}: column {name!r} is negative ({value})"
                    )
                if max_allowed is not None and value > max_allowed:
                    raise SurveyFormatError(
                        f"{data_path}:{line_no}: column {name!r} has category {value} "
                        f"outside 0..{max_allowed}"
                    )
                parsed.append(value)
            if w_idx is not None:
                cell = raw[w_idx].strip()
                if cell.lower() in MISSING_TOKENS:
                    n_dropped += 1
                    continue
                try:
                    weights.append(float(cell))
                except ValueError:
                    raise SurveyFormatError(
                        f"{data_path}:{line_no}: weight column has non-numeric value {cell!r}"
                    ) from None
            rows.append(parsed)

    if not rows:
        raise SurveyFormatError(f"{data_path}: no complete rows")
    return SurveyTable(
        acts=acts,
        values=np.asarray(rows, dtype=np.int64),
        mode=desc["mode"],
        weights=np.asarray(weights) if weight_col is not None else None,
        n_dropped=n_dropped,
        source=os.path.basename(data_path),
    )


def write_survey(table: SurveyTable, data_path: str, descriptor_path: str):
    """Write a table and matching descriptor (inverse of ``read_survey``)."""
    columns = [f"act_{a.index:02d}" for a in table.acts]
    desc = {
        "mode": table.mode,
        "acts": [
            {"column": col, "label": a.label, "category": a.category, "severity": a.severity}
            for col, a in zip(columns, table.acts)
        ],
    }
    if table.weights is not None:
        desc["weight_column"] = "weight"
        columns = columns + ["weight"]
    _atomic_write_text(descriptor_path, json.dumps(desc, indent=2) + "\n")
    lines = [",".join(columns)]
    for i in range(table.n_rows):
        cells = [str(int(v)) for v in table.values[i]]
        if table.weights is not None:
            cells.append(repr(float(table.weights[i])))
        lines.append(",".join(cells))
    _atomic_write_text(data_path, "\n".join(lines) + "\n")


def _atomic_write_text(path: str, text: str):
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# ---------------------------------------------------------------------------
# Latent correlation estimation


def _cell_structure(margin: MarginalParams, mode: str):
    """Cell probabilities, upper latent-normal bounds, and model-implied
    mid-distribution normal scores for one act's observable values."""
    if mode == "categories":
        p = category_probs(margin)
    else:
        table = cdf_table(margin, 1e-10)
        p = np.diff(np.concatenate([[0.0], table]))
    cum = np.cumsum(p)
    cum[-1] = 1.0
    low = np.concatenate([[0.0], cum[:-1]])
    scores = ndtri(np.clip((cum + low) / 2.0, 1e-12, 1.0 - 1e-12))
    bounds = np.where(cum >= 1.0, np.inf, ndtri(np.minimum(cum, 1.0 - 1e-16)))
    return p, bounds, scores


_GL_NODES, _GL_WEIGHTS = leggauss(12)
_Z_LIMIT = 8.5


def _score_corr_theory(rho: float, cell_j, cell_k) -> float:
    """Correlation of the two acts' discretized normal scores implied by a
    Gaussian copula with latent correlation ``rho``."""
    pj, bj, sj = cell_j
    pk, bk, sk = cell_k
    mu_j, mu_k = float(pj @ sj), float(pk @ sk)
    sd_j = float(np.sqrt(pj @ (sj * sj) - mu_j * mu_j))
    sd_k = float(np.sqrt(pk @ (sk * sk) - mu_k * mu_k))
    tau = np.sqrt(max(1.0 - rho * rho, 1e-12))
    lo = np.concatenate([[-_Z_LIMIT], bj[:-1]])
    hi = np.minimum(bj, _Z_LIMIT)
    lo = np.minimum(lo, hi)
    mid, half = (hi + lo) / 2.0, (hi - lo) / 2.0
    nodes = mid[:, None] + half[:, None] * _GL_NODES[None, :]
    weights = half[:, None] * _GL_WEIGHTS[None, :]
    z = nodes.ravel()
    density = np.exp(-0.5 * z * z) / np.sqrt(2.0 * np.pi)
    bk_low = np.concatenate([[-np.inf], bk[:-1]])
    cond = (ndtr((bk[None, :] - rho * z[:, None]) / tau)
            - ndtr((bk_low[None, :] - rho * z[:, None]) / tau)) @ sk
    per_cell = np.sum((density * cond).reshape(nodes.shape) * weights, axis=1)
    cross = float(sj @ per_cell)
    return (cross - mu_j * mu_k) / (sd_j * sd_k)


def _empirical_scores(column: np.ndarray, weights: np.ndarray | None) -> np.ndarray:
    """Normal scores of mid-distribution ranks of one response column."""
    values, inverse = np.unique(column, return_inverse=True)
    if weights is None:
        counts = np.bincount(inverse, minlength=len(values)).astype(float)
    else:
        counts = np.bincount(inverse, weights=weights, minlength=len(values))
    cum = np.cumsum(counts) / counts.sum()
    low = np.concatenate([[0.0], cum[:-1]])
    return ndtri(np.clip((cum + low) / 2.0, 1e-12, 1.0 - 1e-12))[inverse]


def _weighted_corr(a: np.ndarray, b: np.ndarray, weights: np.ndarray | None) -> float:
    w = np.ones(len(a)) if weights is None else weights
    w = w / w.sum()
    am, bm = a - w @ a, b - w @ b
    return float((w * am) @ bm / np.sqrt(((w * am) @ am) * ((w * bm) @ bm)))


_RHO_LIMIT = 0.9995


def latent_correlation_matrix(
    table: SurveyTable,
    margins,
    method: str = "adjusted",
) -> np.ndarray:
    """Pairwise latent-normal correlations of the acts.

    "raw" returns the plain Pearson correlation of mid-rank normal scores;
    it is attenuated by the discreteness of the responses.  "adjusted"
    (default) inverts the score correlation implied by the fitted marginals
    under the Gaussian copula, removing that attenuation.  Degenerate acts
    (zero_prob = 1) get zero correlation.  The result is symmetric but not
    necessarily PSD; project with ``nearest_psd`` before use.
    """
    if method not in ("adjusted", "raw"):
        raise ValueError(f"unknown method {method!r}")
    k = table.n_acts
    margins = tuple(margins)
    if len(margins) != k:
        raise ValueError("need one marginal per act")
    scores = [_empirical_scores(table.values[:, j], table.weights) for j in range(k)]
    degenerate = [m.zero_prob >= 1.0 or np.ptp(table.values[:, j]) == 0 for j, m in enumerate(margins)]
    cells = [
        None if degenerate[j] else _cell_structure(margins[j], table.mode) for j in range(k)
    ]
    sigma = np.eye(k)
    for j in range(k):
        for l in range(j + 1, k):
            if degenerate[j] or degenerate[l]:
                continue
            r_obs = _weighted_corr(scores[j], scores[l], table.weights)
            if method == "raw":
                rho = r_obs
            else:
                def gap(r, _j=j, _l=l):
                    return _score_corr_theory(r, cells[_j], cells[_l]) - r_obs

                if gap(_RHO_LIMIT) <= 0.0:
                    rho = _RHO_LIMIT
                elif gap(-_RHO_LIMIT) >= 0.0:
                    rho = -_RHO_LIMIT
                else:
                    rho = brentq(gap, -_RHO_LIMIT, _RHO_LIMIT, xtol=1e-6)
            sigma[j, l] = sigma[l, j] = float(np.clip(rho, -_RHO_LIMIT, _RHO_LIMIT))
    return sigma


# ---------------------------------------------------------------------------
# Model fitting


@dataclass
class ActFit:
    """Per-act fit diagnostics for the report."""

    label: str
    fit: FitResult
    observed_categories: np.ndarray
    expected_categories: np.ndarray
    chi2_stat: float
    chi2_p: float | None  # None when the fit saturates the category table


@dataclass
class FitReport:
    per_act: list[ActFit]
    sigma_method: str
    n_rows: int
    n_dropped: int
    family: str

    @property
    def loglik(self) -> float:
        return float(sum(a.fit.loglik for a in self.per_act))


def _category_gof(fit: FitResult, observed: np.ndarray) -> tuple[float, float | None]:
    total = observed.sum()
    expected = category_probs(fit.params) * total
    mask = expected > 0
    stat = float(np.sum((observed[mask] - expected[mask]) ** 2 / expected[mask]))
    n_params = 2 if fit.params.family == "zip" else 3
    dof = (coding.MAX_CATEGORY + 1) - 1 - n_params
    p = float(chi2.sf(stat, dof)) if dof >= 1 else None
    return stat, p


def fit_model(table: SurveyTable, family: str = "zip", sigma_method: str = "adjusted"):
    """Calibrate a MultiActModel to a survey table.

    Returns (model, report).  Acts with no positive responses are flagged
    degenerate (zero_prob pinned at 1, rate not identified) and carry zero
    latent correlation.
    """
    if table.n_acts < 2:
        raise ValueError("need at least 2 acts to fit a joint model")
    margins = []
    per_act = []
    for j, act in enumerate(table.acts):
        column = table.values[:, j]
        if table.mode == "counts":
            fit = fit_mle_exact(column, family, weights=table.weights)
            observed = _category_hist(coding.categorize(column), table.weights)
        else:
            observed = _category_hist(column, table.weights)
            fit = fit_mle_censored(observed, family)
        stat, p = _category_gof(fit, observed)
        margins.append(fit.params)
        per_act.append(ActFit(act.label, fit, observed, category_probs(fit.params) * observed.sum(), stat, p))
    sigma = latent_correlation_matrix(table, margins, method=sigma_method)
    model = MultiActModel(table.acts, tuple(margins), nearest_psd(sigma))
    report = FitReport(per_act, sigma_method, table.n_rows, table.n_dropped, family)
    return model, report


def _category_hist(categories: np.ndarray, weights: np.ndarray | None) -> np.ndarray:
    if weights is None:
        return np.bincount(categories, minlength=coding.MAX_CATEGORY + 1).astype(float)
    return np.bincount(categories, weights=weights, minlength=coding.MAX_CATEGORY + 1)


# ---------------------------------------------------------------------------
# Empirical resampling


_CATEGORY_INTERVALS = {0: (0, 0), 1: (1, 1), 2: (2, 4), 3: (5, None)}


class EmpiricalResampler:
    """Draws control-arm latent counts by bootstrapping survey rows.

    Rows are resampled with replacement, preserving the joint empirical
    distribution of responses.  For category-mode tables each reported
    category is converted to a latent count by sampling the fitted marginal
    conditional on the category's count interval, so the categorization of
    the imputed count always reproduces the observed category.
    """

    def __init__(self, table: SurveyTable, margins=None, family: str = "zip"):
        self.table = table
        self.acts = table.acts
        if table.mode == "counts":
            self._imputation = None
        else:
            if margins is None:
                margins = [
                    fit_mle_censored(_category_hist(table.values[:, j], table.weights), family).params
                    for j in range(table.n_acts)
                ]
            self.margins = tuple(margins)
            self._imputation = [self._conditional_tables(m) for m in self.margins]
        if table.weights is not None:
            total = table.weights.sum()
            if total <= 0:
                raise ValueError("weights sum to zero")
            self._row_probs = table.weights / total
        else:
            self._row_probs = None

    @staticmethod
    def _conditional_tables(margin: MarginalParams) -> dict[int, tuple[np.ndarray, np.ndarray]]:
        """Per category: (support values, conditional CDF) under the margin."""
        table = cdf_table(margin, 1e-12)
        pmf = np.diff(np.concatenate([[0.0], table]))
        out = {}
        for cat, (lo, hi) in _CATEGORY_INTERVALS.items():
            hi_eff = len(pmf) - 1 if hi is None else min(hi, len(pmf) - 1)
            values = np.arange(lo, hi_eff + 1)
            mass = pmf[lo : hi_eff + 1] if lo < len(pmf) else np.array([])
            if mass.size == 0 or mass.sum() <= 0:
                # category unobservable under the fitted margin: impute the
                # interval's smallest count
                values = np.array([lo])
                cdf = np.array([1.0])
            else:
                cdf = np.cumsum(mass) / mass.sum()
            out[cat] = (values, cdf)
        return out

    def sample_control(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """n latent count rows resampled (and imputed) from the table."""
        if n < 1:
            raise ValueError("n must be >= 1")
        if self._row_probs is None:
            idx = rng.integers(0, self.table.n_rows, size=n)
        else:
            idx = rng.choice(self.table.n_rows, size=n, p=self._row_probs)
        drawn = self.table.values[idx]
        if self._imputation is None:
            return drawn.astype(np.int64)
        out = np.empty_like(drawn)
        for j in range(self.table.n_acts):
            tables = self._imputation[j]
            column = drawn[:, j]
            u = rng.random(n)
            for cat, (values, cdf) in tables.items():
                mask = column == cat
                if not np.any(mask):
                    continue
                out[mask, j] = values[np.searchsorted(cdf, u[mask], side="left").clip(max=len(values) - 1)]
        return out


# ---------------------------------------------------------------------------
# Model files


def save_model(model: MultiActModel, path: str):
    """Write a model to a versioned, human-readable JSON file."""
    payload = {"schema_version": MODEL_SCHEMA_VERSION, **model.to_dict()}
    _atomic_write_text(path, json.dumps(payload, indent=2) + "\n")


def load_model(path: str) -> MultiActModel:
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    version = payload.get("schema_version")
    if version != MODEL_SCHEMA_VERSION:
        raise ValueError(
            f"model file schema version {version!r} not supported "
            f"(expected {MODEL_SCHEMA_VERSION})"
        )
    return MultiActModel.from_dict(payload)
