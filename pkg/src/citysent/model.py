"""Dummy-coded least-squares baselines for per-bin sentiment proportions."""
from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, List, NamedTuple, Optional, Sequence

import numpy as np
from scipy import linalg, special

from .aggregate import WEATHER_LEVELS, CityHourBin

CATEGORICAL = ("city", "hour", "day", "weather")
FACTORS = CATEGORICAL + ("social",)
OUTCOMES = ("positive", "negative")
DEFAULT_MIN_BIN_SIZE = 5
DEFAULT_EPSILON = 1e-3
DEFAULT_REFERENCES = {"hour": 0, "day": 0, "weather": "clear"}


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class FactorSpec:
    include_city: bool = False
    include_hour: bool = False
    include_day: bool = False
    include_weather: bool = False
    include_social: bool = False
    reference_levels: Dict[str, object] = field(default_factory=dict, hash=False, compare=True)

    @classmethod
    def of(cls, *factors: str, reference_levels=None) -> "FactorSpec":
        unknown = set(factors) - set(FACTORS)
        if unknown:
            raise ModelError(f"unknown factors {sorted(unknown)}")
        return cls(**{f"include_{f}": True for f in factors},
                   reference_levels=dict(reference_levels or {}))

    @classmethod
    def full(cls, **kw) -> "FactorSpec":
        return cls.of(*FACTORS, **kw)

    @property
    def categorical(self) -> List[str]:
        return [f for f in CATEGORICAL if getattr(self, f"include_{f}")]

    @property
    def factors(self) -> List[str]:
        return [f for f in FACTORS if getattr(self, f"include_{f}")]

    @property
    def is_null(self) -> bool:
        return not self.factors

    @property
    def label(self) -> str:
        return ", ".join(self.factors) if self.factors else "null"

    def to_json(self) -> dict:
        d = {f"include_{f}": getattr(self, f"include_{f}") for f in FACTORS}
        d["reference_levels"] = dict(self.reference_levels)
        return d

    @classmethod
    def from_json(cls, d: dict) -> "FactorSpec":
        return cls(**{k: bool(d.get(k, False)) for k in (f"include_{f}" for f in FACTORS)},
                   reference_levels=dict(d.get("reference_levels", {})))


# Factor rows of the coefficient tables, in published order.
PAPER_MODELS = [
    ("all factors", FactorSpec.full()),
    ("social, city, hour, day", FactorSpec.of("social", "city", "hour", "day")),
    ("social, city", FactorSpec.of("social", "city")),
    ("hour, day", FactorSpec.of("hour", "day")),
    ("city", FactorSpec.of("city")),
    ("hour of day", FactorSpec.of("hour")),
    ("day of week", FactorSpec.of("day")),
    ("weather", FactorSpec.of("weather")),
    ("social proportion", FactorSpec.of("social")),
]


def _level(b: CityHourBin, factor: str, weather_ref):
    if factor == "city":
        return b.city_id
    if factor == "hour":
        return b.hour
    if factor == "day":
        return b.day_of_week
    return b.weather.value if b.weather is not None else weather_ref


def _sort_levels(factor: str, levels) -> list:
    if factor == "weather":
        return sorted(levels, key=WEATHER_LEVELS.index)
    return sorted(levels)


def _coerce_level(factor: str, value):
    return int(value) if factor in ("hour", "day") else str(value)


def observed_levels(bins: Sequence[CityHourBin], spec: FactorSpec) -> Dict[str, list]:
    """Levels of each included factor, reference level first."""
    out = {}
    weather_ref = spec.reference_levels.get("weather", DEFAULT_REFERENCES["weather"])
    for factor in spec.categorical:
        seen = {_level(b, factor, weather_ref) for b in bins}
        levels = _sort_levels(factor, seen)
        if len(levels) < 2:
            raise ModelError(
                f"factor {factor!r} has a single observed level {levels}; "
                "its indicator would duplicate the intercept"
            )
        if factor in spec.reference_levels:
            ref = _coerce_level(factor, spec.reference_levels[factor])
            if ref not in seen:
                raise ModelError(f"reference level {ref!r} for {factor!r} was never observed")
        else:
            default = DEFAULT_REFERENCES.get(factor)
            ref = default if default in seen else levels[0]
        levels.remove(ref)
        out[factor] = [ref] + levels
    return out


def column_names_for(levels: Dict[str, list], spec: FactorSpec) -> List[str]:
    names = ["intercept"]
    for factor in spec.categorical:
        names += [f"{factor}[{lv}]" for lv in levels[factor][1:]]
    if spec.include_social:
        names.append("social")
    return names


def _encode(bins: Sequence[CityHourBin], spec: FactorSpec, levels: Dict[str, list],
            unseen: Optional[Counter] = None) -> np.ndarray:
    n = len(bins)
    k = 1 + sum(len(levels[f]) - 1 for f in spec.categorical) + spec.include_social
    X = np.zeros((n, k))
    X[:, 0] = 1.0
    col = 1
    rows = np.arange(n)
    for factor in spec.categorical:
        lv = levels[factor]
        ref = lv[0]
        index = {level: i for i, level in enumerate(lv)}
        codes = np.empty(n, dtype=np.int64)
        for r, b in enumerate(bins):
            i = index.get(_level(b, factor, ref))
            if i is None:
                i = 0
                if unseen is not None:
                    unseen[factor] += 1
            codes[r] = i
        hit = codes > 0
        X[rows[hit], col + codes[hit] - 1] = 1.0
        col += len(lv) - 1
    if spec.include_social:
        X[:, col] = [b.p_social for b in bins]
    return X


class Design(NamedTuple):
    X: np.ndarray
    y_pos: np.ndarray
    y_neg: np.ndarray
    column_names: List[str]
    levels: Dict[str, list]


def build_design_matrix(bins: Sequence[CityHourBin], spec: FactorSpec) -> Design:
    """Intercept, one indicator per non-reference level, then ``p_social``.

    Bins without weather are coded at the weather reference level.
    """
    if not bins:
        raise ModelError("no bins to build a design matrix from")
    levels = observed_levels(bins, spec)
    X = _encode(bins, spec, levels)
    y_pos = np.fromiter((b.p_pos for b in bins), float, len(bins))
    y_neg = np.fromiter((b.p_neg for b in bins), float, len(bins))
    return Design(X, y_pos, y_neg, column_names_for(levels, spec), levels)


class OLSResult(NamedTuple):
    beta: np.ndarray
    stderr: np.ndarray
    sigma2: float
    r_squared: float
    fitted: np.ndarray


def fit_ols(X: np.ndarray, y: np.ndarray, column_names: Optional[Sequence[str]] = None,
            rtol: Optional[float] = None) -> OLSResult:
    """Least squares through a column-pivoted QR factorization.

    Standard errors use the classical homoskedastic formula,
    ``sqrt(sigma2 * diag((X'X)^-1))`` with ``sigma2 = SSR / (n - k)``.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, k = X.shape
    if n <= k:
        raise ModelError(f"need more observations than columns (n={n}, k={k})")
    Q, R, piv = linalg.qr(X, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    if rtol is None:
        rtol = max(n, k) * np.finfo(float).eps
    rank = int(np.sum(diag > rtol * diag[0])) if diag[0] > 0 else 0
    if rank < k:
        dependent = [int(j) for j in piv[rank:]]
        if column_names is not None:
            dependent = [column_names[j] for j in dependent]
        raise ModelError(f"design matrix is rank deficient; dependent columns: {dependent}")

    beta_p = linalg.solve_triangular(R, Q.T @ y)
    beta = np.empty(k)
    beta[piv] = beta_p
    fitted = X @ beta
    resid = y - fitted
    ssr = float(resid @ resid)
    sigma2 = ssr / (n - k)
    r_inv = linalg.solve_triangular(R, np.eye(k))
    # (X'X)^-1 = P R^-1 R^-T P'
    var_p = np.einsum("ij,ij->i", r_inv, r_inv)
    stderr = np.empty(k)
    stderr[piv] = np.sqrt(sigma2 * var_p)
    centered = y - y.mean()
    sst = float(centered @ centered)
    r2 = 0.0 if sst == 0 else min(1.0, max(0.0, 1.0 - ssr / sst))
    return OLSResult(beta, stderr, sigma2, r2, fitted)


@dataclass(frozen=True)
class FittedModel:
    spec: FactorSpec
    outcome: str
    column_names: List[str]
    beta: np.ndarray
    stderr: np.ndarray
    sigma2: float
    r_squared: float
    n_obs: int
    levels: Dict[str, list]
    min_bin_size: int = DEFAULT_MIN_BIN_SIZE
    epsilon_clamp: float = DEFAULT_EPSILON

    @property
    def level_index(self) -> Dict[tuple, int]:
        out, col = {}, 1
        for factor in self.spec.categorical:
            for lv in self.levels[factor][1:]:
                out[(factor, lv)] = col
                col += 1
        return out

    @property
    def n_coefficients(self) -> int:
        return len(self.column_names)

    def to_json(self) -> str:
        doc = {
            "spec": self.spec.to_json(),
            "outcome": self.outcome,
            "column_names": list(self.column_names),
            "beta": [float(v) for v in self.beta],
            "stderr": [float(v) for v in self.stderr],
            "sigma2": float(self.sigma2),
            "r_squared": float(self.r_squared),
            "n_obs": int(self.n_obs),
            "min_bin_size": int(self.min_bin_size),
            "epsilon_clamp": float(self.epsilon_clamp),
            "levels": {f: list(v) for f, v in self.levels.items()},
        }
        return json.dumps(doc, indent=1, sort_keys=False) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "FittedModel":
        d = json.loads(text)
        spec = FactorSpec.from_json(d["spec"])
        levels = {f: [_coerce_level(f, v) for v in lv] for f, lv in d["levels"].items()}
        return cls(spec, d["outcome"], list(d["column_names"]), np.array(d["beta"], float),
                   np.array(d["stderr"], float), float(d["sigma2"]), float(d["r_squared"]),
                   int(d["n_obs"]), levels, int(d["min_bin_size"]), float(d["epsilon_clamp"]))


def training_bins(bins: Sequence[CityHourBin], min_bin_size: int) -> List[CityHourBin]:
    return [b for b in bins if b.n_total >= min_bin_size]


def fit_model(bins: Sequence[CityHourBin], spec: FactorSpec, outcome: str,
              min_bin_size: int = DEFAULT_MIN_BIN_SIZE,
              epsilon_clamp: float = DEFAULT_EPSILON) -> FittedModel:
    """Fit one outcome ("positive" or "negative") on bins of at least ``min_bin_size`` posts."""
    if outcome not in OUTCOMES:
        raise ModelError(f"outcome must be one of {OUTCOMES}")
    use = training_bins(bins, min_bin_size)
    design = build_design_matrix(use, spec)
    y = design.y_pos if outcome == "positive" else design.y_neg
    res = fit_ols(design.X, y, design.column_names)
    return FittedModel(spec, outcome, design.column_names, res.beta, res.stderr, res.sigma2,
                       res.r_squared, len(use), design.levels, min_bin_size, epsilon_clamp)


def predict_raw(m: FittedModel, bins: Sequence[CityHourBin],
                unseen: Optional[Counter] = None) -> np.ndarray:
    """Unclamped linear predictor. Unseen levels fall back to the reference."""
    if not bins:
        return np.zeros(0)
    return _encode(bins, m.spec, m.levels, unseen) @ m.beta


def predict(m: FittedModel, bins: Sequence[CityHourBin],
            unseen: Optional[Counter] = None) -> np.ndarray:
    eps = m.epsilon_clamp
    return np.clip(predict_raw(m, bins, unseen), eps, 1.0 - eps)


class Significance(NamedTuple):
    p_values: np.ndarray
    n_significant: int
    exact_fit: np.ndarray  # stderr 0 with a nonzero coefficient


def coefficient_significance(m: FittedModel, alpha: float = 0.05) -> Significance:
    """Two-sided normal-approximation p-values for ``beta / stderr``."""
    dof = m.n_obs - len(m.beta)
    if dof <= 30:
        raise ModelError(f"normal approximation needs more than 30 residual degrees of freedom, got {dof}")
    beta, se = np.asarray(m.beta), np.asarray(m.stderr)
    exact = (se == 0) & (beta != 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(se > 0, np.abs(beta) / np.where(se > 0, se, 1.0), 0.0)
    p = special.erfc(t / math.sqrt(2.0))
    p[exact] = 0.0
    return Significance(p, int(np.sum(p < alpha)), exact)


@dataclass(frozen=True)
class CorrelationEstimate:
    r: float
    ci_low: float
    ci_high: float
    n: int


def evaluate_correlation(predicted, observed, z_crit: float = 1.96) -> CorrelationEstimate:
    """Pearson r with a Fisher-z 95% interval."""
    x = np.asarray(predicted, float)
    y = np.asarray(observed, float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("predicted and observed must be 1-d and the same length")
    n = len(x)
    if n < 4:
        raise ValueError("need at least 4 pairs for a confidence interval")
    xc, yc = x - x.mean(), y - y.mean()
    sxx, syy = float(xc @ xc), float(yc @ yc)
    if sxx == 0 or syy == 0:
        raise ValueError("correlation undefined: zero variance")
    r = float(np.clip((xc @ yc) / math.sqrt(sxx * syy), -1.0, 1.0))
    if abs(r) == 1.0:
        return CorrelationEstimate(r, r, r, n)
    z = math.atanh(r)
    half = z_crit / math.sqrt(n - 3)
    return CorrelationEstimate(r, math.tanh(z - half), math.tanh(z + half), n)


class ModelTableRow(NamedTuple):
    label: str
    outcome: str
    n_coefficients: int
    n_significant: int
    r_squared_pct: float
    correlation: Optional[CorrelationEstimate]


def model_table(train: Sequence[CityHourBin], test: Sequence[CityHourBin], outcome: str,
                models=PAPER_MODELS, min_bin_size: int = DEFAULT_MIN_BIN_SIZE,
                epsilon_clamp: float = DEFAULT_EPSILON) -> List[ModelTableRow]:
    """Fit every factor combination and score it on held-out bins."""
    test_use = training_bins(test, min_bin_size)
    observed = np.array([b.p_pos if outcome == "positive" else b.p_neg for b in test_use])
    rows = []
    for label, spec in models:
        m = fit_model(train, spec, outcome, min_bin_size, epsilon_clamp)
        sig = coefficient_significance(m)
        corr = None
        if len(test_use) >= 4:
            try:
                corr = evaluate_correlation(predict(m, test_use), observed)
            except ValueError:
                corr = None
        rows.append(ModelTableRow(label, outcome, m.n_coefficients, sig.n_significant,
                                  100.0 * m.r_squared, corr))
    return rows
