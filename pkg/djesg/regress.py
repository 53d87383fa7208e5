import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import statsmodels.api as sm
from scipy import stats

from djesg.conf import djesg_settings
from djesg.emotions import EMOTIONS, POLARITY, Polarity
from djesg.errors import DataError, DesignError
from djesg.panel import (
    ALL_FIRMS,
    ESG_COLUMNS,
    RETURN_COLUMN,
    FirmYearPanel,
    NormalizationState,
)
from djesg.scoring import COLUMN_EMOTION, SentimentFamily, is_davg, sentiment_columns

logger = logging.getLogger(__name__)

TERMS: Tuple[str, ...] = ("alpha", "beta1", "beta2", "beta3")
N_PARAMETERS = len(TERMS)


@dataclass(frozen=True)
class ModelSpec:
    ticker: str
    esg_column: str
    sentiment_column: str
    sentiment_family: SentimentFamily

    def __post_init__(self) -> None:
        if self.esg_column not in ESG_COLUMNS:
            raise ValueError(f"unknown ESG column {self.esg_column!r}")
        if self.sentiment_column not in sentiment_columns(self.sentiment_family):
            raise ValueError(
                f"{self.sentiment_column!r} is not a {self.sentiment_family.value} sentiment column"
            )

    @property
    def emotion(self) -> str:
        return COLUMN_EMOTION[self.sentiment_column]

    @property
    def davg(self) -> bool:
        return is_davg(self.sentiment_column)


@dataclass(frozen=True)
class RegressionFit:
    n: int
    coefficients: Tuple[float, ...]
    standard_errors: Tuple[float, ...]
    t_stats: Tuple[float, ...]
    p_values: Tuple[float, ...]
    r_squared: float
    adj_r_squared: float
    residuals: Tuple[float, ...] = field(repr=False)

    @property
    def df_resid(self) -> int:
        return self.n - N_PARAMETERS

    @property
    def alpha(self) -> float:
        return self.coefficients[0]

    @property
    def beta1(self) -> float:
        return self.coefficients[1]

    @property
    def beta2(self) -> float:
        return self.coefficients[2]

    @property
    def beta3(self) -> float:
        return self.coefficients[3]

    def confidence_interval(self, term: int, level: float = 0.95) -> Tuple[float, float]:
        half = stats.t.ppf(0.5 + level / 2, self.df_resid) * self.standard_errors[term]
        return self.coefficients[term] - half, self.coefficients[term] + half


def build_design(panel: FirmYearPanel, spec: ModelSpec) -> Tuple[np.ndarray, np.ndarray]:
    """Response and ``[1, ESG, Sentiment, ESG x Sentiment]`` design for one spec."""
    if panel.normalization_state is not NormalizationState.NORMALIZED:
        raise DataError("regressions run on a normalized panel")

    for column in (spec.esg_column, spec.sentiment_column, RETURN_COLUMN):
        if column not in panel.frame.columns:
            raise DesignError(f"{spec.ticker}: column {column!r} is not in the panel", code="missing_column")

    rows = panel.rows_for(spec.ticker)
    if len(rows) < djesg_settings.MIN_OBSERVATIONS:
        raise DesignError(
            f"{spec.ticker}: {len(rows)} rows, need {djesg_settings.MIN_OBSERVATIONS}",
            code="too_few_rows",
        )

    esg = rows[spec.esg_column].to_numpy(dtype=np.float64)
    sentiment = rows[spec.sentiment_column].to_numpy(dtype=np.float64)
    design = np.column_stack([np.ones(len(rows)), esg, sentiment, esg * sentiment])
    return rows[RETURN_COLUMN].to_numpy(dtype=np.float64), design


def _t_stats(coefficients: np.ndarray, standard_errors: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(
            standard_errors > 0,
            coefficients / standard_errors,
            np.where(coefficients == 0, 0.0, np.copysign(np.inf, coefficients)),
        )


# _constant_fit is the fit of a response with no variation: slopes are zero and none is significant
def _constant_fit(y: np.ndarray, k: int) -> RegressionFit:
    n = len(y)
    coefficients = np.zeros(k)
    coefficients[0] = y[0]
    return RegressionFit(
        n=n,
        coefficients=tuple(coefficients.tolist()),
        standard_errors=(0.0,) * k,
        t_stats=(0.0,) * k,
        p_values=(1.0,) * k,
        r_squared=0.0,
        adj_r_squared=1 - (n - 1) / (n - k),
        residuals=(0.0,) * n,
    )


def fit_ols(y: np.ndarray, X: np.ndarray) -> RegressionFit:
    n, k = X.shape
    if n < k + 1:
        raise DesignError(f"{n} observations cannot identify {k} parameters", code="too_few_rows")

    condition = np.linalg.cond(X)
    if not np.isfinite(condition) or condition > djesg_settings.CONDITION_NUMBER_LIMIT:
        raise DesignError(f"rank-deficient design (condition number {condition:.3g})", code="rank_deficient")

    if np.ptp(y) == 0:
        return _constant_fit(y, k)

    df = n - k
    results = sm.OLS(y, X).fit()
    coefficients = np.asarray(results.params, dtype=np.float64)
    standard_errors = np.asarray(results.bse, dtype=np.float64)
    t = _t_stats(coefficients, standard_errors)
    p = 2 * stats.t.sf(np.abs(t), df)

    r_squared = float(np.clip(1 - results.ssr / results.centered_tss, 0.0, 1.0))
    adj_r_squared = 1 - (1 - r_squared) * (n - 1) / df

    return RegressionFit(
        n=n,
        coefficients=tuple(coefficients.tolist()),
        standard_errors=tuple(standard_errors.tolist()),
        t_stats=tuple(t.tolist()),
        p_values=tuple(np.clip(p, 0.0, 1.0).tolist()),
        r_squared=r_squared,
        adj_r_squared=adj_r_squared,
        residuals=tuple(np.asarray(results.resid, dtype=np.float64).tolist()),
    )


def triple_filter(fit: RegressionFit, level: Optional[float] = None) -> bool:
    """ESG, sentiment and interaction terms all significant; the intercept is exempt."""
    level = djesg_settings.SIGNIFICANCE_LEVEL if level is None else level
    return all(p < level for p in fit.p_values[1:])


@dataclass(frozen=True)
class GridResult:
    spec: ModelSpec
    fit: Optional[RegressionFit] = None
    skip_reason: Optional[str] = None


def grid_specs(panel: FirmYearPanel, family: SentimentFamily) -> List[ModelSpec]:
    """Every (ticker, ESG, sentiment) spec; firms in name order, then ``AllFirms``."""
    return [
        ModelSpec(ticker=ticker, esg_column=esg, sentiment_column=sentiment, sentiment_family=family)
        for ticker in [*panel.tickers, ALL_FIRMS]
        for esg in ESG_COLUMNS
        for sentiment in sentiment_columns(family)
    ]


def _attempt(panel: FirmYearPanel, spec: ModelSpec) -> GridResult:
    try:
        return GridResult(spec=spec, fit=fit_ols(*build_design(panel, spec)))
    except DesignError as e:
        return GridResult(spec=spec, skip_reason=f"{e.code}: {e}")


def run_grid(
    panel: FirmYearPanel, family: SentimentFamily, jobs: Optional[int] = None
) -> List[GridResult]:
    if panel.normalization_state is not NormalizationState.NORMALIZED:
        raise DataError("regressions run on a normalized panel")

    jobs = djesg_settings.JOBS if jobs is None else jobs
    specs = grid_specs(panel, family)
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as executor:
            results = list(executor.map(lambda spec: _attempt(panel, spec), specs))
    else:
        results = [_attempt(panel, spec) for spec in specs]

    skipped = sum(result.fit is None for result in results)
    logger.info("%s grid: %d specs attempted, %d skipped", family.value, len(results), skipped)
    return results


class Verdict(str, Enum):
    CORRECT = "correct"
    CONTRADICTORY = "contradictory"
    EXCLUDED_NEUTRAL = "excluded-neutral"


@dataclass(frozen=True)
class H3Classification:
    polarity: Polarity
    verdict: Verdict


def classify_h3(spec: ModelSpec, fit: RegressionFit) -> H3Classification:
    """Compare the interaction sign with the emotion's polarity.

    Only meaningful for fits whose interaction term is significant.
    """
    polarity = POLARITY[spec.emotion]
    if polarity is Polarity.NEUTRAL:
        return H3Classification(polarity=polarity, verdict=Verdict.EXCLUDED_NEUTRAL)

    amplifies = fit.beta3 > 0
    matches = amplifies if polarity is Polarity.POSITIVE else not amplifies
    return H3Classification(
        polarity=polarity, verdict=Verdict.CORRECT if matches else Verdict.CONTRADICTORY
    )


@dataclass(frozen=True)
class WeightedEffect:
    label: str
    count: int
    weighted_average: float
    standard_error: float
    z_stat: float
    p_value: float


def weighted_average(effects: Sequence[Tuple[float, float]], label: str = "") -> WeightedEffect:
    """Inverse-variance weighted mean of (coefficient, standard error) pairs with a z-test."""
    if not effects:
        raise DataError("weighted average of an empty set of effects")
    if any(not se > 0 for _, se in effects):
        raise DataError("standard errors must be positive")

    weights = [1.0 / (se * se) for _, se in effects]
    total = math.fsum(weights)
    average = math.fsum(w * beta for w, (beta, _) in zip(weights, effects)) / total
    standard_error = math.sqrt(1.0 / total)
    z = average / standard_error
    return WeightedEffect(
        label=label,
        count=len(effects),
        weighted_average=average,
        standard_error=standard_error,
        z_stat=z,
        p_value=float(2 * stats.norm.sf(abs(z))),
    )


GRID_COLUMNS: Tuple[str, ...] = (
    "family",
    "ticker",
    "esg_column",
    "sentiment_column",
    "emotion",
    "davg",
    "n",
    *TERMS,
    *(f"se_{term}" for term in TERMS),
    *(f"t_{term}" for term in TERMS),
    *(f"p_{term}" for term in TERMS),
    "r_squared",
    "adj_r_squared",
    "triple_significant",
    "interaction_significant",
    "h3_polarity",
    "h3_verdict",
    "residuals",
    "skip_reason",
)


def grid_frame(results: Iterable[GridResult], level: Optional[float] = None) -> pd.DataFrame:
    """One row per attempted spec with every fit statistic and its classification."""
    level = djesg_settings.SIGNIFICANCE_LEVEL if level is None else level
    records: List[Dict[str, Any]] = []
    for result in results:
        spec, fit = result.spec, result.fit
        record: Dict[str, Any] = {
            "family": spec.sentiment_family.value,
            "ticker": spec.ticker,
            "esg_column": spec.esg_column,
            "sentiment_column": spec.sentiment_column,
            "emotion": spec.emotion,
            "davg": spec.davg,
            "skip_reason": result.skip_reason,
        }
        if fit is not None:
            record["n"] = fit.n
            for i, term in enumerate(TERMS):
                record[term] = fit.coefficients[i]
                record[f"se_{term}"] = fit.standard_errors[i]
                record[f"t_{term}"] = fit.t_stats[i]
                record[f"p_{term}"] = fit.p_values[i]
            record["r_squared"] = fit.r_squared
            record["adj_r_squared"] = fit.adj_r_squared
            record["triple_significant"] = triple_filter(fit, level)
            record["interaction_significant"] = fit.p_values[3] < level
            if record["interaction_significant"]:
                classification = classify_h3(spec, fit)
                record["h3_polarity"] = classification.polarity.value
                record["h3_verdict"] = classification.verdict.value
            record["residuals"] = " ".join(repr(value) for value in fit.residuals)
        else:
            record["triple_significant"] = False
            record["interaction_significant"] = False
        records.append(record)

    frame = pd.DataFrame(records, columns=list(GRID_COLUMNS))
    return frame.astype({"triple_significant": bool, "interaction_significant": bool, "davg": bool})


def _mean(values: pd.Series) -> Optional[float]:
    values = values.dropna()
    return float(math.fsum(values) / len(values)) if len(values) else None


def _effect_json(effect: Optional[WeightedEffect], label: str) -> Dict[str, Any]:
    if effect is None:
        return {"subset": label, "count": 0, "weighted_average": None, "standard_error": None, "z_stat": None, "p_value": None}

    return {
        "subset": label,
        "count": effect.count,
        "weighted_average": effect.weighted_average,
        "standard_error": effect.standard_error,
        "z_stat": effect.z_stat,
        "p_value": effect.p_value,
    }


def _subset_effect(rows: pd.DataFrame, label: str) -> Dict[str, Any]:
    effects = [(beta, se) for beta, se in zip(rows["beta3"], rows["se_beta3"]) if se > 0]
    return _effect_json(weighted_average(effects, label) if effects else None, label)


def _family_metrics(rows: pd.DataFrame) -> Dict[str, Any]:
    fitted = rows[rows["skip_reason"].isna()]
    triple = fitted[fitted["triple_significant"]]
    return {
        "attempted": int(len(rows)),
        "fitted": int(len(fitted)),
        "skipped": int(len(rows) - len(fitted)),
        "triple_significant_count": int(len(triple)),
        "mean_r_squared_triple_significant": _mean(triple["r_squared"]),
        "mean_r_squared_all": _mean(fitted["r_squared"]),
        "mean_adj_r_squared_triple_significant": _mean(triple["adj_r_squared"]),
        "mean_adj_r_squared_all": _mean(fitted["adj_r_squared"]),
    }


def _h3_summary(rows: pd.DataFrame) -> Dict[str, Any]:
    significant = rows[rows["interaction_significant"]]
    classified = significant[significant["h3_verdict"] != Verdict.EXCLUDED_NEUTRAL.value]
    correct = classified[classified["h3_verdict"] == Verdict.CORRECT.value]
    contradictory = classified[classified["h3_verdict"] == Verdict.CONTRADICTORY.value]
    return {
        "significant_interactions": int(len(significant)),
        "excluded_neutral": int(len(significant) - len(classified)),
        "subsets": [
            _subset_effect(classified, "all_significant"),
            _subset_effect(correct, Verdict.CORRECT.value),
            _subset_effect(contradictory, Verdict.CONTRADICTORY.value),
        ],
    }


VARIANT_YEARLY = "yearly"
VARIANT_DAVG = "davg"


def _with_variant(rows: pd.DataFrame) -> pd.DataFrame:
    return rows.assign(variant=np.where(rows["davg"].astype(bool), VARIANT_DAVG, VARIANT_YEARLY))


def _count_table(
    triple: pd.DataFrame, index: Sequence[str], columns: str, labels: Sequence[str]
) -> pd.DataFrame:
    out_columns = ["family", *index, *labels, "total"]
    if triple.empty:
        return pd.DataFrame(columns=out_columns)

    table = (
        triple.groupby(["family", *index, columns]).size().unstack(columns, fill_value=0)
        .reindex(columns=list(labels), fill_value=0)
    )
    table["total"] = table.sum(axis=1)
    return table.reset_index()[out_columns]


def _r2_heatmap(triple: pd.DataFrame) -> pd.DataFrame:
    out_columns = ["family", "variant", "esg_column", *EMOTIONS]
    if triple.empty:
        return pd.DataFrame(columns=out_columns)

    table = (
        triple.groupby(["family", "variant", "esg_column", "emotion"])["r_squared"].mean()
        .unstack("emotion")
        .reindex(columns=list(EMOTIONS))
    )
    return table.reset_index()[out_columns]


# _mean_r2 is mean R^2 and adjusted R^2 of triple-significant models per group
def _mean_r2(triple: pd.DataFrame, keys: Sequence[str]) -> pd.DataFrame:
    out_columns = ["family", *keys, "triple_significant_count", "mean_r_squared", "mean_adj_r_squared"]
    if triple.empty:
        return pd.DataFrame(columns=out_columns)

    table = triple.groupby(["family", *keys]).agg(
        triple_significant_count=("r_squared", "size"),
        mean_r_squared=("r_squared", "mean"),
        mean_adj_r_squared=("adj_r_squared", "mean"),
    )
    return table.reset_index()[out_columns]


def _h3_per_ticker(rows: pd.DataFrame) -> pd.DataFrame:
    out_columns = ["family", "ticker", "correct", "contradictory", "correct_ratio", "contradictory_ratio"]
    classified = rows[rows["h3_verdict"].isin([Verdict.CORRECT.value, Verdict.CONTRADICTORY.value])]
    if classified.empty:
        return pd.DataFrame(columns=out_columns)

    table = (
        classified.groupby(["family", "ticker", "h3_verdict"]).size().unstack("h3_verdict", fill_value=0)
        .reindex(columns=[Verdict.CORRECT.value, Verdict.CONTRADICTORY.value], fill_value=0)
    )
    total = table.sum(axis=1)
    table["correct_ratio"] = table[Verdict.CORRECT.value] / total
    table["contradictory_ratio"] = table[Verdict.CONTRADICTORY.value] / total
    return table.reset_index()[out_columns]


@dataclass(frozen=True)
class InteractionSummary:
    significance_level: float
    families: Mapping[str, Dict[str, Any]]
    davg_split: Mapping[str, Dict[str, Any]]
    h3: Mapping[str, Dict[str, Any]]
    expected_false_positives: Mapping[str, Any]
    tables: Mapping[str, pd.DataFrame] = field(repr=False)

    def to_json(self) -> Dict[str, Any]:
        return {
            "significance_level": self.significance_level,
            "method_comparison": dict(self.families),
            "aggregation_comparison": dict(self.davg_split),
            "h3_alignment": dict(self.h3),
            "expected_false_positives": dict(self.expected_false_positives),
        }


def summarize(
    grid: pd.DataFrame, panel: FirmYearPanel, level: Optional[float] = None
) -> InteractionSummary:
    """Reduce a classified grid (see ``grid_frame``) into report sections and figure data."""
    level = djesg_settings.SIGNIFICANCE_LEVEL if level is None else level
    families: Dict[str, Dict[str, Any]] = {}
    davg_split: Dict[str, Dict[str, Any]] = {}
    h3: Dict[str, Dict[str, Any]] = {}
    fitted_total = 0
    for family in [family.value for family in SentimentFamily if family.value in set(grid["family"])]:
        rows = grid[grid["family"] == family]
        families[family] = _family_metrics(rows)
        davg_split[family] = {
            "davg": _family_metrics(rows[rows["davg"]]),
            "non_davg": _family_metrics(rows[~rows["davg"]]),
        }
        h3[family] = _h3_summary(rows)
        fitted_total += families[family]["fitted"]

    fitted = grid[grid["skip_reason"].isna()]
    triple = _with_variant(fitted[fitted["triple_significant"]])
    tables = {
        "per_ticker_counts": _count_table(triple, ["ticker", "variant"], "emotion", EMOTIONS),
        "emotion_by_esg_counts": _count_table(triple, ["emotion", "variant"], "esg_column", ESG_COLUMNS),
        "ticker_by_esg_counts": _count_table(triple, ["ticker"], "esg_column", ESG_COLUMNS),
        "r2_heatmap_esg_by_emotion": _r2_heatmap(triple),
        "r2_by_esg": _mean_r2(triple, ["esg_column"]),
        "r2_by_ticker": _mean_r2(triple, ["ticker", "esg_column"]),
        "r2_by_sentiment": _mean_r2(triple, ["sentiment_column", "emotion", "variant"]),
        "h3_counts_per_ticker": _h3_per_ticker(fitted),
        "correlation_matrix": panel.frame[panel.numeric_columns].corr(method="pearson"),
    }
    expected = {
        "note": (
            "informational only, beyond the reported method: no multiple-comparison "
            "correction is applied to the grid"
        ),
        "fitted_models": fitted_total,
        "expected_significant_per_term": fitted_total * level,
        "expected_triple_significant_if_independent": fitted_total * level ** 3,
    }
    return InteractionSummary(
        significance_level=level,
        families=families,
        davg_split=davg_split,
        h3=h3,
        expected_false_positives=expected,
        tables=tables,
    )
