import bisect
import datetime
import logging
import math
from collections import Counter, defaultdict
from dataclasses import asdict, dataclass, field
from enum import Enum
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from djesg.conf import djesg_settings
from djesg.errors import (
    DataError,
    EmptyJoinError,
    InsufficientObservationsError,
    MissingFxRateError,
)
from djesg.scoring import COUNT_COLUMNS

logger = logging.getLogger(__name__)

ESG_COLUMNS: Tuple[str, ...] = (
    "overall_score",
    "econ_score",
    "envrn_score",
    "corpgov_score",
    "social_score",
)
RETURN_PREFIX = (
    "Adj Close Adjusted close price adjusted for splits and dividend"
    " and/or capital gain distributions."
)
RETURN_COLUMN = RETURN_PREFIX + "_R_DAvg"
# Price-derived names that exist in the source data but are not modelled.
RESERVED_RETURN_COLUMNS: Tuple[str, ...] = (
    RETURN_PREFIX,
    RETURN_PREFIX + " Daily Avg",
    RETURN_PREFIX + "_Daily_Avg_DAvg",
    RETURN_PREFIX + " DAvg",
)
ALL_FIRMS = "AllFirms"
KEY_COLUMNS: Tuple[str, ...] = ("ticker", "year")
METADATA_COLUMNS: Tuple[str, ...] = ("company", "sector")
USD = "USD"


@dataclass(frozen=True)
class EsgRecord:
    ticker: str
    year: int
    overall_score: Optional[float] = None
    econ_score: Optional[float] = None
    envrn_score: Optional[float] = None
    corpgov_score: Optional[float] = None
    social_score: Optional[float] = None


def esg_frame(records: Iterable[EsgRecord]) -> pd.DataFrame:
    return pd.DataFrame(
        [asdict(record) for record in records], columns=["ticker", "year", *ESG_COLUMNS]
    ).astype({column: np.float64 for column in ESG_COLUMNS})


@dataclass(frozen=True)
class PriceRecord:
    ticker: str
    date: datetime.date
    adj_close: float
    currency: str = USD

    def __post_init__(self) -> None:
        if not self.adj_close > 0:
            raise DataError(f"{self.ticker} {self.date}: adjusted close must be positive")


@dataclass(frozen=True)
class FxRecord:
    date: datetime.date
    pair: str
    rate: float

    def __post_init__(self) -> None:
        if not self.rate > 0:
            raise DataError(f"{self.pair} {self.date}: exchange rate must be positive")
        if len(self.pair.split("/")) != 2:
            raise DataError(f"fx pair {self.pair!r} must look like 'EUR/USD'")

    @property
    def base(self) -> str:
        return self.pair.split("/")[0].strip().upper()

    @property
    def quote(self) -> str:
        return self.pair.split("/")[1].strip().upper()


class FxLookup:
    """Currency to USD rates with a backward-looking window for closed days."""

    def __init__(self, records: Iterable[FxRecord], lookback_days: Optional[int] = None) -> None:
        self.lookback = datetime.timedelta(
            days=djesg_settings.FX_LOOKBACK_DAYS if lookback_days is None else lookback_days
        )
        rates: Dict[str, Dict[datetime.date, float]] = defaultdict(dict)
        for record in records:
            if record.quote == USD:
                rates[record.base][record.date] = record.rate
            elif record.base == USD:
                rates[record.quote][record.date] = 1.0 / record.rate
            else:
                logger.warning("fx pair %s does not involve USD, ignored", record.pair)

        self._dates: Dict[str, List[datetime.date]] = {}
        self._rates: Dict[str, List[float]] = {}
        for currency, by_date in rates.items():
            dates = sorted(by_date)
            self._dates[currency] = dates
            self._rates[currency] = [by_date[date] for date in dates]

    @classmethod
    def from_frame(cls, frame: pd.DataFrame, lookback_days: Optional[int] = None) -> "FxLookup":
        missing = {"date", "pair", "rate"} - set(frame.columns)
        if missing:
            raise DataError(f"fx file lacks columns {sorted(missing)}")

        dates = pd.to_datetime(frame["date"], format="%Y-%m-%d", errors="coerce")
        rates = pd.to_numeric(frame["rate"], errors="coerce")
        # data line numbers, counting the header as line 1
        malformed = np.flatnonzero((dates.isna() | rates.isna()).to_numpy()) + 2
        if len(malformed):
            raise DataError(
                f"fx file has {len(malformed)} rows with an unreadable date or rate",
                code="malformed_fx",
                details={"lines": malformed[:10].tolist()},
            )

        return cls(
            (
                FxRecord(date=date.date(), pair=str(pair), rate=float(rate))
                for date, pair, rate in zip(dates, frame["pair"], rates)
            ),
            lookback_days=lookback_days,
        )

    def rate(self, currency: str, date: datetime.date) -> float:
        currency = currency.upper()
        if currency == USD:
            return 1.0

        dates = self._dates.get(currency, [])
        position = bisect.bisect_right(dates, date) - 1
        if position < 0 or date - dates[position] > self.lookback:
            raise MissingFxRateError(
                f"no {currency}/USD rate within {self.lookback.days} days before {date}",
                details={"currency": currency, "date": date.isoformat()},
            )

        return self._rates[currency][position]


def convert_to_usd(price: PriceRecord, fx: FxLookup) -> float:
    if price.currency.upper() == USD:
        return price.adj_close

    return price.adj_close * fx.rate(price.currency, price.date)


def daily_gross_returns(prices: pd.Series) -> pd.Series:
    """Ratio of each close to the previous available close, indexed by the later date."""
    prices = prices.sort_index()
    if len(prices) < 2:
        return pd.Series([], dtype=np.float64, index=prices.index[:0])

    values = prices.to_numpy(dtype=np.float64)
    return pd.Series(values[1:] / values[:-1], index=prices.index[1:])


def return_r_davg(returns: Sequence[float]) -> float:
    if len(returns) == 0:
        raise InsufficientObservationsError("no daily returns in the year")

    return math.fsum(returns) / len(returns)


@dataclass(frozen=True)
class TickerAliases:
    """ESG-source tickers keyed by price-source ticker, plus inert firm metadata."""

    to_esg: Mapping[str, str] = field(default_factory=dict)
    metadata: Optional[pd.DataFrame] = None

    def esg_ticker(self, price_ticker: str) -> str:
        return self.to_esg.get(price_ticker, price_ticker)


def load_ticker_aliases(frame: pd.DataFrame) -> TickerAliases:
    missing = {"esg_ticker", "price_ticker"} - set(frame.columns)
    if missing:
        raise DataError(f"ticker alias file lacks columns {sorted(missing)}")

    duplicated = frame["price_ticker"].duplicated()
    if duplicated.any():
        raise DataError(
            "price tickers mapped twice in the alias file",
            details={"tickers": sorted(frame.loc[duplicated, "price_ticker"])},
        )

    metadata_columns = [column for column in METADATA_COLUMNS if column in frame.columns]
    metadata = None
    if metadata_columns:
        metadata = (
            frame[["esg_ticker", *metadata_columns]]
            .rename(columns={"esg_ticker": "ticker"})
            .drop_duplicates("ticker")
            .reset_index(drop=True)
        )

    return TickerAliases(
        to_esg=dict(zip(frame["price_ticker"], frame["esg_ticker"])), metadata=metadata
    )


def read_esg_csv(path: Union[str, Path]) -> pd.DataFrame:
    frame = pd.read_csv(path, dtype={"ticker": str}, encoding="utf-8")
    missing = {"ticker", "year", *ESG_COLUMNS} - set(frame.columns)
    if missing:
        raise DataError(f"ESG file lacks columns {sorted(missing)}")

    frame = frame[["ticker", "year", *ESG_COLUMNS]].astype({column: np.float64 for column in ESG_COLUMNS})
    frame["year"] = frame["year"].astype(int)
    if frame.duplicated(["ticker", "year"]).any():
        raise DataError("ESG file has duplicate (ticker, year) rows")
    if np.isinf(frame[list(ESG_COLUMNS)].to_numpy()).any():
        raise DataError("ESG scores must be finite")

    return frame


def yearly_returns(
    prices: pd.DataFrame,
    fx: FxLookup,
    aliases: Optional[TickerAliases] = None,
) -> Tuple[pd.DataFrame, Counter]:
    """Per (ticker, year) mean gross return from a ``ticker,date,adj_close,currency`` frame."""
    aliases = aliases or TickerAliases()
    tally: Counter = Counter(rows=len(prices))
    dates = pd.to_datetime(prices["date"], format="%Y-%m-%d", errors="coerce")
    closes = pd.to_numeric(prices["adj_close"], errors="coerce")
    currencies = prices["currency"] if "currency" in prices.columns else pd.Series(USD, index=prices.index)

    usd: Dict[str, Dict[datetime.date, float]] = defaultdict(dict)
    for ticker, date, close, currency in zip(prices["ticker"], dates, closes, currencies):
        if pd.isna(date) or pd.isna(close) or not isinstance(ticker, str) or not ticker:
            tally["malformed"] += 1
            continue
        if not close > 0:
            tally["non_positive_price"] += 1
            continue

        ticker = aliases.esg_ticker(ticker)
        date = date.date()
        if date in usd[ticker]:
            raise DataError(f"duplicate price row for {ticker} on {date}")

        try:
            usd[ticker][date] = convert_to_usd(
                PriceRecord(ticker=ticker, date=date, adj_close=float(close), currency=str(currency)), fx
            )
        except MissingFxRateError:
            tally["missing_fx"] += 1
        else:
            tally["kept"] += 1

    records = []
    for ticker in sorted(usd):
        series = pd.Series(usd[ticker]).sort_index()
        returns = daily_gross_returns(series)
        if returns.empty:
            tally["tickers_without_returns"] += 1
            continue

        by_year: Dict[int, List[float]] = defaultdict(list)
        for date, value in returns.items():
            by_year[date.year].append(float(value))
        for year in sorted(by_year):
            records.append({"ticker": ticker, "year": year, RETURN_COLUMN: return_r_davg(by_year[year])})

    for reason in ("malformed", "non_positive_price", "missing_fx"):
        if tally[reason]:
            logger.warning("excluded %d price rows: %s", tally[reason], reason.replace("_", " "))

    tally["firm_years"] = len(records)
    return pd.DataFrame(records, columns=["ticker", "year", RETURN_COLUMN]), tally


class NormalizationState(str, Enum):
    RAW = "raw"
    NORMALIZED = "normalized"


@dataclass(frozen=True)
class FirmYearPanel:
    frame: pd.DataFrame
    normalization_state: NormalizationState = NormalizationState.RAW

    @property
    def numeric_columns(self) -> List[str]:
        skip = set(KEY_COLUMNS) | set(METADATA_COLUMNS)
        return [column for column in self.frame.columns if column not in skip]

    @property
    def tickers(self) -> List[str]:
        return sorted(self.frame["ticker"].unique())

    def rows_for(self, ticker: str) -> pd.DataFrame:
        """A firm's rows, or every row for the pooled ``AllFirms`` set."""
        if ticker == ALL_FIRMS:
            return self.frame

        return self.frame[self.frame["ticker"] == ticker]

    def with_frame(
        self, frame: pd.DataFrame, normalization_state: Optional[NormalizationState] = None
    ) -> "FirmYearPanel":
        return FirmYearPanel(
            frame=frame, normalization_state=normalization_state or self.normalization_state
        )

    def __len__(self) -> int:
        return len(self.frame)


def _keys(frame: pd.DataFrame) -> set:
    return set(zip(frame["ticker"], frame["year"]))


def join_sources(
    esg: pd.DataFrame,
    sentiment: pd.DataFrame,
    returns: pd.DataFrame,
    metadata: Optional[pd.DataFrame] = None,
) -> Tuple[FirmYearPanel, Dict[str, int]]:
    """Inner join of the three sources on (ticker, year)."""
    sources = {"esg": esg, "sentiment": sentiment, "returns": returns}
    keys = {name: _keys(frame) for name, frame in sources.items()}
    shared = set.intersection(*keys.values())
    report = {f"{name}_rows": len(frame) for name, frame in sources.items()}
    report.update({f"{name}_excluded": len(keys[name] - shared) for name in sources})
    report["joined_rows"] = len(shared)

    if not shared:
        raise EmptyJoinError(
            "ESG, sentiment and return sources share no (ticker, year) key",
            details={
                **{f"{name}_keys": len(value) for name, value in keys.items()},
                "esg_and_sentiment": len(keys["esg"] & keys["sentiment"]),
                "esg_and_returns": len(keys["esg"] & keys["returns"]),
                "sentiment_and_returns": len(keys["sentiment"] & keys["returns"]),
                "tickers": {name: sorted({ticker for ticker, _ in value}) for name, value in keys.items()},
            },
        )

    count_columns = [column for pair in COUNT_COLUMNS.values() for column in pair]
    features = sentiment.drop(columns=[column for column in count_columns if column in sentiment.columns])
    frame = esg.merge(features, on=list(KEY_COLUMNS), how="inner").merge(
        returns, on=list(KEY_COLUMNS), how="inner"
    )
    if metadata is not None:
        extra = [column for column in metadata.columns if column != "ticker"]
        frame = frame.merge(metadata, on="ticker", how="left")
        rest = [column for column in frame.columns if column not in (*KEY_COLUMNS, *extra)]
        frame = frame[[*KEY_COLUMNS, *extra, *rest]]

    frame = frame.sort_values(list(KEY_COLUMNS), kind="mergesort").reset_index(drop=True)
    for name in sources:
        if report[f"{name}_excluded"]:
            logger.info("join excluded %d %s firm-years", report[f"{name}_excluded"], name)

    return FirmYearPanel(frame=frame), report


def drop_overmissing(
    panel: FirmYearPanel, threshold: Optional[float] = None
) -> Tuple[FirmYearPanel, Dict[str, float]]:
    """Drop numeric columns whose missing fraction exceeds ``threshold`` (the boundary is kept)."""
    threshold = djesg_settings.MISSINGNESS_THRESHOLD if threshold is None else threshold
    fractions = panel.frame[panel.numeric_columns].isna().mean()
    dropped = {column: float(fraction) for column, fraction in fractions.items() if fraction > threshold}
    for column, fraction in dropped.items():
        logger.warning("dropped %s: %.1f%% missing", column, 100 * fraction)

    return panel.with_frame(panel.frame.drop(columns=list(dropped))), dropped


def _pmm_fill(
    values: np.ndarray,
    sweeps: int,
    donors: int,
    rng: np.random.Generator,
    ridge: float,
    label: str,
) -> np.ndarray:
    missing = np.isnan(values)
    incomplete = [j for j in range(values.shape[1]) if missing[:, j].any()]
    if not incomplete:
        return values

    completed = values.copy()
    for j in incomplete:
        observed = values[~missing[:, j], j]
        if observed.size < donors + 1:
            raise InsufficientObservationsError(
                f"{label}: column {j} has {observed.size} observed values, need {donors + 1}",
                details={"group": label, "column": j, "observed": int(observed.size)},
            )
        completed[missing[:, j], j] = rng.choice(observed, size=int(missing[:, j].sum()))

    n = values.shape[0]
    for _ in range(sweeps):
        for j in incomplete:
            observed = ~missing[:, j]
            design = np.column_stack([np.ones(n), np.delete(completed, j, axis=1)])
            x_obs, y_obs = design[observed], completed[observed, j]
            gram = x_obs.T @ x_obs + ridge * np.eye(design.shape[1])
            predicted = design @ np.linalg.solve(gram, x_obs.T @ y_obs)
            for i in np.flatnonzero(missing[:, j]):
                distance = np.abs(predicted[observed] - predicted[i])
                nearest = np.argsort(distance, kind="stable")[:donors]
                completed[i, j] = y_obs[rng.choice(nearest)]

    return completed


def impute_mice_pmm(
    panel: FirmYearPanel,
    sweeps: Optional[int] = None,
    donors: Optional[int] = None,
    seed: int = 0,
    ridge: Optional[float] = None,
) -> Tuple[FirmYearPanel, Dict[str, int]]:
    """Chained-equations imputation with predictive mean matching, one firm at a time.

    Every missing cell receives an observed value of its column, drawn from
    the ``donors`` rows whose predicted means are closest. Each firm gets its
    own generator spawned from ``seed`` so results do not depend on the
    order groups are processed in.
    """
    sweeps = djesg_settings.MICE_SWEEPS if sweeps is None else sweeps
    donors = djesg_settings.MICE_DONORS if donors is None else donors
    ridge = djesg_settings.MICE_RIDGE if ridge is None else ridge
    columns = panel.numeric_columns
    cells = panel.frame[columns].isna()
    report = {column: int(count) for column, count in cells.sum().items() if count}
    if not report:
        logger.info("no missing cells, imputation skipped")
        return panel, report

    frame = panel.frame.copy()
    groups = sorted(frame.groupby("ticker").groups.items())
    children = np.random.SeedSequence(seed).spawn(len(groups))
    for (ticker, index), child in zip(groups, children):
        values = frame.loc[index, columns].to_numpy(dtype=np.float64)
        frame.loc[index, columns] = _pmm_fill(
            values, sweeps, donors, np.random.default_rng(child), ridge, str(ticker)
        )

    logger.info("imputed %d cells across %d columns", sum(report.values()), len(report))
    return panel.with_frame(frame), report


def min_max_normalize(panel: FirmYearPanel) -> Tuple[FirmYearPanel, List[str]]:
    """Map every numeric column onto [0, 1] with the pooled min and max."""
    columns = panel.numeric_columns
    if panel.frame[columns].isna().any().any():
        raise DataError("normalization needs a complete panel; impute first")

    frame = panel.frame.copy()
    constant = []
    for column in columns:
        values = frame[column].to_numpy(dtype=np.float64)
        low, high = values.min(), values.max()
        if high == low:
            logger.warning("column %s is constant, set to 0.5", column)
            constant.append(column)
            frame[column] = 0.5
        else:
            frame[column] = (values - low) / (high - low)

    return panel.with_frame(frame, NormalizationState.NORMALIZED), constant


def describe_panel(panel: FirmYearPanel) -> pd.DataFrame:
    """Mean, standard deviation, min and max of every numeric column."""
    numeric = panel.frame[panel.numeric_columns].astype(np.float64)
    return pd.DataFrame(
        {
            "mean": numeric.mean(),
            "std": numeric.std(),
            "min": numeric.min(),
            "max": numeric.max(),
        }
    )
