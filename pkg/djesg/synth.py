import datetime
import logging
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Sequence, Tuple

import numpy as np
import pandas as pd

from djesg.artifacts import PathLike, read_json, write_csv, write_embeddings, write_json
from djesg.embeddings import EmbeddingTable, RetrofitConfig, SynonymLexicon, default_synonyms, retrofit
from djesg.emotions import EMOTIONS, NRC_LABELS
from djesg.errors import ConfigError
from djesg.panel import ESG_COLUMNS, USD, FirmYearPanel, min_max_normalize
from djesg.scoring import (
    COLUMN_EMOTION,
    StudyWindow,
    load_headlines,
    load_nrc_lexicon,
    load_stopwords,
    score_firm_years,
)

logger = logging.getLogger(__name__)

MIN_YEARS = 6
ALL_TICKERS = "*"
FILLER_WORDS: Tuple[str, ...] = (
    "market",
    "shares",
    "quarter",
    "earnings",
    "guidance",
    "outlook",
    "revenue",
    "update",
)
SECTORS: Tuple[str, ...] = ("Industrials", "Utilities", "Energy", "Financials", "Materials")
LOCAL_CURRENCY = "EUR"
VECTOR_NOISE = 0.3
DAILY_SPREAD = 0.002

FILES = {
    "embeddings": "embeddings.txt",
    "nrc_lexicon": "nrc_lexicon.txt",
    "headlines": "headlines.csv",
    "esg": "esg.csv",
    "prices": "prices.csv",
    "fx": "fx.csv",
    "ticker_aliases": "ticker_aliases.csv",
}
CONFIG_FILE = "config.json"
PLANTED_MODEL_FILE = "planted_model.json"


@dataclass(frozen=True)
class PlantedEffect:
    ticker: str
    esg_column: str
    sentiment_column: str
    alpha: float
    beta1: float
    beta2: float
    beta3: float

    def __post_init__(self) -> None:
        if self.esg_column not in ESG_COLUMNS:
            raise ConfigError(f"unknown ESG column {self.esg_column!r}")
        if self.sentiment_column not in COLUMN_EMOTION:
            raise ConfigError(f"unknown sentiment column {self.sentiment_column!r}")

    @property
    def coefficients(self) -> Tuple[float, float, float, float]:
        return self.alpha, self.beta1, self.beta2, self.beta3


DEFAULT_EFFECT = PlantedEffect(
    ticker=ALL_TICKERS,
    esg_column="overall_score",
    sentiment_column="InpageTitle_Retro_trust_similarity",
    alpha=0.1,
    beta1=0.5,
    beta2=0.2,
    beta3=-0.3,
)


def load_planted_effects(path: PathLike) -> Tuple[PlantedEffect, ...]:
    entries = read_json(path)
    if not isinstance(entries, list) or not entries:
        raise ConfigError(f"{path}: expected a non-empty list of planted effects")

    try:
        return tuple(PlantedEffect(**entry) for entry in entries)
    except TypeError as e:
        raise ConfigError(f"{path}: {e}")


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 0
    n_firms: int = 5
    n_years: int = 13
    start_year: int = 2010
    noise_sd: float = 0.0
    dimension: int = 10
    headlines_per_year: Tuple[int, int] = (8, 16)
    return_base: float = 1.0
    return_scale: float = 0.01
    planted: Tuple[PlantedEffect, ...] = (DEFAULT_EFFECT,)

    def __post_init__(self) -> None:
        if self.n_years < MIN_YEARS:
            raise ConfigError(f"n_years must be >= {MIN_YEARS}, got {self.n_years}")
        if self.n_firms < 1:
            raise ConfigError("n_firms must be >= 1")
        if not self.noise_sd >= 0:
            raise ConfigError("noise_sd must be non-negative")
        if self.dimension < 2:
            raise ConfigError("dimension must be >= 2")
        low, high = self.headlines_per_year
        if not 1 <= low <= high:
            raise ConfigError("headlines_per_year must be an increasing pair of positive counts")
        if not self.return_scale > 0:
            raise ConfigError("return_scale must be positive")

        tickers = [effect.ticker for effect in self.planted]
        if len(set(tickers)) != len(tickers):
            raise ConfigError("a ticker may carry only one planted effect")

    @property
    def window(self) -> StudyWindow:
        return StudyWindow(start_year=self.start_year, end_year=self.start_year + self.n_years - 1)

    @property
    def tickers(self) -> List[str]:
        return [f"FIRM{i:02d}" for i in range(self.n_firms)]

    def effect_for(self, ticker: str) -> PlantedEffect:
        by_ticker = {effect.ticker: effect for effect in self.planted}
        effect = by_ticker.get(ticker, by_ticker.get(ALL_TICKERS))
        if effect is None:
            raise ConfigError(f"no planted effect covers {ticker}; add one or a '{ALL_TICKERS}' entry")
        return effect


@dataclass(frozen=True)
class ResponseScale:
    """Raw return = base + scale * model; the pipeline maps it onto [0, 1] with low and width."""

    base: float
    scale: float
    low: float
    width: float

    def restore_slope(self, value: float) -> float:
        return value * self.width / self.scale

    def restore(self, coefficients: Sequence[float]) -> Tuple[float, ...]:
        """Planted-scale (alpha, beta1, beta2, beta3) from a fit on the normalized response."""
        alpha, *slopes = coefficients
        return (
            (alpha * self.width + self.low - self.base) / self.scale,
            *(self.restore_slope(slope) for slope in slopes),
        )


def emotion_pools(lexicon: SynonymLexicon) -> Dict[str, List[str]]:
    return {emotion: [emotion, *lexicon.synonyms[emotion]] for emotion in EMOTIONS}


def synthetic_embeddings(
    rng: np.random.Generator, dimension: int, pools: Mapping[str, Sequence[str]]
) -> EmbeddingTable:
    """Each emotion's words cluster around a random direction; filler words do not."""
    entries: Dict[str, np.ndarray] = {}
    for emotion in EMOTIONS:
        direction = rng.standard_normal(dimension)
        for phrase in pools[emotion]:
            for word in phrase.split():
                if word not in entries:
                    entries[word] = direction + VECTOR_NOISE * rng.standard_normal(dimension)

    for word in FILLER_WORDS:
        entries[word] = rng.standard_normal(dimension)
    return EmbeddingTable.from_mapping(entries)


def nrc_rows(pools: Mapping[str, Sequence[str]]) -> List[str]:
    rows = []
    for emotion in EMOTIONS:
        for phrase in pools[emotion]:
            for word in phrase.split():
                rows.append(f"{word}\t{NRC_LABELS[emotion]}\t1")
    for word in FILLER_WORDS:
        rows.append(f"{word}\tpositive\t1")
        rows.append(f"{word}\tjoy\t0")
    return rows


def _headline_rows(
    rng: np.random.Generator, config: SynthConfig, pools: Mapping[str, Sequence[str]]
) -> List[Dict[str, str]]:
    rows = []
    low, high = config.headlines_per_year
    for index, ticker in enumerate(config.tickers):
        company = f"Company{index:02d}"
        stale = datetime.date(config.start_year - 1, 6, 1)
        rows.append({"ticker": ticker, "date": stale.isoformat(), "title": f"{company} {FILLER_WORDS[0]}"})
        for year in range(config.window.start_year, config.window.end_year + 1):
            days = pd.date_range(f"{year}-01-01", f"{year}-12-31", freq="D")
            weights = rng.dirichlet(np.full(len(EMOTIONS), 0.5))
            count = int(rng.integers(low, high + 1))
            for day in sorted(days[rng.integers(0, len(days), size=count)]):
                pool = pools[EMOTIONS[int(rng.choice(len(EMOTIONS), p=weights))]]
                words = [pool[int(i)] for i in rng.integers(0, len(pool), size=2)]
                filler = FILLER_WORDS[int(rng.integers(0, len(FILLER_WORDS)))]
                rows.append(
                    {"ticker": ticker, "date": day.date().isoformat(), "title": " ".join([company, *words, filler])}
                )
    return rows


def _esg_frame(rng: np.random.Generator, config: SynthConfig) -> pd.DataFrame:
    years = range(config.window.start_year, config.window.end_year + 1)
    keys = [(ticker, year) for ticker in config.tickers for year in years]
    values = rng.uniform(size=(len(keys), len(ESG_COLUMNS)))
    values = (values - values.min(axis=0)) / (values.max(axis=0) - values.min(axis=0))
    frame = pd.DataFrame(values, columns=list(ESG_COLUMNS))
    frame.insert(0, "year", [year for _, year in keys])
    frame.insert(0, "ticker", [ticker for ticker, _ in keys])
    return frame


def _trading_days(config: SynthConfig) -> List[datetime.date]:
    first = pd.offsets.BDay().rollback(pd.Timestamp(f"{config.start_year - 1}-12-31"))
    month_starts = pd.date_range(
        f"{config.window.start_year}-01-01", f"{config.window.end_year}-12-31", freq="BMS"
    )
    return [first.date(), *(day.date() for day in month_starts)]


def _fx_rates(rng: np.random.Generator, days: Sequence[datetime.date]) -> Dict[datetime.date, float]:
    steps = 1 + 0.002 * rng.standard_normal(len(days))
    return dict(zip(days, (1.1 * np.cumprod(steps)).tolist()))


def _price_rows(
    rng: np.random.Generator,
    config: SynthConfig,
    targets: Mapping[Tuple[str, int], float],
    days: Sequence[datetime.date],
    fx: Mapping[datetime.date, float],
) -> List[Dict[str, Any]]:
    rows = []
    for index, ticker in enumerate(config.tickers):
        local = index % 2 == 1
        price_ticker = f"{ticker}.DE" if local else ticker
        price = float(rng.uniform(20, 200))
        series = [(days[0], price)]
        for year in range(config.window.start_year, config.window.end_year + 1):
            year_days = [day for day in days if day.year == year]
            spread = DAILY_SPREAD * rng.standard_normal(len(year_days))
            spread -= spread.mean()
            for day, gross in zip(year_days, targets[(ticker, year)] + spread):
                price *= float(gross)
                series.append((day, price))

        for day, usd_price in series:
            rows.append(
                {
                    "ticker": price_ticker,
                    "date": day.isoformat(),
                    "adj_close": usd_price / fx[day] if local else usd_price,
                    "currency": LOCAL_CURRENCY if local else USD,
                }
            )
    return rows


# _normalized_features runs the library's own scoring on the generated headlines,
# so the model is planted on the regressors the pipeline will compute.
def _normalized_features(
    headlines: pd.DataFrame, config: SynthConfig, table: EmbeddingTable, nrc_text: Iterable[str]
) -> pd.DataFrame:
    nrc = load_nrc_lexicon(line + "\n" for line in nrc_text)
    retrofitted = retrofit(table, default_synonyms(), RetrofitConfig.from_settings())
    vocabulary = retrofitted.vocabulary | nrc.vocabulary
    scored, _ = load_headlines(headlines, config.window, load_stopwords(), vocabulary)
    sentiment, _ = score_firm_years(scored, table=retrofitted, nrc=nrc)
    normalized, _ = min_max_normalize(FirmYearPanel(frame=sentiment))
    return normalized.frame


def generate_dataset(config: SynthConfig, output_dir: PathLike) -> Dict[str, Path]:
    """Write a complete input dataset plus ``config.json`` and ``planted_model.json``."""
    output_dir = Path(output_dir)
    rng = np.random.default_rng(config.seed)
    lexicon = default_synonyms()
    pools = emotion_pools(lexicon)
    table = synthetic_embeddings(rng, config.dimension, pools)
    nrc_text = nrc_rows(pools)
    headlines = pd.DataFrame(_headline_rows(rng, config, pools), columns=["ticker", "date", "title"])
    esg = _esg_frame(rng, config)

    features = _normalized_features(headlines, config, table, nrc_text).merge(esg, on=["ticker", "year"])
    features = features.sort_values(["ticker", "year"], kind="mergesort").reset_index(drop=True)
    targets: Dict[Tuple[str, int], float] = {}
    for row in features.to_dict("records"):
        effect = config.effect_for(row["ticker"])
        e, s = row[effect.esg_column], row[effect.sentiment_column]
        model = effect.alpha + effect.beta1 * e + effect.beta2 * s + effect.beta3 * e * s
        noise = config.noise_sd * float(rng.standard_normal())
        targets[(row["ticker"], int(row["year"]))] = config.return_base + config.return_scale * (model + noise)

    low, high = min(targets.values()), max(targets.values())
    if high == low:
        raise ConfigError("the planted model yields constant returns")
    response = ResponseScale(base=config.return_base, scale=config.return_scale, low=low, width=high - low)

    days = _trading_days(config)
    fx = _fx_rates(rng, days)
    prices = pd.DataFrame(_price_rows(rng, config, targets, days, fx))
    aliases = pd.DataFrame(
        {
            "esg_ticker": config.tickers,
            "price_ticker": [f"{t}.DE" if i % 2 == 1 else t for i, t in enumerate(config.tickers)],
            "company": [f"Company{i:02d}" for i in range(config.n_firms)],
            "sector": [SECTORS[i % len(SECTORS)] for i in range(config.n_firms)],
        }
    )

    written = {
        "embeddings": write_embeddings(table, output_dir / FILES["embeddings"]),
        "headlines": write_csv(headlines, output_dir / FILES["headlines"]),
        "esg": write_csv(esg, output_dir / FILES["esg"]),
        "prices": write_csv(prices, output_dir / FILES["prices"]),
        "fx": write_csv(
            pd.DataFrame({"date": [day.isoformat() for day in fx], "pair": f"{LOCAL_CURRENCY}/{USD}", "rate": list(fx.values())}),
            output_dir / FILES["fx"],
        ),
        "ticker_aliases": write_csv(aliases, output_dir / FILES["ticker_aliases"]),
    }
    nrc_path = output_dir / FILES["nrc_lexicon"]
    with open(nrc_path, "w", encoding="utf-8", newline="\n") as f:
        f.writelines(line + "\n" for line in nrc_text)
    written["nrc_lexicon"] = nrc_path

    written["config"] = write_json(
        {
            "paths": dict(FILES),
            "output_dir": "out",
            "seed": config.seed,
            "significance_level": 0.1,
            "window": {"start_year": config.window.start_year, "end_year": config.window.end_year},
            "families": ["retro", "nrc"],
        },
        output_dir / CONFIG_FILE,
    )
    written["planted_model"] = write_json(
        {
            "seed": config.seed,
            "n_firms": config.n_firms,
            "n_years": config.n_years,
            "noise_sd": config.noise_sd,
            "response": asdict(response),
            "planted": [asdict(effect) for effect in config.planted],
        },
        output_dir / PLANTED_MODEL_FILE,
    )
    logger.info(
        "synthetic dataset: %d firms x %d years, %d headlines, %d price rows in %s",
        config.n_firms,
        config.n_years,
        len(headlines),
        len(prices),
        output_dir,
    )
    return written


def load_planted_model(path: PathLike) -> Tuple[ResponseScale, Tuple[PlantedEffect, ...]]:
    document = read_json(path)
    return (
        ResponseScale(**document["response"]),
        tuple(PlantedEffect(**entry) for entry in document["planted"]),
    )
