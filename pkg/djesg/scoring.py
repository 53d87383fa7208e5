import datetime
import logging
import math
import re
from collections import Counter, defaultdict
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from types import MappingProxyType
from typing import (
    AbstractSet,
    Dict,
    FrozenSet,
    Iterable,
    List,
    Mapping,
    Optional,
    Sequence,
    TextIO,
    Tuple,
    Union,
)

import numpy as np
import pandas as pd

from djesg.embeddings import DATA_DIR, EmbeddingTable, cosine_similarity
from djesg.emotions import EMOTIONS, NRC_LABELS, NRC_TO_EMOTION
from djesg.errors import InsufficientObservationsError, LexiconError, MissingWordError

logger = logging.getLogger(__name__)

TOKEN_SPLIT = re.compile(r"[\W_]+")
SUFFIX_RULES: Tuple[str, ...] = ("s", "es", "ing", "ed")
MIN_STEM_LENGTH = 2


class SentimentFamily(str, Enum):
    RETRO = "retro"
    NRC = "nrc"


class ScoreSource(str, Enum):
    RETRO = "retro-similarity"
    NRC = "nrc-count"


def _family_columns(family: SentimentFamily, davg: bool) -> Tuple[str, ...]:
    suffix = "_DAvg" if davg else ""
    if family is SentimentFamily.RETRO:
        return tuple(f"InpageTitle_Retro_{emotion}_similarity{suffix}" for emotion in EMOTIONS)

    return tuple(f"InpageTitle_NRC_{NRC_LABELS[emotion]}{suffix}" for emotion in EMOTIONS)


FEATURE_COLUMNS: Dict[SentimentFamily, Tuple[str, ...]] = {
    family: _family_columns(family, davg=False) for family in SentimentFamily
}
DAVG_COLUMNS: Dict[SentimentFamily, Tuple[str, ...]] = {
    family: _family_columns(family, davg=True) for family in SentimentFamily
}
COUNT_COLUMNS: Dict[SentimentFamily, Tuple[str, str]] = {
    SentimentFamily.RETRO: ("InpageTitle_Retro_headline_count", "InpageTitle_Retro_day_count"),
    SentimentFamily.NRC: ("InpageTitle_NRC_headline_count", "InpageTitle_NRC_day_count"),
}
COLUMN_EMOTION: Dict[str, str] = {
    column: emotion
    for family in SentimentFamily
    for columns in (FEATURE_COLUMNS[family], DAVG_COLUMNS[family])
    for column, emotion in zip(columns, EMOTIONS)
}


def sentiment_columns(family: SentimentFamily) -> Tuple[str, ...]:
    """The 16 feature columns of a family: 8 yearly, then 8 DAvg."""
    return FEATURE_COLUMNS[family] + DAVG_COLUMNS[family]


def is_davg(column: str) -> bool:
    return column.endswith("_DAvg")


@dataclass(frozen=True)
class StudyWindow:
    start_year: int
    end_year: int

    def __contains__(self, date: object) -> bool:
        if not isinstance(date, datetime.date):
            return False

        return self.start_year <= date.year <= self.end_year


@dataclass(frozen=True)
class Headline:
    ticker: str
    date: datetime.date
    title: str
    tokens: Tuple[str, ...]

    def __post_init__(self) -> None:
        if not self.ticker:
            raise ValueError("headline ticker must be non-empty")


@dataclass(frozen=True)
class EmotionScore:
    values: Tuple[float, ...]
    source: ScoreSource

    def __post_init__(self) -> None:
        if len(self.values) != len(EMOTIONS):
            raise ValueError(f"expected {len(EMOTIONS)} emotion values, got {len(self.values)}")

        if self.source is ScoreSource.RETRO:
            if any(not -1.0 <= value <= 1.0 for value in self.values):
                raise ValueError("retro similarity scores must lie in [-1, 1]")
        elif any(value < 0 or value != int(value) for value in self.values):
            raise ValueError("nrc counts must be non-negative integers")

    def __getitem__(self, emotion: str) -> float:
        return self.values[EMOTIONS.index(emotion)]

    def as_dict(self) -> Dict[str, float]:
        return dict(zip(EMOTIONS, self.values))


@dataclass(frozen=True)
class NrcLexicon:
    entries: Mapping[str, FrozenSet[str]]

    def __post_init__(self) -> None:
        for token, emotions in self.entries.items():
            if token != token.lower():
                raise LexiconError(f"nrc token {token!r} must be lowercase")
            unknown = set(emotions) - set(EMOTIONS)
            if unknown:
                raise LexiconError(f"nrc token {token!r} maps to unknown emotions {sorted(unknown)}")

    @classmethod
    def from_mapping(cls, entries: Mapping[str, Iterable[str]]) -> "NrcLexicon":
        return cls(entries=MappingProxyType({token: frozenset(labels) for token, labels in entries.items()}))

    @property
    def vocabulary(self) -> FrozenSet[str]:
        return frozenset(self.entries)


def load_nrc_lexicon(source: TextIO) -> NrcLexicon:
    """Read ``word<TAB>emotion<TAB>0|1`` rows, keeping the eight emotions only."""
    entries: Dict[str, set] = defaultdict(set)
    for lineno, line in enumerate(source, start=1):
        fields = line.strip().split("\t")
        if fields == [""]:
            continue

        if len(fields) != 3 or fields[2] not in ("0", "1"):
            raise LexiconError(f"line {lineno}: expected 'word<TAB>emotion<TAB>0|1'", details={"line": lineno})

        word, label, flag = fields
        emotion = NRC_TO_EMOTION.get(label.strip().lower())
        if emotion is None or flag == "0":
            continue

        entries[word.strip().lower()].add(emotion)

    return NrcLexicon.from_mapping(entries)


def load_nrc_lexicon_file(path: Union[str, Path]) -> NrcLexicon:
    with open(path, encoding="utf-8") as f:
        return load_nrc_lexicon(f)


def load_stopwords(path: Union[str, Path, None] = None) -> FrozenSet[str]:
    path = DATA_DIR / "stopwords.txt" if path is None else path
    with open(path, encoding="utf-8") as f:
        return frozenset(
            word.strip().lower() for word in f if word.strip() and not word.startswith("#")
        )


def lemmatize(token: str, vocabulary: AbstractSet[str]) -> str:
    """Strip one plural/participle suffix when the stem is a known word."""
    for suffix in SUFFIX_RULES:
        if token.endswith(suffix) and len(token) - len(suffix) >= MIN_STEM_LENGTH:
            stem = token[: -len(suffix)]
            if stem in vocabulary:
                return stem

    return token


def preprocess(
    title: str, stopwords: AbstractSet[str], vocabulary: AbstractSet[str]
) -> List[str]:
    tokens = [token for token in TOKEN_SPLIT.split(title.lower()) if token]
    return [lemmatize(token, vocabulary) for token in tokens if token not in stopwords]


def headline_vector(tokens: Sequence[str], table: EmbeddingTable) -> Optional[np.ndarray]:
    known = [table[token] for token in tokens if token in table]
    if not known:
        return None

    return np.mean(known, axis=0)


def emotion_vectors(table: EmbeddingTable) -> Dict[str, np.ndarray]:
    missing = [emotion for emotion in EMOTIONS if emotion not in table]
    if missing:
        raise MissingWordError(f"emotion words missing from the embedding table: {missing}")

    return {emotion: table[emotion] for emotion in EMOTIONS}


def score_headline_retro(
    headline: Headline, emotion_vectors: Mapping[str, np.ndarray], table: EmbeddingTable
) -> Optional[EmotionScore]:
    vector = headline_vector(headline.tokens, table)
    if vector is None or not np.any(vector):
        return None

    return EmotionScore(
        values=tuple(cosine_similarity(vector, emotion_vectors[emotion]) for emotion in EMOTIONS),
        source=ScoreSource.RETRO,
    )


def score_headline_nrc(headline: Headline, lexicon: NrcLexicon) -> EmotionScore:
    counts: Counter = Counter()
    for token in headline.tokens:
        counts.update(lexicon.entries.get(token, ()))

    return EmotionScore(
        values=tuple(float(counts[emotion]) for emotion in EMOTIONS), source=ScoreSource.NRC
    )


def _single_source(scores: Iterable[EmotionScore]) -> ScoreSource:
    sources = {score.source for score in scores}
    if len(sources) != 1:
        raise ValueError(f"cannot aggregate scores from sources {sorted(sources)}")

    return sources.pop()


def aggregate_non_davg(scores: Sequence[EmotionScore]) -> Tuple[float, ...]:
    """Yearly feature over all headlines: mean similarity, or total NRC count."""
    if not scores:
        raise InsufficientObservationsError("no scored headlines to aggregate")

    source = _single_source(scores)
    totals = [math.fsum(score.values[k] for score in scores) for k in range(len(EMOTIONS))]
    if source is ScoreSource.NRC:
        return tuple(totals)

    return tuple(total / len(scores) for total in totals)


def aggregate_davg(scores_by_day: Mapping[datetime.date, Sequence[EmotionScore]]) -> Tuple[float, ...]:
    """Mean over days of the daily mean (similarity) or daily total (NRC count)."""
    days = [scores for scores in scores_by_day.values() if scores]
    if not days:
        raise InsufficientObservationsError("no day with a scored headline")

    source = _single_source(score for scores in days for score in scores)
    daily = []
    for scores in days:
        totals = [math.fsum(score.values[k] for score in scores) for k in range(len(EMOTIONS))]
        daily.append(totals if source is ScoreSource.NRC else [total / len(scores) for total in totals])

    return tuple(math.fsum(day[k] for day in daily) / len(daily) for k in range(len(EMOTIONS)))


@dataclass(frozen=True)
class FirmYearSentiment:
    ticker: str
    year: int
    family: SentimentFamily
    features: Tuple[float, ...]
    davg_features: Tuple[float, ...]
    headline_count: int
    day_count: int

    def __post_init__(self) -> None:
        if not self.headline_count >= self.day_count >= 1:
            raise ValueError("firm-year rows need N_i >= T_i >= 1")
        if not all(math.isfinite(value) for value in self.features + self.davg_features):
            raise ValueError("firm-year features must be finite")

    def as_record(self) -> Dict[str, Union[str, int, float]]:
        headline_column, day_column = COUNT_COLUMNS[self.family]
        record: Dict[str, Union[str, int, float]] = {"ticker": self.ticker, "year": self.year}
        record.update(zip(FEATURE_COLUMNS[self.family], self.features))
        record.update(zip(DAVG_COLUMNS[self.family], self.davg_features))
        record[headline_column] = self.headline_count
        record[day_column] = self.day_count
        return record


def read_headlines_csv(path: Union[str, Path]) -> pd.DataFrame:
    return pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")


def load_headlines(
    frame: pd.DataFrame,
    window: StudyWindow,
    stopwords: AbstractSet[str],
    vocabulary: AbstractSet[str],
) -> Tuple[List[Headline], Counter]:
    """Build headlines from a ``ticker,date,title`` frame; bad and out-of-window rows are tallied."""
    tally: Counter = Counter(rows=len(frame))
    dates = pd.to_datetime(frame["date"], format="%Y-%m-%d", errors="coerce")
    headlines = []
    for ticker, date, title in zip(frame["ticker"], dates, frame["title"]):
        ticker = str(ticker).strip()
        if not ticker or pd.isna(date):
            tally["malformed"] += 1
            continue

        date = date.date()
        if date not in window:
            tally["out_of_window"] += 1
            continue

        headlines.append(
            Headline(ticker=ticker, date=date, title=title, tokens=tuple(preprocess(title, stopwords, vocabulary)))
        )

    tally["kept"] = len(headlines)
    if tally["malformed"]:
        logger.warning("skipped %d malformed headline rows", tally["malformed"])
    if tally["out_of_window"]:
        logger.info("excluded %d headlines outside %s", tally["out_of_window"], window)

    return headlines, tally


def aggregate_firm_years(
    scored: Iterable[Tuple[Headline, Optional[EmotionScore]]], family: SentimentFamily
) -> Tuple[List[FirmYearSentiment], Counter]:
    grouped: Dict[Tuple[str, int], Dict[datetime.date, List[EmotionScore]]] = defaultdict(
        lambda: defaultdict(list)
    )
    tally: Counter = Counter()
    for headline, score in scored:
        if score is None:
            tally["unscored_headlines"] += 1
            continue

        grouped[(headline.ticker, headline.date.year)][headline.date].append(score)
        tally["scored_headlines"] += 1

    rows = []
    for (ticker, year), by_day in sorted(grouped.items()):
        scores = [score for day in by_day.values() for score in day]
        rows.append(
            FirmYearSentiment(
                ticker=ticker,
                year=year,
                family=family,
                features=aggregate_non_davg(scores),
                davg_features=aggregate_davg(by_day),
                headline_count=len(scores),
                day_count=len(by_day),
            )
        )

    if tally["unscored_headlines"]:
        logger.info(
            "%s: %d headlines had no in-vocabulary token and were excluded",
            family.value,
            tally["unscored_headlines"],
        )
    tally["firm_years"] = len(rows)
    return rows, tally


def score_firm_years(
    headlines: Sequence[Headline],
    *,
    table: Optional[EmbeddingTable] = None,
    nrc: Optional[NrcLexicon] = None,
) -> Tuple[pd.DataFrame, Dict[str, Counter]]:
    """Score every headline with the given families and join them per firm-year."""
    frames = []
    tallies: Dict[str, Counter] = {}
    if table is not None:
        vectors = emotion_vectors(table)
        rows, tallies[SentimentFamily.RETRO.value] = aggregate_firm_years(
            ((headline, score_headline_retro(headline, vectors, table)) for headline in headlines),
            SentimentFamily.RETRO,
        )
        frames.append(_rows_frame(rows, SentimentFamily.RETRO))

    if nrc is not None:
        rows, tallies[SentimentFamily.NRC.value] = aggregate_firm_years(
            ((headline, score_headline_nrc(headline, nrc)) for headline in headlines),
            SentimentFamily.NRC,
        )
        frames.append(_rows_frame(rows, SentimentFamily.NRC))

    if not frames:
        raise ValueError("score_firm_years needs an embedding table, an NRC lexicon or both")

    sentiment = frames[0]
    for frame in frames[1:]:
        before = len(sentiment), len(frame)
        sentiment = sentiment.merge(frame, on=["ticker", "year"], how="inner")
        dropped = sum(before) - 2 * len(sentiment)
        if dropped:
            logger.info("%d firm-years lacked one sentiment family and were dropped", dropped)
        tallies.setdefault("join", Counter())["missing_other_family"] += dropped

    return sentiment.sort_values(["ticker", "year"], kind="mergesort").reset_index(drop=True), tallies


def _rows_frame(rows: Sequence[FirmYearSentiment], family: SentimentFamily) -> pd.DataFrame:
    columns = ["ticker", "year", *sentiment_columns(family), *COUNT_COLUMNS[family]]
    return pd.DataFrame([row.as_record() for row in rows], columns=columns)
