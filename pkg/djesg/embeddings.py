import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from itertools import chain
from pathlib import Path
from types import MappingProxyType
from typing import (
    Dict,
    FrozenSet,
    Iterable,
    Iterator,
    List,
    Mapping,
    Optional,
    Sequence,
    TextIO,
    Tuple,
    Union,
)

import numpy as np

from djesg.conf import djesg_settings
from djesg.emotions import EMOTIONS
from djesg.errors import (
    ConfigError,
    EmbeddingFormatError,
    LexiconError,
    MissingWordError,
    VectorError,
)

Vector = Union[np.ndarray, Sequence[float]]

DATA_DIR = Path(__file__).resolve().parent / "data"

logger = logging.getLogger(__name__)


def _frozen_vector(values: Vector) -> np.ndarray:
    vector = np.array(values, dtype=np.float64)
    vector.flags.writeable = False
    return vector


@dataclass(frozen=True)
class EmbeddingTable:
    dimension: int
    entries: Mapping[str, np.ndarray] = field(repr=False)

    def __post_init__(self) -> None:
        if self.dimension < 1:
            raise VectorError(f"dimension must be positive, got {self.dimension}")

        for token, vector in self.entries.items():
            if not token or token != token.lower():
                raise VectorError(f"token {token!r} must be non-empty and lowercase")
            if vector.shape != (self.dimension,):
                raise VectorError(
                    f"vector for {token!r} has shape {vector.shape}, "
                    f"expected ({self.dimension},)"
                )
            if not np.all(np.isfinite(vector)):
                raise VectorError(f"vector for {token!r} has non-finite components")

    @classmethod
    def from_mapping(cls, vectors: Mapping[str, Vector]) -> "EmbeddingTable":
        entries = {token: _frozen_vector(vector) for token, vector in vectors.items()}
        if not entries:
            raise VectorError("an embedding table needs at least one entry")

        dimension = len(next(iter(entries.values())))
        return cls(dimension=dimension, entries=MappingProxyType(entries))

    @cached_property
    def vocabulary(self) -> FrozenSet[str]:
        return frozenset(self.entries)

    def replace(self, updates: Mapping[str, Vector]) -> "EmbeddingTable":
        """Return a new table with ``updates`` swapped in, keeping entry order."""
        entries = dict(self.entries)
        for token, vector in updates.items():
            if token not in entries:
                raise MissingWordError(f"cannot replace unknown token {token!r}")
            entries[token] = _frozen_vector(vector)

        return EmbeddingTable(dimension=self.dimension, entries=MappingProxyType(entries))

    def __contains__(self, token: object) -> bool:
        return token in self.entries

    def __getitem__(self, token: str) -> np.ndarray:
        return self.entries[token]

    def __iter__(self) -> Iterator[str]:
        return iter(self.entries)

    def __len__(self) -> int:
        return len(self.entries)


def _rows(source: TextIO) -> Iterator[Tuple[int, List[str]]]:
    for lineno, line in enumerate(source, start=1):
        fields = line.split()
        if fields:
            yield lineno, fields


# _is_header is a word2vec "count dimension" line: two integers, followed by a
# row of exactly that many components. A one-component table cannot be told
# apart from a header, so dimension 1 always reads as data.
def _is_header(fields: Sequence[str], following: Optional[Sequence[str]]) -> bool:
    if len(fields) != 2 or not all(value.isdigit() for value in fields):
        return False

    dimension = int(fields[1])
    return following is not None and dimension != 1 and len(following) == dimension + 1


def _skip_header(rows: Iterator[Tuple[int, List[str]]]) -> Iterator[Tuple[int, List[str]]]:
    first = next(rows, None)
    if first is None or first[0] != 1:
        return chain([first] if first else [], rows)

    second = next(rows, None)
    leading = [] if _is_header(first[1], second and second[1]) else [first]
    return chain(leading, [second] if second else [], rows)


def load_embeddings(source: TextIO, *, name: str = "<stream>") -> EmbeddingTable:
    """Parse GloVe text (``token v1 ... vd`` per line) into a table."""
    dimension: Optional[int] = None
    entries: Dict[str, np.ndarray] = {}
    for lineno, fields in _skip_header(_rows(source)):
        token, raw_values = fields[0].lower(), fields[1:]
        if dimension is None:
            if not raw_values:
                raise EmbeddingFormatError("line has no vector components", line=lineno, source=name)
            dimension = len(raw_values)
        elif len(raw_values) != dimension:
            raise EmbeddingFormatError(
                f"dimension mismatch: expected {dimension} components, got {len(raw_values)}",
                line=lineno,
                source=name,
            )

        try:
            values = [float(value) for value in raw_values]
        except ValueError as e:
            raise EmbeddingFormatError(f"non-numeric component ({e})", line=lineno, source=name)

        if not all(math.isfinite(value) for value in values):
            raise EmbeddingFormatError("non-finite component", line=lineno, source=name)

        if token in entries:
            raise EmbeddingFormatError(f"duplicate token {token!r}", line=lineno, source=name)

        entries[token] = _frozen_vector(values)

    if dimension is None:
        raise EmbeddingFormatError("no vectors found", line=0, source=name)

    return EmbeddingTable(dimension=dimension, entries=MappingProxyType(entries))


def load_embeddings_file(path: Union[str, Path]) -> EmbeddingTable:
    with open(path, encoding="utf-8") as f:
        return load_embeddings(f, name=str(path))


def dump_embeddings(table: EmbeddingTable, stream: TextIO) -> None:
    """Write the table in GloVe format; ``repr`` keeps every float bit-exact."""
    for token, vector in table.entries.items():
        stream.write(token)
        for value in vector:
            stream.write(" ")
            stream.write(repr(float(value)))
        stream.write("\n")


def cosine_similarity(u: Vector, v: Vector) -> float:
    a = np.asarray(u, dtype=np.float64)
    b = np.asarray(v, dtype=np.float64)
    if a.shape != b.shape:
        raise VectorError(f"length mismatch: {a.shape} vs {b.shape}")

    norm_a = float(np.linalg.norm(a))
    norm_b = float(np.linalg.norm(b))
    if norm_a == 0.0 or norm_b == 0.0:
        raise VectorError("cosine similarity is undefined for a zero-norm vector")

    return float(np.clip(np.dot(a, b) / (norm_a * norm_b), -1.0, 1.0))


@dataclass(frozen=True)
class SynonymLexicon:
    synonyms: Mapping[str, Tuple[str, ...]]

    def __post_init__(self) -> None:
        missing = [emotion for emotion in EMOTIONS if emotion not in self.synonyms]
        extra = [emotion for emotion in self.synonyms if emotion not in EMOTIONS]
        if missing or extra:
            raise LexiconError(
                "synonym lexicon must list exactly the eight emotions",
                details={"missing": missing, "unexpected": extra},
            )

        for emotion, words in self.synonyms.items():
            if not words:
                raise LexiconError(f"emotion {emotion!r} has an empty synonym list")
            if len(set(words)) != len(words):
                raise LexiconError(f"emotion {emotion!r} lists a synonym twice")

    @property
    def emotions(self) -> Tuple[str, ...]:
        return EMOTIONS

    @classmethod
    def from_mapping(cls, synonyms: Mapping[str, Iterable[str]]) -> "SynonymLexicon":
        return cls(
            synonyms=MappingProxyType(
                {emotion.lower(): tuple(word.lower() for word in words) for emotion, words in synonyms.items()}
            )
        )


def load_synonyms(source: TextIO) -> SynonymLexicon:
    """Read ``emotion: syn1, syn2, ...`` lines; ``#`` starts a comment."""
    synonyms: Dict[str, List[str]] = {}
    for lineno, line in enumerate(source, start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue

        emotion, sep, words = line.partition(":")
        if not sep:
            raise LexiconError(f"line {lineno}: expected 'emotion: synonyms'", details={"line": lineno})

        emotion = emotion.strip().lower()
        if emotion in synonyms:
            raise LexiconError(f"line {lineno}: emotion {emotion!r} listed twice", details={"line": lineno})

        synonyms[emotion] = [" ".join(word.split()) for word in words.split(",") if word.strip()]

    return SynonymLexicon.from_mapping(synonyms)


def load_synonyms_file(path: Union[str, Path]) -> SynonymLexicon:
    with open(path, encoding="utf-8") as f:
        return load_synonyms(f)


def default_synonyms() -> SynonymLexicon:
    return load_synonyms_file(DATA_DIR / "synonyms.txt")


class RetrofitMode(str, Enum):
    PAPER_MEAN = "paper-mean"
    FARUQUI = "faruqui"


@dataclass(frozen=True)
class RetrofitConfig:
    iterations: int = 10
    mode: RetrofitMode = RetrofitMode.PAPER_MEAN
    alpha: float = 1.0
    beta: float = 1.0

    def __post_init__(self) -> None:
        try:
            object.__setattr__(self, "mode", RetrofitMode(self.mode))
        except ValueError:
            raise ConfigError(
                f"unknown retrofit mode {self.mode!r}",
                details={"choices": [mode.value for mode in RetrofitMode]},
            )

        if self.iterations < 1:
            raise ConfigError(f"retrofit iterations must be >= 1, got {self.iterations}")
        if self.alpha < 0 or self.beta < 0:
            raise ConfigError("retrofit alpha and beta must be non-negative")

    @classmethod
    def from_settings(cls) -> "RetrofitConfig":
        return cls(
            iterations=djesg_settings.RETROFIT_ITERATIONS,
            mode=djesg_settings.RETROFIT_MODE,
            alpha=djesg_settings.RETROFIT_ALPHA,
            beta=djesg_settings.RETROFIT_BETA,
        )


def neighbor_vectors(
    table: EmbeddingTable, emotion: str, lexicon: SynonymLexicon, *, warn: bool = True
) -> List[np.ndarray]:
    """Vectors of the emotion's synonyms; a phrase is the mean of its words."""
    vectors = []
    for synonym in lexicon.synonyms[emotion]:
        words = synonym.split()
        if all(word in table for word in words):
            if len(words) == 1:
                vectors.append(table[synonym])
            else:
                vectors.append(np.mean([table[word] for word in words], axis=0))
        elif warn:
            logger.warning("synonym %r of %r is not in the vocabulary, skipped", synonym, emotion)

    return vectors


def retrofit_cycles(
    table: EmbeddingTable, lexicon: SynonymLexicon, config: RetrofitConfig
) -> Iterator[EmbeddingTable]:
    """Yield the table after every cycle of the configured update rule."""
    originals: Dict[str, np.ndarray] = {}
    sums: Dict[str, np.ndarray] = {}
    degrees: Dict[str, int] = {}
    for emotion in EMOTIONS:
        if emotion not in table:
            raise MissingWordError(f"emotion word {emotion!r} is not in the embedding table")

        neighbors = neighbor_vectors(table, emotion, lexicon)
        if not neighbors:
            raise LexiconError(
                f"emotion {emotion!r} has no synonyms in the embedding vocabulary",
                details={"synonyms": list(lexicon.synonyms[emotion])},
            )

        if config.mode is RetrofitMode.FARUQUI and config.alpha + config.beta * len(neighbors) <= 0:
            raise ConfigError(f"alpha + sum of beta over the edges of {emotion!r} must be positive")

        originals[emotion] = table[emotion]
        sums[emotion] = np.sum(neighbors, axis=0)
        degrees[emotion] = len(neighbors)

    current = dict(originals)
    for _ in range(config.iterations):
        for emotion in EMOTIONS:
            m, total = degrees[emotion], sums[emotion]
            if config.mode is RetrofitMode.PAPER_MEAN:
                current[emotion] = (current[emotion] + total) / (m + 1)
            else:
                current[emotion] = (config.alpha * originals[emotion] + config.beta * total) / (
                    config.alpha + config.beta * m
                )

        yield table.replace(current)


def retrofit(
    table: EmbeddingTable, lexicon: SynonymLexicon, config: RetrofitConfig
) -> EmbeddingTable:
    retrofitted = table
    for retrofitted in retrofit_cycles(table, lexicon, config):
        pass

    logger.info(
        "retrofitted %d emotion vectors over %d %s cycles",
        len(EMOTIONS),
        config.iterations,
        config.mode.value,
    )
    return retrofitted


def _squared_distance(a: np.ndarray, b: np.ndarray) -> float:
    diff = a - b
    return float(np.dot(diff, diff))


def retrofit_objective(
    original: EmbeddingTable,
    current: EmbeddingTable,
    lexicon: SynonymLexicon,
    config: RetrofitConfig,
) -> float:
    """Attachment to the original vectors plus smoothness over synonym edges."""
    if original.dimension != current.dimension:
        raise VectorError(
            f"dimension mismatch: {original.dimension} vs {current.dimension}"
        )

    terms = []
    for emotion in EMOTIONS:
        if emotion not in original or emotion not in current:
            raise MissingWordError(f"emotion word {emotion!r} is missing from a table")

        retrofitted = current[emotion]
        terms.append(config.alpha * _squared_distance(retrofitted, original[emotion]))
        for neighbor in neighbor_vectors(current, emotion, lexicon, warn=False):
            terms.append(config.beta * _squared_distance(retrofitted, neighbor))

    return math.fsum(terms)
