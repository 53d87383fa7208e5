from typing import Any, Dict, Optional

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_DATA = 2
EXIT_INTERNAL = 3


# DjesgError is the base exception; exit_code, code and details are read by exception_layer.
class DjesgError(Exception):
    exit_code: int = EXIT_INTERNAL
    code: str = "internal_error"

    def __init__(
        self,
        message: str,
        *,
        code: Optional[str] = None,
        details: Optional[Dict[str, Any]] = None,
    ) -> None:
        super().__init__(message)
        if code is not None:
            self.code = code
        self.details: Dict[str, Any] = details or {}


class ConfigError(DjesgError):
    exit_code = EXIT_CONFIG
    code = "invalid_config"


class DataError(DjesgError):
    exit_code = EXIT_DATA
    code = "invalid_data"


class EmbeddingFormatError(DataError):
    code = "invalid_embeddings"

    def __init__(self, message: str, *, line: int, source: str = "<stream>") -> None:
        super().__init__(
            f"{source}:{line}: {message}", details={"line": line, "source": source}
        )
        self.line = line


class LexiconError(DataError):
    code = "invalid_lexicon"


class MissingWordError(DataError):
    code = "missing_word"


class VectorError(DataError):
    code = "invalid_vector"


class MissingFxRateError(DataError):
    code = "missing_fx_rate"


class InsufficientObservationsError(DataError):
    code = "insufficient_observations"


class EmptyJoinError(DataError):
    code = "empty_join"


# DesignError marks a regression spec that cannot be fitted; the grid records it as a skip reason.
class DesignError(DataError):
    code = "design_skipped"
