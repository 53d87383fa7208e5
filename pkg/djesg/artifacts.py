import hashlib
import json
import math
from pathlib import Path
from typing import Any, Union

import numpy as np
import pandas as pd
from django.core.serializers.json import DjangoJSONEncoder

from djesg.conf import djesg_settings
from djesg.embeddings import EmbeddingTable, dump_embeddings

PathLike = Union[str, Path]

DIGEST_CHUNK_SIZE = 1 << 16


class ArtifactJSONEncoder(DjangoJSONEncoder):
    """DjangoJSONEncoder that also understands numpy scalars, arrays and paths."""

    def default(self, o: Any) -> Any:
        if isinstance(o, np.generic):
            return o.item()
        if isinstance(o, np.ndarray):
            return o.tolist()
        if isinstance(o, Path):
            return str(o)
        return super().default(o)


def _finite_or_none(value: Any) -> Any:
    if isinstance(value, dict):
        return {key: _finite_or_none(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [_finite_or_none(item) for item in value]
    if isinstance(value, (float, np.floating)) and not math.isfinite(value):
        return None
    return value


def dumps(data: Any) -> str:
    return json.dumps(
        _finite_or_none(data),
        cls=ArtifactJSONEncoder,
        indent=2,
        sort_keys=True,
        ensure_ascii=False,
        allow_nan=False,
    ) + "\n"


def canonical_hash(data: Any) -> str:
    text = json.dumps(
        _finite_or_none(data), cls=ArtifactJSONEncoder, sort_keys=True, separators=(",", ":")
    )
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def file_digest(path: PathLike) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(DIGEST_CHUNK_SIZE), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_json(data: Any, path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(dumps(data))
    return path


def read_json(path: PathLike) -> Any:
    with open(path, encoding="utf-8") as f:
        return json.load(f)


def read_csv(path: PathLike, **kwargs: Any) -> pd.DataFrame:
    """Read a CSV artifact; floats written with 17 digits come back bit-exact."""
    return pd.read_csv(path, float_precision="round_trip", encoding="utf-8", **kwargs)


def write_csv(frame: pd.DataFrame, path: PathLike, *, index: bool = False) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(
        path,
        index=index,
        float_format=djesg_settings.FLOAT_FORMAT,
        lineterminator="\n",
        encoding="utf-8",
    )
    return path


def write_embeddings(table: EmbeddingTable, path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        dump_embeddings(table, f)
    return path
