import copy
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, Mapping, Optional, Sequence, Tuple

from django import forms

from djesg.artifacts import PathLike, canonical_hash
from djesg.conf import djesg_settings
from djesg.embeddings import RetrofitConfig, RetrofitMode
from djesg.errors import ConfigError
from djesg.scoring import SentimentFamily, StudyWindow

PATH_KEYS: Tuple[str, ...] = (
    "embeddings",
    "synonyms",
    "nrc_lexicon",
    "headlines",
    "esg",
    "prices",
    "fx",
    "ticker_aliases",
    "stopwords",
)
REQUIRED_PATHS: Tuple[str, ...] = ("headlines", "esg", "prices")

# Form field name -> dotted key in the JSON document.
FIELD_KEYS: Dict[str, str] = {
    **{key: f"paths.{key}" for key in PATH_KEYS},
    "output_dir": "output_dir",
    "iterations": "retrofit.iterations",
    "mode": "retrofit.mode",
    "alpha": "retrofit.alpha",
    "beta": "retrofit.beta",
    "sweeps": "imputation.sweeps",
    "donors": "imputation.donors",
    "seed": "seed",
    "significance_level": "significance_level",
    "start_year": "window.start_year",
    "end_year": "window.end_year",
    "families": "families",
    "jobs": "jobs",
}


class RunConfigForm(forms.Form):
    embeddings = forms.CharField(required=False)
    synonyms = forms.CharField(required=False)
    nrc_lexicon = forms.CharField(required=False)
    headlines = forms.CharField()
    esg = forms.CharField()
    prices = forms.CharField()
    fx = forms.CharField(required=False)
    ticker_aliases = forms.CharField(required=False)
    stopwords = forms.CharField(required=False)
    output_dir = forms.CharField()
    iterations = forms.IntegerField(min_value=1, required=False)
    mode = forms.ChoiceField(choices=[(mode.value, mode.value) for mode in RetrofitMode], required=False)
    alpha = forms.FloatField(min_value=0, required=False)
    beta = forms.FloatField(min_value=0, required=False)
    sweeps = forms.IntegerField(min_value=1, required=False)
    donors = forms.IntegerField(min_value=1, required=False)
    seed = forms.IntegerField(min_value=0, required=False)
    significance_level = forms.FloatField(required=False)
    start_year = forms.IntegerField()
    end_year = forms.IntegerField()
    families = forms.MultipleChoiceField(
        choices=[(family.value, family.value) for family in SentimentFamily], required=False
    )
    jobs = forms.IntegerField(min_value=1, required=False)

    def __init__(self, *args: Any, base_dir: Optional[Path] = None, **kwargs: Any) -> None:
        super().__init__(*args, **kwargs)
        self.base_dir = base_dir or Path.cwd()

    def _resolve(self, value: str) -> Optional[Path]:
        if not value:
            return None

        path = Path(value).expanduser()
        return path if path.is_absolute() else (self.base_dir / path).resolve()

    def clean_significance_level(self) -> float:
        level = self.cleaned_data.get("significance_level")
        if level is None:
            return djesg_settings.SIGNIFICANCE_LEVEL
        if not 0 < level < 1:
            raise forms.ValidationError("significance level must lie strictly between 0 and 1")
        return level

    def clean_families(self) -> Tuple[SentimentFamily, ...]:
        values = self.cleaned_data.get("families") or [family.value for family in SentimentFamily]
        return tuple(family for family in SentimentFamily if family.value in values)

    def clean(self) -> Dict[str, Any]:
        cleaned = super().clean()
        for key in PATH_KEYS:
            if key not in cleaned:
                continue

            path = self._resolve(cleaned[key])
            cleaned[key] = path
            if path is not None and not path.exists():
                self.add_error(key, f"{path} does not exist")

        if cleaned.get("output_dir"):
            cleaned["output_dir"] = self._resolve(cleaned["output_dir"])

        start, end = cleaned.get("start_year"), cleaned.get("end_year")
        if start is not None and end is not None and start > end:
            self.add_error("end_year", "start year must not be after end year")

        families = cleaned.get("families", ())
        if SentimentFamily.RETRO in families and not cleaned.get("embeddings") and "embeddings" not in self.errors:
            self.add_error("embeddings", "the retro family needs an embedding file")
        if SentimentFamily.NRC in families and not cleaned.get("nrc_lexicon") and "nrc_lexicon" not in self.errors:
            self.add_error("nrc_lexicon", "the nrc family needs an NRC lexicon file")

        return cleaned


@dataclass(frozen=True)
class RunConfig:
    headlines: Path
    esg: Path
    prices: Path
    output_dir: Path
    window: StudyWindow
    embeddings: Optional[Path] = None
    synonyms: Optional[Path] = None
    nrc_lexicon: Optional[Path] = None
    fx: Optional[Path] = None
    ticker_aliases: Optional[Path] = None
    stopwords: Optional[Path] = None
    retrofit: RetrofitConfig = field(default_factory=RetrofitConfig.from_settings)
    imputation_sweeps: int = 10
    imputation_donors: int = 5
    seed: int = 0
    significance_level: float = 0.1
    families: Tuple[SentimentFamily, ...] = tuple(SentimentFamily)
    jobs: int = 1
    document: Mapping[str, Any] = field(default_factory=dict, repr=False, compare=False)

    @property
    def config_hash(self) -> str:
        return canonical_hash(self.document)

    def input_paths(self) -> Dict[str, Path]:
        return {
            key: getattr(self, key) for key in PATH_KEYS if getattr(self, key) is not None
        }


def _get(document: Mapping[str, Any], dotted: str) -> Any:
    value: Any = document
    for part in dotted.split("."):
        if not isinstance(value, Mapping) or part not in value:
            return None
        value = value[part]
    return value


def set_key(document: Dict[str, Any], dotted: str, value: Any) -> None:
    if dotted not in FIELD_KEYS.values():
        raise ConfigError(f"unknown config key {dotted!r}", details={"choices": sorted(FIELD_KEYS.values())})

    *parents, leaf = dotted.split(".")
    node = document
    for part in parents:
        child = node.setdefault(part, {})
        if not isinstance(child, dict):
            raise ConfigError(f"config key {part!r} must be an object")
        node = child
    node[leaf] = value


def parse_assignment(assignment: str) -> Tuple[str, Any]:
    """Split ``dotted.key=value``; the value is read as JSON when it parses."""
    key, sep, raw = assignment.partition("=")
    if not sep or not key.strip():
        raise ConfigError(f"expected dotted.key=value, got {assignment!r}")

    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip(), value


def apply_overrides(
    document: Mapping[str, Any],
    overrides: Optional[Mapping[str, Any]] = None,
    assignments: Iterable[str] = (),
) -> Dict[str, Any]:
    merged = copy.deepcopy(dict(document))
    for key, value in (overrides or {}).items():
        if value is not None:
            set_key(merged, key, value)
    for assignment in assignments:
        set_key(merged, *parse_assignment(assignment))
    return merged


def build_run_config(document: Mapping[str, Any], base_dir: Optional[Path] = None) -> RunConfig:
    data = {name: _get(document, dotted) for name, dotted in FIELD_KEYS.items()}
    data = {name: value for name, value in data.items() if value is not None}
    form = RunConfigForm(data=data, base_dir=base_dir)
    if not form.is_valid():
        raise ConfigError("invalid run config", details=form.errors.get_json_data())

    cleaned = form.cleaned_data
    retrofit = RetrofitConfig(
        iterations=cleaned["iterations"] or djesg_settings.RETROFIT_ITERATIONS,
        mode=cleaned["mode"] or djesg_settings.RETROFIT_MODE,
        alpha=djesg_settings.RETROFIT_ALPHA if cleaned["alpha"] is None else cleaned["alpha"],
        beta=djesg_settings.RETROFIT_BETA if cleaned["beta"] is None else cleaned["beta"],
    )
    return RunConfig(
        headlines=cleaned["headlines"],
        esg=cleaned["esg"],
        prices=cleaned["prices"],
        output_dir=cleaned["output_dir"],
        window=StudyWindow(start_year=cleaned["start_year"], end_year=cleaned["end_year"]),
        embeddings=cleaned["embeddings"],
        synonyms=cleaned["synonyms"],
        nrc_lexicon=cleaned["nrc_lexicon"],
        fx=cleaned["fx"],
        ticker_aliases=cleaned["ticker_aliases"],
        stopwords=cleaned["stopwords"],
        retrofit=retrofit,
        imputation_sweeps=cleaned["sweeps"] or djesg_settings.MICE_SWEEPS,
        imputation_donors=cleaned["donors"] or djesg_settings.MICE_DONORS,
        seed=cleaned["seed"] or 0,
        significance_level=cleaned["significance_level"],
        families=cleaned["families"],
        jobs=cleaned["jobs"] or djesg_settings.JOBS,
        document=document,
    )


def load_run_config(
    path: PathLike,
    overrides: Optional[Mapping[str, Any]] = None,
    assignments: Sequence[str] = (),
) -> RunConfig:
    path = Path(path)
    try:
        with open(path, encoding="utf-8") as f:
            document = json.load(f)
    except FileNotFoundError:
        raise ConfigError(f"config file {path} does not exist")
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}:{e.lineno}: {e.msg}", details={"line": e.lineno})

    if not isinstance(document, dict):
        raise ConfigError(f"{path}: the config must be a JSON object")

    return build_run_config(apply_overrides(document, overrides, assignments), base_dir=path.resolve().parent)
