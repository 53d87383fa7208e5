from typing import Any, Dict

from django.conf import settings

DEFAULTS: Dict[str, Any] = {
    "RETROFIT_ITERATIONS": 10,
    "RETROFIT_MODE": "paper-mean",
    "RETROFIT_ALPHA": 1.0,
    "RETROFIT_BETA": 1.0,
    "MICE_SWEEPS": 10,
    "MICE_DONORS": 5,
    "MICE_RIDGE": 1e-8,
    "MISSINGNESS_THRESHOLD": 0.5,
    "FX_LOOKBACK_DAYS": 7,
    "SIGNIFICANCE_LEVEL": 0.1,
    "CONDITION_NUMBER_LIMIT": 1e10,
    "MIN_OBSERVATIONS": 5,
    "FLOAT_FORMAT": "%.17g",
    "JOBS": 1,
}


class AppSettings:
    """Reads ``settings.DJESG`` lazily so ``override_settings`` applies."""

    def __getattr__(self, name: str) -> Any:
        if name not in DEFAULTS:
            raise AttributeError(name)

        return getattr(settings, "DJESG", {}).get(name, DEFAULTS[name])


djesg_settings = AppSettings()
