import warnings

warnings.simplefilter("always", DeprecationWarning)

SECRET_KEY = "dummy"

DATABASES = {}

INSTALLED_APPS = ("djesg",)

USE_I18N = False
USE_TZ = False

DJESG = {}

LOGGING = {
    "version": 1,
    "disable_existing_loggers": False,
    "handlers": {
        "null": {"class": "logging.NullHandler"},
    },
    "loggers": {
        "djesg": {"handlers": ["null"], "level": "DEBUG", "propagate": False},
    },
}
