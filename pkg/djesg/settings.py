import os

SECRET_KEY = "djesg-batch"

INSTALLED_APPS = ("djesg",)

USE_I18N = False
USE_TZ = False

DJESG = {}

LOGGING = {
    "version": 1,
    "disable_existing_loggers": False,
    "formatters": {
        "plain": {"format": "%(asctime)s %(levelname)s %(name)s: %(message)s"},
    },
    "handlers": {
        "stderr": {"class": "logging.StreamHandler", "formatter": "plain"},
    },
    "loggers": {
        "djesg": {
            "handlers": ["stderr"],
            "level": os.environ.get("DJESG_LOG_LEVEL", "INFO").upper(),
            "propagate": False,
        },
    },
}
