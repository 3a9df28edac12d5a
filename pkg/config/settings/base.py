import os
from pathlib import Path

import environ

BASE_DIR = Path(__file__).resolve().parent.parent.parent

env = environ.Env(DEBUG=(bool, False))
environ.Env.read_env(os.path.join(BASE_DIR, ".env"))

# No request handling; the key only satisfies Django's startup check
SECRET_KEY = env("DJANGO_SECRET_KEY", default="stochfrac-local-only")
DEBUG = env.bool("DJANGO_DEBUG", default=False)
ALLOWED_HOSTS = []

DJANGO_ENV = env("DJANGO_ENV", default="production")

# Applications
INSTALLED_APPS = [
    "django.contrib.contenttypes",
    # Third-party
    "rest_framework",
    # Local apps
    "common",
    "apps.simulations",
]

# Results go to CSV/text files, there is no database
DATABASES = {}

# Internationalization
LANGUAGE_CODE = "en-us"
TIME_ZONE = "UTC"
USE_I18N = False
USE_TZ = True

DEFAULT_AUTO_FIELD = "django.db.models.BigAutoField"

# REST Framework (serializers only)
REST_FRAMEWORK = {
    "DEFAULT_AUTHENTICATION_CLASSES": [],
    "DEFAULT_PERMISSION_CLASSES": [],
    "UNAUTHENTICATED_USER": None,
}

# Solver
STOCHFRAC_OUT_DIR = Path(env("STOCHFRAC_OUT_DIR", default=str(BASE_DIR / "results")))
STOCHFRAC_DEFAULT_SEED = env.int("STOCHFRAC_DEFAULT_SEED", default=0)
# None means one worker per CPU
STOCHFRAC_THREADS = env.int("STOCHFRAC_THREADS", default=None)


# Advanced Logging (with colors)
LOGGING = {
    "version": 1,
    "disable_existing_loggers": False,
    "handlers": {
        "console": {
            "class": "rich.logging.RichHandler",
            "rich_tracebacks": True,
            "tracebacks_show_locals": env.bool("DJANGO_DEBUG", default=False),
            "markup": False,
            "show_time": True,
            "show_level": True,
            "show_path": True,
        },
    },
    "root": {
        "handlers": ["console"],
        "level": env("DJANGO_LOG_LEVEL", default="WARNING"),
    },
    "loggers": {
        # Django internal logs
        "django": {
            "handlers": ["console"],
            "level": "WARNING",
            "propagate": False,
        },
        # Solver, services and commands
        "apps": {
            "handlers": ["console"],
            "level": env("STOCHFRAC_LOG_LEVEL", default="INFO"),
            "propagate": False,
        },
        "common": {
            "handlers": ["console"],
            "level": env("STOCHFRAC_LOG_LEVEL", default="INFO"),
            "propagate": False,
        },
    },
}
