from .base import *  # noqa: F403

# Override for testing
DEBUG = True

# Tests pass an explicit output directory; this is only the fallback
STOCHFRAC_OUT_DIR = BASE_DIR / "results" / "test"  # noqa: F405
STOCHFRAC_DEFAULT_SEED = 0

# Serial path loop
STOCHFRAC_THREADS = 1

LOGGING["loggers"]["apps"]["level"] = "WARNING"  # noqa: F405
