from .base import *  # noqa: F403

DEBUG = True

# Keep desk runs next to the checkout
STOCHFRAC_OUT_DIR = BASE_DIR / "results" / "dev"  # noqa: F405

LOGGING["loggers"]["apps"]["level"] = "DEBUG"  # noqa: F405
