"""
Django Project Settings Module — heterodyn

Base configuration shared by every environment. The project has no web surface
and no database: Django provides configuration, logging and the
``manage.py heterodyn`` command-line entry point for the numerical engine.

Key sections:

- Environment: Loads environment variables from a .env file.
- Base Directory: Root path of the project for relative references.
- Installed Apps: Only the ``heterodyn`` application.
- Database: None (``DATABASES = {}``); nothing is persisted besides command artifacts.
- Logging: ``LOGGING`` dictConfig from ``config.settings.logging``.
- HETERODYN: Output/scenario directories, the random-matching tensor memory cap and
  every tolerance the command checks are judged against.

"""

import os
from pathlib import Path

import dotenv

from .logging import LOGGING  # noqa: F401

# Load environment variables from .env file
dotenv.load_dotenv()

# Define the base directory of the project for path references
BASE_DIR = Path(__file__).resolve().parent.parent.parent

# Only used by Django internals; the project signs nothing
SECRET_KEY = os.getenv('SECRET_KEY', 'heterodyn-local')

INSTALLED_APPS = [
    'heterodyn.apps.HeterodynConfig',
]

DATABASES = {}

LANGUAGE_CODE = 'en'
TIME_ZONE = 'UTC'
USE_I18N = False
USE_TZ = True

# Numerical engine configuration
HETERODYN = {
    # Where command artifacts go when neither --out nor outputs.directory is given
    'OUTPUT_DIR': os.getenv('HETERODYN_OUTPUT_DIR', str(BASE_DIR / 'out')),
    'SCENARIO_DIR': str(BASE_DIR / 'scenarios'),
    # K·K·S·S entries above which random-matching payoffs are recomputed per evaluation
    'MATCHING_CACHE_MAX_ENTRIES': int(os.getenv('HETERODYN_MATCHING_CACHE_MAX_ENTRIES', 4_000_000)),

    # Check tolerances
    'SIMPLEX_TOL': 1e-6,
    'RENORM_BUDGET': 1e-3,
    'PC_SLACK': 1e-10,
    'LYAPUNOV_SLACK': 1e-8,
    'RESIDUAL_TOL': 1e-6,
    'ORACLE_TOL': 1e-3,
    'GRADIENT_TOL': 1e-6,
    'GRADIENT_MIN_ORDER': 1.9,
    'AGGREGABILITY_SPREAD': 0.1,
    'AGGREGABLE_SPREAD': 1e-12,
}
