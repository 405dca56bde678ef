"""
📦 Pytest Configuration for Django (heterodyn)

This file ensures Django is properly configured before running tests with pytest.
It selects the test settings, initializes the Django framework programmatically
and provides the grids, games and generators shared by the suites.

Usage:
- This file will be automatically discovered by pytest
- Make sure `pytest-django` is installed in your environment

"""

import os
from pathlib import Path

import django
import numpy as np
import pytest

# Set default settings module and environment for Django if not already defined
os.environ.setdefault("DJANGO_SETTINGS_MODULE", "config.settings")
os.environ.setdefault("DJANGO_ENV", "test")

# Initialize Django
django.setup()

from django.conf import settings  # noqa: E402

from heterodyn.games import ASAG, EntryExitPayoff, IdiosyncraticMap, PolynomialProfile  # noqa: E402
from heterodyn.typegrid import UniformSpec, build_grid  # noqa: E402


@pytest.fixture
def rng():
    """Seeded PCG64 generator; every randomized test draws from it."""
    return np.random.Generator(np.random.PCG64(20240607))


@pytest.fixture
def unit_grid():
    """Factory for midpoint grids on Uniform[0, 1]."""
    def build(n_nodes):
        return build_grid(UniformSpec(((0.0, 1.0),)), n_nodes)
    return build


@pytest.fixture
def entry_game():
    """Free-entry game: gross profit 1 − x̄_I; a type θ pays θ to enter."""
    return ASAG(
        EntryExitPayoff(PolynomialProfile((1.0, -1.0))),
        IdiosyncraticMap([[-1.0], [0.0]], [0.0, 0.0]),
    )


@pytest.fixture
def scenario_path():
    """Path of a shipped scenario by name."""
    def locate(name):
        return Path(settings.HETERODYN['SCENARIO_DIR']) / f"{name}.json"
    return locate
