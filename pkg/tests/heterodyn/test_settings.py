"""
🧪 Unit Tests — Settings Validation

``validate_settings`` runs when the app is ready; bad tolerances must stop
start-up and risky ones must warn.
"""

import copy
from types import SimpleNamespace

import pytest
from django.conf import settings
from django.core.exceptions import ImproperlyConfigured

from config.settings.validators import validate_settings


def fake_settings(debug=True, secret_key='heterodyn-local', **engine):
    values = copy.deepcopy(settings.HETERODYN)
    values.update(engine)
    return SimpleNamespace(DEBUG=debug, SECRET_KEY=secret_key, HETERODYN=values)


def test_loaded_settings_are_valid():
    """
    ✅ The test settings pass validation and keep the documented tolerances.
    """
    validate_settings(settings)
    assert settings.HETERODYN['RENORM_BUDGET'] == 1e-3
    assert settings.HETERODYN['GRADIENT_MIN_ORDER'] == 1.9


@pytest.mark.parametrize("overrides", [
    {'RESIDUAL_TOL': 0.0},
    {'ORACLE_TOL': float('nan')},
    {'PC_SLACK': 'small'},
    {'GRADIENT_MIN_ORDER': 3.0},
    {'MATCHING_CACHE_MAX_ENTRIES': -1},
])
def test_invalid_engine_values_are_rejected(overrides):
    """
    ❌ Non-positive or non-numeric tolerances, orders above 2 and negative cache caps.
    """
    with pytest.raises(ImproperlyConfigured):
        validate_settings(fake_settings(**overrides))


def test_production_needs_a_secret_key():
    with pytest.raises(ImproperlyConfigured):
        validate_settings(fake_settings(debug=False))
    validate_settings(fake_settings(debug=False, secret_key='a-real-secret'))


def test_large_renormalization_budget_warns():
    with pytest.warns(RuntimeWarning):
        validate_settings(fake_settings(RENORM_BUDGET=0.05))


def test_missing_engine_settings():
    with pytest.raises(ImproperlyConfigured):
        validate_settings(SimpleNamespace(DEBUG=True, SECRET_KEY='x'))
