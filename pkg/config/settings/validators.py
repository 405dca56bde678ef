"""
Django Settings Validator — heterodyn

Validates the ``HETERODYN`` engine settings before any command runs. Invalid
tolerances would make every check meaningless, so they stop start-up; values
that are legal but risky only warn.

Key Validation Rules:
1. Every tolerance is a positive, finite number.
2. ``GRADIENT_MIN_ORDER`` lies in (0, 2]: central differences cannot do better than O(h²).
3. ``MATCHING_CACHE_MAX_ENTRIES`` is a non-negative integer.
4. Production needs a real ``SECRET_KEY``.
5. A renormalization budget above 1e-2 is accepted with a warning.

Exceptions:
    ImproperlyConfigured: Raised for invalid values.
    RuntimeWarning: Issued for risky but usable values.

Example:
    validate_settings(settings)

"""

import math
import warnings

from django.core.exceptions import ImproperlyConfigured

TOLERANCE_KEYS = (
    'SIMPLEX_TOL', 'RENORM_BUDGET', 'PC_SLACK', 'LYAPUNOV_SLACK', 'RESIDUAL_TOL', 'ORACLE_TOL',
    'GRADIENT_TOL', 'AGGREGABILITY_SPREAD', 'AGGREGABLE_SPREAD',
)


def validate_settings(settings):
    """
    Validate the heterodyn engine settings.

    Args:
        settings: Django settings module object

    Raises:
        ImproperlyConfigured: For missing or invalid values
    """
    engine = getattr(settings, 'HETERODYN', None)
    if not isinstance(engine, dict):
        raise ImproperlyConfigured("HETERODYN settings dictionary is missing.")

    for key in TOLERANCE_KEYS:
        value = engine.get(key)
        if not isinstance(value, (int, float)) or not math.isfinite(value) or value <= 0:
            raise ImproperlyConfigured(f"HETERODYN['{key}'] must be a positive number, got {value!r}.")

    order = engine.get('GRADIENT_MIN_ORDER')
    if not isinstance(order, (int, float)) or not 0 < order <= 2:
        raise ImproperlyConfigured(f"HETERODYN['GRADIENT_MIN_ORDER'] must lie in (0, 2], got {order!r}.")

    cap = engine.get('MATCHING_CACHE_MAX_ENTRIES')
    if not isinstance(cap, int) or cap < 0:
        raise ImproperlyConfigured(
            f"HETERODYN['MATCHING_CACHE_MAX_ENTRIES'] must be a non-negative integer, got {cap!r}."
        )

    if not settings.DEBUG and (not settings.SECRET_KEY or settings.SECRET_KEY == 'heterodyn-local'):
        raise ImproperlyConfigured(
            "SECRET_KEY must be properly configured in production! "
            "Please set it in environment variables."
        )

    if engine['RENORM_BUDGET'] > 1e-2:
        warnings.warn(
            "HETERODYN['RENORM_BUDGET'] above 1e-2 hides integrator error; reduce dt instead.",
            RuntimeWarning
        )
