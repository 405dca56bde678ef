"""
Test Configuration — heterodyn

Used by pytest (``DJANGO_ENV=test``). Artifacts default to a throwaway
directory under the project and engine logging is reduced to warnings so test
output stays readable; tests that need a directory pass ``tmp_path``.

"""

from .base import *

DEBUG = True
TEST_RUNNER = 'django.test.runner.DiscoverRunner'

HETERODYN['OUTPUT_DIR'] = str(BASE_DIR / 'tmp_test_output')

LOGGING['loggers']['heterodyn']['level'] = 'WARNING'
