"""
Production Settings — heterodyn

Batch runs of shipped scenarios: debug off, INFO logging, and a real secret key
required (see ``config.settings.validators``).

Note:
- Set ``SECRET_KEY`` and ``HETERODYN_OUTPUT_DIR`` in the environment.
- Set ``HETERODYN_LOG_FILE`` to keep a rotating log of every run.

"""

from .base import *

DEBUG = False
ALLOWED_HOSTS = []

LOGGING['loggers']['heterodyn']['level'] = os.getenv('HETERODYN_LOG_LEVEL', 'INFO')
