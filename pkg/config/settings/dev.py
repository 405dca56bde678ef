"""
Development Settings Module — heterodyn

Extends the base settings for local work: debug mode on and verbose engine
logging unless ``HETERODYN_LOG_LEVEL`` says otherwise.

"""

from .base import *

# Enable debug mode for detailed tracebacks during development
DEBUG = True

ALLOWED_HOSTS = ['localhost', '127.0.0.1']

LOGGING['loggers']['heterodyn']['level'] = os.getenv('HETERODYN_LOG_LEVEL', 'DEBUG')
