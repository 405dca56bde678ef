"""
Logging Configuration — heterodyn

- Version: 1 (standard for logging configuration dictionaries)
- Existing loggers are kept enabled to avoid disabling default Django logging
- Formatter 'verbose' formats logs with level, timestamp, module name,
  process ID and the message, using the '{' style formatting
- Handler 'console' writes to stderr so command stdout stays reserved for results
- Handler 'run_file' (only when ``HETERODYN_LOG_FILE`` is set) writes a rotating file:
    - Rotated when the file reaches 5 MB
    - Up to 5 backup files are retained
- Logger 'heterodyn' covers the whole engine; environments adjust its level

"""

import os

_LOG_FILE = os.getenv('HETERODYN_LOG_FILE')

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,  # Keep Django's default loggers active
    'formatters': {
        'verbose': {
            'format': '{levelname} {asctime} {module} {process:d} {message}',
            'style': '{',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'verbose',
        },
    },
    'loggers': {
        'heterodyn': {
            'handlers': ['console'],
            'level': os.getenv('HETERODYN_LOG_LEVEL', 'INFO'),
            'propagate': False,  # Prevent duplicate logs in ancestor loggers
        },
    },
}

if _LOG_FILE:
    LOGGING['handlers']['run_file'] = {
        'level': 'DEBUG',
        'class': 'logging.handlers.RotatingFileHandler',
        'filename': _LOG_FILE,
        'formatter': 'verbose',
        'maxBytes': 1024 * 1024 * 5,  # 5 MB max file size before rotation
        'backupCount': 5,
    }
    LOGGING['loggers']['heterodyn']['handlers'].append('run_file')
