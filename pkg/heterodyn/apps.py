from django.apps import AppConfig
from django.conf import settings


class HeterodynConfig(AppConfig):
    name = 'heterodyn'
    verbose_name = 'Heterogeneous Evolutionary Dynamics'

    def ready(self):
        from config.settings.validators import validate_settings

        validate_settings(settings)
