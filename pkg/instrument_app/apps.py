from django.apps import AppConfig


class InstrumentAppConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'instrument_app'
    verbose_name = 'Frame-level instrument recognition'
