from django.apps import AppConfig


class StabilizerConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'stabilizer'
    verbose_name = 'Boundary feedback stabilizer'
