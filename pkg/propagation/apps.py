"""
Application configuration for the propagation app.
"""

from django.apps import AppConfig


class PropagationConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'propagation'
    verbose_name = 'Depth propagation'
