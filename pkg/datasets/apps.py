"""
Application configuration for the datasets app.
"""

from django.apps import AppConfig


class DatasetsConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'datasets'
    verbose_name = 'Datasets and synthetic scenes'
