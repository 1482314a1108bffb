"""
Application configuration for the costvolume app.
"""

from django.apps import AppConfig


class CostVolumeConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'costvolume'
    verbose_name = 'Sparse cost volume'
