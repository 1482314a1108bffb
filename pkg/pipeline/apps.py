"""
Application configuration for the pipeline app.

Holds the end-to-end depth pipeline, the training loop, the training-run
history models and the management commands.
"""

from django.apps import AppConfig


class PipelineConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'pipeline'
    verbose_name = 'Depth pipeline'
