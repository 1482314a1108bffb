"""
Celery configuration for the depthlab project.

Auto-discovers task modules from all registered Django apps. Used to
spread per-reference-view depth estimation over workers; development
settings run every task eagerly in-process.
"""

import os

from celery import Celery

os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'depthlab.settings.dev')

app = Celery('depthlab')

# All Celery-related settings must be prefixed with CELERY_.
app.config_from_object('django.conf:settings', namespace='CELERY')

app.autodiscover_tasks()
