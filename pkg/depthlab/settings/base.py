"""
Base settings shared across all environments (development and production).

Contains configuration for installed apps, logging, Celery and the
DEPTHLAB pipeline defaults consumed by the management commands.
"""

import os
from pathlib import Path

from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()

# BASE_DIR points to the project root (where manage.py lives).
BASE_DIR = Path(__file__).resolve().parent.parent.parent

# ---------------------------------------------------------------------------
# Security
# ---------------------------------------------------------------------------
SECRET_KEY = os.environ.get(
    'DJANGO_SECRET_KEY',
    'django-insecure-dev-only-key-change-in-production'
)

# ---------------------------------------------------------------------------
# Application definition
# ---------------------------------------------------------------------------
INSTALLED_APPS = [
    'django.contrib.contenttypes',

    # Project apps
    'geometry.apps.GeometryConfig',
    'autodiff.apps.AutodiffConfig',
    'networks.apps.NetworksConfig',
    'costvolume.apps.CostVolumeConfig',
    'propagation.apps.PropagationConfig',
    'refinement.apps.RefinementConfig',
    'fusion.apps.FusionConfig',
    'datasets.apps.DatasetsConfig',
    'pipeline.apps.PipelineConfig',
]

# ---------------------------------------------------------------------------
# Internationalization
# ---------------------------------------------------------------------------
LANGUAGE_CODE = 'en-us'
TIME_ZONE = 'UTC'
USE_I18N = False
USE_TZ = True

# ---------------------------------------------------------------------------
# Default primary key field type
# ---------------------------------------------------------------------------
DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'

# ---------------------------------------------------------------------------
# Logging
# ---------------------------------------------------------------------------
LOG_LEVEL = os.environ.get('DEPTHLAB_LOG_LEVEL', 'INFO')

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'verbose': {
            'format': '{asctime} {levelname} {name}: {message}',
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
        app: {'handlers': ['console'], 'level': LOG_LEVEL, 'propagate': False}
        for app in (
            'geometry', 'autodiff', 'networks', 'costvolume', 'propagation',
            'refinement', 'fusion', 'datasets', 'pipeline',
        )
    },
}

# ---------------------------------------------------------------------------
# Celery (async task queue)
# Per-reference-view depth estimation is dispatched as Celery tasks.
# ---------------------------------------------------------------------------
CELERY_BROKER_URL = os.environ.get('CELERY_BROKER_URL', 'redis://127.0.0.1:6379/1')
CELERY_RESULT_BACKEND = os.environ.get('CELERY_RESULT_BACKEND', 'redis://127.0.0.1:6379/2')
CELERY_ACCEPT_CONTENT = ['json']
CELERY_TASK_SERIALIZER = 'json'
CELERY_RESULT_SERIALIZER = 'json'
CELERY_TIMEZONE = 'UTC'

# ---------------------------------------------------------------------------
# Pipeline defaults
# Toy scale: 64x64 images, 5 views, 8 depth planes, quarter channel widths.
# Every key is a RunConfig field and can be overridden from a config file
# or a command-line flag.
# ---------------------------------------------------------------------------
DEPTHLAB = {
    # paths
    'scene_dir': os.environ.get('DEPTHLAB_SCENE_DIR', str(BASE_DIR / 'data' / 'scene')),
    'checkpoint': os.environ.get('DEPTHLAB_CHECKPOINT', str(BASE_DIR / 'data' / 'model.mvsf')),
    'output_dir': os.environ.get('DEPTHLAB_OUTPUT_DIR', str(BASE_DIR / 'data' / 'output')),

    # pipeline
    'n_planes': 8,
    'prop_window': 3,
    'prop_mode': 'learned',
    'sigma_spatial': 1.0,
    'sigma_range': 0.1,
    'gn_iterations': 1,
    'gn_damping': 1e-6,
    'gn_min_views': 1,
    'gn_max_step_fraction': 0.05,
    'gn_reject_uphill': True,
    'fusion_eta': 0.12,
    'fusion_min_views': 3,
    'fusion_prob_thresh': 0.5,

    # training
    'lr': 0.0005,
    'lr_decay': 0.9,
    'lr_decay_every': 2,
    'rmsprop_decay': 0.9,
    'rmsprop_eps': 1e-8,
    'refine_weight': 1.0,
    'pretrain_epochs': 4,
    'e2e_epochs': 12,
    'seed': int(os.environ.get('DEPTHLAB_SEED', '0')),

    # toy-scale switches
    'width_scale': float(os.environ.get('DEPTHLAB_WIDTH_SCALE', '0.25')),
    'image_size': 64,
    'num_views': 5,
    'num_scenes': 3,
    'surface': 'plane',
    'trace': False,
    'random_init': False,
}
