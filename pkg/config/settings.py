"""
Django settings for the frame-level instrument recognition pipeline.
"""

import os
from pathlib import Path
from dotenv import load_dotenv

# Load environment variables
load_dotenv()

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent

# SECURITY WARNING: keep the secret key used in production secret!
SECRET_KEY = os.getenv('SECRET_KEY', 'django-insecure-change-me-in-production')

DEBUG = False

# Application definition
INSTALLED_APPS = [
    'django.contrib.contenttypes',
    # Local apps
    'instrument_app',
]

# Database
# https://docs.djangoproject.com/en/5.2/ref/settings/#databases
DATABASE_ENGINE = os.getenv('DATABASE_ENGINE', 'sqlite3')

if DATABASE_ENGINE == 'postgresql':
    DATABASES = {
        'default': {
            'ENGINE': 'django.db.backends.postgresql',
            'NAME': os.getenv('DB_NAME', 'instrument_recognition'),
            'USER': os.getenv('DB_USER', 'postgres'),
            'PASSWORD': os.getenv('DB_PASSWORD', ''),
            'HOST': os.getenv('DB_HOST', 'localhost'),
            'PORT': os.getenv('DB_PORT', '5432'),
        }
    }
else:
    DATABASES = {
        'default': {
            'ENGINE': 'django.db.backends.sqlite3',
            'NAME': BASE_DIR / 'db.sqlite3',
        }
    }

# Internationalization
LANGUAGE_CODE = 'en-us'
TIME_ZONE = 'UTC'
USE_I18N = False
USE_TZ = True

# Default primary key field type
DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'

# Logging
INSTREC_LOG_LEVEL = 'INFO'

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'console': {
            'format': '%(asctime)s %(levelname)s %(name)s: %(message)s',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'console',
        },
    },
    'loggers': {
        'instrument_app': {
            'handlers': ['console'],
            'level': INSTREC_LOG_LEVEL,
            'propagate': False,
        },
    },
}

# Pipeline configuration
# The cache directory is the only pipeline value taken from the environment.
INSTREC_CACHE_DIR = os.getenv('INSTREC_CACHE_DIR', str(BASE_DIR / 'cache'))

INSTREC_PIPELINE = {
    'paths': {
        'dataset_root': str(BASE_DIR / 'data' / 'musicnet'),
        'cache_dir': INSTREC_CACHE_DIR,
        'output_dir': str(BASE_DIR / 'runs'),
        'split_manifest': None,
    },
    'catalog_path': str(BASE_DIR / 'instrument_app' / 'data' / 'catalog.yaml'),
    'cqt': {
        'sample_rate': 44100,
        'hop': 512,
        'n_bins': 88,
        'bins_per_octave': 12,
        'fmin': 27.5,
        'magnitude_scale': 'log1p',
    },
    'normalize': True,
    'model': {
        'variant': 'resblock1d',
        'hsf_order': 3,
        'width': 128,
    },
    'pitch': {
        'source': 'ground_truth',
        'salience_dir': None,
    },
    'train': {
        'momentum': 0.9,
        'initial_lr': 0.01,
        'lr_factor': 0.5,
        'lr_patience': 5,
        'batch_size': 16,
        'max_epochs': 100,
        'seed': 0,
        'validation_fraction': 0.1,
        'max_train_clips': None,
    },
    'loss': {
        'weight_cap': 10.0,
        'class_weights': None,
    },
    'workers': 1,
}
