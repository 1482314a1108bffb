# Settings package initializer.
# Import from the appropriate environment module (dev or prod).
# Default to dev settings for local development.
