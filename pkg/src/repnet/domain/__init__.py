"""
Domain layer

Purpose:
- Define the shared value types (datasets, triplet batches, repression kinds).
- Centralize the error taxonomy and its CLI exit statuses.

This package contains no file IO and no configuration parsing.
Other layers (numerics, data, retrieval, pipelines) import from here.
"""
