"""
Data layer

- synthetic: planted-structure dataset generator and per-identity hold-out split
- sampling: hardest-triplet sampler (same color and model, different identity)

Manifest and feature-file IO lives in ``repnet.storage``.
"""
