"""Multi-skip feature stacking: latent-signal model, conditioning bounds,
and a Fisher-vector recognition pipeline for multi-speed action series."""

__version__ = "0.1.0"
