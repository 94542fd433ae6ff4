"""Weakly-supervised anomaly detection for multivariate sensor time series.

The toolkit bundles a synthetic plant-data generator, sliding-window feature
extraction, a small from-scratch neural engine, cluster-center and Siamese
autoencoder anomaly scorers, classic baselines, evaluation metrics and an
experiment harness.  Import the submodules directly, e.g.
``from twinguard import synthgen, features, metrics``.
"""

__version__ = "0.1.0"
