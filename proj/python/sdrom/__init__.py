"""Stochastic reduced-order models from latent SDEs.

Configurations are plain dicts with the same schema as the command-line
tool's JSON files.
"""

import json

from ._sdrom import (
    Dataset,
    PODBasis,
    SdromError,
    SINDyModel,
    SplitTag,
    Trajectory,
    TrainState,
    b_matrix_diag,
    error_metric,
    evaluate,
    numerical_time_derivative,
    pod_fit,
    pod_sindy_grid_search,
    polynomial_features,
    predict,
    read_checkpoint,
    read_dataset,
    stlsq_fit,
    write_checkpoint,
    write_dataset,
)
from . import _sdrom


def generate(spec):
    """Generate (train, validation, test) datasets from a generator spec dict."""
    return _sdrom._generate(json.dumps(spec))


def train(config, train_set, validation=None):
    """Train a model; returns (state, elbo_per_step, val_eps_mu_per_step).

    val_eps_mu entries are NaN at steps without validation.
    """
    return _sdrom._train(json.dumps(config), train_set, validation)


__all__ = [
    "Dataset",
    "PODBasis",
    "SdromError",
    "SINDyModel",
    "SplitTag",
    "Trajectory",
    "TrainState",
    "b_matrix_diag",
    "error_metric",
    "evaluate",
    "generate",
    "numerical_time_derivative",
    "pod_fit",
    "pod_sindy_grid_search",
    "polynomial_features",
    "predict",
    "read_checkpoint",
    "read_dataset",
    "stlsq_fit",
    "train",
    "write_checkpoint",
    "write_dataset",
]
