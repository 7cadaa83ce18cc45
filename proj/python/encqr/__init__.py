"""Ensemble conformalized quantile regression for time series."""

import json as _json

from ._core import (
    EncqrError,
    asymmetric_scores,
    cqr_score,
    cwc,
    default_config,
    empirical_quantile,
    gen_synthetic,
    heteroscedasticity_measure,
    make_sliding_windows,
    pinaw,
    pinball_loss,
    picp,
    plan_subsets,
)
from ._core import run_experiment as _run_experiment


def run_experiment(config, overrides=()):
    """Run one experiment. `config` is a dict or a JSON string."""
    text = config if isinstance(config, str) else _json.dumps(config)
    return _run_experiment(text, list(overrides))


__all__ = [
    "EncqrError",
    "asymmetric_scores",
    "cqr_score",
    "cwc",
    "default_config",
    "empirical_quantile",
    "gen_synthetic",
    "heteroscedasticity_measure",
    "make_sliding_windows",
    "pinaw",
    "pinball_loss",
    "picp",
    "plan_subsets",
    "run_experiment",
]
