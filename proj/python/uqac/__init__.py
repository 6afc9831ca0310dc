"""Python bindings for the utility-aware query autocompletion workbench."""

import json as _json

from ._core import *  # noqa: F401,F403
from ._core import (
    emit_manifest_json as _emit_manifest_json,
    run_ablations_json as _run_ablations_json,
    run_experiment_json as _run_experiment_json,
)


def run_experiment(config_text, workbench):
    """Trains the unbiased ranker and returns the core report as a dict."""
    return _json.loads(_run_experiment_json(config_text, workbench))


def run_ablations(config_text, workbench):
    """Trains one ranker per estimator variant and returns the report as a dict."""
    return _json.loads(_run_ablations_json(config_text, workbench))


def emit_manifest(workdir):
    return _json.loads(_emit_manifest_json(str(workdir)))
