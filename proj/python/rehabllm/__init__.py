"""Python access to the rehabllm core."""

from pathlib import Path

from . import _rehabllm
from ._rehabllm import (
    ConfigError,
    DegenerateGeometry,
    EmptyInput,
    EndpointError,
    NotFound,
    OracleError,
    RehabError,
    SchemaError,
    TransportError,
    UndefinedMetric,
    auc_pr,
    auc_roc,
    basic_metrics,
    joint_angle,
    parse_response,
    pelvic_tilt,
    prompt_hash,
    segment_vertical_angle,
    summarize_results,
    synthesize,
)

# Wheels carry their own copy of the feature configs and templates; a build
# tree falls back to the source checkout.
_DATA = Path(__file__).resolve().parent / "data"


def _configs_dir(configs_dir=None):
    if configs_dir is not None:
        return configs_dir
    packaged = _DATA / "configs" / "features"
    return packaged if packaged.is_dir() else None


def _templates_dir(templates_dir=None):
    if templates_dir is not None:
        return templates_dir
    packaged = _DATA / "templates"
    return packaged if packaged.is_dir() else None


def exercise_ids(configs_dir=None):
    return _rehabllm.exercise_ids(_configs_dir(configs_dir))


def feature_names(exercise_id, configs_dir=None):
    return _rehabllm.feature_names(exercise_id, _configs_dir(configs_dir))


def extract_features(exercise_id, frames, side=None, configs_dir=None):
    """Returns (names, values) with values shaped (n_frames, n_features)."""
    return _rehabllm.extract_features(exercise_id, frames, side, _configs_dir(configs_dir))


def run(command, config, *, mock=None, out=None, cache_dir=None, seed=None, configs_dir=None, templates_dir=None):
    """Runs sweep, compare, per-exercise or feedback; config is a dict or a JSON path."""
    if isinstance(config, Path):
        config = str(config)
    return _rehabllm.run(
        command,
        config,
        mock=mock,
        out=None if out is None else str(out),
        cache_dir=None if cache_dir is None else str(cache_dir),
        seed=seed,
        configs_dir=_configs_dir(configs_dir),
        templates_dir=_templates_dir(templates_dir),
    )


__all__ = [
    "ConfigError",
    "DegenerateGeometry",
    "EmptyInput",
    "EndpointError",
    "NotFound",
    "OracleError",
    "RehabError",
    "SchemaError",
    "TransportError",
    "UndefinedMetric",
    "auc_pr",
    "auc_roc",
    "basic_metrics",
    "exercise_ids",
    "extract_features",
    "feature_names",
    "joint_angle",
    "parse_response",
    "pelvic_tilt",
    "prompt_hash",
    "run",
    "segment_vertical_angle",
    "summarize_results",
    "synthesize",
]
