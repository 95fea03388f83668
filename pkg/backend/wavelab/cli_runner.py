"""Configuration parsing and experiment orchestration.

``validate`` turns TOML text into an ExperimentConfig (or a list of field-path errors),
``run`` executes the configured experiment and writes its artifacts under
``<out_dir>/<kind>/``.
"""

import copy
import logging
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Union

from pydantic import ValidationError

from wavelab.errors import ConfigInvalid, LabError
from wavelab.experiments import RUNNERS
from wavelab.experiments.base import RunContext
from wavelab.models import ExperimentConfig, Summary
from wavelab.utils.io import write_summary
from wavelab.utils.rng import StageStreams

logger = logging.getLogger(__name__)

SUMMARY_FILE = "summary.json"


def _format_errors(exc: ValidationError, prefix: str = "") -> List[str]:
    messages = []
    for error in exc.errors():
        path = ".".join(str(part) for part in error["loc"]) or "config"
        message = error["msg"].removeprefix("Value error, ")
        messages.append(f"{prefix}{path}: {message}")
    return messages


def _merge(base: Dict[str, Any], overrides: Mapping[str, Any]) -> Dict[str, Any]:
    merged = copy.deepcopy(base)
    for key, value in overrides.items():
        if isinstance(value, Mapping) and isinstance(merged.get(key), dict):
            merged[key] = _merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def _validate_params(config: ExperimentConfig) -> Union[Dict[str, Any], List[str]]:
    try:
        params = RUNNERS[config.kind].Params.model_validate(config.params)
    except ValidationError as e:
        return _format_errors(e, prefix="params.")
    return params.model_dump(mode="json")


def validate(config_text: str, overrides: Optional[Mapping[str, Any]] = None) -> Union[ExperimentConfig, List[str]]:
    """Parse a TOML configuration; never raises.

    Returns the config with every default filled in, including the kind-specific
    ``params``, or the list of all violations as ``"field.path: message"``.
    """
    try:
        data = tomllib.loads(config_text)
    except tomllib.TOMLDecodeError as e:
        return [f"toml: {e}"]
    if overrides:
        requested, declared = overrides.get("kind"), data.get("kind")
        if requested and declared and requested != declared:
            return [f"kind: config declares {declared!r} but {requested!r} was requested"]
        data = _merge(data, overrides)
    try:
        config = ExperimentConfig.model_validate(data)
    except ValidationError as e:
        errors = _format_errors(e)
        kind = data.get("kind")
        if kind in RUNNERS and isinstance(data.get("params", {}), dict):
            try:
                RUNNERS[kind].Params.model_validate(data.get("params", {}))
            except ValidationError as params_error:
                errors.extend(_format_errors(params_error, prefix="params."))
        return errors
    params = _validate_params(config)
    if isinstance(params, list):
        return params
    return config.model_copy(update={"params": params})


def load_config(path: Union[str, Path], overrides: Optional[Mapping[str, Any]] = None) -> ExperimentConfig:
    """Read and validate a config file, raising ConfigInvalid with every violation."""
    result = validate(Path(path).read_text(encoding="utf-8"), overrides)
    if isinstance(result, list):
        raise ConfigInvalid(result)
    return result


def execute(config: ExperimentConfig) -> Summary:
    """Run the experiment and write summary.json; module errors carry the experiment kind."""
    runner = RUNNERS[config.kind]
    params = _validate_params(config)
    if isinstance(params, list):
        raise ConfigInvalid(params)
    out_dir = Path(config.out_dir) / config.kind
    out_dir.mkdir(parents=True, exist_ok=True)
    ctx = RunContext(
        config=config,
        params=runner.Params.model_validate(params),
        out_dir=out_dir,
        streams=StageStreams(config.seed, runner.STAGES),
    )
    logger.info(f"Running {config.kind} (seed={config.seed}, eps={config.eps}) into {out_dir}")
    try:
        runner.run(ctx)
    except ConfigInvalid:
        raise
    except LabError as e:
        raise e.with_prefix(config.kind) from e
    except ValueError as e:
        raise LabError(f"{config.kind}: {e}") from e
    summary = ctx.summary()
    write_summary(out_dir / SUMMARY_FILE, summary)
    failed = [gate.name for gate in summary.gates if not gate.passed]
    if failed:
        logger.warning(f"⚠️ {config.kind}: {len(failed)} gate(s) failed: {', '.join(failed)}")
    return summary


def run(config: ExperimentConfig) -> int:
    """Exit status of the run: 0 when every gate passes, 1 otherwise."""
    return 0 if execute(config).passed else 1
