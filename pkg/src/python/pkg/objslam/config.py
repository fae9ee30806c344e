"""Run configuration from a single TOML file.

    [fit]       -> FitConfig
    [assoc]     -> AssocConfig
    [graph]     -> GraphSettings
    [pipeline]  -> PipelineConfig (mode, olc, temporal_shape, incremental_every,
                   fit_information, keypoint_sigma)
    [sim]       -> ScenarioConfig

Missing tables and keys take the defaults of a plain RunConfig(). Unknown tables or
keys, wrong types and out-of-range values raise ConfigError. A FitConfig regularizer_weight
of None (use 1 / mean eigenvalue) is expressed by leaving the key out.
"""

import logging
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, TypeVar, Union

import toml

from objslam.assoc.tracker import AssocConfig
from objslam.errors import ConfigError
from objslam.evaluation.pipeline import PipelineConfig
from objslam.fit.observation import FitConfig
from objslam.graph.optimize import GraphSettings
from objslam.sim.scenario import ScenarioConfig

__all__ = ["RunConfig", "config_to_dict", "load_config", "parse_config"]

_PIPELINE_KEYS = (
    "mode",
    "olc",
    "temporal_shape",
    "incremental_every",
    "fit_information",
    "keypoint_sigma",
)
_TABLES = ("fit", "assoc", "graph", "pipeline", "sim")

T = TypeVar("T")

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RunConfig:
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)
    sim: ScenarioConfig = field(default_factory=ScenarioConfig)

    def with_overrides(
        self,
        mode: Optional[str] = None,
        olc: Optional[bool] = None,
        seed: Optional[int] = None,
    ) -> "RunConfig":
        """Command-line flags win over the file."""
        pipeline = self.pipeline
        if mode is not None:
            pipeline = replace(pipeline, mode=mode)
        if olc is not None:
            pipeline = replace(pipeline, olc=olc)
        sim = self.sim if seed is None else replace(self.sim, seed=seed)
        return RunConfig(pipeline=pipeline, sim=sim)


# Private functions ------------------------------------------------------------


def _build(
    cls: type, table: str, values: Mapping[str, Any], allowed: Optional[tuple] = None
) -> Dict[str, Any]:
    if not isinstance(values, Mapping):
        raise ConfigError(f"[{table}] must be a table")
    known = set(allowed) if allowed is not None else {f.name for f in fields(cls)}
    unknown = sorted(set(values) - known)
    if unknown:
        raise ConfigError(f"unknown key(s) in [{table}]: {', '.join(unknown)}")
    return {k: tuple(v) if isinstance(v, list) else v for k, v in values.items()}


def _make(default: T, table: str, kwargs: Dict[str, Any]) -> T:
    """`default` with the table's values swapped in, validated again."""
    try:
        return replace(default, **kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{table}]: {exc}") from exc


def _plain(value: Any) -> Any:
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    return value


# Public API ------------------------------------------------------------------


def parse_config(doc: Mapping[str, Any]) -> RunConfig:
    unknown = sorted(set(doc) - set(_TABLES))
    if unknown:
        raise ConfigError(f"unknown table(s): {', '.join(unknown)}")

    base = RunConfig()
    p = base.pipeline
    fit = _make(p.fit, "fit", _build(FitConfig, "fit", doc.get("fit", {})))
    assoc = _make(p.assoc, "assoc", _build(AssocConfig, "assoc", doc.get("assoc", {})))
    graph = _make(p.graph, "graph", _build(GraphSettings, "graph", doc.get("graph", {})))
    pipeline_keys = _build(PipelineConfig, "pipeline", doc.get("pipeline", {}), _PIPELINE_KEYS)
    pipeline = _make(p, "pipeline", {"fit": fit, "assoc": assoc, "graph": graph, **pipeline_keys})
    sim = _make(base.sim, "sim", _build(ScenarioConfig, "sim", doc.get("sim", {})))
    return RunConfig(pipeline=pipeline, sim=sim)


def load_config(path: Union[str, Path, None] = None) -> RunConfig:
    """Defaults when `path` is None."""
    if path is None:
        return RunConfig()
    try:
        doc = toml.loads(Path(path).read_text())
    except toml.TomlDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    config = parse_config(doc)
    logger.info(f"Loaded configuration from {path}")
    return config


def config_to_dict(config: RunConfig) -> Dict[str, Dict[str, Any]]:
    """Every effective setting, defaults included, as TOML-ready tables."""
    p = config.pipeline
    tables = {
        "fit": asdict(p.fit),
        "assoc": asdict(p.assoc),
        "graph": asdict(p.graph),
        "pipeline": {k: getattr(p, k) for k in _PIPELINE_KEYS},
        "sim": asdict(config.sim),
    }
    return {
        name: {k: _plain(v) for k, v in table.items() if v is not None}
        for name, table in tables.items()
    }
