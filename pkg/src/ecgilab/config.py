"""Run configuration documents (TOML or JSON).

A document holds the scenario fields at top level, the ionic parameters in
an ``[ionic]`` table, stimuli and blocks as arrays of tables, and the
reconstruction and post-processing settings in ``[inverse]`` and
``[postprocess]``::

    name = "case1"
    t_end = 200.0

    [[stimuli]]
    angle = 0.0

    [inverse]
    epsilon = 1.0
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import sys
from dataclasses import dataclass
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigError
from .inverse import InverseConfig
from .postprocess import PostprocessConfig
from .propagation import BlockRegion, MSParams, ScenarioConfig, StimulusSpec

SCENARIO_DIR = Path(__file__).parent / "scenarios"
BUNDLED = ("case1", "case2", "case3")


@dataclass(frozen=True)
class RunConfig:
    scenario: ScenarioConfig
    inverse: InverseConfig
    postprocess: PostprocessConfig
    source: str = "<memory>"
    sha256: str = ""

    @property
    def seed(self) -> int:
        return self.scenario.rng_seed

    def to_dict(self) -> dict:
        return {
            **dataclasses.asdict(self.scenario),
            "inverse": dataclasses.asdict(self.inverse),
            "postprocess": dataclasses.asdict(self.postprocess),
        }


def _field_names(cls):
    return {f.name for f in dataclasses.fields(cls)}


def _build(cls, data, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected a table, got {type(data).__name__}", field=where)
    unknown = set(data) - _field_names(cls)
    if unknown:
        key = sorted(unknown)[0]
        path = f"{where}.{key}" if where else key
        raise ConfigError(f"unknown field {path!r}", field=path)
    types = {f.name: f.type for f in dataclasses.fields(cls)}
    clean = {}
    for key, value in data.items():
        path = f"{where}.{key}" if where else key
        t = str(types[key])
        if t == "float":
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ConfigError(f"{path} must be a number, got {value!r}", field=path)
            value = float(value)
        elif t == "int":
            if isinstance(value, bool) or not isinstance(value, int):
                raise ConfigError(f"{path} must be an integer, got {value!r}", field=path)
        elif t == "str" and not isinstance(value, str):
            raise ConfigError(f"{path} must be a string, got {value!r}", field=path)
        clean[key] = value
    try:
        return cls(**clean)
    except ConfigError as exc:
        path = f"{where}.{exc.field}" if where and exc.field else (exc.field or where)
        raise ConfigError(f"{where + ': ' if where else ''}{exc}", field=path) from None


def _items(data, key):
    items = data.get(key, [])
    if not isinstance(items, list):
        raise ConfigError(f"{key} must be an array of tables", field=key)
    return items


def config_from_dict(data: dict, source: str = "<memory>", sha256: str = "") -> RunConfig:
    """Validate a parsed document; errors carry the dotted path of the bad field."""
    data = dict(data)
    ionic = _build(MSParams, data.pop("ionic", {}), "ionic")
    stimuli = tuple(_build(StimulusSpec, s, f"stimuli[{i}]")
                    for i, s in enumerate(_items(data, "stimuli")))
    blocks = tuple(_build(BlockRegion, b, f"blocks[{i}]")
                   for i, b in enumerate(_items(data, "blocks")))
    data.pop("stimuli", None)
    data.pop("blocks", None)
    inverse = _build(InverseConfig, data.pop("inverse", {}), "inverse")
    post = _build(PostprocessConfig, data.pop("postprocess", {}), "postprocess")
    scenario = _build(ScenarioConfig, data, "")
    scenario = dataclasses.replace(scenario, ionic=ionic, stimuli=stimuli, blocks=blocks)
    return RunConfig(scenario, inverse, post, source, sha256)


def parse_document(text: str, suffix: str) -> dict:
    try:
        if suffix == ".json":
            return json.loads(text)
        return tomllib.loads(text)
    except (json.JSONDecodeError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot parse configuration: {exc}") from exc


def resolve_config_path(name) -> Path:
    """A file path, or the name of a bundled scenario (``case1`` .. ``case3``)."""
    path = Path(name)
    if path.exists():
        return path
    if str(name) in BUNDLED:
        return SCENARIO_DIR / f"{name}.toml"
    raise ConfigError(f"configuration file not found: {name}", field="config")


def load_config(path, seed: int | None = None, epsilon: float | None = None) -> RunConfig:
    """Read and validate a document, then apply command-line overrides.

    The recorded hash is that of the document bytes as read, before any
    override.
    """
    path = resolve_config_path(path)
    raw = path.read_bytes()
    digest = hashlib.sha256(raw).hexdigest()
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ConfigError(f"configuration is not UTF-8: {exc}") from exc
    cfg = config_from_dict(parse_document(text, path.suffix.lower()), str(path), digest)
    if seed is not None:
        if seed < 0:
            raise ConfigError(f"seed must be >= 0, got {seed}", field="rng_seed")
        cfg = dataclasses.replace(cfg, scenario=dataclasses.replace(cfg.scenario, rng_seed=seed))
    if epsilon is not None:
        cfg = dataclasses.replace(cfg, inverse=dataclasses.replace(cfg.inverse, epsilon=epsilon))
    return cfg
