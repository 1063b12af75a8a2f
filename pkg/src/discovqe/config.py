"""Run configuration: YAML files, dotted command-line overrides, validation.

Unknown keys anywhere are errors, and everything method-specific is checked
before any computation starts.
"""

from __future__ import annotations

import copy
from pathlib import Path
from typing import Any, Literal

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .cost import CostModel
from .hamiltonians import HubbardSpec
from .optimize import OptimizerConfig


class ConfigError(ValueError):
    pass


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class SystemConfig(_Strict):
    fcidump: Path | None = None
    frozen: int = Field(0, ge=0)
    hubbard: HubbardSpec | None = None
    orbital_basis: Literal["tight-binding", "site"] = "tight-binding"

    @model_validator(mode="after")
    def _one_source(self):
        if (self.fcidump is None) == (self.hubbard is None):
            raise ValueError("system needs exactly one of 'fcidump' or 'hubbard'")
        if self.hubbard is not None and self.frozen:
            raise ValueError("'frozen' applies to FCIDUMP systems only")
        return self


class SectorConfig(_Strict):
    n_alpha: int = Field(ge=0)
    n_beta: int = Field(ge=0)


class AdaptConfig(_Strict):
    max_operators: int = Field(200, ge=0)
    selection_tolerance: float = Field(1e-3, gt=0)


class ReplayConfig(_Strict):
    ansatz: Path | None = None
    relax: bool = False


class ScanConfig(_Strict):
    parameter: str
    values: list[Any] = Field(min_length=1)
    warm_start: bool = False
    workers: int = Field(1, ge=1)


class RunConfig(_Strict):
    system: SystemConfig
    sector: SectorConfig | None = None
    method: Literal["disco", "adapt", "fci", "replay"] = "disco"
    optimizer: OptimizerConfig = OptimizerConfig()
    adapt: AdaptConfig = AdaptConfig()
    replay: ReplayConfig = ReplayConfig()
    cost_model: CostModel = CostModel()
    fci_reference: bool = True
    output: Path = Path("results")
    scan: ScanConfig | None = None

    @model_validator(mode="after")
    def _method_fields(self):
        if self.method == "replay" and self.replay.ansatz is None:
            raise ValueError("method 'replay' needs replay.ansatz")
        return self

    def check_inputs(self) -> None:
        """File-level checks that do not require any computation."""
        if self.system.fcidump is not None and not self.system.fcidump.is_file():
            raise ConfigError(f"FCIDUMP not found: {self.system.fcidump}")
        if self.method == "replay" and not self.replay.ansatz.is_file():
            raise ConfigError(f"ansatz file not found: {self.replay.ansatz}")


def parse_override(text: str) -> tuple[list[str], Any]:
    """``a.b.c=value`` with the value read as YAML (so numbers, lists, null work)."""
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not of the form key=value")
    key, raw = text.split("=", 1)
    path = [k for k in key.strip().split(".") if k]
    if not path:
        raise ConfigError(f"override {text!r} has an empty key")
    return path, yaml.safe_load(raw)


def set_path(tree: dict, path: list[str], value: Any) -> None:
    node = tree
    for k in path[:-1]:
        child = node.get(k)
        if child is None:
            child = node[k] = {}
        elif not isinstance(child, dict):
            raise ConfigError(f"cannot set {'.'.join(path)}: {k!r} is not a mapping")
        node = child
    node[path[-1]] = value


def _rebase_paths(raw: dict, base: Path) -> None:
    """Relative input paths in a config file are relative to that file."""
    system = raw.get("system")
    if isinstance(system, dict) and isinstance(system.get("fcidump"), str):
        system["fcidump"] = str(base / system["fcidump"])
    replay = raw.get("replay")
    if isinstance(replay, dict) and isinstance(replay.get("ansatz"), str):
        replay["ansatz"] = str(base / replay["ansatz"])
    scan = raw.get("scan")
    if isinstance(scan, dict) and scan.get("parameter") == "system.fcidump":
        scan["values"] = [str(base / v) if isinstance(v, str) else v for v in scan.get("values", [])]


def load_raw(path: str | Path | None) -> dict:
    if path is None:
        return {}
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text())
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    raw = raw or {}
    if not isinstance(raw, dict):
        raise ConfigError(f"config {path} must be a mapping at the top level")
    _rebase_paths(raw, path.resolve().parent)
    return raw


def build_config(raw: dict, overrides: list[str] = ()) -> RunConfig:
    tree = copy.deepcopy(raw)
    for item in overrides:
        set_path(tree, *parse_override(item))
    return validate(tree)


def validate(tree: dict) -> RunConfig:
    try:
        return RunConfig.model_validate(tree)
    except ValidationError as exc:
        raise ConfigError(str(exc)) from exc


def as_dict(config: RunConfig) -> dict:
    return config.model_dump(mode="json")
