"""
config.py — service configuration

ServiceConfig is read from a JSON file. The path is taken from the CLI
`--config` flag, else the PRESENCED_CONFIG environment variable, else every
key keeps its default.

  {
    "decay": "exp:0.05",
    "awareness": {"top_k": 10, "theta": 0.0, "tie_boost": 0.0, "prune_epsilon": 1e-4},
    "visit": {"r_v": 100, "t_v_min": 60, "gap_max": 5},
    "grid": {"square_m": 100},
    "region": [lat_min, lon_min, lat_max, lon_max],
    "measures": [{"name": "domain_equality", "weight": 1.0}],
    "shingle_len": 3,
    "listen_host": "127.0.0.1", "listen_port": 8080,
    "locations_path": ..., "corpus_dir": ..., "user_ties_path": ...,
    "visit_log_path": ..., "snapshot_path": ..., "snapshot_key_path": ...
  }
"""

from __future__ import annotations

import json
import os
from pathlib import Path
from typing import List, Optional

from pydantic import BaseModel, Field, ValidationError, validator

from modules.decay_kernel import DecaySpec, parse_decay
from modules.errors import InvalidParameterError, PresenceError
from modules.geo_mapper import Region
from modules.similarity import WeightVector

CONFIG_ENV = "PRESENCED_CONFIG"


class AwarenessConfig(BaseModel):
    top_k: int = Field(10, ge=1)
    theta: float = Field(0.0, ge=0.0, le=1.0)
    tie_boost: float = Field(0.0, ge=0.0)
    prune_epsilon: float = Field(1e-4, ge=0.0)


class VisitConfig(BaseModel):
    r_v: float = Field(100.0, gt=0)
    t_v_min: int = Field(60, ge=0)
    gap_max: int = Field(5, ge=1)


class GridConfig(BaseModel):
    square_m: float = Field(100.0, gt=0)


class MeasureConfig(BaseModel):
    name: str
    weight: float = Field(..., ge=0.0)


class ServiceConfig(BaseModel):
    decay: str = "exp:0.05"
    awareness: AwarenessConfig = AwarenessConfig()
    visit: VisitConfig = VisitConfig()
    grid: GridConfig = GridConfig()
    region: Optional[List[float]] = None
    measures: List[MeasureConfig] = [MeasureConfig(name="domain_equality", weight=1.0)]
    shingle_len: int = Field(3, ge=1)

    listen_host: str = "127.0.0.1"
    listen_port: int = Field(8080, ge=0, le=65535)

    locations_path: Optional[str] = None
    corpus_dir: Optional[str] = None
    user_ties_path: Optional[str] = None
    visit_log_path: Optional[str] = None
    snapshot_path: Optional[str] = None
    snapshot_key_path: Optional[str] = None

    class Config:
        extra = "forbid"

    @validator("decay")
    def _decay_parses(cls, value):
        try:
            parse_decay(value)
        except PresenceError as exc:
            raise ValueError(str(exc)) from None
        return value

    @validator("region")
    def _region_valid(cls, value):
        if value is not None:
            try:
                Region.from_list(value)
            except PresenceError as exc:
                raise ValueError(str(exc)) from None
        return value

    @validator("measures")
    def _weights_sum(cls, value):
        try:
            WeightVector(tuple((m.name, m.weight) for m in value))
        except PresenceError as exc:
            raise ValueError(str(exc)) from None
        return value

    # -- typed accessors -----------------------------------------------------

    @property
    def decay_spec(self) -> DecaySpec:
        return parse_decay(self.decay)

    @property
    def weights(self) -> WeightVector:
        return WeightVector(tuple((m.name, m.weight) for m in self.measures))

    @property
    def measure_names(self) -> list[str]:
        return [m.name for m in self.measures]

    @property
    def region_box(self) -> Optional[Region]:
        return Region.from_list(self.region) if self.region is not None else None

    def check_paths(self) -> None:
        """
        Every configured input path must exist and be readable. The visit log
        may not exist yet on a fresh deployment; its directory must.
        """
        problems = []
        for name in ("locations_path", "corpus_dir", "user_ties_path"):
            value = getattr(self, name)
            if value is not None and not os.access(value, os.R_OK):
                problems.append(f"{name}: {value} is not readable")
        log_path = self.visit_log_path
        if log_path is not None:
            if os.path.exists(log_path):
                if not os.access(log_path, os.R_OK):
                    problems.append(f"visit_log_path: {log_path} is not readable")
            elif not os.path.isdir(os.path.dirname(os.path.abspath(log_path))):
                problems.append(f"visit_log_path: directory of {log_path} does not exist")
        if problems:
            raise InvalidParameterError("Invalid configuration: " + "; ".join(problems))


def load_config(path: Optional[str] = None, check_paths: bool = True) -> ServiceConfig:
    path = path or os.environ.get(CONFIG_ENV)
    if not path:
        return ServiceConfig()
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise InvalidParameterError(f"Cannot read config {path}: {exc}") from exc
    try:
        config = ServiceConfig.parse_obj(raw)
    except ValidationError as exc:
        problems = "; ".join(
            f"{'.'.join(str(p) for p in err['loc'])}: {err['msg']}" for err in exc.errors()
        )
        raise InvalidParameterError(f"Invalid configuration: {problems}") from None
    if check_paths:
        config.check_paths()
    return config
