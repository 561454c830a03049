"""Run configuration shared by the command-line subcommands.

Config files are JSON. Relative paths that do not exist are looked up in the
directories listed in ``FTIND_CONFIG_DIR`` (``os.pathsep`` separated).
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

from .coil import MID_SCALE, CoilGeometry, load_geometry
from .metrics import AxisRanges
from .synth import NoiseModel, PlateKinematics, SensorModel, default_kinematics

CONFIG_ENV = "FTIND_CONFIG_DIR"


class ConfigError(Exception):
    pass


def resolve_path(name: str | Path) -> Path:
    p = Path(name)
    if p.exists():
        return p
    if not p.is_absolute():
        for d in os.environ.get(CONFIG_ENV, "").split(os.pathsep):
            if d and (Path(d) / p).exists():
                return Path(d) / p
    raise ConfigError(f"config file not found: {name}")


@dataclass
class RunConfig:
    vertical_coil: CoilGeometry = field(default_factory=lambda: load_geometry("vertical_coil"))
    horizontal_coil: CoilGeometry = field(default_factory=lambda: load_geometry("horizontal_coil"))
    kinematics: PlateKinematics = field(default_factory=default_kinematics)
    coupling_scale: float = 0.3
    full_scale_counts: int = MID_SCALE
    # ~0.012 N decoded noise on Fx/Fy with the default kinematics
    noise: NoiseModel = field(default_factory=lambda: NoiseModel(count_sigma=4.0))
    ranges: AxisRanges = field(default_factory=AxisRanges)
    rate: float = 1000.0
    seed: int = 0

    def sensor_model(self) -> SensorModel:
        return SensorModel(
            self.kinematics,
            (self.vertical_coil,) * 3 + (self.horizontal_coil,) * 3,
            self.coupling_scale,
            self.full_scale_counts,
        )

    @property
    def geometries(self) -> tuple[CoilGeometry, ...]:
        return (self.vertical_coil,) * 3 + (self.horizontal_coil,) * 3

    def to_dict(self) -> dict:
        return {
            "vertical_coil": self.vertical_coil.to_dict(),
            "horizontal_coil": self.horizontal_coil.to_dict(),
            "kinematics": self.kinematics.to_dict(),
            "coupling_scale": self.coupling_scale,
            "full_scale_counts": self.full_scale_counts,
            "noise": {
                "count_sigma": self.noise.count_sigma,
                "drift_per_second": self.noise.drift_per_second,
            },
            "ranges": list(self.ranges.spans),
            "rate": self.rate,
            "seed": self.seed,
        }

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()

    @classmethod
    def from_dict(cls, d: dict) -> RunConfig:
        known = {
            "vertical_coil", "horizontal_coil", "kinematics", "coupling_scale",
            "full_scale_counts", "noise", "ranges", "rate", "seed",
        }
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls()
        try:
            if "vertical_coil" in d:
                cfg.vertical_coil = load_geometry(d["vertical_coil"]).validate()
            if "horizontal_coil" in d:
                cfg.horizontal_coil = load_geometry(d["horizontal_coil"]).validate()
            if d.get("kinematics") is not None:
                cfg.kinematics = PlateKinematics.from_dict(d["kinematics"])
            if "noise" in d:
                cfg.noise = NoiseModel(**d["noise"])
            if "ranges" in d:
                cfg.ranges = AxisRanges(tuple(d["ranges"]))
            for key, cast in (("coupling_scale", float), ("full_scale_counts", int),
                              ("rate", float), ("seed", int)):
                if key in d:
                    setattr(cfg, key, cast(d[key]))
        except (TypeError, ValueError, KeyError, OSError) as exc:
            raise ConfigError(f"invalid config: {exc}") from exc
        if not 0 <= cfg.seed < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        return cfg


def load_config(path: str | Path | None) -> RunConfig:
    if path is None:
        return RunConfig()
    p = resolve_path(path)
    try:
        data = json.loads(p.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {p}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    return RunConfig.from_dict(data)

