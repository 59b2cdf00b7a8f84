"""Pipeline configuration: one flat schema holding every tunable."""
from __future__ import annotations

import hashlib
import json
import os
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from cloudecode.errors import ConfigError
from cloudecode.font import BUILTIN_FONT_ID, DEFAULT_ALPHABET

CONFIG_ENV = "CLOUDECODE_CONFIG"


@dataclass(frozen=True)
class PipelineConfig:
    # raster
    connectivity: int = 8
    color_tolerance: float = 48.0
    min_pixel_count: int = 4
    diacritic_max_gap: int = 3
    diacritic_gap_ratio: float = 0.35
    diacritic_mark_ratio: float = 0.4
    # glyph
    font: str = BUILTIN_FONT_ID
    alphabet: str = DEFAULT_ALPHABET
    ref_size: int = 32
    confidence_floor: float = 0.35
    # wordgraph; None scales/k are derived from the image
    weight_mode: str = "pairwise"
    x_scale: float | None = None
    y_scale: float | None = None
    color_scale: float = 60.0
    size_scale: float | None = None
    k: float | None = None
    tau: float = 1.6
    window_along: float = 3.0
    window_across: float = 0.5
    vertical: bool = True
    split_tolerance: float | None = 1.5
    size_split_tolerance: float | None = 1.5
    # sizing
    calibration_size: float = 48.0
    # output
    format: str = "json"

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        def need(cond, msg):
            if not cond:
                raise ConfigError(msg)

        for f in fields(self):
            val = getattr(self, f.name)
            expected = {"int": int, "float": (int, float), "str": str, "bool": bool}
            base = f.type.split(" ")[0]
            if val is None and "None" in f.type:
                continue
            if isinstance(val, bool) and base != "bool":
                raise ConfigError(f"{f.name}: expected {base}, got a boolean")
            if not isinstance(val, expected[base]):
                raise ConfigError(f"{f.name}: expected {base}, got {type(val).__name__}")
        need(self.connectivity in (4, 8), "connectivity must be 4 or 8")
        need(0 <= self.color_tolerance <= 255, "color_tolerance must be in [0, 255]")
        need(self.min_pixel_count >= 1, "min_pixel_count must be >= 1")
        need(self.diacritic_max_gap >= 0, "diacritic_max_gap must be >= 0")
        need(self.diacritic_gap_ratio >= 0, "diacritic_gap_ratio must be >= 0")
        need(0 < self.diacritic_mark_ratio <= 1, "diacritic_mark_ratio must be in (0, 1]")
        need(len(self.alphabet) > 0, "alphabet must be nonempty")
        need(self.ref_size >= 8, "ref_size must be >= 8")
        need(0 <= self.confidence_floor <= 1, "confidence_floor must be in [0, 1]")
        need(self.weight_mode in ("pairwise", "image"), "weight_mode must be 'pairwise' or 'image'")
        for name in ("x_scale", "y_scale", "size_scale", "k"):
            val = getattr(self, name)
            need(val is None or val > 0, f"{name} must be > 0")
        need(self.color_scale > 0, "color_scale must be > 0")
        need(self.tau > 0, "tau must be > 0")
        need(self.window_along > 0 and self.window_across > 0, "window sizes must be > 0")
        need(self.split_tolerance is None or self.split_tolerance >= 0, "split_tolerance must be >= 0")
        need(self.size_split_tolerance is None or self.size_split_tolerance >= 0,
             "size_split_tolerance must be >= 0")
        need(self.calibration_size > 0, "calibration_size must be > 0")
        need(self.format in ("json", "csv"), "format must be 'json' or 'csv'")

    @classmethod
    def from_dict(cls, data: dict) -> "PipelineConfig":
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**data)

    @classmethod
    def load(cls, path: str | Path | None = None, overrides: dict | None = None) -> "PipelineConfig":
        """Defaults, then the config file (argument or $CLOUDECODE_CONFIG), then overrides."""
        data: dict = {}
        path = path or os.environ.get(CONFIG_ENV) or None
        if path:
            text = Path(path).read_text()  # OSError is the caller's I/O failure
            try:
                data = json.loads(text)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
            if not isinstance(data, dict):
                raise ConfigError(f"{path}: config must be a JSON object")
        data = {**data, **{k: v for k, v in (overrides or {}).items() if v is not None}}
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        return asdict(self)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]
