"""Tracker configuration: defaults, validation, and the flat text format.

Config files are plain ``key = value`` lines whose keys are exactly the
field names of :class:`TrackerConfig`.  Blank lines and ``#`` comments are
allowed; unknown keys are hard errors so typos cannot silently fall back to
defaults.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .errors import ConfigError

_VALID_FEATURES = ("rgb", "lbp", "grad")


@dataclass
class TrackerConfig:
    # Appearance-model thresholds, one per channel group.
    tau_f_color: float = 30.0
    tau_f_texture: float = 30.0
    tau_f_edge: float = 30.0
    # Feature-grid geometry.
    grid_width: int = 64
    grid_height: int = 64
    # Association gates and depth compensation.
    tau_p: float = 2.0
    tau_s: float = 0.30
    eta_d: float = 1.0 / 30.0
    c_d: float = 1.0
    # Sequence timing; sample budget and lost timeout derive from it.
    fps: float = 25.0
    n_seconds: float = 3.0
    max_lost_seconds: float = 3.0
    # Kalman noise (diagonals) and initial uncertainties.
    process_noise: tuple = (1e-2, 1e-2, 1e-2, 1e-2, 1e-4, 1e-4)
    measurement_noise: tuple = (5e-2, 5e-2, 1e-2, 1e-2)
    # Innovation validation: candidate measurements whose normalized
    # innovation squared exceeds this are rejected.  13.3 is the 99th
    # percentile of chi-square with 4 degrees of freedom, so a confident
    # filter refuses teleports while a coasting one keeps a wide net.
    nis_gate: float = 13.3
    # Spawn-time uncertainty.  Velocity is in meters per frame: 0.25 allows
    # a 2.5 m/s sprint at 10 fps without letting a day-old track teleport.
    init_sigma_position: float = 0.3
    init_sigma_velocity: float = 0.25
    init_sigma_size: float = 0.2
    # Detected boxes understate the occluder's true pixel extent by the
    # detector's corner jitter, so occluders are inflated by this many
    # pixels per side before they clip a neighbour's visibility mask.
    # Without it a sliver of foreground leaks into the hidden target's
    # cells and its feature grid stops telling the two apart.
    occlusion_margin: float = 4.0
    # Property-model warm-up and variance floor (Vx, Vy, W, H).
    min_count: int = 10
    sigma_floor: tuple = (0.05, 0.05, 0.05, 0.05)
    # Track lifecycle.  A confirmed track coasts on prediction alone for up
    # to grace_seconds of consecutive misses before it is frozen as lost.
    confirm_hits: int = 3
    grace_seconds: float = 0.5
    min_confidence: float = 0.0
    # Feature selection and update behaviour.
    features: tuple = ("rgb", "lbp")
    spatial_weighting: bool = True
    # Stage toggles (both on for the full tracker; individually off for
    # ablation runs).
    cross_matching: bool = True
    reidentification: bool = True
    seed: int = 0

    def __post_init__(self):
        self.validate()

    # -- derived quantities -------------------------------------------------

    @property
    def n_max(self) -> int:
        """Per-cell sample budget: n_seconds of frames, clamped to [3, 128]."""
        return int(min(128, max(3, round(self.n_seconds * self.fps))))

    @property
    def max_lost_frames(self) -> int:
        return int(round(self.max_lost_seconds * self.fps))

    @property
    def grace_frames(self) -> int:
        return int(round(self.grace_seconds * self.fps))

    def tau_f_for(self, group: str) -> float:
        return {"color": self.tau_f_color, "texture": self.tau_f_texture, "edge": self.tau_f_edge}[group]

    # -- validation ---------------------------------------------------------

    def validate(self) -> None:
        positive = {
            "tau_f_color": self.tau_f_color,
            "tau_f_texture": self.tau_f_texture,
            "tau_f_edge": self.tau_f_edge,
            "tau_p": self.tau_p,
            "tau_s": self.tau_s,
            "c_d": self.c_d,
            "fps": self.fps,
            "n_seconds": self.n_seconds,
            "max_lost_seconds": self.max_lost_seconds,
            "init_sigma_position": self.init_sigma_position,
            "init_sigma_velocity": self.init_sigma_velocity,
            "init_sigma_size": self.init_sigma_size,
        }
        for name, value in positive.items():
            if not value > 0.0:
                raise ConfigError(f"{name} must be positive, got {value}")
        if self.eta_d < 0.0:
            raise ConfigError(f"eta_d must be non-negative, got {self.eta_d}")
        if self.grid_width < 1 or self.grid_height < 1:
            raise ConfigError("grid dimensions must be at least 1 cell")
        if self.confirm_hits < 1:
            raise ConfigError("confirm_hits must be at least 1")
        if self.min_count < 1:
            raise ConfigError("min_count must be at least 1")
        if self.nis_gate <= 0.0:
            raise ConfigError(f"nis_gate must be positive, got {self.nis_gate}")
        if self.occlusion_margin < 0.0:
            raise ConfigError(f"occlusion_margin must be non-negative, got {self.occlusion_margin}")
        if self.grace_seconds < 0.0:
            raise ConfigError(f"grace_seconds must be non-negative, got {self.grace_seconds}")
        if len(self.process_noise) != 6 or any(q < 0 for q in self.process_noise):
            raise ConfigError("process_noise must be 6 non-negative diagonal entries")
        if len(self.measurement_noise) != 4 or any(r <= 0 for r in self.measurement_noise):
            raise ConfigError("measurement_noise must be 4 positive diagonal entries")
        if len(self.sigma_floor) != 4 or any(s < 0 for s in self.sigma_floor):
            raise ConfigError("sigma_floor must be 4 non-negative entries")
        if not self.features:
            raise ConfigError("at least one feature must be enabled")
        for name in self.features:
            if name not in _VALID_FEATURES:
                raise ConfigError(f"unknown feature '{name}' (choose from {_VALID_FEATURES})")
        if len(set(self.features)) != len(self.features):
            raise ConfigError("features must not repeat")

    # -- Kalman matrices ----------------------------------------------------

    def process_noise_matrix(self) -> np.ndarray:
        return np.diag(np.asarray(self.process_noise, dtype=np.float64))

    def measurement_noise_matrix(self) -> np.ndarray:
        return np.diag(np.asarray(self.measurement_noise, dtype=np.float64))

    # -- (de)serialization ----------------------------------------------------

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, tuple):
                value = list(value)
            out[f.name] = value
        return out

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            value = getattr(self, f.name)
            lines.append(f"{f.name} = {_format_value(value)}")
        return "\n".join(lines) + "\n"

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_text())


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        if value and isinstance(value[0], str):
            return "+".join(value)
        return ",".join(repr(v) for v in value)
    return repr(value)


def parse_config(text: str, base: TrackerConfig | None = None) -> TrackerConfig:
    """Parse flat ``key = value`` text into a TrackerConfig.

    Unknown keys raise ConfigError.  Values omitted keep their defaults (or
    the values from ``base`` when given).
    """
    config = TrackerConfig() if base is None else base
    known = {f.name: f for f in fields(TrackerConfig)}
    values = {f: getattr(config, f) for f in known}

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, value_text = line.partition("=")
        key = key.strip()
        value_text = value_text.strip()
        if key not in known:
            raise ConfigError(f"line {lineno}: unknown config key '{key}'")
        try:
            values[key] = _convert(key, value_text, values[key])
        except ConfigError:
            raise
        except Exception as exc:
            raise ConfigError(f"line {lineno}: bad value for '{key}': {exc}") from exc

    return TrackerConfig(**values)


def load_config(path: str | Path, base: TrackerConfig | None = None) -> TrackerConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    return parse_config(path.read_text(), base=base)


def _convert(key: str, text: str, current):
    if isinstance(current, bool):
        lowered = text.lower()
        if lowered in ("true", "1", "yes", "on"):
            return True
        if lowered in ("false", "0", "no", "off"):
            return False
        raise ConfigError(f"expected a boolean, got {text!r}")
    if isinstance(current, int):
        return int(text)
    if isinstance(current, float):
        return float(text)
    if isinstance(current, tuple):
        if key == "features":
            parts = [p.strip() for p in text.replace("+", ",").split(",") if p.strip()]
            return tuple(parts)
        parts = [p.strip() for p in text.split(",") if p.strip()]
        return tuple(float(p) for p in parts)
    return text
