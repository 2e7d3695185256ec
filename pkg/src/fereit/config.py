"""Flat ``key = value`` pipeline configuration."""
from __future__ import annotations

import math
import os
from dataclasses import dataclass, field, fields
from pathlib import Path

from .recon import parse_lambda


class ConfigError(ValueError):
    pass


def _bool(s):
    v = str(s).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _opt_float(s):
    if s is None or str(s).strip().lower() in ("", "auto", "none"):
        return None
    return float(s)


def _formats(s):
    if isinstance(s, (list, tuple)):
        return tuple(s)
    return tuple(x.strip() for x in str(s).split(",") if x.strip())


# key -> (parser, help)
KEYS = {
    "mesh_path": (str, "read the mesh (and optional electrode section) from this file"),
    "mesh_radius": (float, "disk radius when generating the mesh [1.0]"),
    "mesh_edge_length": (float, "target edge length when generating the mesh [0.05]"),
    "mesh_symmetry": (int, "round ring node counts to multiples of this [16]"),
    "coverage": (float, "fraction of the boundary covered by electrodes [0.5]"),
    "method": (str, "fer | standard [fer]"),
    "lambda": (parse_lambda, "regularization parameter; 'inf' allowed for fer [inf]"),
    "lambda_b": (_opt_float, "motion-filter parameter, 'auto' = 0.01 max diag(Sb^T Sb) [auto]"),
    "motion_filter": (_bool, "apply the boundary motion filter before reconstruction [true]"),
    "contrast": (float, "lung conductivity change at full inhale [-0.3]"),
    "breathing_hz": (float, "breathing frequency in Hz [0.25]"),
    "frames": (int, "number of frames [40]"),
    "frame_rate": (float, "frames per second [9]"),
    "reference_frame": (int, "index of the time-difference reference frame [0]"),
    "motion_amplitude": (float, "boundary motion amplitude as a fraction of radius [0]"),
    "motion_mode": (int, "angular mode number of the boundary motion [2]"),
    "noise_level": (float, "noise std relative to each frame's difference RMS [0.01]"),
    "seed": (int, "seed for all randomness [0]"),
    "out": (str, "output directory [out]"),
    "cache_dir": (str, "sensitivity cache directory [<out>/cache]"),
    "formats": (_formats, "comma-separated outputs among csv, ppm [csv,ppm]"),
    "threads": (int, "worker threads, 0 = available parallelism [0]"),
}


@dataclass
class PipelineConfig:
    mesh_path: str | None = None
    mesh_radius: float = 1.0
    mesh_edge_length: float = 0.05
    mesh_symmetry: int = 16
    coverage: float = 0.5
    method: str = "fer"
    lam: float = math.inf
    lambda_b: float | None = None
    motion_filter: bool = True
    contrast: float = -0.3
    breathing_hz: float = 0.25
    frames: int = 40
    frame_rate: float = 9.0
    reference_frame: int = 0
    motion_amplitude: float = 0.0
    motion_mode: int = 2
    noise_level: float = 0.01
    seed: int = 0
    out: str = "out"
    cache_dir: str | None = None
    formats: tuple = ("csv", "ppm")
    threads: int = 0
    explicit: set = field(default_factory=set, repr=False, compare=False)

    @property
    def n_threads(self):
        return self.threads if self.threads > 0 else (os.cpu_count() or 1)

    @property
    def cache_path(self):
        return Path(self.cache_dir) if self.cache_dir else Path(self.out) / "cache"

    def set(self, key, value):
        if key not in KEYS:
            raise ConfigError(f"unknown config key {key!r}")
        parser = KEYS[key][0]
        try:
            parsed = parser(value) if isinstance(value, str) or parser is _formats else value
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {exc}") from None
        setattr(self, "lam" if key == "lambda" else key, parsed)
        self.explicit.add(key)

    def validate(self):
        gen_keys = {"mesh_radius", "mesh_edge_length", "mesh_symmetry"} & self.explicit
        if self.mesh_path and gen_keys:
            raise ConfigError(f"both mesh_path and {sorted(gen_keys)} given; choose one mesh source")
        if self.method not in ("fer", "standard"):
            raise ConfigError(f"method must be 'fer' or 'standard', not {self.method!r}")
        if self.method == "standard" and not math.isfinite(self.lam):
            raise ConfigError("method=standard does not accept lambda=inf")
        if not self.lam > 0:
            raise ConfigError("lambda must be positive")
        if self.lambda_b is not None and not self.lambda_b > 0:
            raise ConfigError("lambda_b must be positive")
        if not 0 < self.coverage < 1:
            raise ConfigError("coverage must lie in (0, 1)")
        if self.frames < 1 or self.frame_rate <= 0:
            raise ConfigError("frames and frame_rate must be positive")
        if not 0 <= self.reference_frame < self.frames:
            raise ConfigError("reference_frame out of range")
        if self.noise_level < 0:
            raise ConfigError("noise_level must be non-negative")
        if not 0 <= self.motion_amplitude < 0.05:
            raise ConfigError("motion_amplitude must lie in [0, 0.05)")
        bad = set(self.formats) - {"csv", "ppm"}
        if bad:
            raise ConfigError(f"unknown output formats {sorted(bad)}")
        return self

    def as_dict(self):
        d = {f.name: getattr(self, f.name) for f in fields(self) if f.name != "explicit"}
        d["lam"] = "inf" if math.isinf(self.lam) else self.lam
        d["formats"] = list(self.formats)
        return d


def parse_config_text(text, source="<config>"):
    cfg = PipelineConfig()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        try:
            cfg.set(key.strip(), value.strip())
        except ConfigError as exc:
            raise ConfigError(f"{source}:{lineno}: {exc}") from None
    return cfg


def load_config(path):
    return parse_config_text(Path(path).read_text(), str(path))


def config_help():
    width = max(map(len, KEYS))
    return "\n".join(f"  {k.ljust(width)}  {h}" for k, (_, h) in KEYS.items())
