"""Flat ``key = value`` configuration files and the pipeline configuration."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path

MODES = ("full", "no-stabilize", "denoise-only", "decompose-only")


class ConfigError(ValueError):
    pass


def parse_kv(text):
    """Parse ``key = value`` lines; ``#`` starts a comment. Later keys win."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        key = key.strip().replace("-", "_")
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        values[key] = value.strip()
    return values


def load_kv(path):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_kv(text)


def format_kv(values):
    return "".join(f"{k} = {v}\n" for k, v in values.items())


@dataclass
class PipelineConfig:
    mode: str = "full"
    # stabilize
    canvas_scale: float = 2.0
    kde_bandwidth: float = 1.0
    # decompose
    rank: int = 1
    window: int = 30
    lam: float | None = None
    pcp_iters: int = 5
    pcp_tol: float = 1e-6
    # denoise
    bernoulli_p: float = 0.3
    replicas: int = 20
    kernel_radius: int = 2
    student: bool = True
    # fusion
    temporal_radius: int = 2
    rho: float = 0.02
    # data
    noise_var: float | None = None
    seed: int = 0
    input: str | None = None
    output: str | None = None
    clean: str | None = None
    bit_depth: int = 8
    dump_intermediates: bool = False
    dump_flow: bool = False
    variances: tuple = (0.001, 0.003, 0.005)
    seeds: tuple = (0, 1, 2)
    phantom: str | None = None

    def validate(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.canvas_scale < 1.0:
            raise ConfigError("canvas_scale must be >= 1")
        if self.kde_bandwidth <= 0:
            raise ConfigError("kde_bandwidth must be positive")
        if self.rank < 1:
            raise ConfigError("rank must be >= 1")
        if self.window < 2:
            raise ConfigError("window must be >= 2")
        if self.rank > self.window:
            raise ConfigError("rank cannot exceed window")
        if self.lam is not None and self.lam < 0:
            raise ConfigError("lambda must be nonnegative")
        if self.pcp_iters < 1 or self.pcp_tol <= 0:
            raise ConfigError("pcp_iters must be >= 1 and pcp_tol positive")
        if not 0 < self.bernoulli_p < 1:
            raise ConfigError("bernoulli_p must lie in (0, 1)")
        if self.replicas < 1 or self.kernel_radius < 1:
            raise ConfigError("replicas and kernel_radius must be >= 1")
        if self.temporal_radius < 0 or self.rho <= 0:
            raise ConfigError("temporal_radius must be >= 0 and rho positive")
        if self.noise_var is not None and self.noise_var <= 0:
            raise ConfigError("noise_var must be positive")
        if self.bit_depth not in (8, 16):
            raise ConfigError("bit_depth must be 8 or 16")
        return self

    @classmethod
    def from_mapping(cls, values):
        """Build from string values (config file or CLI), coercing by field type."""
        kwargs = {}
        fields = {f.name: f for f in dataclasses.fields(cls)}
        aliases = {"lambda": "lam"}
        for key, raw in values.items():
            name = aliases.get(key, key)
            if name not in fields:
                raise ConfigError(f"unknown config key {key!r}")
            kwargs[name] = _coerce(name, fields[name], raw)
        return cls(**kwargs)

    def updated(self, **overrides):
        overrides = {k: v for k, v in overrides.items() if v is not None}
        return dataclasses.replace(self, **overrides)


def _coerce(name, f, raw):
    if not isinstance(raw, str):
        return raw
    default = f.default if f.default is not dataclasses.MISSING else None
    text = raw.strip()
    try:
        if name in ("variances", "seeds"):
            conv = float if name == "variances" else int
            return tuple(conv(x) for x in text.replace(",", " ").split())
        if name == "lam":
            return None if text.lower() in ("auto", "none", "") else float(text)
        if name == "noise_var":
            return None if text.lower() in ("none", "0", "") else float(text)
        if isinstance(default, bool):
            if text.lower() in ("1", "true", "yes", "on"):
                return True
            if text.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
    except ValueError as exc:
        raise ConfigError(f"bad value for {name}: {raw!r}") from exc
    return text
