"""TOML experiment configuration with strict validation."""

from dataclasses import asdict, dataclass, field
import math
import os
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .field2d import Grid2D, PatchSpec

__all__ = [
    "KINDS",
    "DEFAULT_TOLERANCES",
    "ConfigError",
    "ConfigParseError",
    "GridConfig",
    "PatchConfig",
    "PhysicsConfig",
    "ProfileConfig",
    "ExperimentConfig",
    "parse_config",
    "config_from_dict",
    "output_root",
]

KINDS = ("baby", "elliptic", "evolution", "patch", "annulus", "oseen", "eigen", "shear", "sweep")

DEFAULT_TOLERANCES = {
    "baby_linf": 1e-4,
    "baby_identity": 1e-10,
    "elliptic_rel_linf": 1e-5,
    "elliptic_order": 1.9,
    "coercivity_ratio": 1.0 - 1e-6,
    "evolution_drift": 1e-8,
    "fuchsian": 1e-6,
    "oracle_rel_l2": 1e-3,
    "euler_linf": 1e-6,
    "layer_linf": 3e-2,
    "width_rel": 5e-2,
    "width_ratio_rel": 5e-2,
    "level0_exponent": 0.25,
    "level0_exponent_tol": 0.05,
    "level1_exponent": 0.75,
    "level1_exponent_tol": 0.10,
    "besov_exponent_tol": 0.10,
    "r_squared": 0.99,
    "polarization": 0.1,
    "orthogonality": 1e-7,
    "superposition": 6e-2,
    "eigen": 1e-3,
    "oseen_residual": 1e-12,
    "circulation": 1e-6,
    "shear": 1e-8,
}

ENV_OUT = "VXLAYER_OUT"


class ConfigError(ValueError):
    """Validation failure at a key path such as ``physics.nu``."""

    def __init__(self, key, message):
        super().__init__(f"{key}: {message}")
        self.key = key


class ConfigParseError(ValueError):
    """Malformed document; the message carries line and column."""


@dataclass(frozen=True)
class GridConfig:
    n: int = 512
    length: float = 2 * math.pi


@dataclass(frozen=True)
class PatchConfig:
    shape: str = "disc"
    radii: tuple = (0.5,)
    center: tuple | None = None
    omega_in: float = 1.0
    omega_out: float = 0.0
    epsilon: float | None = None
    profile: str = "step"
    band_limited: bool = False

    def spec(self, grid):
        """Resolved PatchSpec; ``epsilon`` defaults to 4 grid cells."""
        eps = 0.0 if self.band_limited else self.epsilon
        if eps is None:
            eps = 4.0 * grid.spacing
        return PatchSpec(
            self.shape,
            tuple(self.radii),
            None if self.center is None else tuple(self.center),
            self.omega_in,
            self.omega_out,
            eps,
            self.profile,
        )


@dataclass(frozen=True)
class PhysicsConfig:
    nu: tuple = (1e-3,)
    times: tuple = (0.5,)
    dt: float = 0.005
    rays: int = 16
    r: float = 0.5
    euler: bool = False


@dataclass(frozen=True)
class ProfileConfig:
    x_max: float = 12.0
    n_half: int = 2048
    steps: int = 100


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    name: str
    grid: GridConfig = field(default_factory=GridConfig)
    patch: PatchConfig = field(default_factory=PatchConfig)
    physics: PhysicsConfig = field(default_factory=PhysicsConfig)
    profile: ProfileConfig = field(default_factory=ProfileConfig)
    output: str | None = None
    tolerances: dict = field(default_factory=dict)

    def tolerance(self, key):
        return self.tolerances.get(key, DEFAULT_TOLERANCES[key])

    def to_dict(self):
        d = asdict(self)
        d["tolerances"] = {k: self.tolerance(k) for k in sorted(DEFAULT_TOLERANCES)}
        return d


_SECTIONS = {"grid": GridConfig, "patch": PatchConfig, "physics": PhysicsConfig, "profile": ProfileConfig}
_TOP = {"kind", "name", "grid", "patch", "physics", "profile", "output", "tolerances"}


def _number(key, value, positive=False, integer=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(key, f"expected a number, got {value!r}")
    if integer and not isinstance(value, int):
        raise ConfigError(key, f"expected an integer, got {value!r}")
    if not math.isfinite(value):
        raise ConfigError(key, "must be finite")
    if positive and not value > 0:
        raise ConfigError(key, f"must be positive, got {value!r}")
    return value


def _number_list(key, value, positive=False):
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        value = [value]
    if not isinstance(value, list) or not value:
        raise ConfigError(key, "expected a non-empty list of numbers")
    return tuple(float(_number(f"{key}[{i}]", v, positive)) for i, v in enumerate(value))


def _section(name, raw):
    cls = _SECTIONS[name]
    if not isinstance(raw, dict):
        raise ConfigError(name, "expected a table")
    known = set(cls.__dataclass_fields__)
    for key in raw:
        if key not in known:
            raise ConfigError(f"{name}.{key}", "unknown key")
    return raw


def config_from_dict(raw):
    """Validate a parsed document and fill defaults."""
    for key in raw:
        if key not in _TOP:
            raise ConfigError(key, "unknown key")
    kind = raw.get("kind")
    if kind not in KINDS:
        raise ConfigError("kind", f"must be one of {', '.join(KINDS)}; got {kind!r}")
    name = raw.get("name", kind)
    if not isinstance(name, str) or not name or "/" in name:
        raise ConfigError("name", "must be a non-empty string without '/'")

    g = _section("grid", raw.get("grid", {}))
    n = _number("grid.n", g.get("n", 512), positive=True, integer=True)
    length = float(_number("grid.length", g.get("length", 2 * math.pi), positive=True))
    try:
        grid = Grid2D(n, length)
    except ValueError as exc:
        raise ConfigError("grid.n", str(exc)) from None

    p = _section("patch", raw.get("patch", {}))
    patch = PatchConfig(
        shape=p.get("shape", "disc"),
        radii=_number_list("patch.radii", p.get("radii", [0.5]), positive=True),
        center=None if "center" not in p else _number_list("patch.center", p["center"]),
        omega_in=float(_number("patch.omega_in", p.get("omega_in", 1.0))),
        omega_out=float(_number("patch.omega_out", p.get("omega_out", 0.0))),
        epsilon=None if "epsilon" not in p else float(_number("patch.epsilon", p["epsilon"])),
        profile=p.get("profile", "step"),
        band_limited=p.get("band_limited", False),
    )
    if not isinstance(patch.band_limited, bool):
        raise ConfigError("patch.band_limited", "expected true or false")
    if patch.band_limited and patch.epsilon not in (None, 0.0):
        raise ConfigError("patch.epsilon", "band-limited data are unmollified; omit epsilon")
    if patch.center is not None and len(patch.center) != 2:
        raise ConfigError("patch.center", "expected two coordinates")
    try:
        patch.spec(grid).validate(grid)
    except ValueError as exc:
        raise ConfigError("patch", str(exc)) from None

    ph = _section("physics", raw.get("physics", {}))
    nu = _number_list("physics.nu", ph.get("nu", [1e-3]), positive=True)
    if list(nu) != sorted(nu, reverse=True) and list(nu) != sorted(nu):
        raise ConfigError("physics.nu", "viscosities must be sorted")
    if len(set(nu)) != len(nu):
        raise ConfigError("physics.nu", "viscosities must be distinct")
    times = _number_list("physics.times", ph.get("times", [0.5]), positive=True)
    if list(times) != sorted(set(times)):
        raise ConfigError("physics.times", "checkpoints must be strictly increasing")
    physics = PhysicsConfig(
        nu=nu,
        times=times,
        dt=float(_number("physics.dt", ph.get("dt", 0.005), positive=True)),
        rays=_number("physics.rays", ph.get("rays", 16), positive=True, integer=True),
        r=float(_number("physics.r", ph.get("r", 0.5), positive=True)),
        euler=ph.get("euler", False),
    )
    if not isinstance(physics.euler, bool):
        raise ConfigError("physics.euler", "expected true or false")
    for i, t in enumerate(times):
        steps = t / physics.dt
        if abs(steps - round(steps)) > 1e-9 * max(1.0, steps):
            raise ConfigError(f"physics.times[{i}]", f"{t} is not a multiple of dt = {physics.dt}")
    if kind == "sweep" and len(nu) < 3:
        raise ConfigError("physics.nu", "a sweep needs at least three viscosities")

    pr = _section("profile", raw.get("profile", {}))
    profile = ProfileConfig(
        x_max=float(_number("profile.x_max", pr.get("x_max", 12.0), positive=True)),
        n_half=_number("profile.n_half", pr.get("n_half", 2048), positive=True, integer=True),
        steps=_number("profile.steps", pr.get("steps", 100), positive=True, integer=True),
    )
    if profile.n_half < 64:
        raise ConfigError("profile.n_half", "need at least 64 points per side")

    output = raw.get("output")
    if output is not None and not isinstance(output, str):
        raise ConfigError("output", "expected a directory path")

    tol = raw.get("tolerances", {})
    if not isinstance(tol, dict):
        raise ConfigError("tolerances", "expected a table")
    for key, value in tol.items():
        if key not in DEFAULT_TOLERANCES:
            raise ConfigError(f"tolerances.{key}", "unknown tolerance")
        _number(f"tolerances.{key}", value, positive=True)
    return ExperimentConfig(
        kind, name, GridConfig(n, length), patch, physics, profile, output,
        {k: float(v) for k, v in tol.items()},
    )


def parse_config(path):
    """Read and validate an experiment file.

    Raises
    ------
    FileNotFoundError
        If the file does not exist.
    ConfigParseError
        On malformed TOML; the message names line and column.
    ConfigError
        On a violated invariant; ``.key`` holds the key path.
    """
    path = Path(path)
    text = path.read_text()
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigParseError(f"{path}: {exc}") from None
    return config_from_dict(raw)


def output_root(cfg=None, override=None):
    """``--out`` beats the config's ``output``, which beats ``$VXLAYER_OUT``."""
    if override:
        return Path(override)
    if cfg is not None and cfg.output:
        return Path(cfg.output)
    return Path(os.environ.get(ENV_OUT, "vxlayer-out"))
