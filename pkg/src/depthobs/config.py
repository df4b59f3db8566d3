"""Flat ``key = value`` experiment configuration and named presets."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields, replace

from .flow import HsConfig
from .geometry import PixelGrid
from .observers import MODES, ObserverConfig
from .scene import SceneModel, TextureSpec, TrajectorySpec
from .variational import VarConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    # camera
    width: int = 640
    height: int = 480
    fov_h_deg: float = 50.0
    fov_v_deg: float = 40.0
    # scene
    plane_distance: float = 3.0
    tilt: float = 0.3
    tilt_axis: str = "z1"
    extent_u: float = 2.0
    extent_w: float = 2.0
    texture_base: float = 128.0
    texture_amplitude: float = 100.0
    texture_period_u: float = 0.5
    texture_period_w: float = 0.5
    extent_mask: bool = False
    supersample: bool = False
    # trajectory
    amp1: float = 1.0
    amp2: float = 1.0
    puls1: float = math.pi
    puls2: float = 3 * math.pi
    fps: float = 60.0
    n_frames: int = 120
    # rendering
    sigma: float = 1.0
    seed: int = 0
    pgm_scale: float = 128.0
    pgm_offset: float = 64.0
    # estimation
    mode: str = "flow-observer"
    k_flow: float = 500.0
    k_gamma: float = 50.0
    alpha_hs: float = 20.0
    alpha_var: float = 300.0
    alpha_units: str = "lattice"
    hs_iterations: int = 100
    hs_tol: float = 1e-6
    var_iterations: int = 200
    var_tol: float = 1e-8
    small_angle: bool = True
    stencil: str = "hs"
    presmooth: float = 0.0
    init_depth: float = 5.0
    init_gamma: float = 0.2
    depth_min: float = 0.1
    depth_max: float = 100.0
    max_substeps: int = 256
    normalize: bool = False
    external_flow: str = ""
    out: str = "out"

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {', '.join(MODES)}, got {self.mode!r}")
        if self.tilt_axis not in ("z1", "z2"):
            raise ConfigError(f"tilt_axis must be z1 or z2, got {self.tilt_axis!r}")
        if self.stencil not in ("hs", "five_point"):
            raise ConfigError(f"stencil must be hs or five_point, got {self.stencil!r}")
        if self.alpha_units not in ("lattice", "metric"):
            raise ConfigError(f"alpha_units must be lattice or metric, got {self.alpha_units!r}")
        if self.n_frames < 2 or self.fps <= 0:
            raise ConfigError("need n_frames >= 2 and fps > 0")
        if self.sigma < 0:
            raise ConfigError("sigma must be nonnegative")

    # component builders

    def grid(self) -> PixelGrid:
        return PixelGrid.from_fov(self.width, self.height, self.fov_h_deg, self.fov_v_deg)

    def scene(self) -> SceneModel:
        tex = TextureSpec(self.texture_base, self.texture_amplitude, self.texture_period_u, self.texture_period_w)
        return SceneModel((0.0, 0.0, self.plane_distance), self.tilt, self.tilt_axis, (self.extent_u, self.extent_w), tex)

    def trajectory(self) -> TrajectorySpec:
        return TrajectorySpec(self.amp1, self.amp2, self.puls1, self.puls2, self.fps, self.n_frames)

    def hs(self) -> HsConfig:
        return HsConfig(self.alpha_hs, self.hs_iterations, self.hs_tol, self.alpha_units)

    def var(self) -> VarConfig:
        return VarConfig(
            alpha=self.alpha_var,
            iterations=self.var_iterations,
            tol=self.var_tol,
            small_angle=self.small_angle,
            stencil=self.stencil,
            init_gamma=self.init_gamma,
            alpha_units=self.alpha_units,
        )

    def observer(self) -> ObserverConfig:
        k = self.k_gamma if self.mode == "gamma-observer" else self.k_flow
        return ObserverConfig(
            k=k,
            dt=1.0 / self.fps,
            max_substeps=self.max_substeps,
            init_depth=self.init_depth,
            depth_min=self.depth_min,
            depth_max=self.depth_max,
        )

    # text form

    def echo(self) -> str:
        """Resolved settings as ``key = value`` lines.  The output directory
        is left out so identical experiments echo identically wherever they
        are written."""
        return "".join(f"{k} = {_format(v)}\n" for k, v in asdict(self).items() if k != "out")


_FIELDS = {f.name: f for f in fields(ExperimentConfig)}


def _format(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _parse_value(name: str, text: str):
    kind = type(getattr(ExperimentConfig, name))
    if kind is bool:
        low = text.lower()
        if low in ("true", "yes", "1", "on"):
            return True
        if low in ("false", "no", "0", "off"):
            return False
        raise ValueError(f"not a boolean: {text!r}")
    if kind is int:
        return int(text)
    if kind is float:
        return float(text)
    return text


def parse_config(text: str, base: ExperimentConfig | None = None, source: str = "<config>") -> ExperimentConfig:
    """Apply ``key = value`` lines on top of ``base``.

    ``#`` starts a comment.  A ``preset = NAME`` line, if present, must come
    before any other key and selects the base.
    """
    cfg = base or ExperimentConfig()
    updates = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key == "preset":
            if updates:
                raise ConfigError(f"{source}:{lineno}: preset must precede other keys")
            cfg = preset(value)
            continue
        if key not in _FIELDS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        try:
            updates[key] = _parse_value(key, value)
        except ValueError as e:
            raise ConfigError(f"{source}:{lineno}: bad value for {key}: {e}") from None
    try:
        return replace(cfg, **updates)
    except ConfigError as e:
        raise ConfigError(f"{source}: {e}") from None


def load_config(path, base: ExperimentConfig | None = None) -> ExperimentConfig:
    with open(path) as f:
        return parse_config(f.read(), base, str(path))


_FULL_SIZE = ExperimentConfig()

PRESETS: dict[str, ExperimentConfig] = {
    "paper-sigma1": _FULL_SIZE,
    "paper-sigma1-k100": replace(_FULL_SIZE, k_flow=100.0),
    # the blur radius is the same visual angle at both resolutions
    "paper-sigma20": replace(_FULL_SIZE, sigma=20.0, k_flow=50.0, alpha_var=1000.0, presmooth=8.0),
    "desk": replace(_FULL_SIZE, width=160, height=120, n_frames=40),
    "desk-120": replace(_FULL_SIZE, width=160, height=120),
    "desk-sigma20": replace(
        _FULL_SIZE, width=160, height=120, sigma=20.0, k_flow=50.0, alpha_var=1000.0, presmooth=2.0
    ),
}


def preset(name: str) -> ExperimentConfig:
    try:
        return PRESETS[name]
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}") from None
