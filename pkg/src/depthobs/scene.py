"""Synthetic image sequences of a textured plane seen by a translating camera."""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.transform import Rotation

from .geometry import MotionSample, PixelGrid, Pose, integrate_pose, unit_direction

THREADS_ENV = "DEPTHOBS_THREADS"


@dataclass(frozen=True)
class TextureSpec:
    base: float = 128.0
    amplitude: float = 100.0
    period_u: float = 0.5
    period_w: float = 0.5

    def __post_init__(self):
        if self.base - self.amplitude < 1 or self.base + self.amplitude > 256:
            raise ValueError("texture range must stay within [1, 256]")
        if self.period_u <= 0 or self.period_w <= 0:
            raise ValueError("texture periods must be positive")

    def __call__(self, u, w):
        return self.base + self.amplitude * np.sin(2 * np.pi * u / self.period_u) * np.sin(
            2 * np.pi * w / self.period_w
        )


@dataclass(frozen=True)
class SceneModel:
    """Textured plane through ``plane_point``, tilted by ``tilt`` radians about
    the camera's ``z1`` (horizontal) or ``z2`` axis."""

    plane_point: tuple[float, float, float] = (0.0, 0.0, 3.0)
    tilt: float = 0.3
    tilt_axis: str = "z1"
    extent: tuple[float, float] = (2.0, 2.0)
    texture: TextureSpec = field(default_factory=TextureSpec)

    def __post_init__(self):
        if self.tilt_axis not in ("z1", "z2"):
            raise ValueError(f"tilt_axis must be 'z1' or 'z2', got {self.tilt_axis!r}")

    @property
    def frame(self) -> np.ndarray:
        """Rows: in-plane axis u, in-plane axis w, plane normal."""
        axis = np.array([1.0, 0, 0]) if self.tilt_axis == "z1" else np.array([0, 1.0, 0])
        return Rotation.from_rotvec(self.tilt * axis).as_matrix().T

    def intersect(self, origin: np.ndarray, dirs: np.ndarray):
        """Range along unit rays ``dirs`` (reference frame) to the plane and the
        in-plane coordinates of the hit point.  Misses give a NaN range."""
        eu, ew, n = self.frame
        p0 = np.asarray(self.plane_point, dtype=float)
        denom = dirs @ n
        with np.errstate(divide="ignore", invalid="ignore"):
            s = np.where(np.abs(denom) > 1e-12, ((p0 - origin) @ n) / denom, np.nan)
        s = np.where(s > 0, s, np.nan)
        hit = origin + s[..., None] * dirs
        rel = hit - p0
        return s, rel @ eu, rel @ ew

    def on_plate(self, u, w) -> np.ndarray:
        return (np.abs(u) <= self.extent[0] / 2) & (np.abs(w) <= self.extent[1] / 2)


@dataclass(frozen=True)
class TrajectorySpec:
    amp1: float = 1.0
    amp2: float = 1.0
    puls1: float = math.pi
    puls2: float = 3 * math.pi
    fps: float = 60.0
    n_frames: int = 120

    def velocity(self, t: float) -> np.ndarray:
        return np.array([self.amp1 * math.sin(self.puls1 * t), self.amp2 * math.sin(self.puls2 * t), 0.0])


@dataclass
class SyntheticSequence:
    """Frames with their camera motion, and ground truth when known.

    ``truth_depth`` and ``poses`` are ``None`` for sequences ingested without
    ground truth.  ``valid`` holds per-frame evaluation masks (``None`` means
    every pixel is valid).
    """

    frames: list[np.ndarray]
    motions: list[MotionSample]
    grid: PixelGrid
    fps: float
    truth_depth: list[np.ndarray] | None = None
    poses: list[Pose] | None = None
    noise_sigma: float = 0.0
    rng_seed: int = 0
    valid: list[np.ndarray] | None = None

    def __post_init__(self):
        n = len(self.frames)
        if len(self.motions) != n:
            raise ValueError("frames and motions must have equal length")
        for name in ("truth_depth", "poses", "valid"):
            seq = getattr(self, name)
            if seq is not None and len(seq) != n:
                raise ValueError(f"{name} must have one entry per frame")

    @property
    def dt(self) -> float:
        return 1.0 / self.fps

    def __len__(self):
        return len(self.frames)


def make_trajectory(spec: TrajectorySpec, initial: Pose | None = None):
    """Sinusoidal translation in the image plane, starting at rest."""
    if spec.fps <= 0 or spec.n_frames < 2:
        raise ValueError("trajectory needs fps > 0 and at least two frames")
    dt = 1.0 / spec.fps
    motions = [MotionSample(spec.velocity(k * dt), np.zeros(3), k * dt) for k in range(spec.n_frames)]
    return motions, integrate_pose(motions, dt, initial)


def constant_motion(v, omega=(0.0, 0.0, 0.0), fps: float = 60.0, n_frames: int = 60):
    dt = 1.0 / fps
    return [MotionSample(v, omega, k * dt) for k in range(n_frames)]


def _world_rays(pose: Pose, grid: PixelGrid, supersample: bool = False) -> list[np.ndarray]:
    z1, z2 = grid.mesh()
    if supersample:
        offsets = [(-0.25, -0.25), (0.25, -0.25), (-0.25, 0.25), (0.25, 0.25)]
    else:
        offsets = [(0.0, 0.0)]
    rot = pose.rotation.as_matrix()
    return [unit_direction(z1 + a * grid.dz1, z2 + b * grid.dz2) @ rot.T for a, b in offsets]


def depth_field(pose: Pose, grid: PixelGrid, scene: SceneModel, strict: bool = True) -> np.ndarray:
    """Range from the optical center to the plane for every pixel center.

    Missing or behind-camera hits are NaN, or raise when ``strict``.
    """
    (dirs,) = _world_rays(pose, grid)
    s, _, _ = scene.intersect(pose.position, dirs)
    if strict and not np.all(np.isfinite(s)):
        raise ValueError(f"{int(np.sum(~np.isfinite(s)))} pixel rays miss the plane")
    return s


def plane_depth(pose: Pose, grid: PixelGrid, scene: SceneModel, i: int, j: int) -> float:
    from .geometry import pixel_to_direction

    d = pose.rotation.apply(pixel_to_direction(grid, i, j))
    s, _, _ = scene.intersect(pose.position, d[None, :])
    if not np.isfinite(s[0]):
        raise ValueError(f"ray through pixel ({i}, {j}) does not hit the plane")
    return float(s[0])


def _thread_count() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def _row_noise(seed: int, frame_index: int, height: int, width: int, workers: int) -> np.ndarray:
    """Standard normal noise with one independent substream per row, so the
    result does not depend on how rows are scheduled."""

    def row(j):
        ss = np.random.SeedSequence(seed, spawn_key=(frame_index, j))
        return np.random.Generator(np.random.PCG64(ss)).standard_normal(width)

    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            rows = list(ex.map(row, range(height)))
    else:
        rows = [row(j) for j in range(height)]
    return np.stack(rows)


def render_frame(
    pose: Pose,
    grid: PixelGrid,
    scene: SceneModel,
    sigma: float = 0.0,
    seed: int = 0,
    frame_index: int = 0,
    strict: bool = True,
    supersample: bool = False,
    workers: int | None = None,
) -> np.ndarray:
    """Render the plane texture, quantized to ``{1..256}``, plus Gaussian noise.

    Noise is drawn from substreams keyed by ``(seed, frame_index, row)``.
    Pixels whose ray misses the plane are NaN unless ``strict`` (error).
    """
    samples = []
    for dirs in _world_rays(pose, grid, supersample):
        s, u, w = scene.intersect(pose.position, dirs)
        samples.append(np.where(np.isfinite(s), scene.texture(u, w), np.nan))
    y = np.mean(samples, axis=0)
    missing = ~np.isfinite(y)
    if strict and missing.any():
        raise ValueError(f"{int(missing.sum())} pixels do not see the plane")
    y = np.clip(np.rint(y), 1, 256)
    if sigma > 0:
        workers = _thread_count() if workers is None else workers
        y = y + sigma * _row_noise(seed, frame_index, grid.height, grid.width, workers)
    return y


def generate_sequence(
    grid: PixelGrid,
    scene: SceneModel,
    trajectory: TrajectorySpec,
    sigma: float = 0.0,
    seed: int = 0,
    strict: bool = True,
    supersample: bool = False,
    extent_mask: bool = False,
    motions: list[MotionSample] | None = None,
    workers: int | None = None,
) -> SyntheticSequence:
    """Render every frame along the trajectory with per-frame ground truth.

    ``motions`` overrides the sinusoidal profile (it must be sampled at
    ``trajectory.fps``).
    """
    if motions is None:
        motions, poses = make_trajectory(trajectory)
    else:
        poses = integrate_pose(motions, 1.0 / trajectory.fps)
    frames, truth, valid = [], [], []
    for k, pose in enumerate(poses):
        frames.append(render_frame(pose, grid, scene, sigma, seed, k, strict, supersample, workers))
        (dirs,) = _world_rays(pose, grid)
        s, u, w = scene.intersect(pose.position, dirs)
        if strict and not np.all(np.isfinite(s)):
            raise ValueError("plane not visible on every pixel")
        truth.append(s)
        mask = np.isfinite(s)
        if extent_mask:
            mask &= scene.on_plate(u, w)
        valid.append(mask)
    all_valid = all(m.all() for m in valid)
    return SyntheticSequence(
        frames=frames,
        motions=list(motions),
        grid=grid,
        fps=trajectory.fps,
        truth_depth=truth,
        poses=poses,
        noise_sigma=sigma,
        rng_seed=seed,
        valid=None if all_valid else valid,
    )
