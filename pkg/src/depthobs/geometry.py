"""Pinhole camera model and the kinematic coefficient fields.

Pixel (i, j) is column i, row j.  Arrays are stored row-major with shape
``(height, width)`` so that ``field[j, i]`` is the value at pixel (i, j).
``z1`` grows left to right with the column index and ``z2`` grows top to
bottom with the row index.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
from scipy.spatial.transform import Rotation


@dataclass(frozen=True)
class PixelGrid:
    """Rectangular pixel grid with pixel centers spanning ``[-zbar, zbar]``."""

    width: int
    height: int
    half_fov_h: float
    half_fov_v: float

    def __post_init__(self):
        if self.width < 2 or self.height < 2:
            raise ValueError(f"grid must be at least 2x2, got {self.width}x{self.height}")
        if not (0 < self.half_fov_h < math.pi / 2 and 0 < self.half_fov_v < math.pi / 2):
            raise ValueError("half field of view angles must lie in (0, pi/2)")
        if self.zbar1**2 + self.zbar2**2 >= 1.0:
            raise ValueError(
                f"pinhole bounds violate zbar1^2 + zbar2^2 < 1 "
                f"({self.zbar1**2 + self.zbar2**2:.4f})"
            )

    @classmethod
    def from_fov(cls, width: int, height: int, fov_h_deg: float = 50.0, fov_v_deg: float = 40.0):
        """Build a grid from full field-of-view angles in degrees."""
        return cls(width, height, math.radians(fov_h_deg) / 2, math.radians(fov_v_deg) / 2)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    @property
    def zbar1(self) -> float:
        return math.tan(self.half_fov_h)

    @property
    def zbar2(self) -> float:
        return math.tan(self.half_fov_v)

    @property
    def dz1(self) -> float:
        return 2 * self.zbar1 / (self.width - 1)

    @property
    def dz2(self) -> float:
        return 2 * self.zbar2 / (self.height - 1)

    @property
    def cell_area(self) -> float:
        return self.dz1 * self.dz2

    @property
    def z1(self) -> np.ndarray:
        return np.linspace(-self.zbar1, self.zbar1, self.width)

    @property
    def z2(self) -> np.ndarray:
        return np.linspace(-self.zbar2, self.zbar2, self.height)

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        """Pinhole coordinate arrays ``(Z1, Z2)`` of shape ``(height, width)``."""
        return np.meshgrid(self.z1, self.z2)

    def pixel_coords(self, i: int, j: int) -> tuple[float, float]:
        if not (0 <= i < self.width and 0 <= j < self.height):
            raise IndexError(f"pixel ({i}, {j}) outside {self.width}x{self.height} grid")
        return -self.zbar1 + i * self.dz1, -self.zbar2 + j * self.dz2

    def directions(self) -> np.ndarray:
        """Unit viewing directions for all pixels, shape ``(height, width, 3)``."""
        z1, z2 = self.mesh()
        return unit_direction(z1, z2)


@dataclass
class MotionSample:
    """Camera linear velocity ``v`` (m/s) and angular velocity ``omega`` (rad/s),
    both expressed in the camera frame, at time ``t``."""

    v: np.ndarray = field(default_factory=lambda: np.zeros(3))
    omega: np.ndarray = field(default_factory=lambda: np.zeros(3))
    t: float = 0.0

    def __post_init__(self):
        self.v = np.asarray(self.v, dtype=float).reshape(3)
        self.omega = np.asarray(self.omega, dtype=float).reshape(3)
        if not (np.all(np.isfinite(self.v)) and np.all(np.isfinite(self.omega))):
            raise ValueError("motion sample has non-finite components")

    def check_bounds(self, vbar: float, wbar: float) -> None:
        if np.linalg.norm(self.v) > vbar or np.linalg.norm(self.omega) > wbar:
            raise ValueError(f"motion at t={self.t} exceeds configured velocity bounds")

    @staticmethod
    def midpoint(a: MotionSample, b: MotionSample) -> MotionSample:
        return MotionSample((a.v + b.v) / 2, (a.omega + b.omega) / 2, (a.t + b.t) / 2)


@dataclass
class Pose:
    """Camera position in the reference frame and orientation as a unit
    quaternion in scalar-last order ``(x, y, z, w)`` mapping camera-frame
    vectors to the reference frame."""

    position: np.ndarray = field(default_factory=lambda: np.zeros(3))
    orientation: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 0.0, 1.0]))

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=float).reshape(3)
        self.orientation = np.asarray(self.orientation, dtype=float).reshape(4)
        if abs(np.linalg.norm(self.orientation) - 1.0) > 1e-9:
            raise ValueError("pose orientation must be a unit quaternion")

    @property
    def rotation(self) -> Rotation:
        return Rotation.from_quat(self.orientation)


class MotionCoeffs(NamedTuple):
    f1: np.ndarray
    f2: np.ndarray
    g1: np.ndarray
    g2: np.ndarray


def unit_direction(z1, z2) -> np.ndarray:
    z1 = np.asarray(z1, dtype=float)
    z2 = np.asarray(z2, dtype=float)
    rho = np.sqrt(1 + z1**2 + z2**2)
    return np.stack([z1 / rho, z2 / rho, 1 / rho], axis=-1)


def pixel_to_direction(grid: PixelGrid, i: int, j: int) -> np.ndarray:
    z1, z2 = grid.pixel_coords(i, j)
    return unit_direction(z1, z2)


def motion_coeffs(z1, z2, m: MotionSample) -> MotionCoeffs:
    """Rotational (f) and per-unit-inverse-depth translational (g) image rates."""
    z1 = np.asarray(z1, dtype=float)
    z2 = np.asarray(z2, dtype=float)
    v1, v2, v3 = m.v
    w1, w2, w3 = m.omega
    rho = np.sqrt(1 + z1**2 + z2**2)
    f1 = z1 * z2 * w1 - (1 + z1**2) * w2 + z2 * w3
    f2 = (1 + z2**2) * w1 - z1 * z2 * w2 - z1 * w3
    g1 = rho * (-v1 + z1 * v3)
    g2 = rho * (-v2 + z2 * v3)
    return MotionCoeffs(f1, f2, g1, g2)


def predicted_flow(z1, z2, m: MotionSample, gamma) -> tuple[np.ndarray, np.ndarray]:
    """Apparent velocity ``V = f + gamma * g`` in pinhole units per second."""
    c = motion_coeffs(z1, z2, m)
    return c.f1 + gamma * c.g1, c.f2 + gamma * c.g2


def output_fields(z1, z2, m: MotionSample):
    """Pinhole components ``((f1, f2), (g1, g2))`` of the tangent fields
    ``eta x omega`` and ``eta x (eta x v)``."""
    c = motion_coeffs(z1, z2, m)
    return (c.f1, c.f2), (c.g1, c.g2)


def radial_velocity(z1, z2, m: MotionSample) -> np.ndarray:
    """``v . eta``, the rate at which a static point's distance shrinks."""
    z1 = np.asarray(z1, dtype=float)
    z2 = np.asarray(z2, dtype=float)
    v1, v2, v3 = m.v
    return (z1 * v1 + z2 * v2 + v3) / np.sqrt(1 + z1**2 + z2**2)


def solid_angle_weight(z1, z2):
    return (1 + np.asarray(z1, dtype=float) ** 2 + np.asarray(z2, dtype=float) ** 2) ** -1.5


def integrate_pose(motions: Sequence[MotionSample], dt: float, initial: Pose | None = None) -> list[Pose]:
    """Integrate camera poses from body-frame velocities sampled every ``dt``.

    Each step uses the mean of the two bounding samples: the orientation is
    advanced by the exact exponential of that angular velocity, the position
    by the mean linear velocity rotated with the mid-step orientation.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    pose = initial if initial is not None else Pose()
    poses = [Pose(pose.position.copy(), pose.orientation.copy())]
    rot = pose.rotation
    pos = pose.position.copy()
    for a, b in zip(motions[:-1], motions[1:]):
        w = (a.omega + b.omega) / 2
        v = (a.v + b.v) / 2
        half = rot * Rotation.from_rotvec(w * dt / 2)
        pos = pos + dt * half.apply(v)
        q = (rot * Rotation.from_rotvec(w * dt)).as_quat()
        q /= np.linalg.norm(q)
        rot = Rotation.from_quat(q)
        poses.append(Pose(pos.copy(), q))
    return poses
