"""Inverse-depth estimation by minimizing the rotation-invariant
brightness-constancy cost with a smoothness penalty on the view sphere.

For known camera motion the brightness residual is affine in the inverse
depth, ``F + gamma * G``, and the stationarity condition is a scalar linear
diffusion equation solved here by Jacobi sweeps.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .flow import DerivativeStack
from .geometry import MotionSample, PixelGrid, motion_coeffs, solid_angle_weight
from .stencil import SphereOperator, euclidean_stencil


class DataTerms(NamedTuple):
    F: np.ndarray
    G: np.ndarray
    dt: float


@dataclass
class VarConfig:
    """Solver settings.

    ``alpha`` in ``"lattice"`` units treats the Laplacian as neighbor mean
    minus center value and the brightness derivatives per frame; in
    ``"metric"`` units it weighs the continuous cost in pinhole units and
    seconds.  ``small_angle`` swaps the sphere operator for a flat one.
    """

    alpha: float = 300.0
    iterations: int = 200
    tol: float = 1e-8
    small_angle: bool = True
    stencil: str = "hs"
    clamp_min: float = 0.0
    warm_start: bool = True
    init_gamma: float = 0.2
    alpha_units: str = "lattice"

    def __post_init__(self):
        if self.alpha <= 0 or self.iterations < 1:
            raise ValueError("variational solver needs alpha > 0 and at least one iteration")
        if self.alpha_units not in ("lattice", "metric"):
            raise ValueError(f"alpha_units must be 'lattice' or 'metric', got {self.alpha_units!r}")


def data_terms(stack: DerivativeStack, m: MotionSample, grid: PixelGrid) -> DataTerms:
    z1, z2 = grid.mesh()
    c = motion_coeffs(z1, z2, m)
    F = stack.yt + c.f1 * stack.yz1 + c.f2 * stack.yz2
    G = c.g1 * stack.yz1 + c.g2 * stack.yz2
    return DataTerms(F, G, stack.dt)


def operator(grid: PixelGrid, small_angle: bool, stencil: str = "hs"):
    return euclidean_stencil(grid, stencil) if small_angle else SphereOperator(grid)


def riemannian_laplacian(field: np.ndarray, grid: PixelGrid) -> np.ndarray:
    """``sum_ab d_a (c_ab d_b field)``, the sphere Laplacian times the area
    element, in pinhole coordinates with Neumann borders."""
    if field.shape != grid.shape:
        raise ValueError("field does not match grid")
    return SphereOperator(grid)(field)


def metric_alpha(alpha: float, grid: PixelGrid, dt: float, op, units: str = "lattice") -> float:
    if units == "metric":
        return alpha
    return alpha / (dt * np.sqrt(op.interior_degree))


def _weights(grid: PixelGrid, small_angle: bool):
    if small_angle:
        return np.ones(grid.shape)
    return solid_angle_weight(*grid.mesh())


def gamma_residual(gamma, terms: DataTerms, grid: PixelGrid, alpha_m: float, small_angle: bool = False, stencil: str = "hs"):
    """Stationarity residual ``w (F + gamma G) G - alpha^2 L gamma``; the cost
    gradient is ``2 * cell_area`` times this."""
    op = operator(grid, small_angle, stencil)
    w = _weights(grid, small_angle)
    return w * (terms.F + gamma * terms.G) * terms.G - alpha_m**2 * op(gamma)


def cost_J(
    gamma: np.ndarray,
    terms: DataTerms,
    grid: PixelGrid,
    alpha: float,
    small_angle: bool = False,
    stencil: str = "hs",
    alpha_units: str = "lattice",
) -> float:
    """Quadrature of the invariant cost: squared brightness residual plus
    ``alpha^2`` times the squared sphere gradient, both against the solid
    angle element (flat measure when ``small_angle``)."""
    if gamma.shape != terms.F.shape:
        raise ValueError("gamma and data terms differ in shape")
    op = operator(grid, small_angle, stencil)
    a = metric_alpha(alpha, grid, terms.dt, op, alpha_units)
    w = _weights(grid, small_angle)
    data = float(np.sum(w * (terms.F + gamma * terms.G) ** 2))
    return grid.cell_area * (data + a**2 * op.energy(gamma))


def solve_gamma(
    terms: DataTerms,
    cfg: VarConfig,
    grid: PixelGrid,
    init: np.ndarray | float | None = None,
    monitor=None,
) -> np.ndarray:
    """Jacobi sweeps ``gamma <- (alpha^2 c gamma_bar - F G) / (alpha^2 c + G^2)``.

    ``c`` is the operator's diagonal scale divided by the solid-angle weight
    (1 in small-angle mode).  The result is clamped below at
    ``cfg.clamp_min`` after the last sweep only.
    """
    op = operator(grid, cfg.small_angle, cfg.stencil)
    a2 = metric_alpha(cfg.alpha, grid, terms.dt, op, cfg.alpha_units) ** 2
    w = _weights(grid, cfg.small_angle)
    deg = op.degree
    F, G = terms.F, terms.G
    if init is None:
        init = cfg.init_gamma
    gamma = np.broadcast_to(np.asarray(init, dtype=float), grid.shape).copy()
    c = a2 * deg / w
    denom = c + G**2
    rhs = -F * G
    for k in range(cfg.iterations):
        mean = gamma + op(gamma) / deg
        new = (c * mean + rhs) / denom
        change = float(np.max(np.abs(new - gamma)))
        gamma = new
        if monitor is not None:
            monitor(k, gamma)
        if change < cfg.tol:
            break
    return np.maximum(gamma, cfg.clamp_min)
