"""Horn-Schunck optical flow in pinhole units.

Spatial derivatives are taken per unit of ``z`` and the temporal derivative
per second, so flow comes out in pinhole units per second and can be
compared directly with ``f + gamma * g``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import ndimage

from .geometry import PixelGrid
from .stencil import GraphLaplacian, horn_schunck_stencil


class DerivativeStack(NamedTuple):
    yz1: np.ndarray
    yz2: np.ndarray
    yt: np.ndarray
    dt: float


class FlowField(NamedTuple):
    v1: np.ndarray
    v2: np.ndarray

    @classmethod
    def zeros(cls, shape):
        return cls(np.zeros(shape), np.zeros(shape))


@dataclass
class HsConfig:
    """``alpha`` is the smoothness weight.  With ``alpha_units="lattice"`` it
    is the classic Horn-Schunck constant: intensity gradients per pixel and
    the Laplacian read as the neighbor mean minus the center value.  With
    ``"metric"`` it weighs the continuous cost in pinhole units directly."""

    alpha: float = 5.0
    iterations: int = 100
    tol: float = 1e-6
    alpha_units: str = "lattice"

    def __post_init__(self):
        if self.alpha <= 0 or self.iterations < 1:
            raise ValueError("HS needs alpha > 0 and at least one iteration")
        if self.alpha_units not in ("lattice", "metric"):
            raise ValueError(f"alpha_units must be 'lattice' or 'metric', got {self.alpha_units!r}")


def metric_alpha_hs(alpha: float, grid: PixelGrid, units: str = "lattice") -> float:
    if units == "metric":
        return alpha
    lap = horn_schunck_stencil(grid)
    return alpha / np.sqrt(lap.interior_degree * grid.cell_area)


def spatial_derivatives(
    frame_a: np.ndarray, frame_b: np.ndarray, grid: PixelGrid, dt: float, presmooth: float = 0.0
) -> DerivativeStack:
    """Sobel gradients of the frame average and a box-smoothed forward
    difference in time; borders replicate edge pixels.

    ``presmooth > 0`` blurs both frames with a Gaussian of that many pixels
    first, which curbs the shrinkage noisy gradients cause in the flow.
    """
    frame_a = np.asarray(frame_a, dtype=float)
    frame_b = np.asarray(frame_b, dtype=float)
    if frame_a.shape != frame_b.shape or frame_a.shape != grid.shape:
        raise ValueError(f"frame shapes {frame_a.shape}, {frame_b.shape} do not match grid {grid.shape}")
    if dt <= 0:
        raise ValueError("dt must be positive")
    if presmooth > 0:
        frame_a = ndimage.gaussian_filter(frame_a, presmooth, mode="nearest")
        frame_b = ndimage.gaussian_filter(frame_b, presmooth, mode="nearest")
    mean = (frame_a + frame_b) / 2
    yz1 = ndimage.sobel(mean, axis=1, mode="nearest") / (8 * grid.dz1)
    yz2 = ndimage.sobel(mean, axis=0, mode="nearest") / (8 * grid.dz2)
    yt = ndimage.uniform_filter((frame_b - frame_a) / dt, size=3, mode="nearest")
    return DerivativeStack(yz1, yz2, yt, dt)


def hs_residual(flow: FlowField, stack: DerivativeStack, alpha_m: float, lap: GraphLaplacian):
    """Per-pixel Euler-Lagrange residual of the discrete HS cost (metric alpha);
    the cost gradient is ``2 * cell_area`` times this."""
    r = stack.yt + flow.v1 * stack.yz1 + flow.v2 * stack.yz2
    return (
        r * stack.yz1 - alpha_m**2 * lap(flow.v1),
        r * stack.yz2 - alpha_m**2 * lap(flow.v2),
    )


def hs_cost(flow: FlowField, stack: DerivativeStack, alpha: float, grid: PixelGrid, alpha_units: str = "lattice") -> float:
    """Midpoint quadrature of the Horn-Schunck energy over the image rectangle."""
    if flow.v1.shape != stack.yt.shape:
        raise ValueError("flow and derivative shapes differ")
    a = metric_alpha_hs(alpha, grid, alpha_units)
    lap = horn_schunck_stencil(grid)
    r = stack.yt + flow.v1 * stack.yz1 + flow.v2 * stack.yz2
    smooth = lap.energy(flow.v1) + lap.energy(flow.v2)
    return grid.cell_area * (float(np.sum(r**2)) + a**2 * smooth)


def horn_schunck(
    stack: DerivativeStack,
    cfg: HsConfig,
    grid: PixelGrid,
    init: FlowField | None = None,
    monitor=None,
) -> FlowField:
    """Jacobi iteration for the HS system.

    Each sweep replaces the flow by ``Vbar - grad(y) (grad(y).Vbar + y_t) /
    (alpha^2 d + |grad y|^2)``, with ``Vbar`` the stencil-weighted neighbor
    mean and ``d`` the stencil's diagonal scale (smaller on borders, which is
    the Neumann condition).  ``monitor(k, flow)`` is called after every sweep.
    """
    lap = horn_schunck_stencil(grid)
    a2d = metric_alpha_hs(cfg.alpha, grid, cfg.alpha_units) ** 2 * lap.degree
    yz1, yz2, yt = stack.yz1, stack.yz2, stack.yt
    denom = a2d + yz1**2 + yz2**2
    v1, v2 = (np.zeros_like(yt), np.zeros_like(yt)) if init is None else (init.v1.copy(), init.v2.copy())
    deg = lap.degree
    for k in range(cfg.iterations):
        m1 = lap.neighbor_sum(v1) / deg
        m2 = lap.neighbor_sum(v2) / deg
        q = (yz1 * m1 + yz2 * m2 + yt) / denom
        n1 = m1 - yz1 * q
        n2 = m2 - yz2 * q
        change = max(np.max(np.abs(n1 - v1)), np.max(np.abs(n2 - v2)))
        v1, v2 = n1, n2
        if monitor is not None:
            monitor(k, FlowField(v1, v2))
        if change < cfg.tol:
            break
    return FlowField(v1, v2)


def flow_errors(est: FlowField, truth: FlowField, border: int = 0) -> dict:
    """Endpoint error statistics of ``est`` against ``truth``."""
    sl = (slice(border, -border or None), slice(border, -border or None))
    e1 = est.v1[sl] - truth.v1[sl]
    e2 = est.v2[sl] - truth.v2[sl]
    epe = np.hypot(e1, e2)
    speed = np.hypot(truth.v1[sl], truth.v2[sl])
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = epe / speed
    rel = rel[np.isfinite(rel)]
    return {
        "median_rel_error": float(np.median(rel)) if rel.size else float("nan"),
        "mean_epe": float(np.mean(epe)),
        "median_speed": float(np.median(np.hypot(est.v1[sl], est.v2[sl]))),
    }
