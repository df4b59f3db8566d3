"""Symmetric discrete diffusion operators on the pixel grid.

Every operator here is minus one half of the gradient (per unit cell area) of
a quadratic Dirichlet energy, so it is symmetric under the plain Euclidean
grid inner product, annihilates constants, and carries natural Neumann
boundary conditions: couplings that would leave the grid are dropped.

An operator ``L`` is applied as ``L(u)`` and exposes its diagonal magnitude
``d`` so that ``L(u) = d * (mean(u) - u)``, which is how the Jacobi solvers
read it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import PixelGrid


def _shifted(u: np.ndarray, dj: int, di: int) -> np.ndarray:
    """``out[j, i] = u[j + dj, i + di]`` with zeros outside the grid."""
    out = np.zeros_like(u)
    h, w = u.shape
    js, je = max(0, -dj), min(h, h - dj)
    is_, ie = max(0, -di), min(w, w - di)
    out[js:je, is_:ie] = u[js + dj:je + dj, is_ + di:ie + di]
    return out


def _inside(shape, dj: int, di: int) -> np.ndarray:
    return _shifted(np.ones(shape), dj, di)


@dataclass(frozen=True)
class GraphLaplacian:
    """Constant-coefficient stencil ``sum_j k_ij (u_j - u_i)``.

    ``edges`` lists half of the neighbor offsets ``(dj, di)`` with their
    coupling ``k``; the mirrored offsets get the same coupling.
    """

    shape: tuple[int, int]
    edges: tuple[tuple[int, int, float], ...]

    @property
    def degree(self) -> np.ndarray:
        d = np.zeros(self.shape)
        for dj, di, k in self.edges:
            d += k * (_inside(self.shape, dj, di) + _inside(self.shape, -dj, -di))
        return d

    @property
    def interior_degree(self) -> float:
        return 2 * sum(k for _, _, k in self.edges)

    def neighbor_sum(self, u: np.ndarray) -> np.ndarray:
        s = np.zeros_like(u, dtype=float)
        for dj, di, k in self.edges:
            s += k * (_shifted(u, dj, di) + _shifted(u, -dj, -di))
        return s

    def __call__(self, u: np.ndarray) -> np.ndarray:
        return self.neighbor_sum(u) - self.degree * u

    def energy(self, u: np.ndarray) -> float:
        """``sum over edges k_e (u_i - u_j)^2``, approximating the integral of
        ``|grad u|^2`` divided by the cell area."""
        total = 0.0
        h, w = u.shape
        for dj, di, k in self.edges:
            j0, j1 = max(0, -dj), h - max(0, dj)
            i0, i1 = max(0, -di), w - max(0, di)
            a = u[j0:j1, i0:i1]
            b = u[j0 + dj:j1 + dj, i0 + di:i1 + di]
            total += k * float(np.sum((a - b) ** 2))
        return total


def five_point(grid: PixelGrid) -> GraphLaplacian:
    h1, h2 = grid.dz1, grid.dz2
    return GraphLaplacian(grid.shape, ((0, 1, 1 / h1**2), (1, 0, 1 / h2**2)))


def horn_schunck_stencil(grid: PixelGrid) -> GraphLaplacian:
    """Nine-point stencil with Horn-Schunck proportions (axial 1/6, diagonal
    1/12 of the neighbor mean on square pixels), scaled to approximate the
    Laplacian in pinhole units; exact on quadratics for any pixel aspect."""
    h1, h2 = grid.dz1, grid.dz2
    kd = 1 / (4 * h1 * h2)
    kx = 1 / h1**2 - 2 * kd
    ky = 1 / h2**2 - 2 * kd
    return GraphLaplacian(grid.shape, ((0, 1, kx), (1, 0, ky), (1, 1, kd), (1, -1, kd)))


def euclidean_stencil(grid: PixelGrid, kind: str = "hs") -> GraphLaplacian:
    if kind == "hs":
        return horn_schunck_stencil(grid)
    if kind == "five_point":
        return five_point(grid)
    raise ValueError(f"unknown stencil {kind!r}")


def _edge_slices(shape, dj: int, di: int):
    """Slices selecting the tail and head pixels of every in-grid edge with
    offset ``(dj, di)``."""
    h, w = shape
    j0, j1 = max(0, -dj), h - max(0, dj)
    i0, i1 = max(0, -di), w - max(0, di)
    return (slice(j0, j1), slice(i0, i1)), (slice(j0 + dj, j1 + dj), slice(i0 + di, i1 + di))


class SphereOperator:
    """Flux-form discretization of ``d_a (c_ab(z) d_b u)`` with
    ``c_ab = (delta_ab + z_a z_b) / sqrt(1 + |z|^2)``.

    The isotropic part ``1 / rho`` sits on the Horn-Schunck nine-point edges
    and the remainders ``z_a^2 / rho`` on the axial edges, all with
    coefficients averaged from the two endpoints; the diagonal edges keep the
    Jacobi iteration free of a checkerboard mode.  Cross terms use central
    differences at interior pixels, so they never touch the diagonal.
    """

    def __init__(self, grid: PixelGrid):
        self.grid = grid
        self.shape = grid.shape
        h1, h2 = grid.dz1, grid.dz2
        z1, z2 = grid.mesh()
        rho = np.sqrt(1 + z1**2 + z2**2)
        iso = 1 / rho
        kd = 1 / (4 * h1 * h2)
        kx = 1 / h1**2 - 2 * kd
        ky = 1 / h2**2 - 2 * kd
        node = {
            (0, 1): kx * iso + z1**2 / rho / h1**2,
            (1, 0): ky * iso + z2**2 / rho / h2**2,
            (1, 1): kd * iso,
            (1, -1): kd * iso,
        }
        self.edges = []
        for (dj, di), c in node.items():
            a, b = _edge_slices(self.shape, dj, di)
            self.edges.append((a, b, (c[a] + c[b]) / 2))
        self.c12 = (z1 * z2 / rho)[1:-1, 1:-1]
        self.degree = np.zeros(self.shape)
        for a, b, k in self.edges:
            self.degree[a] += k
            self.degree[b] += k
        # value at the optical center, where c = I: the nine-point degree
        self.interior_degree = 2 * (kx + ky) + 4 * kd

    def _central(self, u):
        d1 = (u[1:-1, 2:] - u[1:-1, :-2]) / (2 * self.grid.dz1)
        d2 = (u[2:, 1:-1] - u[:-2, 1:-1]) / (2 * self.grid.dz2)
        return d1, d2

    def __call__(self, u: np.ndarray) -> np.ndarray:
        h1, h2 = self.grid.dz1, self.grid.dz2
        out = np.zeros_like(u, dtype=float)
        for a, b, k in self.edges:
            flux = k * (u[b] - u[a])
            out[a] += flux
            out[b] -= flux
        d1, d2 = self._central(u)
        s1 = self.c12 * d2 / (2 * h1)
        s2 = self.c12 * d1 / (2 * h2)
        # minus half the derivative of 2 c12 d1 d2 with respect to each neighbor
        out[1:-1, 2:] -= s1
        out[1:-1, :-2] += s1
        out[2:, 1:-1] -= s2
        out[:-2, 1:-1] += s2
        return out

    def energy(self, u: np.ndarray) -> float:
        """Discrete ``integral of c_ab d_a u d_b u`` divided by the cell area."""
        e = sum(float(np.sum(k * (u[b] - u[a]) ** 2)) for a, b, k in self.edges)
        d1, d2 = self._central(u)
        return e + float(np.sum(2 * self.c12 * d1 * d2))


def assemble(op, shape) -> np.ndarray:
    """Dense matrix of a linear grid operator (small grids only)."""
    n = shape[0] * shape[1]
    cols = []
    for k in range(n):
        e = np.zeros(n)
        e[k] = 1.0
        cols.append(op(e.reshape(shape)).ravel())
    return np.array(cols).T
