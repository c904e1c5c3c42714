"""Diffuse-interface profiles around spheres (circles when d = 2)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .spectral import Field

SURFACE_TENSION = 2.0 * np.sqrt(2.0) / 3.0  # integral of sqrt(2F) over [-1, 1]


@dataclass(frozen=True)
class Sphere:
    center: tuple
    radius: float

    def signed_distance(self, grid):
        r2 = sum((x - c) ** 2 for x, c in zip(grid.mesh, self.center))
        return np.sqrt(r2) - self.radius

    def check_inside(self, d):
        c = np.asarray(self.center, dtype=float)
        if c.size != d:
            raise ValueError(f"center needs {d} coordinates")
        if self.radius <= 0:
            raise ValueError("radius must be positive")
        gap = min(np.min(c), np.min(1.0 - c)) - self.radius
        if gap <= 0:
            raise ValueError(f"interface of radius {self.radius} at {tuple(c)} touches the boundary")

    def area(self, d):
        """Perimeter (d = 2) or surface area (d = 3)."""
        return 2 * np.pi * self.radius if d == 2 else 4 * np.pi * self.radius**2


def default_center(d):
    return (0.5,) * d


def tanh_profile(grid, interface, eps):
    """``tanh(dist / (sqrt(2) eps))`` with ``dist`` negative inside the interface."""
    if not isinstance(interface, Sphere):
        center, radius = interface
        interface = Sphere(tuple(center), float(radius))
    interface.check_inside(grid.d)
    dist = interface.signed_distance(grid)
    return Field(grid, np.tanh(dist / (np.sqrt(2.0) * eps)))
