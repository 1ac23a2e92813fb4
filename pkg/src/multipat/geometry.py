"""Planar window geometry.

Coordinates are assumed to be in a projected (planar) CRS; no geodesy is
performed anywhere in the package.  Shapely supplies the polygon
primitives; this module wraps them in an immutable ``Window`` with the
handful of operations the estimators need (containment, boundary
distance, translation overlap for edge correction, rasterization).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import shapely
from shapely.geometry import MultiPolygon, Polygon, box
from shapely.affinity import translate

from .errors import InputError

_AREA_RTOL = 1e-9


@dataclass(frozen=True)
class Raster:
    """Regular grid of cell centers over a window's bounding box.

    ``mask`` flags cells whose center lies inside the window; ``xs`` and
    ``ys`` are the 1-d center coordinates, so cell (iy, ix) is centered
    at (xs[ix], ys[iy]).
    """

    x0: float
    y0: float
    dx: float
    dy: float
    xs: np.ndarray
    ys: np.ndarray
    mask: np.ndarray  # (ny, nx) bool

    @property
    def nx(self) -> int:
        return self.xs.size

    @property
    def ny(self) -> int:
        return self.ys.size

    @property
    def cell_area(self) -> float:
        return self.dx * self.dy

    def meshgrid(self):
        return np.meshgrid(self.xs, self.ys)

    def cell_index(self, points: np.ndarray):
        """Map (k, 2) coordinates to (iy, ix) cell indices, clipped to the grid."""
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        ix = np.clip(((pts[:, 0] - self.x0) / self.dx).astype(int), 0, self.nx - 1)
        iy = np.clip(((pts[:, 1] - self.y0) / self.dy).astype(int), 0, self.ny - 1)
        return iy, ix


class Window:
    """Observation window: a simple polygon or a union of disjoint polygons.

    Parameters
    ----------
    polygon : shapely Polygon or MultiPolygon
        Window geometry.  Must be valid with strictly positive area.
    declared_area : float, optional
        Externally supplied area; checked against the shoelace area of
        the polygon to 1e-9 relative tolerance.
    """

    def __init__(self, polygon, declared_area=None):
        if isinstance(polygon, (list, tuple)):
            polygon = Polygon(polygon)
        if not isinstance(polygon, (Polygon, MultiPolygon)):
            raise InputError(f"window geometry must be polygonal, got {type(polygon).__name__}")
        if not polygon.is_valid:
            raise InputError("window polygon is not a valid simple polygon")
        area = polygon.area
        if not area > 0:
            raise InputError("window area must be strictly positive")
        if declared_area is not None:
            if abs(declared_area - area) > _AREA_RTOL * max(abs(area), 1.0):
                raise InputError(
                    f"declared area {declared_area!r} disagrees with polygon area {area!r}"
                )
        self._polygon = polygon
        self._area = float(area)
        self._is_rectangle = bool(polygon.equals(box(*polygon.bounds)))
        shapely.prepare(self._polygon)

    @classmethod
    def rectangle(cls, x0: float, y0: float, x1: float, y1: float) -> "Window":
        if not (x1 > x0 and y1 > y0):
            raise InputError("rectangle requires x1 > x0 and y1 > y0")
        return cls(box(x0, y0, x1, y1))

    @property
    def polygon(self):
        return self._polygon

    @property
    def area(self) -> float:
        return self._area

    @property
    def bounds(self):
        return self._polygon.bounds

    @property
    def shorter_side(self) -> float:
        x0, y0, x1, y1 = self.bounds
        return min(x1 - x0, y1 - y0)

    def __repr__(self):
        x0, y0, x1, y1 = self.bounds
        return f"Window(area={self._area:.6g}, bounds=({x0:.4g}, {y0:.4g}, {x1:.4g}, {y1:.4g}))"

    # boundary points count as inside throughout the package
    def contains_points(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        return shapely.intersects_xy(self._polygon, pts[:, 0], pts[:, 1])

    def boundary_distance(self, points) -> np.ndarray:
        """Distance from each point to the window boundary."""
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        geoms = shapely.points(pts)
        return shapely.distance(geoms, self._polygon.boundary)

    @property
    def is_rectangle(self) -> bool:
        """True when the window equals its own axis-aligned bounding box."""
        return self._is_rectangle

    def translation_overlap(self, shifts) -> np.ndarray:
        """Area of the window intersected with itself translated by each shift.

        Used by the translation edge correction, which weights a pair at
        displacement h by ``area / translation_overlap(h)``.  Exact
        closed form for axis-aligned rectangles, polygon clipping
        otherwise.
        """
        d = np.asarray(shifts, dtype=float).reshape(-1, 2)
        if self.is_rectangle:
            x0, y0, x1, y1 = self.bounds
            wx = np.maximum((x1 - x0) - np.abs(d[:, 0]), 0.0)
            wy = np.maximum((y1 - y0) - np.abs(d[:, 1]), 0.0)
            return wx * wy
        out = np.empty(len(d))
        for k, (hx, hy) in enumerate(d):
            out[k] = self._polygon.intersection(translate(self._polygon, hx, hy)).area
        return out

    def raster(self, grid=(256, 256)) -> Raster:
        """Midpoint raster over the bounding box with an in-window mask."""
        nx, ny = int(grid[0]), int(grid[1])
        if nx < 1 or ny < 1:
            raise InputError("raster grid must have at least one cell per axis")
        x0, y0, x1, y1 = self.bounds
        dx = (x1 - x0) / nx
        dy = (y1 - y0) / ny
        xs = x0 + dx * (np.arange(nx) + 0.5)
        ys = y0 + dy * (np.arange(ny) + 0.5)
        gx, gy = np.meshgrid(xs, ys)
        mask = shapely.intersects_xy(self._polygon, gx.ravel(), gy.ravel()).reshape(ny, nx)
        return Raster(x0=x0, y0=y0, dx=dx, dy=dy, xs=xs, ys=ys, mask=mask)


def polygon_area(coords) -> float:
    """Shoelace area of a closed coordinate ring (reference implementation)."""
    c = np.asarray(coords, dtype=float)
    x, y = c[:, 0], c[:, 1]
    return 0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))
