"""Marked point patterns and region partitions.

A :class:`MarkedPointPattern` is a finite set of planar locations, each
carrying an integer type in ``1..M``, observed inside a window.  A
:class:`RegionSet` partitions the window into regions on which exposure
(population) and covariates are constant.  All objects are immutable
after construction and safe to share between threads.
"""

from __future__ import annotations

from typing import Mapping, Sequence

import numpy as np
import shapely
from shapely.geometry import MultiPolygon, Polygon
from shapely.ops import unary_union

from .errors import InputError, MissingCovariateError, UnlocatedPointError
from .geometry import Window


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


class MarkedPointPattern:
    """Planar point locations with integer marks inside a window.

    Parameters
    ----------
    points : (n, 2) array-like
        Planar coordinates.
    marks : (n,) array-like of int
        Types in ``1..mark_count``.
    window : Window
        Observation window; every point must lie inside it (boundary
        points count as inside).
    mark_count : int, optional
        Number of types M.  Defaults to ``max(marks)`` (1 for an empty
        pattern).  May exceed the largest observed mark.
    """

    def __init__(self, points, marks, window: Window, mark_count: int | None = None):
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        mk = np.asarray(marks, dtype=int).reshape(-1)
        if len(pts) != len(mk):
            raise InputError(f"{len(pts)} points but {len(mk)} marks")
        if not np.all(np.isfinite(pts)):
            raise InputError("point coordinates must be finite")
        if mark_count is None:
            mark_count = int(mk.max()) if len(mk) else 1
        if mark_count < 1:
            raise InputError("mark_count must be >= 1")
        if len(mk) and (mk.min() < 1 or mk.max() > mark_count):
            raise InputError(f"marks must lie in 1..{mark_count}")
        if not isinstance(window, Window):
            raise InputError("window must be a Window")
        inside = window.contains_points(pts)
        if not inside.all():
            bad = pts[~inside][0]
            raise InputError(f"point ({bad[0]:.6g}, {bad[1]:.6g}) lies outside the window")
        self.points = _frozen(pts)
        self.marks = _frozen(mk)
        self.mark_count = int(mark_count)
        self.window = window

    @property
    def n(self) -> int:
        return len(self.points)

    def __len__(self) -> int:
        return self.n

    def __repr__(self):
        return f"MarkedPointPattern(n={self.n}, mark_count={self.mark_count})"

    def points_of_mark(self, mark: int) -> np.ndarray:
        if not 1 <= mark <= self.mark_count:
            raise InputError(f"mark {mark} not in 1..{self.mark_count}")
        return self.points[self.marks == mark]

    def counts_by_mark(self) -> np.ndarray:
        return np.bincount(self.marks, minlength=self.mark_count + 1)[1:]

    def subset(self, keep) -> "MarkedPointPattern":
        keep = np.asarray(keep, dtype=bool)
        return MarkedPointPattern(
            self.points[keep], self.marks[keep], self.window, self.mark_count
        )


class Region:
    """Single region: polygon, exposure and raw covariates.

    Exactly one of ``population`` and ``density`` must be provided; the
    other is derived via ``population = density * area``.
    """

    def __init__(self, id, polygon, population=None, density=None, covariates=None):
        if not isinstance(polygon, (Polygon, MultiPolygon)):
            raise InputError(f"region {id}: geometry must be polygonal")
        if not polygon.is_valid:
            raise InputError(f"region {id}: invalid polygon")
        area = polygon.area
        if not area > 0:
            raise InputError(f"region {id}: area must be positive")
        if (population is None) == (density is None):
            raise InputError(f"region {id}: provide exactly one of population or density")
        if population is None:
            population = float(density) * area
        population = float(population)
        if population < 0 or not np.isfinite(population):
            raise InputError(f"region {id}: population must be finite and >= 0")
        self.id = int(id)
        self.polygon = polygon
        self.area = float(area)
        self.population = population
        self.covariates: Mapping[str, float] = dict(covariates or {})

    @property
    def density(self) -> float:
        return self.population / self.area

    def __repr__(self):
        return f"Region(id={self.id}, area={self.area:.6g}, population={self.population:.6g})"


class RegionSet:
    """Partition of the window into pairwise interior-disjoint regions.

    Regions are stored sorted by id; id order also breaks boundary ties
    when locating points (a point on a shared edge belongs to the region
    with the lowest id).
    """

    def __init__(self, regions: Sequence[Region], validate: bool = True):
        regs = sorted(regions, key=lambda r: r.id)
        if not regs:
            raise InputError("a RegionSet needs at least one region")
        ids = np.array([r.id for r in regs])
        if len(np.unique(ids)) != len(ids):
            raise InputError("region ids must be unique")
        self.regions = tuple(regs)
        self.ids = _frozen(ids)
        self.areas = _frozen(np.array([r.area for r in regs]))
        self.populations = _frozen(np.array([r.population for r in regs]))
        self._polygons = np.array([r.polygon for r in regs], dtype=object)
        self._tree = shapely.STRtree(list(self._polygons))
        self._union = None
        if validate:
            self._check_disjoint()

    @property
    def J(self) -> int:
        return len(self.regions)

    def __len__(self) -> int:
        return self.J

    def __repr__(self):
        return f"RegionSet(J={self.J})"

    @property
    def densities(self) -> np.ndarray:
        return self.populations / self.areas

    def _check_disjoint(self):
        qi, ti = self._tree.query(list(self._polygons), predicate="intersects")
        for a, b in zip(qi, ti):
            if a >= b:
                continue
            inter = self._polygons[a].intersection(self._polygons[b]).area
            tol = 1e-9 * min(self.areas[a], self.areas[b])
            if inter > tol:
                raise InputError(
                    f"regions {self.ids[a]} and {self.ids[b]} overlap (area {inter:.3e})"
                )

    def union_polygon(self):
        if self._union is None:
            self._union = unary_union(list(self._polygons))
        return self._union

    def window(self) -> Window:
        """Window formed by dissolving the regions."""
        return Window(self.union_polygon())

    def check_coverage(self, window: Window, tol: float = 1e-3):
        """Require the regions to cover ``window`` up to a fraction ``tol`` of its area.

        Real shapefiles carry slivers, so a small uncovered fraction
        (default 0.1%) is tolerated; points that fall in a gap still
        raise :class:`UnlocatedPointError` when counted.
        """
        uncovered = window.polygon.difference(self.union_polygon()).area
        if uncovered > tol * window.area:
            raise InputError(
                f"regions leave {uncovered:.6g} of the window uncovered "
                f"(> {tol:.3%} of {window.area:.6g})"
            )

    def locate_points(self, points) -> np.ndarray:
        """Region id per point, -1 where a point lies in no region.

        Boundary ties go to the lowest region id.
        """
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        if len(pts) == 0:
            return np.empty(0, dtype=int)
        geoms = shapely.points(pts)
        qi, ti = self._tree.query(geoms, predicate="intersects")
        best = np.full(len(pts), np.iinfo(np.int64).max, dtype=np.int64)
        np.minimum.at(best, qi, self.ids[ti])
        out = np.where(best == np.iinfo(np.int64).max, -1, best)
        return out

    def index_of_id(self, ids) -> np.ndarray:
        """Positions of region ids in the sorted storage order."""
        idx = np.searchsorted(self.ids, ids)
        idx = np.clip(idx, 0, self.J - 1)
        if np.any(self.ids[idx] != ids):
            raise InputError("unknown region id")
        return idx

    def covariate_column(self, name: str) -> np.ndarray:
        out = np.empty(self.J)
        for k, r in enumerate(self.regions):
            try:
                out[k] = float(r.covariates[name])
            except KeyError:
                raise MissingCovariateError(
                    f"covariate {name!r} missing from region {r.id}"
                ) from None
        return out

    @property
    def covariate_names(self) -> tuple:
        names: set = set()
        for r in self.regions:
            names.update(r.covariates.keys())
        return tuple(sorted(names))


def locate_region(point, regions: RegionSet) -> int | None:
    """Id of the region containing ``point``; None when outside all regions."""
    rid = regions.locate_points(np.asarray(point, dtype=float).reshape(1, 2))[0]
    return None if rid < 0 else int(rid)


def aggregate_counts(pattern: MarkedPointPattern, regions: RegionSet) -> np.ndarray:
    """Count points per (mark, region) into an (M, J) integer matrix.

    Raises :class:`UnlocatedPointError` if any point falls in a coverage
    gap; points are never silently dropped.
    """
    counts = np.zeros((pattern.mark_count, regions.J), dtype=np.int64)
    if pattern.n == 0:
        return counts
    ids = regions.locate_points(pattern.points)
    if np.any(ids < 0):
        bad = pattern.points[np.argmax(ids < 0)]
        raise UnlocatedPointError(bad)
    idx = regions.index_of_id(ids)
    np.add.at(counts, (pattern.marks - 1, idx), 1)
    return counts
