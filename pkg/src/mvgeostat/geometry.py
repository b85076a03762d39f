"""Spatial locations, distances, synthetic location generators, Morton order."""

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Optional

import numpy as np

from .kernels import morton_keys

EARTH_RADIUS_KM = 6371.0
MORTON_BITS = 16


def euclidean_distance(a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return float(np.sqrt(np.sum((a - b) ** 2)))


def _check_lonlat(coords: np.ndarray) -> None:
    if coords.shape[-1] != 2:
        raise ValueError("great-circle distance needs (lon, lat) pairs")
    if np.any(np.abs(coords[..., 1]) > 90.0):
        raise ValueError("latitude out of range [-90, 90]")


def great_circle_distance(a, b, radius: float = EARTH_RADIUS_KM) -> float:
    """Haversine distance in km between two (lon, lat) points given in degrees."""
    pts = np.array([a, b], dtype=float)
    _check_lonlat(pts)
    return float(_haversine(pts[:1], pts[1:], radius)[0, 0])


def _haversine(a: np.ndarray, b: np.ndarray, radius: float) -> np.ndarray:
    lon1, lat1 = np.radians(a[:, 0])[:, None], np.radians(a[:, 1])[:, None]
    lon2, lat2 = np.radians(b[:, 0])[None, :], np.radians(b[:, 1])[None, :]
    h = np.sin((lat2 - lat1) / 2) ** 2 + np.cos(lat1) * np.cos(lat2) * np.sin((lon2 - lon1) / 2) ** 2
    return 2.0 * radius * np.arcsin(np.sqrt(np.clip(h, 0.0, 1.0)))


def pairwise_distances(a: np.ndarray, b: np.ndarray, metric: str = "euclidean") -> np.ndarray:
    """Distance matrix between two coordinate arrays of shape (n, d) and (m, d)."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    if a.shape[1] != b.shape[1]:
        raise ValueError(f"dimension mismatch: d={a.shape[1]} vs d={b.shape[1]}")
    if metric == "euclidean":
        sq = np.zeros((a.shape[0], b.shape[0]))
        for k in range(a.shape[1]):
            sq += (a[:, k, None] - b[None, :, k]) ** 2
        return np.sqrt(sq)
    if metric == "great_circle":
        _check_lonlat(a)
        _check_lonlat(b)
        return _haversine(a, b, EARTH_RADIUS_KM)
    raise ValueError(f"unknown metric {metric!r}")


@dataclass(frozen=True, eq=False)
class LocationSet:
    """An ordered set of distinct ``d``-dimensional locations.

    ``ordering`` records how the points were arranged (``"as-given"`` or
    ``"morton"``). The distance matrix and its unique-value index are
    computed lazily and cached, since covariance assembly reuses them for
    every parameter vector during optimization.
    """

    coords: np.ndarray
    ordering: str = "as-given"
    metric: str = "euclidean"

    def __post_init__(self):
        coords = np.array(self.coords, dtype=float, copy=True)
        if coords.ndim == 1:
            coords = coords[:, None]
        if coords.ndim != 2 or coords.shape[1] < 1:
            raise ValueError("coords must have shape (n, d) with d >= 1")
        if coords.shape[0] == 0:
            raise ValueError("a LocationSet needs at least one location")
        if not np.all(np.isfinite(coords)):
            raise ValueError("location coordinates must be finite")
        if self.ordering not in ("as-given", "morton"):
            raise ValueError(f"unknown ordering tag {self.ordering!r}")
        if self.metric not in ("euclidean", "great_circle"):
            raise ValueError(f"unknown metric {self.metric!r}")
        if self.metric == "great_circle":
            _check_lonlat(coords)
        if np.unique(coords, axis=0).shape[0] != coords.shape[0]:
            raise ValueError("duplicate locations: zero distances make the covariance singular")
        coords.setflags(write=False)
        object.__setattr__(self, "coords", coords)

    def __len__(self) -> int:
        return self.coords.shape[0]

    @property
    def n(self) -> int:
        return self.coords.shape[0]

    @property
    def d(self) -> int:
        return self.coords.shape[1]

    @cached_property
    def distances(self) -> np.ndarray:
        dist = pairwise_distances(self.coords, self.coords, self.metric)
        # exact symmetry and a zero diagonal, independent of rounding order
        dist = np.tril(dist, -1)
        dist = dist + dist.T
        dist.setflags(write=False)
        return dist

    @cached_property
    def distance_index(self) -> tuple:
        """``(unique_distances, inverse)`` with ``unique[inverse] == distances``."""
        uniq, inv = np.unique(self.distances, return_inverse=True)
        dtype = np.int32 if uniq.size < 2**31 else np.int64
        return uniq, inv.reshape(self.distances.shape).astype(dtype)

    def distances_to(self, other) -> np.ndarray:
        other = other.coords if isinstance(other, LocationSet) else np.atleast_2d(other)
        return pairwise_distances(self.coords, other, self.metric)

    def subset(self, index) -> "LocationSet":
        return LocationSet(self.coords[np.asarray(index)], ordering="as-given", metric=self.metric)

    def permuted(self, perm, ordering: str = "as-given") -> "LocationSet":
        return LocationSet(self.coords[np.asarray(perm)], ordering=ordering, metric=self.metric)

    @cached_property
    def morton_order(self) -> np.ndarray:
        return morton_permutation(self)

    def morton_sorted(self) -> "LocationSet":
        if self.ordering == "morton":
            return self
        return self.permuted(self.morton_order, ordering="morton")


def generate_locations(kind: str, n_target: int, seed: int = 0) -> LocationSet:
    """Synthetic locations on the unit square.

    ``grid`` and ``jittered_grid`` return ``floor(sqrt(n_target))**2`` points
    with spacing ``1/(m+1)``; the jitter is uniform within +/-0.4 spacing per
    axis. ``uniform_random`` returns exactly ``n_target`` points.
    """
    if n_target < 1:
        raise ValueError("n_target must be >= 1")
    rng = np.random.default_rng(seed)
    if kind in ("grid", "jittered_grid"):
        m = math.isqrt(n_target)
        h = 1.0 / (m + 1)
        ticks = h * np.arange(1, m + 1)
        xx, yy = np.meshgrid(ticks, ticks)
        coords = np.column_stack([xx.ravel(), yy.ravel()])
        if kind == "jittered_grid":
            coords = coords + rng.uniform(-0.4 * h, 0.4 * h, size=coords.shape)
        return LocationSet(coords)
    if kind == "uniform_random":
        return LocationSet(rng.uniform(0.0, 1.0, size=(n_target, 2)))
    raise ValueError(f"unknown location kind {kind!r}")


def quantize(coords: np.ndarray, bits: int = MORTON_BITS) -> np.ndarray:
    """Min-max rescale each axis to [0, 1) and map to integer cells."""
    coords = np.asarray(coords, dtype=float)
    lo = coords.min(axis=0)
    span = coords.max(axis=0) - lo
    span[span == 0] = 1.0
    cells = np.floor((coords - lo) / span * (1 << bits)).astype(np.int64)
    return np.clip(cells, 0, (1 << bits) - 1)


def morton_permutation(locs, bits_per_axis: int = MORTON_BITS) -> np.ndarray:
    """Stable permutation sorting 2-D locations along the Z-order curve."""
    coords = locs.coords if isinstance(locs, LocationSet) else np.asarray(locs, dtype=float)
    if coords.ndim != 2 or coords.shape[1] != 2:
        raise ValueError("Morton ordering is defined for 2-D locations only")
    if not 1 <= bits_per_axis <= 31:
        raise ValueError("bits_per_axis must be in [1, 31]")
    cells = quantize(coords, bits_per_axis)
    keys = morton_keys(cells[:, 0].copy(), cells[:, 1].copy(), bits_per_axis)
    return np.argsort(keys, kind="stable")


def as_location_set(obj, metric: Optional[str] = None) -> LocationSet:
    if isinstance(obj, LocationSet):
        return obj
    return LocationSet(np.atleast_2d(np.asarray(obj, dtype=float)), metric=metric or "euclidean")
