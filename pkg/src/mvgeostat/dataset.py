"""Observed multivariate data: locations plus a ``(n, p)`` value table."""

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .covariance import Representation, flatten, unflatten
from .geometry import LocationSet, as_location_set


@dataclass(frozen=True, eq=False)
class SpatialDataset:
    """``p`` variables measured at every location of ``locs``.

    ``values[l, i]`` is variable ``i`` at location ``l``. The stacked vector
    ``Z`` in either representation is available through :meth:`z`.
    """

    locs: LocationSet
    values: np.ndarray

    def __post_init__(self):
        locs = as_location_set(self.locs)
        values = np.array(self.values, dtype=float, copy=True)
        if values.ndim == 1:
            values = values[:, None]
        if values.ndim != 2 or values.shape[0] != locs.n:
            raise ValueError(f"values must have shape ({locs.n}, p), got {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("measurements must be finite")
        values.setflags(write=False)
        object.__setattr__(self, "locs", locs)
        object.__setattr__(self, "values", values)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def p(self) -> int:
        return self.values.shape[1]

    def z(self, rep=Representation.INTERLEAVED) -> np.ndarray:
        return flatten(self.values, rep)

    @classmethod
    def from_vector(cls, locs, z, p: int, rep=Representation.INTERLEAVED) -> "SpatialDataset":
        locs = as_location_set(locs)
        z = np.asarray(z, dtype=float).reshape(-1)
        if z.size != locs.n * p:
            raise ValueError(f"len(Z) = {z.size} but p*n = {locs.n * p}")
        return cls(locs, unflatten(z, locs.n, p, rep))

    def subset(self, index) -> "SpatialDataset":
        index = np.asarray(index)
        return SpatialDataset(self.locs.subset(index), self.values[index])

    def with_values(self, values) -> "SpatialDataset":
        return SpatialDataset(self.locs, values)

    @cached_property
    def morton_sorted(self) -> "SpatialDataset":
        """The same data with locations in Z-order (2-D only; otherwise unchanged)."""
        if self.locs.d != 2 or self.locs.ordering == "morton":
            return self
        perm = self.locs.morton_order
        return SpatialDataset(self.locs.permuted(perm, ordering="morton"), self.values[perm])

    @cached_property
    def scanline_sorted(self) -> "SpatialDataset":
        """The same data sorted by the last coordinate, then the previous ones."""
        perm = scanline_order(self.locs)
        return SpatialDataset(self.locs.permuted(perm), self.values[perm])

    def ordered_for(self, kind: str) -> "SpatialDataset":
        """Location order used by a backend kind: Z-order for TLR, scanline for DST."""
        if kind == "tlr":
            return self.morton_sorted
        if kind == "dst":
            return self.scanline_sorted
        return self


def scanline_order(locs: LocationSet) -> np.ndarray:
    """Stable permutation sorting locations row by row (``y`` then ``x`` in 2-D)."""
    return np.lexsort(locs.coords.T)


def backend_order(locs: LocationSet, kind: str):
    """Permutation applied to the data locations for a backend kind, or None."""
    if kind == "tlr" and locs.d == 2:
        return locs.morton_order
    if kind == "dst":
        return scanline_order(locs)
    return None
