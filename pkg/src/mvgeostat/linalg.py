"""Tiled dense symmetric linear algebra.

The Cholesky factorization is the right-looking tile algorithm: for each
panel ``k`` a POTRF on the diagonal tile, TRSM on the tiles below it, then
SYRK/GEMM updates of the trailing submatrix. Tasks go through a
:class:`~mvgeostat.taskgraph.TaskGraph` so independent tiles can be
processed concurrently.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg
from scipy.linalg import blas, lapack

from .taskgraph import TaskGraph

DEFAULT_TILE_SIZE = 256


class NotPositiveDefiniteError(np.linalg.LinAlgError):
    """Cholesky hit a nonpositive pivot; ``pivot`` is the global 0-based row."""

    def __init__(self, pivot: int):
        super().__init__(f"matrix is not positive definite (pivot {pivot})")
        self.pivot = pivot


@dataclass
class TiledMatrix:
    """A square matrix stored contiguously and addressed as ``nb x nb`` tiles.

    Edge tiles may be ragged. For symmetric matrices only the lower
    triangle of tiles is authoritative.
    """

    data: np.ndarray
    nb: int
    symmetric: bool = True

    def __post_init__(self):
        if self.data.ndim != 2 or self.data.shape[0] != self.data.shape[1]:
            raise ValueError("TiledMatrix needs a square 2-D array")
        self.nb = int(max(1, min(self.nb, self.data.shape[0])))

    @property
    def order(self) -> int:
        return self.data.shape[0]

    @property
    def ntiles(self) -> int:
        return -(-self.order // self.nb)

    def span(self, i: int) -> slice:
        return slice(i * self.nb, min((i + 1) * self.nb, self.order))

    def tile(self, i: int, j: int) -> np.ndarray:
        return self.data[self.span(i), self.span(j)]

    def with_tile_size(self, nb: int) -> "TiledMatrix":
        return TiledMatrix(self.data, nb, self.symmetric)

    def copy(self) -> "TiledMatrix":
        return TiledMatrix(self.data.copy(), self.nb, self.symmetric)

    def to_dense(self) -> np.ndarray:
        if not self.symmetric:
            return self.data.copy()
        low = np.tril(self.data)
        return low + np.tril(self.data, -1).T


def _potrf(a: TiledMatrix, k: int) -> None:
    t = a.tile(k, k)
    c, info = lapack.dpotrf(t, lower=1, clean=1)
    if info > 0:
        raise NotPositiveDefiniteError(k * a.nb + info - 1)
    if info < 0:  # pragma: no cover - argument error
        raise ValueError(f"dpotrf argument {-info} invalid")
    t[...] = c


def _trsm(a: TiledMatrix, i: int, k: int) -> None:
    t = a.tile(i, k)
    t[...] = blas.dtrsm(1.0, a.tile(k, k), t, side=1, lower=1, trans_a=1)


def _syrk(a: TiledMatrix, i: int, k: int) -> None:
    lik = a.tile(i, k)
    a.tile(i, i)[...] -= lik @ lik.T


def _gemm(a: TiledMatrix, i: int, j: int, k: int) -> None:
    a.tile(i, j)[...] -= a.tile(i, k) @ a.tile(j, k).T


def cholesky_graph(a: TiledMatrix) -> TaskGraph:
    """Build the task graph factoring ``a`` in place."""
    g = TaskGraph()
    t = a.ntiles
    for k in range(t):
        g.submit(_potrf, a, k, writes=[(k, k)], name="potrf")
        for i in range(k + 1, t):
            g.submit(_trsm, a, i, k, reads=[(k, k)], writes=[(i, k)], name="trsm")
        for i in range(k + 1, t):
            g.submit(_syrk, a, i, k, reads=[(i, k)], writes=[(i, i)], name="syrk")
            for j in range(k + 1, i):
                g.submit(_gemm, a, i, j, k, reads=[(i, k), (j, k)], writes=[(i, j)], name="gemm")
    return g


@dataclass
class CholeskyFactor:
    """Lower-triangular factor ``L`` with ``L L^T = A`` and ``logdet = log|A|``."""

    L: TiledMatrix
    logdet: float

    @property
    def order(self) -> int:
        return self.L.order

    def _check(self, b: np.ndarray) -> None:
        if b.shape[0] != self.order:
            raise ValueError(f"dimension mismatch: factor order {self.order}, rhs has {b.shape[0]} rows")

    def solve_lower(self, b: np.ndarray) -> np.ndarray:
        """``L^{-1} b``."""
        b = np.asarray(b, dtype=float)
        self._check(b)
        return scipy.linalg.solve_triangular(self.L.data, b, lower=True, check_finite=False)

    def solve_upper(self, b: np.ndarray) -> np.ndarray:
        """``L^{-T} b``."""
        b = np.asarray(b, dtype=float)
        self._check(b)
        return scipy.linalg.solve_triangular(self.L.data, b, lower=True, trans="T", check_finite=False)

    def solve(self, b: np.ndarray) -> np.ndarray:
        """``A^{-1} b`` via two triangular solves."""
        return self.solve_upper(self.solve_lower(b))

    def multiply_upper(self, b: np.ndarray) -> np.ndarray:
        """``L^T b``."""
        return self.L.data.T @ b

    def to_dense(self) -> np.ndarray:
        return self.L.data.copy()


def cholesky(a: TiledMatrix, workers: Optional[int] = None, overwrite: bool = False) -> CholeskyFactor:
    """Tile Cholesky factorization of a symmetric positive definite matrix.

    Raises :class:`NotPositiveDefiniteError` with the failing pivot. With
    ``overwrite=True`` the input storage is reused for the factor.
    """
    if not isinstance(a, TiledMatrix):
        a = TiledMatrix(np.asarray(a, dtype=float), DEFAULT_TILE_SIZE)
    work = a if overwrite else a.copy()
    cholesky_graph(work).run(workers)
    t = work.ntiles
    for i in range(t):
        d = work.tile(i, i)
        d[...] = np.tril(d)
        for j in range(i + 1, t):
            work.tile(i, j)[...] = 0.0
    diag = np.diagonal(work.data)
    return CholeskyFactor(TiledMatrix(work.data, work.nb, symmetric=False), float(2.0 * np.sum(np.log(diag))))


def solve_triangular(factor: CholeskyFactor, b: np.ndarray, side: str = "forward") -> np.ndarray:
    """Forward (``L X = B``) or backward (``L^T X = B``) substitution."""
    if side == "forward":
        return factor.solve_lower(b)
    if side == "backward":
        return factor.solve_upper(b)
    raise ValueError(f"side must be 'forward' or 'backward', got {side!r}")


def quadratic_form(factor, z: np.ndarray) -> float:
    """``z^T A^{-1} z`` for ``A = L L^T``."""
    w = factor.solve_lower(np.asarray(z, dtype=float))
    return float(w @ w)
