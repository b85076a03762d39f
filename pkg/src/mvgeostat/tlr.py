"""Tile low-rank (TLR) matrices: compression, Cholesky, solves, accounting.

Off-diagonal tiles are stored as factor pairs ``T_ij ~= U_ij V_ij^T``
truncated at accuracy ``eps``; diagonal tiles stay dense. A tile is cut at
the smallest rank ``k`` that satisfies both ``s[k] / s[0] <= eps`` and
``||T - U V^T||_F <= eps ||T||_F``.

The Diagonal Super Tile (DST) approximation, which zeroes whole tiles far
from the diagonal, lives here too since it shares the tile bookkeeping.
"""

import csv
import math
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np
import scipy.linalg
from scipy.linalg import lapack

from .linalg import NotPositiveDefiniteError, TiledMatrix
from .taskgraph import TaskGraph

PRESETS = {"tlr5": 1e-5, "tlr7": 1e-7, "tlr9": 1e-9}


def default_tile_size(order: int) -> int:
    """Near ``sqrt(order)``, rounded to a multiple of 32 (at least 32)."""
    return max(32, int(round(math.ceil(math.sqrt(order)) / 32.0)) * 32)


def _truncation_rank(s: np.ndarray, eps: float, ref_norm: float, discarded_sq: float = 0.0) -> int:
    if s.size == 0 or s[0] <= 0.0:
        return 0
    spectral = int(np.count_nonzero(s > eps * s[0]))
    tail_sq = np.concatenate([np.cumsum((s * s)[::-1])[::-1], [0.0]]) + discarded_sq
    frob = int(np.argmax(tail_sq <= (eps * ref_norm) ** 2)) if np.any(tail_sq <= (eps * ref_norm) ** 2) else s.size
    return max(spectral, frob)


def _empty_factors(rows: int, cols: int) -> Tuple[np.ndarray, np.ndarray]:
    return np.zeros((rows, 0)), np.zeros((cols, 0))


def _apply_q(qr: np.ndarray, tau: np.ndarray, small: np.ndarray) -> np.ndarray:
    """``Q @ [small; 0]`` for the Householder factor stored in ``(qr, tau)``."""
    m = qr.shape[0]
    c = np.zeros((m, small.shape[1]), order="F")
    c[: small.shape[0]] = small
    if small.shape[1] == 0:
        return c
    cq, _, info = lapack.dormqr("L", "N", qr[:, : tau.size], tau, c, max(1, 64 * small.shape[1]), overwrite_c=1)
    if info != 0:  # pragma: no cover
        raise np.linalg.LinAlgError(f"dormqr failed ({info})")
    return cq


def _tail_norms_sq(r: np.ndarray) -> np.ndarray:
    """``out[k] = ||r[k:, k:]||_F**2`` for upper-trapezoidal ``r`` (with ``out[-1] = 0``)."""
    row_sq = np.einsum("ij,ij->i", r, r)
    return np.concatenate([np.cumsum(row_sq[::-1])[::-1], [0.0]])


def _sketch(cols: int) -> np.ndarray:
    """Fixed Gaussian test matrix; the first ``w`` columns form the width-``w`` sketch."""
    om = _SKETCHES.get(cols)
    if om is None:
        om = np.random.default_rng(_SKETCH_SEED).standard_normal((cols, cols))
        om.setflags(write=False)
        _SKETCHES[cols] = om
    return om


_SKETCHES: dict = {}
_SKETCH_SEED = 20240613
_SKETCH_LIMIT = 0.6


def _compress_svd(t: np.ndarray, eps: float, fro: float) -> Tuple[np.ndarray, np.ndarray]:
    x, s, yt = np.linalg.svd(t, full_matrices=False)
    k = _truncation_rank(s, eps, fro)
    return x[:, :k] * s[:k], yt[:k].T.copy()


def compress_tile(t: np.ndarray, eps: float, rank_hint: int = 0) -> Tuple[np.ndarray, np.ndarray]:
    """Truncated factorization ``t ~= U V^T`` of one dense tile.

    A randomized range ``Q`` is grown until the explicit residual
    ``||t - Q Q^T t||_F`` drops below ``eps/100`` of the tile norm; the SVD
    of ``Q^T t`` then supplies the singular values used for truncation, and
    the residual is charged against the Frobenius budget. Tiles needing a
    range wider than 60% of their size take a full SVD instead.
    """
    rows, cols = t.shape
    fro = float(np.linalg.norm(t))
    if fro == 0.0:
        return _empty_factors(rows, cols)
    small = min(rows, cols)
    limit = int(_SKETCH_LIMIT * small)
    width = max(16, rank_hint + 8)
    budget_sq = (0.01 * eps * fro) ** 2
    om = _sketch(cols)
    while width <= limit:
        q, _ = np.linalg.qr(t @ om[:, :width])
        b = q.T @ t
        resid = t - q @ b
        r2 = float(np.einsum("ij,ij->", resid, resid))
        if r2 <= budget_sq:
            x, s, yt = np.linalg.svd(b, full_matrices=False)
            k = _truncation_rank(s, eps, fro, discarded_sq=r2)
            if k == 0:
                return _empty_factors(rows, cols)
            return q @ (x[:, :k] * s[:k]), yt[:k].T.copy()
        width *= 2
    return _compress_svd(t, eps, fro)


def round_factors(u: np.ndarray, v: np.ndarray, eps: float) -> Tuple[np.ndarray, np.ndarray]:
    """Recompress ``u v^T`` to accuracy ``eps`` by QR-based rounding.

    Both factors are QR-factored and the small core ``R_u R_v^T`` is
    truncated with a column-pivoted QR at the smallest rank ``k`` whose
    discarded block satisfies ``||R22||_F <= eps |R11[0, 0]|``. Since
    ``|R11[0, 0]| <= s[0] <= ||core||_F`` this meets both the spectral and
    the Frobenius criteria.
    """
    rows, cols = u.shape[0], v.shape[0]
    if u.shape[1] == 0:
        return _empty_factors(rows, cols)
    qu, tau_u, _, _ = lapack.dgeqrf(np.asfortranarray(u))
    qv, tau_v, _, _ = lapack.dgeqrf(np.asfortranarray(v))
    ru = np.triu(qu[: tau_u.size])
    rv = np.triu(qv[: tau_v.size])
    core = ru @ rv.T
    qc, jpvt, tau_c, _, _ = lapack.dgeqp3(core)
    rc = np.triu(qc[: tau_c.size])
    if rc.size == 0 or rc[0, 0] == 0.0:
        return _empty_factors(rows, cols)
    tail = _tail_norms_sq(rc)
    k = int(np.argmax(tail <= (eps * abs(rc[0, 0])) ** 2))
    if k == 0:
        return _empty_factors(rows, cols)
    eye = np.zeros((core.shape[0], k))
    eye[np.arange(k), np.arange(k)] = 1.0
    left = _apply_q(qc, tau_c, eye)
    right = np.empty((core.shape[1], k))
    right[jpvt - 1] = rc[:k].T
    return _apply_q(qu, tau_u, left), _apply_q(qv, tau_v, right)


@dataclass
class TLRMatrix:
    """Symmetric TLR matrix: dense diagonal tiles, low-rank lower tiles."""

    order: int
    nb: int
    eps: float
    diag: list
    lowrank: Dict[Tuple[int, int], Tuple[np.ndarray, np.ndarray]] = field(default_factory=dict)

    @property
    def ntiles(self) -> int:
        return -(-self.order // self.nb)

    def span(self, i: int) -> slice:
        return slice(i * self.nb, min((i + 1) * self.nb, self.order))

    def size(self, i: int) -> int:
        s = self.span(i)
        return s.stop - s.start

    def rank(self, i: int, j: int) -> int:
        if i == j:
            return self.size(i)
        if i < j:
            i, j = j, i
        return self.lowrank[(i, j)][0].shape[1]

    def ranks(self) -> np.ndarray:
        t = self.ntiles
        return np.array([[self.rank(i, j) for j in range(t)] for i in range(t)], dtype=np.int64)

    def copy(self) -> "TLRMatrix":
        return TLRMatrix(
            self.order,
            self.nb,
            self.eps,
            [d.copy() for d in self.diag],
            {key: (u.copy(), v.copy()) for key, (u, v) in self.lowrank.items()},
        )

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.order, self.order))
        for i, d in enumerate(self.diag):
            out[self.span(i), self.span(i)] = d
        for (i, j), (u, v) in self.lowrank.items():
            blk = u @ v.T
            out[self.span(i), self.span(j)] = blk
            out[self.span(j), self.span(i)] = blk.T
        return out

    def rank_map(self) -> "RankMap":
        return RankMap(self.ranks(), self.nb, self.eps)


def compress(a: TiledMatrix, eps: float, nb: Optional[int] = None, workers: Optional[int] = None) -> TLRMatrix:
    """Compress every lower off-diagonal tile of a symmetric tiled matrix."""
    if not 0.0 < eps < 1.0:
        raise ValueError("eps must lie in (0, 1)")
    if nb is not None and nb != a.nb:
        a = a.with_tile_size(nb)
    t = a.ntiles
    out = TLRMatrix(a.order, a.nb, eps, [np.array(a.tile(i, i)) for i in range(t)])
    g = TaskGraph()

    def _one(i, j):
        out.lowrank[(i, j)] = compress_tile(np.asarray(a.tile(i, j)), eps)

    for i in range(t):
        for j in range(i):
            g.submit(_one, i, j, writes=[(i, j)], name="compress")
    g.run(workers)
    return out


@dataclass
class RankMap:
    """Per-tile ranks of a TLR matrix; diagonal entries hold the dense tile size."""

    ranks: np.ndarray
    nb: int
    eps: float

    @property
    def ntiles(self) -> int:
        return self.ranks.shape[0]

    def _offdiag(self) -> np.ndarray:
        i, j = np.tril_indices(self.ntiles, -1)
        return self.ranks[i, j]

    @property
    def max_rank(self) -> int:
        off = self._offdiag()
        return int(off.max()) if off.size else 0

    @property
    def mean_rank(self) -> float:
        off = self._offdiag()
        return float(off.mean()) if off.size else 0.0

    def distance_profile(self) -> Dict[int, float]:
        """Mean off-diagonal rank as a function of tile distance ``|i - j|``."""
        t = self.ntiles
        return {dd: float(np.mean(np.diagonal(self.ranks, -dd))) for dd in range(1, t)}

    def mean_rank_at(self, min_distance: int, max_distance: Optional[int] = None) -> float:
        i, j = np.tril_indices(self.ntiles, -1)
        dist = i - j
        sel = dist >= min_distance
        if max_distance is not None:
            sel &= dist <= max_distance
        return float(self.ranks[i[sel], j[sel]].mean())

    def rows(self):
        t = self.ntiles
        for i in range(t):
            for j in range(i + 1):
                yield i, j, int(self.ranks[i, j])

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["i", "j", "k"])
            w.writerows(self.rows())


@dataclass
class FootprintReport:
    dense_bytes: int
    tlr_bytes: int

    @property
    def savings_ratio(self) -> float:
        return self.dense_bytes / self.tlr_bytes


def footprint(a: TLRMatrix, itemsize: int = 8) -> FootprintReport:
    """Bytes of the dense ``N x N`` matrix versus its TLR storage.

    Off-diagonal tiles are counted in both triangles, matching the dense
    count of ``N**2`` entries.
    """
    dense = a.order * a.order * itemsize
    tlr = sum(d.size for d in a.diag) * itemsize
    for (i, j), (u, _) in a.lowrank.items():
        tlr += 2 * (a.size(i) + a.size(j)) * u.shape[1] * itemsize
    return FootprintReport(dense, tlr)


def flop_estimate(a: TLRMatrix) -> float:
    """Analytic TLR Cholesky flop count from the compressed ranks.

    Dense diagonal work: POTRF ``m**3/3`` per diagonal tile and TRSM
    ``m**2 k`` per low-rank panel tile. Every TLR-MM task (SYRK into a
    diagonal tile, GEMM into an off-diagonal one) costs ``36 nb k**2`` with
    ``k`` the largest rank involved.
    """
    t = a.ntiles
    r = a.ranks()
    flops = 0.0
    for k in range(t):
        m = a.size(k)
        flops += m**3 / 3.0
        for i in range(k + 1, t):
            flops += m * m * r[i, k]
            flops += 36.0 * a.nb * r[i, k] ** 2
            for j in range(k + 1, i):
                kk = max(r[i, k], r[j, k], r[i, j])
                flops += 36.0 * a.nb * kk**2
    return flops


# ---------------------------------------------------------------------------
# TLR Cholesky
# ---------------------------------------------------------------------------


@dataclass
class TLRFactor:
    """Lower TLR factor: dense lower-triangular diagonal tiles, low-rank below."""

    factor: TLRMatrix
    logdet: float

    @property
    def order(self) -> int:
        return self.factor.order

    def _as2d(self, b):
        b = np.asarray(b, dtype=float)
        if b.shape[0] != self.order:
            raise ValueError(f"dimension mismatch: factor order {self.order}, rhs has {b.shape[0]} rows")
        return b.reshape(self.order, -1).copy(), b.ndim == 1

    def solve_lower(self, b: np.ndarray) -> np.ndarray:
        """``L^{-1} b`` by block forward substitution."""
        f = self.factor
        y, flat = self._as2d(b)
        for i in range(f.ntiles):
            si = f.span(i)
            yi = y[si]
            for j in range(i):
                u, v = f.lowrank[(i, j)]
                if u.shape[1]:
                    yi -= u @ (v.T @ y[f.span(j)])
            y[si] = scipy.linalg.solve_triangular(f.diag[i], yi, lower=True, check_finite=False)
        return y[:, 0] if flat else y

    def solve_upper(self, b: np.ndarray) -> np.ndarray:
        """``L^{-T} b`` by block backward substitution."""
        f = self.factor
        x, flat = self._as2d(b)
        for i in range(f.ntiles - 1, -1, -1):
            si = f.span(i)
            xi = x[si]
            for j in range(i + 1, f.ntiles):
                u, v = f.lowrank[(j, i)]
                if u.shape[1]:
                    xi -= v @ (u.T @ x[f.span(j)])
            x[si] = scipy.linalg.solve_triangular(f.diag[i], xi, lower=True, trans="T", check_finite=False)
        return x[:, 0] if flat else x

    def solve(self, b: np.ndarray) -> np.ndarray:
        return self.solve_upper(self.solve_lower(b))

    def to_dense(self) -> np.ndarray:
        f = self.factor
        out = np.zeros((f.order, f.order))
        for i, d in enumerate(f.diag):
            out[f.span(i), f.span(i)] = d
        for (i, j), (u, v) in f.lowrank.items():
            out[f.span(i), f.span(j)] = u @ v.T
        return out


UPDATE_MODES = ("auto", "lowrank", "dense")


class _Accumulator:
    """Pending GEMM updates per tile, folded back at accuracy ``eps`` lazily.

    ``lowrank`` keeps updates as factor pairs and rounds the concatenation
    with :func:`round_factors`. ``dense`` sums them into an ``nb x nb``
    buffer and recompresses once, before the panel solve reads the tile.
    Each update costs ``2 nb**2 k`` flops densely against roughly
    ``36 nb k**2`` for low-rank rounding, so ``auto`` picks dense for tiles
    with ``18 k > nb``.
    """

    def __init__(self, f: TLRMatrix, mode: str = "auto"):
        if mode not in UPDATE_MODES:
            raise ValueError(f"update mode must be one of {UPDATE_MODES}, got {mode!r}")
        self.f = f
        self.mode = mode
        self.pending: dict = {}
        self.dense: dict = {}
        self.cap = max(32, f.nb // 2)

    def _use_dense(self, key) -> bool:
        if self.mode == "auto":
            return 18 * self.f.lowrank[key][0].shape[1] > self.f.nb
        return self.mode == "dense"

    def add(self, key, u, v) -> None:
        if key in self.dense or (key not in self.pending and self._use_dense(key)):
            buf = self.dense.get(key)
            if buf is None:
                self.dense[key] = u @ v.T
            else:
                buf += u @ v.T
            return
        lst = self.pending.setdefault(key, [])
        lst.append((u, v))
        if sum(x.shape[1] for x, _ in lst) + self.f.lowrank[key][0].shape[1] >= self.cap:
            self.flush(key)

    def flush(self, key) -> None:
        buf = self.dense.pop(key, None)
        if buf is not None:
            u0, v0 = self.f.lowrank[key]
            if u0.shape[1]:
                buf += u0 @ v0.T
            self.f.lowrank[key] = compress_tile(buf, self.f.eps, rank_hint=u0.shape[1])
            return
        lst = self.pending.pop(key, None)
        if not lst:
            return
        u0, v0 = self.f.lowrank[key]
        u = np.hstack([u0] + [x for x, _ in lst])
        v = np.hstack([v0] + [y for _, y in lst])
        self.f.lowrank[key] = round_factors(u, v, self.f.eps)


def _tlr_potrf(f: TLRMatrix, k: int) -> None:
    c, info = lapack.dpotrf(f.diag[k], lower=1, clean=1)
    if info > 0:
        raise NotPositiveDefiniteError(k * f.nb + info - 1)
    f.diag[k] = c


def _tlr_trsm(f: TLRMatrix, acc: _Accumulator, i: int, k: int) -> None:
    acc.flush((i, k))
    u, v = f.lowrank[(i, k)]
    if v.shape[1]:
        v = scipy.linalg.solve_triangular(f.diag[k], v, lower=True, check_finite=False)
    f.lowrank[(i, k)] = (u, v)


def _tlr_syrk(f: TLRMatrix, i: int, k: int) -> None:
    u, v = f.lowrank[(i, k)]
    if u.shape[1]:
        m = u @ (v.T @ v)
        f.diag[i] -= m @ u.T


def _tlr_gemm(f: TLRMatrix, acc: _Accumulator, i: int, j: int, k: int) -> None:
    ui, vi = f.lowrank[(i, k)]
    uj, vj = f.lowrank[(j, k)]
    if ui.shape[1] and uj.shape[1]:
        acc.add((i, j), -(ui @ (vi.T @ vj)), uj)


def tlr_cholesky(a: TLRMatrix, workers: Optional[int] = None, update: str = "auto") -> TLRFactor:
    """Right-looking tile Cholesky on a TLR matrix.

    Off-diagonal updates are accumulated per tile and recompressed to the
    matrix accuracy before the panel solve that reads the tile; ``update``
    selects the accumulation strategy (see :class:`_Accumulator`).
    """
    f = a.copy()
    acc = _Accumulator(f, update)
    t = f.ntiles
    g = TaskGraph()
    for k in range(t):
        g.submit(_tlr_potrf, f, k, writes=[(k, k)], name="potrf")
        for i in range(k + 1, t):
            g.submit(_tlr_trsm, f, acc, i, k, reads=[(k, k)], writes=[(i, k)], name="trsm")
        for i in range(k + 1, t):
            g.submit(_tlr_syrk, f, i, k, reads=[(i, k)], writes=[(i, i)], name="syrk")
            for j in range(k + 1, i):
                g.submit(_tlr_gemm, f, acc, i, j, k, reads=[(i, k), (j, k)], writes=[(i, j)], name="gemm")
    g.run(workers)
    logdet = 2.0 * sum(float(np.sum(np.log(np.diagonal(d)))) for d in f.diag)
    return TLRFactor(f, logdet)


def _fused_trsm(f: TLRMatrix, dense: dict, i: int, k: int) -> None:
    t = dense.pop((i, k))
    u, v = compress_tile(t, f.eps)
    if v.shape[1]:
        v = scipy.linalg.solve_triangular(f.diag[k], v, lower=True, check_finite=False)
    f.lowrank[(i, k)] = (u, v)


def _fused_gemm(f: TLRMatrix, dense: dict, i: int, j: int, k: int) -> None:
    ui, vi = f.lowrank[(i, k)]
    uj, vj = f.lowrank[(j, k)]
    if ui.shape[1] and uj.shape[1]:
        dense[(i, j)] -= (ui @ (vi.T @ vj)) @ uj.T


def tlr_cholesky_fused(a: TiledMatrix, eps: float, workers: Optional[int] = None) -> TLRFactor:
    """TLR Cholesky of a dense tiled matrix, compressing each tile once.

    Tile ``(i, k)`` is held dense until its panel step; trailing updates
    from earlier panels are applied to it as low-rank products, then it is
    compressed at accuracy ``eps`` right before its triangular solve.
    Equivalent in accuracy to :func:`compress` followed by
    :func:`tlr_cholesky`, with half the compression work.
    """
    if not 0.0 < eps < 1.0:
        raise ValueError("eps must lie in (0, 1)")
    t = a.ntiles
    f = TLRMatrix(a.order, a.nb, eps, [np.array(a.tile(i, i)) for i in range(t)])
    dense = {(i, j): np.array(a.tile(i, j)) for i in range(t) for j in range(i)}
    g = TaskGraph()
    for k in range(t):
        g.submit(_tlr_potrf, f, k, writes=[(k, k)], name="potrf")
        for i in range(k + 1, t):
            g.submit(_fused_trsm, f, dense, i, k, reads=[(k, k)], writes=[(i, k)], name="trsm")
        for i in range(k + 1, t):
            g.submit(_tlr_syrk, f, i, k, reads=[(i, k)], writes=[(i, i)], name="syrk")
            for j in range(k + 1, i):
                g.submit(_fused_gemm, f, dense, i, j, k, reads=[(i, k), (j, k)], writes=[(i, j)], name="gemm")
    g.run(workers)
    logdet = 2.0 * sum(float(np.sum(np.log(np.diagonal(d)))) for d in f.diag)
    return TLRFactor(f, logdet)


def tlr_solve(factor: TLRFactor, b: np.ndarray, side: str = "full") -> np.ndarray:
    """Solve with a TLR factor: ``forward`` (L), ``backward`` (L^T) or ``full`` (L L^T)."""
    if side == "forward":
        return factor.solve_lower(b)
    if side == "backward":
        return factor.solve_upper(b)
    if side == "full":
        return factor.solve(b)
    raise ValueError(f"unknown side {side!r}")


# ---------------------------------------------------------------------------
# Diagonal Super Tile
# ---------------------------------------------------------------------------


def dst_truncate(a: TiledMatrix, keep_fraction: float, overwrite: bool = False) -> TiledMatrix:
    """Zero every tile with ``|i - j| > keep_fraction * (ntiles - 1)``.

    The result may be indefinite.
    """
    if not 0.0 < keep_fraction <= 1.0:
        raise ValueError("keep_fraction must lie in (0, 1]")
    out = a if overwrite else a.copy()
    t = out.ntiles
    band = keep_fraction * (t - 1)
    for i in range(t):
        for j in range(t):
            if abs(i - j) > band:
                out.tile(i, j)[...] = 0.0
    return out
