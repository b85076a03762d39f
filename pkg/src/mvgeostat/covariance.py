"""Parsimonious multivariate Matern cross-covariance and matrix assembly.

For ``p`` variables sharing one spatial range ``a``::

    C_ij(h) = rho_ij sigma_i sigma_j / (2**(nu_ij - 1) Gamma(nu_ij)) (h/a)**nu_ij K_nu_ij(h/a)

with ``nu_ij = (nu_i + nu_j) / 2`` and ``rho_ij`` tied to a latent
positive-definite correlation matrix ``beta`` so that the resulting
cross-covariance is valid in ``R^d``.

Two orderings of the ``pn x pn`` matrix are supported. ``INTERLEAVED``
(Representation I) indexes entries as ``l*p + i`` (location ``l``,
variable ``i``); ``BLOCK`` (Representation II) uses ``i*n + l``.
"""

import enum
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .geometry import LocationSet, as_location_set
from .kernels import matern_correlation
from .linalg import TiledMatrix


class InvalidParameterError(ValueError):
    """Raised when a parameter vector violates the model constraints."""


class Representation(enum.Enum):
    INTERLEAVED = "I"
    BLOCK = "II"

    @classmethod
    def parse(cls, value) -> "Representation":
        if isinstance(value, cls):
            return value
        text = str(value).strip().upper()
        for rep in cls:
            if text in (rep.value, rep.name):
                return rep
        raise ValueError(f"unknown representation {value!r}; use I or II")


def n_params(p: int) -> int:
    return 2 * p + 1 + p * (p - 1) // 2


def _p_from_length(length: int) -> int:
    p = 1
    while n_params(p) < length:
        p += 1
    if n_params(p) != length:
        raise InvalidParameterError(f"a parameter vector of length {length} matches no variable count")
    return p


@dataclass(frozen=True, eq=False)
class ParameterSet:
    """Cross-covariance parameters: variances, shared range, smoothnesses, beta.

    The flat vector form orders entries as variances, range, smoothnesses
    and then the upper triangle of ``beta`` row by row; for ``p = 2`` this is
    ``(sigma2_1, sigma2_2, a, nu_1, nu_2, beta_12)``.
    """

    sigma2: np.ndarray
    spatial_range: float
    nu: np.ndarray
    beta: np.ndarray

    def __post_init__(self):
        sigma2 = np.array(self.sigma2, dtype=float).reshape(-1)
        nu = np.array(self.nu, dtype=float).reshape(-1)
        p = sigma2.size
        beta = np.array(self.beta, dtype=float)
        if beta.ndim == 0 and p == 1:
            beta = beta.reshape(1, 1)
        if nu.size != p or beta.shape != (p, p):
            raise InvalidParameterError("sigma2, nu and beta must describe the same number of variables")
        if not (np.all(np.isfinite(sigma2)) and np.all(sigma2 > 0)):
            raise InvalidParameterError("marginal variances must be positive")
        if not (math.isfinite(self.spatial_range) and self.spatial_range > 0):
            raise InvalidParameterError("spatial range must be positive")
        if not (np.all(np.isfinite(nu)) and np.all(nu > 0)):
            raise InvalidParameterError("smoothness parameters must be positive")
        if not np.array_equal(beta, beta.T):
            raise InvalidParameterError("beta must be symmetric")
        if not np.all(np.diag(beta) == 1.0):
            raise InvalidParameterError("beta must have a unit diagonal")
        if not is_positive_definite(beta):
            raise InvalidParameterError("beta must be positive definite")
        for arr in (sigma2, nu, beta):
            arr.setflags(write=False)
        object.__setattr__(self, "sigma2", sigma2)
        object.__setattr__(self, "nu", nu)
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "spatial_range", float(self.spatial_range))

    @property
    def p(self) -> int:
        return self.sigma2.size

    @classmethod
    def from_vector(cls, vec: Sequence[float], p: Optional[int] = None) -> "ParameterSet":
        vec = np.asarray(vec, dtype=float).reshape(-1)
        if p is None:
            p = _p_from_length(vec.size)
        elif vec.size != n_params(p):
            raise InvalidParameterError(f"p={p} needs {n_params(p)} parameters, got {vec.size}")
        beta = np.eye(p)
        iu = np.triu_indices(p, 1)
        beta[iu] = vec[2 * p + 1 :]
        beta[(iu[1], iu[0])] = vec[2 * p + 1 :]
        return cls(vec[:p], vec[p], vec[p + 1 : 2 * p + 1], beta)

    def to_vector(self) -> np.ndarray:
        iu = np.triu_indices(self.p, 1)
        return np.concatenate([self.sigma2, [self.spatial_range], self.nu, self.beta[iu]])

    def names(self) -> list:
        p = self.p
        out = [f"sigma2_{i + 1}" for i in range(p)] + ["range"] + [f"nu_{i + 1}" for i in range(p)]
        out += [f"beta_{i + 1}{j + 1}" for i, j in zip(*np.triu_indices(p, 1))]
        return out

    def with_variances(self, sigma2) -> "ParameterSet":
        return ParameterSet(np.broadcast_to(np.asarray(sigma2, dtype=float), (self.p,)), self.spatial_range, self.nu, self.beta)

    def with_range(self, a: float) -> "ParameterSet":
        return ParameterSet(self.sigma2, a, self.nu, self.beta)

    def marginal(self, i: int) -> "ParameterSet":
        """Univariate parameter set of variable ``i``."""
        return ParameterSet([self.sigma2[i]], self.spatial_range, [self.nu[i]], [[1.0]])

    def cross_smoothness(self, i: int, j: int) -> float:
        return 0.5 * (self.nu[i] + self.nu[j])

    def __repr__(self) -> str:
        vals = ", ".join(f"{k}={v:.6g}" for k, v in zip(self.names(), self.to_vector()))
        return f"ParameterSet({vals})"


def is_positive_definite(a: np.ndarray) -> bool:
    try:
        np.linalg.cholesky(a)
    except np.linalg.LinAlgError:
        return False
    return True


def colocated_correlation(theta: ParameterSet, i: int, j: int, d: int) -> float:
    """Induced colocated correlation rho_ij of variables ``i`` and ``j`` (0-based)."""
    if i == j:
        return 1.0
    b = float(theta.beta[i, j])
    if b == 0.0:
        return 0.0
    nu_i, nu_j = theta.nu[i], theta.nu[j]
    nu_ij = 0.5 * (nu_i + nu_j)
    h = 0.5 * d
    log_ratio = (
        0.5 * (math.lgamma(nu_i + h) - math.lgamma(nu_i))
        + 0.5 * (math.lgamma(nu_j + h) - math.lgamma(nu_j))
        + math.lgamma(nu_ij)
        - math.lgamma(nu_ij + h)
    )
    return b * math.exp(log_ratio)


def colocated_covariance(theta: ParameterSet, d: int) -> np.ndarray:
    """C(0; theta): the ``p x p`` covariance of the variables at one site."""
    p = theta.p
    sd = np.sqrt(theta.sigma2)
    rho = np.array([[colocated_correlation(theta, i, j, d) for j in range(p)] for i in range(p)])
    c0 = rho * np.outer(sd, sd)
    np.fill_diagonal(c0, theta.sigma2)
    return c0


def matern_cross_cov(theta: ParameterSet, i: int, j: int, h, d: int):
    """C_ij evaluated at distance(s) ``h >= 0``; h = 0 returns rho_ij sigma_i sigma_j."""
    h_arr = np.asarray(h, dtype=float)
    if np.any(h_arr < 0):
        raise ValueError("distances must be nonnegative")
    scale = colocated_correlation(theta, i, j, d) * math.sqrt(theta.sigma2[i] * theta.sigma2[j])
    flat = np.ascontiguousarray(h_arr.ravel()) / theta.spatial_range
    vals = scale * matern_correlation(flat, theta.cross_smoothness(i, j))
    if h_arr.ndim == 0:
        return float(vals[0])
    return vals.reshape(h_arr.shape)


def cross_cov(theta: ParameterSet, dist: np.ndarray, d: int) -> np.ndarray:
    """All ``C_ij(dist)`` stacked into an array of shape ``(p, p) + dist.shape``."""
    dist = np.asarray(dist, dtype=float)
    p = theta.p
    out = np.empty((p, p) + dist.shape)
    flat = np.ascontiguousarray(dist.ravel()) / theta.spatial_range
    cache = {}
    c0 = colocated_covariance(theta, d)
    for i in range(p):
        for j in range(i, p):
            nu_ij = theta.cross_smoothness(i, j)
            if nu_ij not in cache:
                cache[nu_ij] = matern_correlation(flat, nu_ij).reshape(dist.shape)
            out[i, j] = c0[i, j] * cache[nu_ij]
            if j != i:
                out[j, i] = out[i, j]
    return out


def _place(out: np.ndarray, block: np.ndarray, i: int, j: int, n: int, p: int, rep: Representation) -> None:
    if rep is Representation.INTERLEAVED:
        out.reshape(n, p, n, p)[:, i, :, j] = block
    else:
        out.reshape(p, n, p, n)[i, :, j, :] = block


def assemble_sigma(
    theta: ParameterSet,
    locs: LocationSet,
    rep: Representation = Representation.INTERLEAVED,
    nb: Optional[int] = None,
) -> TiledMatrix:
    """The ``pn x pn`` cross-covariance matrix Sigma(theta) over ``locs``.

    Kernel values are computed once per distinct distance (regular grids
    repeat distances heavily) and gathered into place. The result is
    exactly symmetric.
    """
    locs = as_location_set(locs)
    rep = Representation.parse(rep)
    n, p, d = locs.n, theta.p, locs.d
    uniq, inv = locs.distance_index
    out = np.empty((n * p, n * p))
    c0 = colocated_covariance(theta, d)
    scaled = np.ascontiguousarray(uniq) / theta.spatial_range
    cache = {}
    for i in range(p):
        for j in range(i, p):
            nu_ij = theta.cross_smoothness(i, j)
            if nu_ij not in cache:
                cache[nu_ij] = matern_correlation(scaled, nu_ij)
            block = (c0[i, j] * cache[nu_ij])[inv]
            _place(out, block, i, j, n, p, rep)
            if j != i:
                _place(out, block, j, i, n, p, rep)
    return TiledMatrix(out, nb or out.shape[0], symmetric=True)


def assemble_cross(
    theta: ParameterSet,
    locs: LocationSet,
    targets,
    rep: Representation = Representation.INTERLEAVED,
) -> np.ndarray:
    """Stacked cokriging blocks: column block ``l`` (width ``p``) is c0 for target ``l``."""
    locs = as_location_set(locs)
    rep = Representation.parse(rep)
    tcoords = targets.coords if isinstance(targets, LocationSet) else np.atleast_2d(np.asarray(targets, dtype=float))
    if tcoords.shape[1] != locs.d:
        raise ValueError(f"target dimension {tcoords.shape[1]} does not match data dimension {locs.d}")
    dist = locs.distances_to(tcoords)  # (n, m)
    c = cross_cov(theta, dist, locs.d)  # (p, p, n, m)
    n, m, p = locs.n, tcoords.shape[0], theta.p
    if rep is Representation.INTERLEAVED:
        return np.ascontiguousarray(c.transpose(2, 0, 3, 1).reshape(n * p, m * p))
    return np.ascontiguousarray(c.transpose(0, 2, 3, 1).reshape(p * n, m * p))


def assemble_c0(theta: ParameterSet, locs: LocationSet, s0, rep: Representation = Representation.INTERLEAVED) -> np.ndarray:
    """The ``pn x p`` matrix whose row block ``r`` is C(s0 - s_r; theta)."""
    s0 = np.asarray(s0, dtype=float).reshape(1, -1)
    return assemble_cross(theta, locs, s0, rep)


def permutation_between(n: int, p: int) -> np.ndarray:
    """Index map ``perm`` with ``Sigma_I == Sigma_II[perm][:, perm]``."""
    l_idx, i_idx = np.divmod(np.arange(n * p), p)
    return i_idx * n + l_idx


def to_interleaved(values: np.ndarray) -> np.ndarray:
    """Flatten an ``(n, p)`` value array in Representation I order."""
    return np.ascontiguousarray(values).reshape(-1)


def to_block(values: np.ndarray) -> np.ndarray:
    """Flatten an ``(n, p)`` value array in Representation II order."""
    return np.ascontiguousarray(values.T).reshape(-1)


def flatten(values: np.ndarray, rep: Representation) -> np.ndarray:
    return to_interleaved(values) if Representation.parse(rep) is Representation.INTERLEAVED else to_block(values)


def unflatten(vec: np.ndarray, n: int, p: int, rep: Representation) -> np.ndarray:
    if Representation.parse(rep) is Representation.INTERLEAVED:
        return vec.reshape(n, p)
    return vec.reshape(p, n).T
