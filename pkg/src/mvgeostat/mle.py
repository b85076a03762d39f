"""Gaussian log-likelihood, profile likelihood and the MLE driver.

The profile form replaces each marginal variance by its closed-form
maximizer ``sigma2_i = Z_i^T R_ii^{-1} Z_i / n``, where ``R`` is the
correlation matrix (all variances set to one), leaving the range,
smoothnesses and betas to the numerical optimizer.
"""

import json
import math
import time
import warnings
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from .backend import LikelihoodBackend, as_backend
from .covariance import InvalidParameterError, ParameterSet, Representation, assemble_sigma
from .dataset import SpatialDataset
from .linalg import TiledMatrix

try:
    import nlopt

    HAVE_NLOPT = True
except ImportError:  # pragma: no cover - exercised only without nlopt
    nlopt = None
    HAVE_NLOPT = False

LOG_2PI = math.log(2.0 * math.pi)

BOUNDS = {
    "sigma2": (1e-3, 5.0),
    "range": (1e-3, 2.0),
    "nu": (0.1, 5.0),
    "beta": (-0.99, 0.99),
}


def _prepare(data: SpatialDataset, backend: LikelihoodBackend, rep) -> Tuple[SpatialDataset, Representation]:
    rep = Representation.parse(rep)
    if backend.kind != "exact":
        if rep is Representation.BLOCK:
            raise ValueError("TLR and DST backends work on Representation I")
        data = data.ordered_for(backend.kind)
    return data, rep


def _check_dims(theta: ParameterSet, data: SpatialDataset) -> None:
    if theta.p != data.p:
        raise ValueError(f"parameter set has p={theta.p} but data has p={data.p}")


def _factor_or_none(backend: LikelihoodBackend, sigma: TiledMatrix):
    try:
        return backend.factorize(sigma)
    except np.linalg.LinAlgError:
        return None


def gaussian_loglik(factor, z: np.ndarray) -> float:
    """``-(N/2) log 2pi - logdet/2 - z^T A^{-1} z / 2`` from a factor of ``A``."""
    w = factor.solve_lower(z)
    return -0.5 * z.size * LOG_2PI - 0.5 * factor.logdet - 0.5 * float(w @ w)


def log_likelihood(theta: ParameterSet, data: SpatialDataset, backend=None, rep=Representation.INTERLEAVED) -> float:
    """Exact or approximated Gaussian log-likelihood of ``data`` under ``theta``.

    Returns ``-inf`` when the factorization finds the matrix indefinite.
    """
    backend = as_backend(backend)
    _check_dims(theta, data)
    data, rep = _prepare(data, backend, rep)
    sigma = assemble_sigma(theta, data.locs, rep, nb=backend.tile_size(data.n * data.p))
    factor = _factor_or_none(backend, sigma)
    if factor is None:
        return -math.inf
    return gaussian_loglik(factor, data.z(rep))


def _marginal_block(r: TiledMatrix, i: int, n: int, p: int, rep: Representation) -> np.ndarray:
    if rep is Representation.INTERLEAVED:
        return np.ascontiguousarray(r.data[i::p, i::p])
    return np.array(r.data[i * n : (i + 1) * n, i * n : (i + 1) * n])


def profile_log_likelihood(
    theta_reduced: ParameterSet, data: SpatialDataset, backend=None, rep=Representation.INTERLEAVED
) -> Tuple[float, np.ndarray]:
    """Profiled log-likelihood and the variance estimates it implies.

    The variances of ``theta_reduced`` are ignored. On an indefinite matrix
    the result is ``(-inf, nan...)``.
    """
    backend = as_backend(backend)
    _check_dims(theta_reduced, data)
    data, rep = _prepare(data, backend, rep)
    n, p = data.n, data.p
    failed = (-math.inf, np.full(p, np.nan))
    theta1 = theta_reduced.with_variances(1.0)
    r = assemble_sigma(theta1, data.locs, rep, nb=backend.tile_size(n * p))
    marginals = [r] if p == 1 else [TiledMatrix(_marginal_block(r, i, n, p, rep), backend.tile_size(n)) for i in range(p)]
    factor = _factor_or_none(backend, r)
    if factor is None:
        return failed
    sigma2 = np.empty(p)
    for i in range(p):
        fi = factor if p == 1 else _factor_or_none(backend, marginals[i])
        if fi is None:
            return failed
        w = fi.solve_lower(data.values[:, i])
        sigma2[i] = float(w @ w) / n
    if not np.all(sigma2 > 0):
        return failed
    z = data.with_values(data.values / np.sqrt(sigma2)).z(rep)
    w = factor.solve_lower(z)
    logdet = factor.logdet + n * float(np.sum(np.log(sigma2)))
    ll = -0.5 * n * p * LOG_2PI - 0.5 * logdet - 0.5 * float(w @ w)
    return ll, sigma2


# ---------------------------------------------------------------------------
# optimization
# ---------------------------------------------------------------------------


@dataclass
class FitOptions:
    """Optimizer settings. ``algorithm`` is ``bobyqa`` or ``neldermead``."""

    algorithm: str = "bobyqa"
    ftol_rel: float = 1e-8
    max_evals: int = 500
    profile: bool = True
    rep: str = "I"
    start: Optional[ParameterSet] = None
    range_bounds: Tuple[float, float] = BOUNDS["range"]
    nu_bounds: Tuple[float, float] = BOUNDS["nu"]
    sigma2_bounds: Tuple[float, float] = BOUNDS["sigma2"]
    beta_bounds: Tuple[float, float] = BOUNDS["beta"]
    callback: Optional[Callable] = None


@dataclass
class TraceEntry:
    theta: List[float]
    loglik: float
    wall_time: float


@dataclass
class FitResult:
    theta_hat: ParameterSet
    loglik: float
    iterations: int
    backend: LikelihoodBackend
    trace: List[TraceEntry] = field(default_factory=list)
    converged: bool = True
    message: str = ""

    def to_dict(self) -> dict:
        return {
            "theta_hat": [float(v) for v in self.theta_hat.to_vector()],
            "names": self.theta_hat.names(),
            "loglik": float(self.loglik),
            "iterations": self.iterations,
            "converged": self.converged,
            "message": self.message,
            "backend": self.backend.to_dict(),
            "trace": [{"theta": e.theta, "loglik": e.loglik, "wall_time": e.wall_time} for e in self.trace],
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)


def default_start(data: SpatialDataset) -> ParameterSet:
    """Sample variances, ``a = 0.1``, ``nu = 0.5`` and ``beta = I``."""
    p = data.p
    var = np.clip(np.var(data.values, axis=0), *BOUNDS["sigma2"])
    return ParameterSet(var, 0.1, np.full(p, 0.5), np.eye(p))


class _Transform:
    """Unconstrained-ish coordinates: log for positive scalars, atanh for beta."""

    def __init__(self, p: int, opts: FitOptions):
        self.p = p
        self.profile = opts.profile
        self.n_beta = p * (p - 1) // 2
        self.iu = np.triu_indices(p, 1)
        lo, hi = [], []
        if not opts.profile:
            lo += [math.log(opts.sigma2_bounds[0])] * p
            hi += [math.log(opts.sigma2_bounds[1])] * p
        lo.append(math.log(opts.range_bounds[0]))
        hi.append(math.log(opts.range_bounds[1]))
        lo += [math.log(opts.nu_bounds[0])] * p
        hi += [math.log(opts.nu_bounds[1])] * p
        lo += [math.atanh(opts.beta_bounds[0])] * self.n_beta
        hi += [math.atanh(opts.beta_bounds[1])] * self.n_beta
        self.lower = np.array(lo)
        self.upper = np.array(hi)

    def encode(self, theta: ParameterSet) -> np.ndarray:
        parts = [] if self.profile else [np.log(theta.sigma2)]
        parts += [[math.log(theta.spatial_range)], np.log(theta.nu), np.arctanh(theta.beta[self.iu])]
        x = np.concatenate(parts)
        return np.clip(x, self.lower, self.upper)

    def decode(self, x: np.ndarray, sigma2=None) -> ParameterSet:
        p = self.p
        pos = 0
        if not self.profile:
            sigma2 = np.exp(x[:p])
            pos = p
        a = math.exp(x[pos])
        nu = np.exp(x[pos + 1 : pos + 1 + p])
        beta = np.eye(p)
        b = np.tanh(x[pos + 1 + p :])
        beta[self.iu] = b
        beta[(self.iu[1], self.iu[0])] = b
        if sigma2 is None:
            sigma2 = np.ones(p)
        return ParameterSet(sigma2, a, nu, beta)


class _Objective:
    def __init__(self, data, backend, opts, transform):
        self.data = data
        self.backend = backend
        self.opts = opts
        self.tf = transform
        self.trace: List[TraceEntry] = []
        self.best = (-math.inf, None)
        self.t0 = time.perf_counter()

    def loglik(self, x) -> Tuple[float, Optional[ParameterSet]]:
        try:
            theta = self.tf.decode(np.asarray(x, dtype=float))
        except InvalidParameterError:
            return -math.inf, None
        if self.opts.profile:
            ll, sigma2 = profile_log_likelihood(theta, self.data, self.backend, self.opts.rep)
            if not math.isfinite(ll):
                return -math.inf, None
            theta = theta.with_variances(sigma2)
        else:
            ll = log_likelihood(theta, self.data, self.backend, self.opts.rep)
        return ll, theta

    def __call__(self, x, grad=None) -> float:
        ll, theta = self.loglik(x)
        vec = [float(v) for v in theta.to_vector()] if theta is not None else [float(v) for v in x]
        self.trace.append(TraceEntry(vec, float(ll), time.perf_counter() - self.t0))
        if ll > self.best[0]:
            self.best = (ll, theta)
        if self.opts.callback is not None:
            self.opts.callback(self.trace[-1])
        # finite stand-in for -inf keeps the quadratic model well defined
        return -ll if math.isfinite(ll) else 1e10


def _run_bobyqa(obj: _Objective, x0, tf: _Transform, opts: FitOptions) -> Tuple[bool, str]:
    opt = nlopt.opt(nlopt.LN_BOBYQA, x0.size)
    opt.set_lower_bounds(tf.lower)
    opt.set_upper_bounds(tf.upper)
    opt.set_min_objective(obj)
    opt.set_ftol_rel(opts.ftol_rel)
    opt.set_maxeval(opts.max_evals)
    step = np.minimum(0.5, 0.25 * (tf.upper - tf.lower))
    opt.set_initial_step(step)
    try:
        opt.optimize(x0)
    except (nlopt.RoundoffLimited, RuntimeError, ValueError) as exc:
        return False, f"nlopt stopped early: {exc}"
    code = opt.last_optimize_result()
    if code == nlopt.MAXEVAL_REACHED:
        return False, "maximum number of evaluations reached"
    return code > 0, f"nlopt result code {code}"


def _run_neldermead(obj: _Objective, x0, tf: _Transform, opts: FitOptions) -> Tuple[bool, str]:
    from scipy.optimize import minimize

    f0 = obj(x0)
    res = minimize(
        obj,
        x0,
        method="Nelder-Mead",
        bounds=list(zip(tf.lower, tf.upper)),
        options={"maxfev": max(1, opts.max_evals - 1), "fatol": opts.ftol_rel * max(1.0, abs(f0)), "xatol": 1e-6},
    )
    return bool(res.success), str(res.message)


def fit(data: SpatialDataset, backend=None, opts: Optional[FitOptions] = None) -> FitResult:
    """Maximum likelihood estimate of the parsimonious Matern parameters.

    Maximizes the profile likelihood (default) or the full likelihood with
    a bounded derivative-free optimizer. If the optimizer stops abnormally
    the best point seen is returned with ``converged=False``.
    """
    backend = as_backend(backend)
    opts = opts or FitOptions()
    if data.n < 30:
        warnings.warn(f"only {data.n} locations; estimates may be unstable", stacklevel=2)
    _prepare(data, backend, opts.rep)
    start = opts.start or default_start(data)
    if start.p != data.p:
        raise ValueError(f"start has p={start.p} but data has p={data.p}")
    tf = _Transform(data.p, opts)
    x0 = tf.encode(start)
    obj = _Objective(data, backend, opts, tf)
    algorithm = opts.algorithm.lower()
    if algorithm == "bobyqa" and not HAVE_NLOPT:
        warnings.warn("nlopt is not installed; falling back to Nelder-Mead", stacklevel=2)
        algorithm = "neldermead"
    if algorithm == "bobyqa":
        converged, message = _run_bobyqa(obj, x0, tf, opts)
    elif algorithm == "neldermead":
        converged, message = _run_neldermead(obj, x0, tf, opts)
    else:
        raise ValueError(f"unknown algorithm {opts.algorithm!r}")
    ll, theta = obj.best
    if theta is None:
        raise RuntimeError("no feasible parameter vector was found")
    if not converged:
        warnings.warn(f"optimizer did not converge cleanly: {message}", stacklevel=2)
    return FitResult(theta, ll, len(obj.trace), backend, obj.trace, converged, message)


def fit_many(datasets: Sequence[SpatialDataset], backend=None, opts: Optional[FitOptions] = None) -> List[FitResult]:
    return [fit(d, backend, opts) for d in datasets]
