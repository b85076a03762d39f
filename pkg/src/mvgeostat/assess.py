"""Prediction-efficiency criteria for cokriging with approximated parameters.

For a target ``s0`` let ``E_t`` be the mean square error of the cokriging
predictor built from the true parameters, ``E_ta`` the true mean square
error of the predictor built from ``theta_a``, and ``E_a`` the error that
``theta_a`` believes its own predictor has. Then::

    LOE(s0) = E_ta / E_t - 1        MOM(s0) = E_a / E_ta - 1

and MLOE/MMOM average them over the targets.
"""

import json
import time
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .covariance import ParameterSet, Representation, assemble_cross, assemble_sigma, colocated_covariance
from .geometry import LocationSet, as_location_set
from .linalg import CholeskyFactor, cholesky
from .taskgraph import TaskGraph

DEGENERATE_TOL = 1e-12
_BATCH = 64


class DegenerateTargetError(ValueError):
    """The true-parameter prediction error vanishes (target at a data site)."""


def _block_sums(m: np.ndarray, p: int) -> np.ndarray:
    """Sum each consecutive group of ``p`` entries of a vector."""
    return m.reshape(-1, p).sum(axis=1)


def _as_coords(s0, d: int) -> np.ndarray:
    if isinstance(s0, LocationSet):
        return s0.coords
    return np.asarray(s0, dtype=float).reshape(-1, d)


def _errors(theta_t, theta_a, locs, coords, fac_t, fac_a, rep):
    """``(E_t, E_ta, E_a)`` arrays for a batch of targets."""
    p, d = theta_t.p, locs.d
    ct = assemble_cross(theta_t, locs, coords, rep)
    ca = assemble_cross(theta_a, locs, coords, rep)
    tr_t = float(np.trace(colocated_covariance(theta_t, d)))
    tr_a = float(np.trace(colocated_covariance(theta_a, d)))
    vt = fac_t.solve_lower(ct)
    va = fac_a.solve_lower(ca)
    e_t = tr_t - _block_sums(np.einsum("ij,ij->j", vt, vt), p)
    e_a = tr_a - _block_sums(np.einsum("ij,ij->j", va, va), p)
    # E_ta - E_t = ||L_t^T (W_a - W_t)||_F^2 per target, W = Sigma^{-1} c0
    w_t = fac_t.solve_upper(vt)
    w_a = fac_a.solve_upper(va)
    g = fac_t.multiply_upper(w_a - w_t)
    e_ta = e_t + _block_sums(np.einsum("ij,ij->j", g, g), p)
    return e_t, e_ta, e_a


def mse_true(theta: ParameterSet, data_locs, s0, chol_true: CholeskyFactor, rep=Representation.INTERLEAVED) -> float:
    """``tr{C(0) - c0^T Sigma^{-1} c0}`` for one target."""
    locs = as_location_set(data_locs)
    _check_factor(chol_true, locs, theta)
    c = assemble_cross(theta, locs, _as_coords(s0, locs.d)[:1], Representation.parse(rep))
    v = chol_true.solve_lower(c)
    return float(np.trace(colocated_covariance(theta, locs.d)) - np.sum(v * v))


def mse_cross(
    theta_true: ParameterSet,
    theta_approx: ParameterSet,
    data_locs,
    s0,
    chol_true: CholeskyFactor,
    chol_approx: CholeskyFactor,
    rep=Representation.INTERLEAVED,
) -> float:
    """True mean square error ``E_ta`` of the predictor built with ``theta_approx``."""
    locs = as_location_set(data_locs)
    _check_factor(chol_true, locs, theta_true)
    _check_factor(chol_approx, locs, theta_approx)
    coords = _as_coords(s0, locs.d)[:1]
    _, e_ta, _ = _errors(theta_true, theta_approx, locs, coords, chol_true, chol_approx, Representation.parse(rep))
    return float(e_ta[0])


def _check_factor(factor, locs: LocationSet, theta: ParameterSet) -> None:
    if factor.order != locs.n * theta.p:
        raise ValueError(f"factor order {factor.order} does not match p*n = {locs.n * theta.p}")


@dataclass
class AssessmentReport:
    loe: np.ndarray
    mom: np.ndarray
    e_t: np.ndarray
    e_ta: np.ndarray
    e_a: np.ndarray
    timing: dict = field(default_factory=dict)

    @property
    def mloe(self) -> float:
        return float(np.nanmean(self.loe))

    @property
    def mmom(self) -> float:
        return float(np.nanmean(self.mom))

    def to_dict(self) -> dict:
        rows = [
            {"loe": float(a), "mom": float(b), "e_t": float(c), "e_ta": float(d), "e_a": float(e)}
            for a, b, c, d, e in zip(self.loe, self.mom, self.e_t, self.e_ta, self.e_a)
        ]
        return {"mloe": self.mloe, "mmom": self.mmom, "per_location": rows, "timing": dict(self.timing)}

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)


def mloe_mmom(
    theta_true: ParameterSet,
    theta_approx: ParameterSet,
    data_locs,
    targets,
    workers: Optional[int] = None,
    rep=Representation.INTERLEAVED,
    skip_degenerate: bool = False,
) -> AssessmentReport:
    """Per-target LOE/MOM and their means MLOE/MMOM.

    Both covariance matrices are generated and factored once; the targets
    are then processed in independent batches. A target whose ``E_t`` is
    below ``1e-12`` raises :class:`DegenerateTargetError`, or is reported as
    NaN with a warning when ``skip_degenerate`` is set.
    """
    if theta_true.p != theta_approx.p:
        raise ValueError("true and approximate parameter sets differ in p")
    locs = as_location_set(data_locs)
    targets = as_location_set(targets, metric=locs.metric)
    rep = Representation.parse(rep)
    timing = {}
    t0 = time.perf_counter()
    same = np.array_equal(theta_true.to_vector(), theta_approx.to_vector())
    sig_t = assemble_sigma(theta_true, locs, rep, nb=256)
    sig_a = sig_t if same else assemble_sigma(theta_approx, locs, rep, nb=256)
    timing["gen"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    fac_t = cholesky(sig_t, workers=workers)
    fac_a = fac_t if same else cholesky(sig_a, workers=workers)
    timing["fact"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    m = targets.n
    e_t, e_ta, e_a = (np.empty(m) for _ in range(3))

    def _batch(lo, hi):
        e_t[lo:hi], e_ta[lo:hi], e_a[lo:hi] = _errors(
            theta_true, theta_approx, locs, targets.coords[lo:hi], fac_t, fac_a, rep
        )

    g = TaskGraph()
    for lo in range(0, m, _BATCH):
        g.submit(_batch, lo, min(m, lo + _BATCH), writes=[lo], name="targets")
    g.run(workers)
    timing["comp"] = time.perf_counter() - t0
    bad = e_t < DEGENERATE_TOL
    if np.any(bad):
        idx = np.flatnonzero(bad)
        msg = f"{idx.size} target(s) coincide with data locations (E_t < {DEGENERATE_TOL:g}); first index {idx[0]}"
        if not skip_degenerate:
            raise DegenerateTargetError(msg)
        warnings.warn(msg + "; reported as NaN", stacklevel=2)
    with np.errstate(divide="ignore", invalid="ignore"):
        loe = np.where(bad, np.nan, e_ta / e_t - 1.0)
        mom = np.where(bad, np.nan, e_a / e_ta - 1.0)
    return AssessmentReport(loe, mom, e_t, e_ta, e_a, timing)


def mloe_mmom_univariate(
    theta_true: ParameterSet, theta_approx: ParameterSet, data_locs, targets, i: int, **kwargs
) -> AssessmentReport:
    """The criteria for variable ``i`` alone, using its marginal Matern model."""
    return mloe_mmom(theta_true.marginal(i), theta_approx.marginal(i), data_locs, targets, **kwargs)


@dataclass
class NaiveAssessment:
    """Per-variable univariate reports and their averaged criteria."""

    reports: list

    @property
    def mloe(self) -> float:
        return float(np.mean([r.mloe for r in self.reports]))

    @property
    def mmom(self) -> float:
        return float(np.mean([r.mmom for r in self.reports]))


def naive_multivariate(theta_true: ParameterSet, theta_approx: ParameterSet, data_locs, targets, **kwargs) -> NaiveAssessment:
    """Mean of the univariate criteria over all variables."""
    return NaiveAssessment(
        [mloe_mmom_univariate(theta_true, theta_approx, data_locs, targets, i, **kwargs) for i in range(theta_true.p)]
    )
