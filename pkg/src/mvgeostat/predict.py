"""Cokriging prediction at unobserved sites and the MSPE score."""

import csv
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .backend import as_backend
from .covariance import ParameterSet, Representation, assemble_cross, assemble_sigma, colocated_covariance, flatten
from .dataset import SpatialDataset, backend_order
from .geometry import LocationSet, as_location_set
from .mle import _check_dims


@dataclass
class PredictionResult:
    """Predictions ``(n_pred, p)``; MSPE fields are set when truth is known."""

    targets: LocationSet
    predictions: np.ndarray
    variances: Optional[np.ndarray] = None
    mspe_per_variable: Optional[np.ndarray] = None
    mspe_avg: Optional[float] = None

    def score(self, truth: np.ndarray) -> "PredictionResult":
        self.mspe_per_variable, self.mspe_avg = mspe(self.predictions, truth)
        return self

    def to_csv(self, path) -> None:
        p = self.predictions.shape[1]
        coord_names = ["x", "y", "z"][: self.targets.d] if self.targets.d <= 3 else [f"s{k + 1}" for k in range(self.targets.d)]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(coord_names + [f"zhat_{i + 1}" for i in range(p)])
            for loc, row in zip(self.targets.coords, self.predictions):
                w.writerow([f"{v:.17g}" for v in loc] + [f"{v:.17g}" for v in row])


class CokrigingPredictor:
    """Factor ``Sigma`` over the data locations once, predict many value sets.

    ``predict`` maps an ``(n, p)`` value table (in the caller's location
    order) to ``(n_pred, p)`` predictions at ``targets``.
    """

    def __init__(self, theta: ParameterSet, locs, targets, backend=None, rep=Representation.INTERLEAVED):
        backend = as_backend(backend)
        locs = as_location_set(locs)
        targets = as_location_set(targets, metric=locs.metric)
        if targets.d != locs.d:
            raise ValueError(f"targets are {targets.d}-D but data locations are {locs.d}-D")
        rep = Representation.parse(rep)
        if backend.kind != "exact" and rep is Representation.BLOCK:
            raise ValueError("TLR and DST backends work on Representation I")
        self.perm = backend_order(locs, backend.kind)
        if self.perm is not None:
            locs = locs.permuted(self.perm, ordering="morton" if backend.kind == "tlr" else "as-given")
        self.theta, self.locs, self.targets, self.rep = theta, locs, targets, rep
        sigma = assemble_sigma(theta, locs, rep, nb=backend.tile_size(locs.n * theta.p))
        self.factor = backend.factorize(sigma)
        self.cross = assemble_cross(theta, locs, targets.coords, rep)  # (pn, m p)

    def _values(self, values) -> np.ndarray:
        values = np.asarray(values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if values.shape != (self.locs.n, self.theta.p):
            raise ValueError(f"values must have shape ({self.locs.n}, {self.theta.p}), got {values.shape}")
        return values if self.perm is None else values[self.perm]

    def predict(self, values) -> np.ndarray:
        v = self._values(values)
        alpha = self.factor.solve(flatten(v, self.rep))
        return (self.cross.T @ alpha).reshape(self.targets.n, self.theta.p)

    def variances(self) -> np.ndarray:
        """Diagonal of ``C(0) - c0^T Sigma^{-1} c0`` per target, shape ``(n_pred, p)``."""
        m, p = self.targets.n, self.theta.p
        v = self.factor.solve_lower(self.cross)
        c00 = np.diag(colocated_covariance(self.theta, self.locs.d))
        return np.tile(c00, m).reshape(m, p) - np.sum(v * v, axis=0).reshape(m, p)


def cokrige(
    theta: ParameterSet,
    data: SpatialDataset,
    targets,
    backend=None,
    rep=Representation.INTERLEAVED,
    return_variance: bool = False,
) -> PredictionResult:
    """Simple cokriging ``Zhat(s0) = c0^T Sigma^{-1} Z`` at every target.

    ``Sigma`` is factored once; with ``return_variance`` the diagonal of
    ``C(0) - c0^T Sigma^{-1} c0`` is returned per target as well.
    """
    _check_dims(theta, data)
    pred = CokrigingPredictor(theta, data.locs, targets, backend, rep)
    return PredictionResult(pred.targets, pred.predict(data.values), pred.variances() if return_variance else None)


def mspe(pred: np.ndarray, truth: np.ndarray):
    """Per-variable mean squared prediction error and their arithmetic mean."""
    pred = np.asarray(pred, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if pred.ndim == 1:
        pred = pred[:, None]
    if truth.ndim == 1:
        truth = truth[:, None]
    if pred.shape != truth.shape:
        raise ValueError(f"shape mismatch: predictions {pred.shape}, truth {truth.shape}")
    per = np.mean((pred - truth) ** 2, axis=0)
    return per, float(np.mean(per))
