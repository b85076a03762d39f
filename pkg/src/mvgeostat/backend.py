"""Linear-algebra backends for the likelihood: exact, TLR and DST."""

import re
from dataclasses import dataclass
from typing import Optional

from .linalg import DEFAULT_TILE_SIZE, TiledMatrix, cholesky
from .tlr import PRESETS, compress, default_tile_size, dst_truncate, tlr_cholesky, tlr_cholesky_fused

_KINDS = ("exact", "tlr", "dst")


@dataclass(frozen=True)
class LikelihoodBackend:
    """How covariance matrices are factored.

    ``exact`` is the dense tile Cholesky, ``tlr`` compresses off-diagonal
    tiles at accuracy ``eps`` (by default once per tile, inside the
    factorization), ``dst`` zeroes tiles outside a band covering
    ``keep_fraction`` of the tile-distance range.
    """

    kind: str = "exact"
    eps: Optional[float] = None
    keep_fraction: Optional[float] = None
    nb: Optional[int] = None
    workers: Optional[int] = None
    fused: bool = True

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"backend kind must be one of {_KINDS}, got {self.kind!r}")
        if self.kind == "tlr" and not (self.eps is not None and 0.0 < self.eps < 1.0):
            raise ValueError("TLR backend needs eps in (0, 1)")
        if self.kind == "dst" and not (self.keep_fraction is not None and 0.0 < self.keep_fraction <= 1.0):
            raise ValueError("DST backend needs keep_fraction in (0, 1]")
        if self.nb is not None and self.nb < 1:
            raise ValueError("tile size must be positive")

    @classmethod
    def parse(cls, text: str, nb: Optional[int] = None, workers: Optional[int] = None) -> "LikelihoodBackend":
        """Parse ``exact``, ``tlr5``/``tlr7``/``tlr9``, ``tlr:<eps>`` or ``dst:<fraction>``."""
        t = str(text).strip().lower()
        if t == "exact":
            return cls("exact", nb=nb, workers=workers)
        if t in PRESETS:
            return cls("tlr", eps=PRESETS[t], nb=nb, workers=workers)
        m = re.fullmatch(r"(tlr|dst):(.+)", t)
        if m:
            try:
                value = float(m.group(2))
            except ValueError:
                raise ValueError(f"cannot parse backend value in {text!r}") from None
            if m.group(1) == "tlr":
                return cls("tlr", eps=value, nb=nb, workers=workers)
            return cls("dst", keep_fraction=value, nb=nb, workers=workers)
        raise ValueError(f"unknown backend {text!r}; use exact, tlr5, tlr7, tlr9, tlr:<eps> or dst:<fraction>")

    @property
    def tag(self) -> str:
        if self.kind == "exact":
            return "exact"
        if self.kind == "tlr":
            for name, eps in PRESETS.items():
                if eps == self.eps:
                    return name
            return f"tlr:{self.eps:g}"
        return f"dst:{self.keep_fraction:g}"

    def tile_size(self, order: int) -> int:
        if self.nb is not None:
            return min(self.nb, order)
        if self.kind == "exact":
            return min(DEFAULT_TILE_SIZE, order)
        return min(default_tile_size(order), order)

    def factorize(self, sigma: TiledMatrix, overwrite: bool = True):
        """Cholesky-type factor exposing ``logdet``, ``solve_lower`` and ``solve``.

        Raises :class:`~mvgeostat.linalg.NotPositiveDefiniteError` when the
        (approximated) matrix is not positive definite.
        """
        a = sigma.with_tile_size(self.tile_size(sigma.order))
        if self.kind == "exact":
            return cholesky(a, workers=self.workers, overwrite=overwrite)
        if self.kind == "dst":
            return cholesky(dst_truncate(a, self.keep_fraction, overwrite=overwrite), workers=self.workers, overwrite=True)
        if self.fused:
            return tlr_cholesky_fused(a, self.eps, workers=self.workers)
        return tlr_cholesky(compress(a, self.eps, workers=self.workers), workers=self.workers)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "tag": self.tag, "eps": self.eps, "keep_fraction": self.keep_fraction, "nb": self.nb}


EXACT = LikelihoodBackend()


def as_backend(obj) -> LikelihoodBackend:
    if obj is None:
        return EXACT
    if isinstance(obj, LikelihoodBackend):
        return obj
    return LikelihoodBackend.parse(obj)
