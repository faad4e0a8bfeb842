"""
Continuous one-dimensional laws described by their distribution functions.

A :class:`MarginalDescriptor` bundles a cdf, a pdf and a quantile function.
When no analytic quantile is available it is obtained by bracketed root
finding on the cdf.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import optimize, special, stats

PPF_TOL = 1e-12


class MarginalError(ValueError):
    """Invalid marginal description or failed inversion."""


def _bracket(cdf: Callable, p: float, start: float = 0.0, width: float = 1.0, limit: int = 200):
    lo, hi = start - width, start + width
    for _ in range(limit):
        if cdf(lo) < p < cdf(hi):
            return lo, hi
        if cdf(lo) >= p:
            lo -= width
        if cdf(hi) <= p:
            hi += width
        width *= 2
    raise MarginalError(f"could not bracket quantile {p}")


@dataclass(frozen=True)
class MarginalDescriptor:
    """
    A continuous law on the real line.

    Parameters
    ----------
    cdf, pdf : callable
        Vectorized distribution function and density.
    ppf : callable, optional
        Vectorized quantile function.  Omitted, it is computed by Brent's
        method on ``cdf`` to ``PPF_TOL``.
    symmetric_about : float, optional
        Center of symmetry, when the law is symmetric.  Enables the analytic
        reflection ``x -> 2m - x``.
    name : str
        Label used in reports and JSON.
    """

    cdf: Callable
    pdf: Callable
    ppf: Optional[Callable] = None
    symmetric_about: Optional[float] = None
    name: str = "custom"
    params: tuple = field(default=(), compare=True)

    @classmethod
    def normal(cls, mean: float = 0.0, var: float = 1.0) -> "MarginalDescriptor":
        if var <= 0:
            raise MarginalError("normal variance must be positive")
        sd = math.sqrt(var)
        return cls(
            cdf=lambda x: special.ndtr((np.asarray(x, dtype=float) - mean) / sd),
            pdf=lambda x: stats.norm.pdf(x, mean, sd),
            ppf=lambda p: mean + sd * special.ndtri(p),
            symmetric_about=float(mean),
            name="normal",
            params=(float(mean), float(var)),
        )

    @classmethod
    def from_scipy(cls, dist, symmetric_about: Optional[float] = None, name: str = "scipy") -> "MarginalDescriptor":
        """Wrap a frozen ``scipy.stats`` continuous distribution."""
        return cls(dist.cdf, dist.pdf, dist.ppf, symmetric_about, name, ())

    @classmethod
    def parse(cls, text: str) -> "MarginalDescriptor":
        """Parse ``normal:MEAN,VAR``."""
        kind, _, rest = text.partition(":")
        if kind != "normal":
            raise MarginalError(f"unsupported marginal {text!r}; use normal:MEAN,VAR")
        vals = [float(v) for v in rest.split(",")] if rest else [0.0, 1.0]
        if len(vals) != 2:
            raise MarginalError("normal marginal needs MEAN,VAR")
        return cls.normal(*vals)

    def quantile(self, p):
        """Inverse cdf, analytic when available and by root finding otherwise."""
        p = np.asarray(p, dtype=float)
        if np.any((p <= 0) | (p >= 1)):
            raise MarginalError("quantile levels must lie strictly inside (0, 1)")
        if self.ppf is not None:
            return self.ppf(p)
        out = np.empty(p.shape)
        for idx, q in np.ndenumerate(p):
            lo, hi = _bracket(self.cdf, q)
            out[idx] = optimize.brentq(lambda x: self.cdf(x) - q, lo, hi, xtol=PPF_TOL, rtol=4 * np.finfo(float).eps)
        return float(out) if out.ndim == 0 else out

    @property
    def median(self) -> float:
        if self.symmetric_about is not None:
            return self.symmetric_about
        return float(self.quantile(0.5))

    def same_law(self, other: "MarginalDescriptor") -> bool:
        if self is other:
            return True
        return bool(self.params) and self.name == other.name and self.params == other.params

    def to_dict(self) -> dict:
        if self.name != "normal":
            raise MarginalError("only normal marginals serialize")
        return {"form": "normal", "mean": self.params[0], "var": self.params[1]}

    @classmethod
    def from_dict(cls, data: dict) -> "MarginalDescriptor":
        if data.get("form") != "normal":
            raise MarginalError(f"unsupported marginal {data!r}")
        return cls.normal(data["mean"], data["var"])


def check_descriptor(phi: MarginalDescriptor, probes: int = 99) -> float:
    """
    Worst violation of the descriptor's internal consistency.

    Returns the larger of ``max |cdf(ppf(p)) - p|`` and the relative
    discrepancy between ``pdf`` and a central difference of ``cdf``.
    """
    p = np.linspace(0.01, 0.99, probes)
    x = np.asarray(phi.quantile(p), dtype=float)
    inv = float(np.max(np.abs(phi.cdf(x) - p)))
    h = 1e-5 * np.maximum(1.0, np.abs(x))
    fd = (phi.cdf(x + h) - phi.cdf(x - h)) / (2 * h)
    dens = np.asarray(phi.pdf(x), dtype=float)
    return max(inv, float(np.max(np.abs(fd - dens) / dens)))
