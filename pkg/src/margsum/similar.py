"""
Balanced perturbations of bivariate densities with non-identical marginals.

Two laws with distribution functions ``F1`` and ``F2`` are similarly
distributed when their median reflections agree:
``Psi(x) = F1^{-1}(1 - F1(x)) = F2^{-1}(1 - F2(x))``.  The reflections in
each coordinate, together with the coordinate swap, then generate the
dihedral group of order 8.  A nonnegative ``gamma`` on the wedge
``{x1 < x2 < m}`` is pushed to every group image with alternating signs and
the Jacobian of the image map.  The result keeps both marginals and the law
of every symmetric statistic of the pair.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from .marginals import MarginalDescriptor
from .verify import DEFAULT_SEED, RejectionResult, rejection_sample

SIMILAR_TOL = 1e-8
FD_STEP = 1e-5
NEG_TOL = 1e-12

# group elements as words in the generators, applied right to left
WORDS: Tuple[Tuple[str, ...], ...] = (
    (),
    ("1",),
    ("2",),
    ("12",),
    ("1", "2"),
    ("1", "12"),
    ("2", "12"),
    ("1", "2", "12"),
)


class SimilarError(ValueError):
    """Marginals not similarly distributed, or an invalid perturbation."""


def similar_psi(phi: MarginalDescriptor, x):
    """Median reflection ``F^{-1}(1 - F(x))``, a decreasing involution."""
    x = np.asarray(x, dtype=float)
    if phi.symmetric_about is not None:
        return 2.0 * phi.symmetric_about - x
    p = 1.0 - np.asarray(phi.cdf(x), dtype=float)
    return phi.quantile(p)


def _psi_derivative(phi: MarginalDescriptor, x):
    """``d Psi / dx`` by Richardson-extrapolated central differences."""
    x = np.asarray(x, dtype=float)
    if phi.symmetric_about is not None:
        return -np.ones_like(x)

    def central(h):
        return (similar_psi(phi, x + h) - similar_psi(phi, x - h)) / (2 * h)

    return (4 * central(FD_STEP / 2) - central(FD_STEP)) / 3


@dataclass(frozen=True)
class GroupElement:
    """One composite of the reflections and the swap, with its Jacobian."""

    word: Tuple[str, ...]
    phi1: MarginalDescriptor
    phi2: MarginalDescriptor

    @property
    def parity(self) -> int:
        return len(self.word) % 2

    @property
    def name(self) -> str:
        return "id" if not self.word else "".join(f"s{g}" for g in self.word)

    def inverse(self) -> "GroupElement":
        return GroupElement(tuple(reversed(self.word)), self.phi1, self.phi2)

    def apply(self, x) -> Tuple[np.ndarray, np.ndarray]:
        """Image points and ``|det J|`` at ``x`` of shape ``(..., 2)``."""
        y = np.array(x, dtype=float, copy=True)
        jac = np.ones(y.shape[:-1])
        for g in reversed(self.word):
            if g == "1":
                jac = jac * np.abs(_psi_derivative(self.phi1, y[..., 0]))
                y[..., 0] = similar_psi(self.phi1, y[..., 0])
            elif g == "2":
                jac = jac * np.abs(_psi_derivative(self.phi2, y[..., 1]))
                y[..., 1] = similar_psi(self.phi2, y[..., 1])
            else:
                y = y[..., ::-1].copy()
        return y, jac

    def __call__(self, x) -> np.ndarray:
        return self.apply(x)[0]


def similarity_gap(phi1: MarginalDescriptor, phi2: MarginalDescriptor, probes: int = 99) -> float:
    """``max |Psi1 - Psi2|`` over quantiles 1%..99% of both laws."""
    p = np.linspace(0.01, 0.99, probes)
    x = np.concatenate([np.atleast_1d(phi1.quantile(p)), np.atleast_1d(phi2.quantile(p))])
    return float(np.max(np.abs(similar_psi(phi1, x) - similar_psi(phi2, x))))


def similar_group(phi1: MarginalDescriptor, phi2: MarginalDescriptor, tol: float = SIMILAR_TOL) -> List[GroupElement]:
    """
    The eight group elements generated by both reflections and the swap.

    Raises
    ------
    SimilarError
        If the two laws are not similarly distributed; the group generated
        by the reflections is then infinite.
    """
    gap = similarity_gap(phi1, phi2)
    if not gap < tol:
        raise SimilarError(f"marginals are not similarly distributed (reflection gap {gap:.3e})")
    return [GroupElement(w, phi1, phi2) for w in WORDS]


def group_law_residual(group: Sequence[GroupElement], x) -> float:
    """Max deviation from ``s1 s12 = s12 s2`` and ``s2 s12 = s12 s1`` at ``x``."""
    phi1, phi2 = group[0].phi1, group[0].phi2
    pairs = ((("1", "12"), ("12", "2")), (("2", "12"), ("12", "1")), (("1", "2"), ("2", "1")))
    worst = 0.0
    for left, right in pairs:
        a = GroupElement(left, phi1, phi2)(x)
        b = GroupElement(right, phi1, phi2)(x)
        worst = max(worst, float(np.max(np.abs(a - b))))
    return worst


# -- perturbation ------------------------------------------------------------------


@dataclass(frozen=True)
class WedgeGamma:
    """Constant ``value`` on ``{lo <= x1 < x2 <= hi}``, zero elsewhere."""

    value: float
    lo: float
    hi: float

    def __post_init__(self):
        if self.value < 0 or not self.lo < self.hi:
            raise SimilarError("wedge gamma needs value >= 0 and lo < hi")

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        inside = (self.lo <= x[..., 0]) & (x[..., 0] < x[..., 1]) & (x[..., 1] <= self.hi)
        return np.where(inside, self.value, 0.0)

    def edges(self) -> Tuple[float, ...]:
        return (self.lo, self.hi)


def in_wedge(x, median: float) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return (x[..., 0] < x[..., 1]) & (x[..., 1] < median)


def similar_perturbation(group: Sequence[GroupElement], gamma: Callable, x, median: float) -> np.ndarray:
    """``sum_s (-1)^{|s|} gamma(s x) |J_s(x)| 1_wedge(s x)``."""
    x = np.asarray(x, dtype=float)
    out = np.zeros(x.shape[:-1])
    for g in group:
        y, jac = g.apply(x)
        hit = in_wedge(y, median)
        if np.any(hit):
            sign = -1.0 if g.parity else 1.0
            out = out + np.where(hit, sign * np.asarray(gamma(y), dtype=float) * jac, 0.0)
    return out


def similar_density(f: Callable, phi1: MarginalDescriptor, phi2: MarginalDescriptor, gamma: Callable, x,
                    group: Optional[Sequence[GroupElement]] = None):
    """
    Perturbed density ``f(x) - sum_s (-1)^{|s|} gamma(s x) |J_s(x)| 1_wedge(s x)``.

    Raises
    ------
    SimilarError
        If the result is below ``-1e-12`` anywhere in ``x``.
    """
    group = group if group is not None else similar_group(phi1, phi2)
    x = np.asarray(x, dtype=float)
    out = np.asarray(f(x), dtype=float) - similar_perturbation(group, gamma, x, phi1.median)
    if np.any(out < -NEG_TOL):
        raise SimilarError(f"density negative ({float(out.min()):.3e}); gamma is too large")
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class SimilarConstruction:
    """
    Perturbation of the independent pair with marginals ``phi1``, ``phi2``.

    ``gamma`` must vanish outside a bounded part of the wedge for
    :meth:`sample` and :meth:`breakpoints`; :class:`WedgeGamma` does.
    """

    phi1: MarginalDescriptor
    phi2: MarginalDescriptor
    gamma: WedgeGamma

    def __post_init__(self):
        object.__setattr__(self, "_group", tuple(similar_group(self.phi1, self.phi2)))
        if self.gamma.hi >= self.phi1.median:
            raise SimilarError("gamma support must stay below the common median")

    @property
    def group(self) -> Tuple[GroupElement, ...]:
        return self._group

    @property
    def median(self) -> float:
        return self.phi1.median

    def base(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.asarray(self.phi1.pdf(x[..., 0]), dtype=float) * np.asarray(self.phi2.pdf(x[..., 1]), dtype=float)

    def __call__(self, x):
        return similar_density(self.base, self.phi1, self.phi2, self.gamma, x, self.group)

    def breakpoints(self, fixed: float) -> List[float]:
        """Discontinuities in the free coordinate when the other is ``fixed``."""
        pts = {self.median, fixed, *self.gamma.edges()}
        for phi in (self.phi1, self.phi2):
            for v in (fixed, *self.gamma.edges()):
                pts.add(float(similar_psi(phi, v)))
        return sorted(pts)

    def _wedge_probes(self, n: int = 200) -> np.ndarray:
        lo, hi = self.gamma.lo, self.gamma.hi
        g = np.linspace(lo, hi, n)
        a, b = np.meshgrid(g, g, indexing="ij")
        pts = np.stack([a, b], -1).reshape(-1, 2)
        return pts[pts[:, 0] <= pts[:, 1]]

    def ratio_bounds(self, n: int = 200) -> Tuple[float, float]:
        """
        Extremes of ``perturbation / f`` over the images of the wedge probes.

        Returns ``(largest removal, largest addition)``, both as fractions of
        the base density; nonnegativity needs the first below 1.
        """
        y = self._wedge_probes(n)
        remove = add = 0.0
        for g in self.group:
            x, _ = g.inverse().apply(y)
            _, jac = g.apply(x)
            ratio = float(np.max(self.gamma.value * jac / self.base(x)))
            if g.parity:
                add = max(add, ratio)
            else:
                remove = max(remove, ratio)
        return remove, add

    def sample(self, n: int, seed: int = DEFAULT_SEED, margin: float = 1.01) -> RejectionResult:
        """Exact draws by rejection against the independent pair."""
        _, add = self.ratio_bounds()
        env = (1.0 + add) * margin

        def proposal(rng, k):
            u = rng.random((k, 2))
            return np.column_stack([self.phi1.quantile(u[:, 0]), self.phi2.quantile(u[:, 1])])

        return rejection_sample(self, proposal, self.base, env, n, seed)


def max_wedge_value(phi1: MarginalDescriptor, phi2: MarginalDescriptor, lo: float, hi: float, n: int = 200) -> float:
    """Largest constant keeping the wedge perturbation nonnegative, on a probe grid."""
    probe = SimilarConstruction(phi1, phi2, WedgeGamma(1.0, lo, hi))
    remove, _ = probe.ratio_bounds(n)
    return math.inf if remove == 0 else 1.0 / remove


def wedge_normals(gamma_fraction: float = 0.5, lo: float = -1.5, hi: float = -0.1) -> SimilarConstruction:
    """
    N(0,1) and N(0,4) coordinates with a constant wedge perturbation.

    The constant is ``gamma_fraction`` of the largest value keeping the
    density nonnegative.
    """
    phi1 = MarginalDescriptor.normal(0.0, 1.0)
    phi2 = MarginalDescriptor.normal(0.0, 4.0)
    value = gamma_fraction * max_wedge_value(phi1, phi2, lo, hi)
    return SimilarConstruction(phi1, phi2, WedgeGamma(value, lo, hi))
