"""
Joint laws on the real line from a copula density and marginal laws.

With identical marginals ``F`` and a copula density ``theta`` whose
region weights balance, ``theta(F(x_1), ..., F(x_d)) prod f(x_k)`` has the
same marginals and the same law of every symmetric statistic as the
independent vector with marginal ``F``.
"""

from __future__ import annotations

import math
from typing import Callable, Dict, Sequence, Tuple, Union

import numpy as np

from .copula import (
    ConstGamma,
    CopulaSpec,
    SignedEpsilon,
    classify_many,
    default_gamma,
    sample_theta,
    theta_eval,
)
from .marginals import MarginalDescriptor
from .verify import DEFAULT_SEED


class MatchError(ValueError):
    """Invalid recombination request."""


CopulaLike = Union[CopulaSpec, Callable[[np.ndarray], np.ndarray]]


def _theta_fn(theta: CopulaLike) -> Callable[[np.ndarray], np.ndarray]:
    if isinstance(theta, CopulaSpec):
        return lambda u: theta_eval(theta, u)
    return theta


def identical_marginals(marginals: Sequence[MarginalDescriptor]) -> bool:
    """Whether every descriptor describes the same law (needed for the matching guarantee)."""
    return all(m.same_law(marginals[0]) for m in marginals[1:])


def recombine(theta: CopulaLike, marginals: Sequence[MarginalDescriptor], x):
    """
    Density ``theta(F_1(x_1), ..., F_d(x_d)) prod_k f_k(x_k)``.

    Points where some marginal density vanishes return 0.
    """
    x = np.asarray(x, dtype=float)
    d = len(marginals)
    if x.shape[-1] != d:
        raise MatchError(f"points have {x.shape[-1]} coordinates for {d} marginals")
    dens = np.ones(x.shape[:-1])
    u = np.empty_like(x)
    for k, phi in enumerate(marginals):
        dens = dens * np.asarray(phi.pdf(x[..., k]), dtype=float)
        u[..., k] = phi.cdf(x[..., k])
    live = dens > 0
    out = np.zeros(x.shape[:-1])
    if np.any(live):
        out[live] = np.asarray(_theta_fn(theta)(u[live]), dtype=float) * dens[live]
    return float(out) if out.ndim == 0 else out


def sample_matched(spec: CopulaSpec, marginals: Sequence[MarginalDescriptor], n: int, seed: int = DEFAULT_SEED,
                   streams: int = 1) -> np.ndarray:
    """Draws ``Y_k = F_k^{-1}(V_k)`` with ``V`` from the copula density."""
    if len(marginals) != spec.d:
        raise MatchError("one marginal per coordinate is required")
    v = sample_theta(spec, n, seed, streams)
    if n == 0:
        return v
    return np.column_stack([phi.quantile(v[:, k]) for k, phi in enumerate(marginals)])


def sample_independent(marginals: Sequence[MarginalDescriptor], n: int, seed: int = DEFAULT_SEED) -> np.ndarray:
    rng = np.random.default_rng(seed)
    u = rng.random((n, len(marginals)))
    return np.column_stack([phi.quantile(u[:, k]) for k, phi in enumerate(marginals)]) if n else u


# -- symmetric statistics -------------------------------------------------------------


# rows are sorted first so floating-point results do not depend on coordinate order
STATISTICS: Dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "sum": lambda y: np.sum(np.sort(y, axis=1), axis=1),
    "max": lambda y: np.max(y, axis=1),
    "min": lambda y: np.min(y, axis=1),
    "sumsq": lambda y: np.sum(np.sort(y * y, axis=1), axis=1),
    "product": lambda y: np.prod(np.sort(y, axis=1), axis=1),
}


def symmetric_stat(tag: str) -> Callable[[np.ndarray], np.ndarray]:
    try:
        return STATISTICS[tag]
    except KeyError:
        raise MatchError(f"unknown statistic {tag!r}; choose from {sorted(STATISTICS)}") from None


def push_symmetric_stat(sampler: Callable[[int, int], np.ndarray], tag: str, n: int, seed: int = DEFAULT_SEED) -> np.ndarray:
    """``n`` values of a built-in symmetric statistic of ``sampler(n, seed)``."""
    g = symmetric_stat(tag)
    return g(np.asarray(sampler(n, seed), dtype=float))


# -- presets ----------------------------------------------------------------------------


def balanced_normal_copula(d: int = 2, gamma: Union[float, str] = "auto") -> Tuple[CopulaSpec, Tuple[MarginalDescriptor, ...]]:
    """
    Signed balancing copula with standard normal marginals.

    Every ``(d-1)``-dimensional marginal is i.i.d. N(0,1), the sum is
    N(0,d), yet the vector is not Gaussian.
    """
    eps = SignedEpsilon(d)
    gam = default_gamma(eps) if gamma == "auto" else ConstGamma(float(gamma))
    spec = CopulaSpec(d, eps, gam, require=("mass", "symmetric", "partial", "marginal"))
    return spec, tuple(MarginalDescriptor.normal(0.0, 1.0) for _ in range(d))


def signed_region_values(spec: CopulaSpec, marginals: Sequence[MarginalDescriptor], y: np.ndarray) -> np.ndarray:
    """
    Region weight ``epsilon`` of the cell containing ``(F(y_1), ..., F(y_d))``.

    Its mean is ``-gamma`` under the balanced copula with constant ``gamma``
    and uniform base, and 0 under any vector with independent coordinates;
    a Gaussian vector whose coordinates are pairwise independent is fully
    independent, so a nonzero mean certifies non-Gaussianity.
    """
    y = np.asarray(y, dtype=float)
    u = np.column_stack([phi.cdf(y[:, k]) for k, phi in enumerate(marginals)])
    codes, ranks, edge = classify_many(u)
    vals = spec.table[codes, ranks].astype(float)
    vals[edge] = 0.0
    return vals


def joint_cumulant4(y: np.ndarray, idx: Sequence[int]) -> float:
    """Sample fourth joint cumulant of centered coordinates ``idx``."""
    z = np.asarray(y, dtype=float)
    z = z - z.mean(axis=0)
    a, b, c, e = (z[:, i] for i in idx)
    m = lambda *cols: float(np.mean(np.prod(np.column_stack(cols), axis=1)))
    return m(a, b, c, e) - m(a, b) * m(c, e) - m(a, c) * m(b, e) - m(a, e) * m(b, c)


def copula_of(density: Callable, marginals: Sequence[MarginalDescriptor], u) -> np.ndarray:
    """Copula density of a joint density with the given marginals, at ``u``."""
    u = np.asarray(u, dtype=float)
    x = np.stack([phi.quantile(u[..., k]) for k, phi in enumerate(marginals)], axis=-1)
    dens = np.ones(u.shape[:-1])
    for k, phi in enumerate(marginals):
        dens = dens * np.asarray(phi.pdf(x[..., k]), dtype=float)
    return np.asarray(density(x), dtype=float) / dens


def mc_mean_se(values: np.ndarray) -> Tuple[float, float]:
    values = np.asarray(values, dtype=float)
    return float(values.mean()), float(values.std(ddof=1) / math.sqrt(len(values)))
