"""
Explicit joint densities built from a finite polynomial expansion.

The density

.. math::
    \\varphi(x) = \\prod_i \\phi(x_i; r_i)
        + \\kappa \\prod_i \\bar\\phi(x_i; \\bar r_i)
          \\sum_{1 \\le \\langle n \\rangle \\le N} H_n \\prod_i \\bar P_{n_i}(x_i; \\bar r_i)

perturbs a product of Meixner laws by a finite expansion against a "tilt"
law with lighter tails.  The perturbation integrates to zero against any
function of fewer coordinates than it involves, so the coefficient table
alone decides which marginals and sums are preserved; ``kappa`` only has
to be small enough to keep the density nonnegative.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy import optimize

from .expansion import CoefficientTable, pairwise_table
from .meixner import (
    MeixnerSpec,
    MeixnerType,
    hermite_transform,
    log_density,
    mgf,
    poly_table,
    support,
    support_interval,
)

NEG_TOL = 1e-12


class DensityError(ValueError):
    """Invalid expansion density or unsupported request."""


def select_tilt(base: MeixnerSpec, shrink: float = 0.5) -> MeixnerSpec:
    """
    Lighter-tailed law of the same type for the perturbation factor.

    NormalI keeps the mean and scales the variance by ``shrink``.  GammaII
    scales ``a`` by ``sqrt(shrink)`` and keeps both the shape ``s2 / a^2``
    and the support edge ``m + s2 / a``.

    >>> select_tilt(MeixnerSpec.gamma(-1.0, 0.0, 1.0), 0.25).m
    -0.5
    """
    if not 0 < shrink < 1:
        raise DensityError(f"shrink must lie in (0, 1), got {shrink}")
    if base.type is MeixnerType.NORMAL:
        return MeixnerSpec.normal(base.m, shrink * base.s2)
    if base.type is MeixnerType.GAMMA:
        a_bar = math.sqrt(shrink) * base.a
        s2_bar = shrink * base.s2
        m_bar = base.m + base.s2 / base.a - s2_bar / a_bar
        return MeixnerSpec.gamma(a_bar, m_bar, s2_bar)
    raise DensityError(f"no tilt rule for {base.type.value}; use build_finite for lattice laws")


def _check_domination(base: MeixnerSpec, tilt: MeixnerSpec) -> None:
    if base.type is MeixnerType.NORMAL and tilt.type is MeixnerType.NORMAL:
        if not tilt.s2 < base.s2:
            raise DensityError("normal tilt needs a strictly smaller variance")
        return
    if base.type is MeixnerType.GAMMA and tilt.type is MeixnerType.GAMMA:
        same_shape = math.isclose(tilt.s2 / tilt.a**2, base.s2 / base.a**2, rel_tol=1e-12)
        same_edge = math.isclose(support_interval(tilt)[0 if base.a < 0 else 1],
                                 support_interval(base)[0 if base.a < 0 else 1], rel_tol=1e-12, abs_tol=1e-12)
        if tilt.a * base.a > 0 and abs(tilt.a) < abs(base.a) and same_shape and same_edge:
            return
        raise DensityError("gamma tilt must share shape and support edge with a smaller |a|")
    raise DensityError(f"unsupported base/tilt pair {base.type.value}/{tilt.type.value}")


@dataclass(frozen=True)
class ExpansionDensitySpec:
    """
    Base laws, tilt laws, coefficient table, degree cap and amplitude.

    Parameters
    ----------
    base, tilt : tuple of MeixnerSpec
        One per coordinate; each tilt must have lighter tails than its base.
    H : CoefficientTable
    N : int
        Maximal total degree; every stored index has ``1 <= <n> <= N``.
    kappa : float
        Perturbation amplitude, nonnegative.
    """

    base: Tuple[MeixnerSpec, ...]
    tilt: Tuple[MeixnerSpec, ...]
    H: CoefficientTable
    N: int
    kappa: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "base", tuple(self.base))
        object.__setattr__(self, "tilt", tuple(self.tilt))
        d = self.H.d
        if len(self.base) != d or len(self.tilt) != d:
            raise DensityError(f"need {d} base and tilt laws")
        if self.H.degree > self.N:
            raise DensityError(f"table degree {self.H.degree} exceeds N={self.N}")
        if not (self.kappa >= 0 and math.isfinite(self.kappa)):
            raise DensityError(f"kappa must be finite and nonnegative, got {self.kappa}")
        for b, t in zip(self.base, self.tilt):
            _check_domination(b, t)

    @property
    def d(self) -> int:
        return self.H.d

    def with_kappa(self, kappa: float) -> "ExpansionDensitySpec":
        return replace(self, kappa=float(kappa))

    def to_dict(self) -> dict:
        return {
            "base": [s.to_dict() for s in self.base],
            "tilt": [s.to_dict() for s in self.tilt],
            "H": self.H.to_dict(),
            "N": self.N,
            "kappa": self.kappa,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ExpansionDensitySpec":
        try:
            return cls(
                tuple(MeixnerSpec.from_dict(s) for s in data["base"]),
                tuple(MeixnerSpec.from_dict(s) for s in data["tilt"]),
                CoefficientTable.from_dict(data["H"]),
                int(data["N"]),
                float(data.get("kappa", 0.0)),
            )
        except KeyError as exc:
            raise DensityError(f"missing field {exc} in expansion density spec") from None


def _points(x, d: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != d:
        raise DensityError(f"points must have trailing dimension {d}, got shape {x.shape}")
    return x


def _expansion_sum(spec: ExpansionDensitySpec, x: np.ndarray) -> np.ndarray:
    tables = [poly_table(t, spec.N, x[..., i]) for i, t in enumerate(spec.tilt)]
    out = np.zeros(x.shape[:-1])
    for idx, h in spec.H:
        term = np.full(x.shape[:-1], h)
        for i, k in enumerate(idx):
            if k:
                term = term * tables[i][k]
        out = out + term
    return out


def _log_product(specs: Sequence[MeixnerSpec], x: np.ndarray) -> np.ndarray:
    out = np.zeros(x.shape[:-1])
    for i, s in enumerate(specs):
        out = out + log_density(s, x[..., i])
    return out


def base_density(spec: ExpansionDensitySpec, x) -> np.ndarray:
    """Product of the base densities."""
    x = _points(x, spec.d)
    return np.exp(_log_product(spec.base, x))


def perturbation(spec: ExpansionDensitySpec, x):
    """The perturbation factor multiplying ``kappa`` (amplitude excluded)."""
    x = _points(x, spec.d)
    out = np.exp(_log_product(spec.tilt, x)) * _expansion_sum(spec, x)
    return float(out) if out.ndim == 0 else out


def density_eval(spec: ExpansionDensitySpec, x, strict: bool = False):
    """
    Joint density at ``x`` (trailing axis of length ``d``).

    With ``strict`` a value below ``-1e-12`` raises, flagging a ``kappa``
    above the nonnegativity limit.
    """
    x = _points(x, spec.d)
    out = base_density(spec, x)
    if spec.kappa and len(spec.H):
        out = out + spec.kappa * np.asarray(perturbation(spec, x))
    if strict and np.any(out < -NEG_TOL):
        raise DensityError(f"negative density {out.min():.3e}: kappa above its maximum")
    return float(out) if np.ndim(out) == 0 else out


def _neg_ratio(spec: ExpansionDensitySpec, x: np.ndarray) -> np.ndarray:
    # -perturbation / base, evaluated in log space so tails do not underflow
    with np.errstate(invalid="ignore"):
        log_w = _log_product(spec.tilt, x) - _log_product(spec.base, x)
        out = -np.exp(log_w) * _expansion_sum(spec, x)
    return np.where(np.isfinite(out), out, -np.inf)


def _axes(spec: ExpansionDensitySpec, radius: float, n: int):
    axes = []
    for s in spec.base:
        sd = math.sqrt(s.s2)
        lo, hi = s.m - radius * sd, s.m + radius * sd
        edge_lo, edge_hi = support_interval(s)
        lo, hi = max(lo, edge_lo), min(hi, edge_hi)
        ax = np.linspace(lo, hi, n)
        # open support edges carry no mass; step inside
        if math.isfinite(edge_lo) and lo == edge_lo:
            ax[0] = lo + 1e-9 * (hi - lo)
        if math.isfinite(edge_hi) and hi == edge_hi:
            ax[-1] = hi - 1e-9 * (hi - lo)
        axes.append(ax)
    return axes


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("MM_THREADS", "1")))
    except ValueError:
        return 1


def _grid_ratio(spec: ExpansionDensitySpec, axes) -> np.ndarray:
    """Ratio on the tensor grid; rows of the first axis are split across threads."""

    def rows(chunk):
        return _neg_ratio(spec, np.stack(np.meshgrid(chunk, *axes[1:], indexing="ij"), axis=-1))

    chunks = np.array_split(axes[0], min(_threads(), len(axes[0])))
    if len(chunks) == 1:
        return rows(axes[0])
    with ThreadPoolExecutor(len(chunks)) as pool:
        return np.concatenate(list(pool.map(rows, chunks)), axis=0)


def kappa_max(
    spec: ExpansionDensitySpec,
    grid: Optional[int] = None,
    radius: float = 10.0,
    refine: bool = True,
) -> float:
    """
    Largest ``kappa`` keeping the density nonnegative.

    Maximizes ``-perturbation / base`` by a tensor grid over ``radius`` base
    standard deviations around the means, grows the box until the boundary
    ratio is negligible, then polishes the best grid points with a local
    simplex search.  Returns ``inf`` when the perturbation is nonnegative.
    """
    d = spec.d
    if not len(spec.H):
        return math.inf
    if grid is None:
        grid = 401 if d == 2 else max(15, int(round(401 ** (2 / d))))
    for _ in range(8):
        axes = _axes(spec, radius, grid)
        ratio = _grid_ratio(spec, axes)
        inner = ratio[(slice(1, -1),) * d] if grid > 2 else ratio
        best = float(np.max(ratio))
        # only truncation faces must show decay; faces on a support edge may not
        edge = np.full(ratio.shape, -np.inf)
        for i, s in enumerate(spec.base):
            lo_edge, hi_edge = support_interval(s)
            for pos, bound in ((0, lo_edge), (-1, hi_edge)):
                if not math.isfinite(bound) or abs(axes[i][pos] - bound) > 1e-6 * (axes[i][-1] - axes[i][0]):
                    face = [slice(None)] * d
                    face[i] = pos
                    edge[tuple(face)] = ratio[tuple(face)]
        if best > 0 and np.max(edge) <= 1e-6 * float(np.max(inner)):
            break
        if best <= 0 and np.max(edge) <= 0:
            break
        radius *= 1.5
    else:
        raise DensityError("ratio does not decay: tilt fails to dominate the base tails")
    if best <= 0:
        return math.inf
    if refine:
        flat = np.argsort(ratio, axis=None)[::-1][:5]
        lo = np.array([ax[0] for ax in axes])
        hi = np.array([ax[-1] for ax in axes])
        for f in flat:
            start = np.array([ax[i] for ax, i in zip(axes, np.unravel_index(f, ratio.shape))])
            res = optimize.minimize(
                lambda p: -float(_neg_ratio(spec, np.clip(p, lo, hi))),
                start,
                method="Nelder-Mead",
                options={"xatol": 1e-10, "fatol": 1e-14, "maxiter": 4000},
            )
            best = max(best, -float(res.fun))
    return 1.0 / best


def mgf_closed_form(spec: ExpansionDensitySpec, t) -> np.ndarray:
    """
    Joint MGF of an all-normal expansion density.

    Uses ``E[exp(tX) P_n(X)] = exp(m t + s2 t^2 / 2) s2^n t^n`` for each tilt
    coordinate, so the perturbation contributes a closed-form polynomial
    times a Gaussian factor.
    """
    if any(s.type is not MeixnerType.NORMAL for s in spec.base + spec.tilt):
        raise DensityError("closed-form MGF implemented for normal bases and tilts")
    t = _points(t, spec.d)
    out = np.ones(t.shape[:-1])
    for i, s in enumerate(spec.base):
        out = out * mgf(s, t[..., i])
    if spec.kappa and len(spec.H):
        pert = np.zeros(t.shape[:-1])
        for idx, h in spec.H:
            term = np.full(t.shape[:-1], h)
            for i, (k, s) in enumerate(zip(idx, spec.tilt)):
                ti = t[..., i]
                term = term * np.exp(s.m * ti) * hermite_transform(k, s.s2, ti)
            pert = pert + term
        out = out + spec.kappa * pert
    return float(out) if out.ndim == 0 else out


# -- presets ------------------------------------------------------------------

ANTISYMMETRIC_TABLE = CoefficientTable.from_items(2, {(1, 3): -1.0, (3, 1): 1.0})
BALANCED_TABLE = CoefficientTable.from_items(2, {(1, 3): 1.0, (3, 1): 1.0, (2, 2): -2.0})
PRESETS = ("stoyanov", "example3", "example4", "example5")


def _normal_spec(H: CoefficientTable, shrink: float, kappa) -> ExpansionDensitySpec:
    base = tuple(MeixnerSpec.normal(0.0, 1.0) for _ in range(H.d))
    tilt = tuple(select_tilt(b, shrink) for b in base)
    spec = ExpansionDensitySpec(base, tilt, H, 4, 0.0)
    if kappa is None or kappa == "auto":
        return spec.with_kappa(kappa_max(spec))
    return spec.with_kappa(float(kappa))


def preset(name: str, shrink: float = 0.5, kappa=None, d: int = 3) -> ExpansionDensitySpec:
    """
    Worked expansion densities on standard normal bases.

    ``stoyanov`` fixes ``shrink = 1/2``; ``example5`` places the balanced
    bivariate table on every coordinate pair of a ``d``-vector.  ``kappa``
    of ``None`` or ``"auto"`` selects :func:`kappa_max`.
    """
    if name == "stoyanov":
        return _normal_spec(ANTISYMMETRIC_TABLE, 0.5, kappa)
    if name == "example3":
        return _normal_spec(ANTISYMMETRIC_TABLE, shrink, kappa)
    if name == "example4":
        return _normal_spec(BALANCED_TABLE, shrink, kappa)
    if name == "example5":
        if d < 2:
            raise DensityError("example5 needs d >= 2")
        return _normal_spec(pairwise_table(d, BALANCED_TABLE), shrink, kappa)
    raise DensityError(f"unknown preset {name!r}; choose from {PRESETS}")


def printed_kappa(spec: ExpansionDensitySpec) -> float:
    """
    Amplitude in the "relative" form ``base * (1 + kappa' w(x) ...)``.

    Pulling the product of base densities out of the tilt densities leaves
    the constant ``prod s_i / s_bar_i``, which the relative form absorbs.
    """
    fac = 1.0
    for b, t in zip(spec.base, spec.tilt):
        fac *= math.sqrt(b.s2 / t.s2)
    return spec.kappa * fac


def stoyanov_density(x, kappa: float) -> np.ndarray:
    """The classical bivariate density with normal marginals and normal sum."""
    x = np.asarray(x, dtype=float)
    x1, x2 = x[..., 0], x[..., 1]
    g = np.exp(-0.5 * (x1 * x1 + x2 * x2))
    return g / (2 * math.pi) * (1 + kappa * x1 * x2 * (x1 * x1 - x2 * x2) * g)


def relative_form_density(x, kappa: float, s2_bar: float, balanced: bool) -> np.ndarray:
    """
    Expansion density on N(0,1)^2 written relative to the product density.

    ``balanced=False`` uses the antisymmetric table, ``True`` the balanced
    one; ``kappa`` is in the relative convention of :func:`printed_kappa`.
    """
    x = np.asarray(x, dtype=float)
    x1, x2 = x[..., 0], x[..., 1]
    r2 = x1 * x1 + x2 * x2
    if balanced:
        poly = x1 * x2 * (r2 - 6 * s2_bar) - 2 * (x1 * x1 - s2_bar) * (x2 * x2 - s2_bar)
    else:
        poly = x1 * x2 * (x1 * x1 - x2 * x2)
    return np.exp(-0.5 * r2) / (2 * math.pi) * (1 + kappa * np.exp(-0.5 * (1 / s2_bar - 1) * r2) * poly)


# -- finite lattices ------------------------------------------------------------


@dataclass(frozen=True)
class FiniteLaw:
    """Joint pmf on a product of finite lattices."""

    axes: Tuple[np.ndarray, ...]
    pmf: np.ndarray
    kappa: float
    kappa_max: float


def build_finite(base: Sequence[MeixnerSpec], H: CoefficientTable, kappa=None) -> FiniteLaw:
    """
    Expansion pmf on a product of binomial lattices; no tilt is needed.

    ``pmf = prod pmf_i * (1 + kappa * sum_n H_n prod P_{n_i})`` with the exact
    nonnegativity limit taken as a minimum over the finite lattice.
    ``kappa=None`` uses that limit.
    """
    base = tuple(base)
    if len(base) != H.d:
        raise DensityError(f"need {H.d} base laws")
    if any(s.type is not MeixnerType.BINOM for s in base):
        raise DensityError("finite construction needs BinomIV laws (finite support)")
    axes, pmfs, tabs = [], [], []
    top = max(H.degree, 1)
    for s in base:
        pts, p = support(s)
        axes.append(pts)
        pmfs.append(p)
        tabs.append(poly_table(s, top, pts))
    prod = pmfs[0]
    for p in pmfs[1:]:
        prod = np.multiply.outer(prod, p)
    expo = np.zeros(prod.shape)
    for idx, h in H:
        term = np.asarray(h)
        for k, tab in zip(idx, tabs):
            term = np.multiply.outer(term, tab[k])
        expo = expo + term
    worst = float(np.max(-expo)) if expo.size else 0.0
    kmax = math.inf if worst <= 0 else 1.0 / worst
    if kappa is None:
        kappa = kmax if math.isfinite(kmax) else 0.0
    if kappa > kmax * (1 + 1e-12):
        raise DensityError(f"kappa {kappa} exceeds lattice maximum {kmax}")
    return FiniteLaw(tuple(axes), prod * (1 + kappa * expo), float(kappa), kmax)
