"""
Numerical certification: quadrature, convolution, sampling and tests.

Every check here returns plain numbers; :class:`VerificationReport` collects
them as named claims with their thresholds and reproducibility parameters.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy import integrate, stats

from .meixner import MeixnerSpec, MeixnerType, poly_eval, poly_norm

DEFAULT_SEED = 20240229

Density2D = Callable[[np.ndarray], np.ndarray]


class VerifyError(RuntimeError):
    """A numerical check could not be carried out reliably."""


# -- quadrature -------------------------------------------------------------------


def quad_1d(f: Callable[[float], float], interval: Tuple[float, float], tol: float = 1e-10, points=None) -> float:
    """Adaptive Gauss-Kronrod integral of ``f``; raises if the error estimate exceeds ``tol``."""
    if tol < 1e-12:
        raise VerifyError("tolerance below 1e-12 is not attainable in double precision")
    lo, hi = interval
    kw = {}
    if points is not None and math.isfinite(lo) and math.isfinite(hi):
        kw["points"] = [p for p in points if lo < p < hi]
    val, err = integrate.quad(f, lo, hi, epsabs=tol, epsrel=0.0, limit=1000, **kw)
    if err > tol:
        raise VerifyError(f"quadrature error estimate {err:.2e} exceeds {tol:.2e}")
    return float(val)


def quad_2d(f: Density2D, box: Sequence[Tuple[float, float]], tol: float = 1e-10) -> float:
    """
    Adaptive cubature over a rectangle.

    ``f`` takes points of shape ``(n, 2)`` and returns ``n`` values.
    """
    if tol < 1e-12:
        raise VerifyError("tolerance below 1e-12 is not attainable in double precision")
    a = [box[0][0], box[1][0]]
    b = [box[0][1], box[1][1]]
    res = integrate.cubature(f, a, b, rtol=0.0, atol=tol, max_subdivisions=100000)
    if res.status != "converged":
        raise VerifyError(f"cubature did not converge (error {float(res.error):.2e})")
    return float(res.estimate)


def gauss_legendre(lo: float, hi: float, panels: int = 40, order: int = 20, breakpoints=()) -> Tuple[np.ndarray, np.ndarray]:
    """
    Nodes and weights of a composite Gauss-Legendre rule on ``[lo, hi]``.

    Panel edges are uniform and additionally include any ``breakpoints``
    inside the interval, so piecewise smooth integrands stay exact per panel.
    """
    edges = np.linspace(lo, hi, panels + 1)
    extra = [p for p in breakpoints if lo < p < hi]
    if extra:
        edges = np.unique(np.concatenate([edges, extra]))
    x0, w0 = np.polynomial.legendre.leggauss(order)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    nodes = (mid[:, None] + half[:, None] * x0[None, :]).ravel()
    weights = (half[:, None] * w0[None, :]).ravel()
    return nodes, weights


def marginal_on_grid(
    f: Density2D,
    axis: int,
    grid: np.ndarray,
    other: Tuple[float, float] = (-12.0, 12.0),
    panels: int = 48,
    order: int = 20,
    breakpoints: Optional[Callable[[float], Sequence[float]]] = None,
) -> np.ndarray:
    """
    One-dimensional marginal of a bivariate density on ``grid``.

    Integrates the other coordinate by composite Gauss-Legendre over
    ``other``; ``breakpoints(x)`` may name kinks of the integrand at a given
    grid value.
    """
    out = np.empty(len(grid))
    shared = None if breakpoints else gauss_legendre(*other, panels, order)
    for i, x in enumerate(grid):
        nodes, weights = shared or gauss_legendre(*other, panels, order, breakpoints(x))
        pts = np.empty((len(nodes), 2))
        pts[:, axis] = x
        pts[:, 1 - axis] = nodes
        out[i] = weights @ f(pts)
    return out


def sum_density_conv(
    f: Density2D,
    grid: np.ndarray,
    x_range: Tuple[float, float] = (-12.0, 12.0),
    panels: int = 48,
    order: int = 20,
    check_mass: bool = True,
    breakpoints: Optional[Callable[[float], Sequence[float]]] = None,
) -> np.ndarray:
    """
    Density of ``X1 + X2`` on ``grid``: ``s -> int f(x, s - x) dx``.

    With ``check_mass`` the output is trapezoid-integrated over the grid and
    must give 1 within 1e-4; otherwise the grid does not capture the law.
    """
    grid = np.asarray(grid, dtype=float)
    out = np.empty(len(grid))
    shared = None if breakpoints else gauss_legendre(*x_range, panels, order)
    for i, s in enumerate(grid):
        nodes, weights = shared or gauss_legendre(*x_range, panels, order, breakpoints(s))
        out[i] = weights @ f(np.column_stack([nodes, s - nodes]))
    if check_mass:
        mass = float(np.trapezoid(out, grid)) if hasattr(np, "trapezoid") else float(np.trapz(out, grid))
        if abs(mass - 1.0) > 1e-4:
            raise VerifyError(f"convolution grid too coarse or narrow: mass {mass:.6f}")
    return out


def mgf_compare(
    f: Density2D,
    closed_form: Callable[[np.ndarray], np.ndarray],
    t_grid: np.ndarray,
    box: Tuple[float, float] = (-14.0, 14.0),
    panels: int = 56,
    order: int = 20,
) -> float:
    """
    Max relative error between the quadrature MGF of ``f`` and a closed form.

    ``t_grid`` has shape ``(k, 2)``.  The density is evaluated once on a
    tensor Gauss-Legendre grid and reused for every ``t``.
    """
    nodes, weights = gauss_legendre(*box, panels, order)
    x1, x2 = np.meshgrid(nodes, nodes, indexing="ij")
    w = np.outer(weights, weights) * f(np.stack([x1, x2], axis=-1))
    t_grid = np.atleast_2d(np.asarray(t_grid, dtype=float))
    worst = 0.0
    for t in t_grid:
        quad = float(np.sum(w * np.exp(t[0] * x1 + t[1] * x2)))
        ref = float(closed_form(t))
        worst = max(worst, abs(quad - ref) / abs(ref))
    return worst


# -- sampling and tests -------------------------------------------------------------


@dataclass(frozen=True)
class KSResult:
    statistic: float
    crit05: float
    crit01: float
    pvalue: float

    @property
    def passes01(self) -> bool:
        return self.statistic < self.crit01


def ks_critical(alpha: float, n: int, m: int) -> float:
    """Asymptotic two-sample critical value ``sqrt(-ln(alpha/2)/2) sqrt((n+m)/(nm))``."""
    return math.sqrt(-math.log(alpha / 2) / 2) * math.sqrt((n + m) / (n * m))


def ks_two_sample(a, b) -> KSResult:
    """Two-sample Kolmogorov-Smirnov distance with asymptotic critical values."""
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if not (len(a) and len(b)):
        raise VerifyError("both samples must be nonempty")
    res = stats.ks_2samp(a, b, method="asymp")
    return KSResult(float(res.statistic), ks_critical(0.05, len(a), len(b)), ks_critical(0.01, len(a), len(b)), float(res.pvalue))


def chi2_uniform(u, bins: int = 50) -> float:
    """p-value of Pearson's chi-square test of uniformity on ``[0, 1]``."""
    counts, _ = np.histogram(np.asarray(u, dtype=float), bins=bins, range=(0.0, 1.0))
    return float(stats.chisquare(counts).pvalue)


@dataclass(frozen=True)
class RejectionResult:
    samples: np.ndarray
    acceptance: float
    proposals: int


def rejection_sample(
    density: Callable[[np.ndarray], np.ndarray],
    proposal: Callable[[np.random.Generator, int], np.ndarray],
    proposal_density: Callable[[np.ndarray], np.ndarray],
    envelope: float,
    n: int,
    seed: int = DEFAULT_SEED,
    probes: int = 10_000,
    batch: int = 65_536,
) -> RejectionResult:
    """
    Exact samples from ``density`` by rejection against ``proposal``.

    The envelope ``density <= envelope * proposal_density`` is spot-checked on
    ``probes`` proposal draws first; a violation or an acceptance rate below
    1% aborts.
    """
    rng = np.random.default_rng(seed)
    probe = proposal(rng, probes)
    excess = density(probe) - envelope * proposal_density(probe)
    if np.any(excess > 1e-12):
        raise VerifyError(f"envelope violated by {float(excess.max()):.3e}; increase it")
    chunks: List[np.ndarray] = []
    got = tried = 0
    while got < n:
        x = proposal(rng, batch)
        keep = rng.random(batch) * envelope * proposal_density(x) < density(x)
        chunks.append(x[keep])
        got += int(keep.sum())
        tried += batch
        if tried >= 10 * batch and got / tried < 0.01:
            raise VerifyError(f"acceptance rate {got / tried:.4f} below 1%; the envelope is too loose")
    dim = probe.shape[1:]
    out = np.concatenate(chunks)[:n] if chunks else np.empty((0,) + dim)
    return RejectionResult(out, got / tried if tried else 1.0, tried)


def jackknife_se(values, statistic: Callable[[np.ndarray], float] = np.mean, groups: int = 100) -> float:
    """Delete-a-group jackknife standard error of ``statistic``."""
    values = np.asarray(values)
    parts = np.array_split(values, groups)
    loo = np.array([statistic(np.concatenate(parts[:i] + parts[i + 1:])) for i in range(len(parts))])
    g = len(parts)
    return float(math.sqrt((g - 1) / g * np.sum((loo - loo.mean()) ** 2)))


# -- identities -------------------------------------------------------------------------


def conditional_identity(
    r1: Tuple[float, float],
    r2: Tuple[float, float],
    n1: int,
    n2: int,
    f: Callable[[np.ndarray], np.ndarray],
    panels: int = 40,
    order: int = 20,
) -> Tuple[float, float]:
    """
    Both sides of the product-to-sum projection identity for normal laws.

    Returns ``E[P_{n1}(X1) P_{n2}(X2) f(X1 + X2)]`` by tensor quadrature and
    ``C(n1+n2, n1) h_{n1} h_{n2} / h_{n1+n2} E[P_{n1+n2}(S) f(S)]`` by 1-D
    quadrature, where ``S = X1 + X2``.
    """
    s1, s2 = MeixnerSpec.normal(*r1), MeixnerSpec.normal(*r2)
    s12 = MeixnerSpec.normal(r1[0] + r2[0], r1[1] + r2[1])
    sd1, sd2 = math.sqrt(s1.s2), math.sqrt(s2.s2)
    n_a, w_a = gauss_legendre(s1.m - 12 * sd1, s1.m + 12 * sd1, panels, order)
    n_b, w_b = gauss_legendre(s2.m - 12 * sd2, s2.m + 12 * sd2, panels, order)
    x1, x2 = np.meshgrid(n_a, n_b, indexing="ij")
    dens = stats.norm.pdf(x1, s1.m, sd1) * stats.norm.pdf(x2, s2.m, sd2)
    lhs = float(np.sum(np.outer(w_a, w_b) * dens * poly_eval(s1, n1, x1) * poly_eval(s2, n2, x2) * f(x1 + x2)))
    sd = math.sqrt(s12.s2)
    n_s, w_s = gauss_legendre(s12.m - 12 * sd, s12.m + 12 * sd, panels, order)
    inner = float(np.sum(w_s * stats.norm.pdf(n_s, s12.m, sd) * poly_eval(s12, n1 + n2, n_s) * f(n_s)))
    coef = math.comb(n1 + n2, n1) * poly_norm(s1, n1) * poly_norm(s2, n2) / poly_norm(s12, n1 + n2)
    return lhs, coef * inner


# -- reports ----------------------------------------------------------------------------


CLAIM_KINDS = ("marginal", "sum", "subsum", "symmetric-stat", "normalization", "mgf", "identity", "constant")


@dataclass(frozen=True)
class Claim:
    name: str
    kind: str
    metric: float
    threshold: float
    passed: bool
    method: str
    resolution: Optional[int] = None
    seed: Optional[int] = None


@dataclass
class VerificationReport:
    """Append-only list of verified claims."""

    claims: List[Claim] = field(default_factory=list)

    def add(
        self,
        name: str,
        kind: str,
        metric: float,
        threshold: float,
        method: str,
        resolution: Optional[int] = None,
        seed: Optional[int] = None,
        higher_is_better: bool = False,
    ) -> Claim:
        if kind not in CLAIM_KINDS:
            raise VerifyError(f"unknown claim kind {kind!r}")
        metric = float(metric)
        passed = metric > threshold if higher_is_better else metric <= threshold
        claim = Claim(name, kind, metric, float(threshold), bool(passed), method, resolution, seed)
        self.claims.append(claim)
        return claim

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.claims)

    def to_dict(self) -> dict:
        return {"passed": self.passed, "claims": [asdict(c) for c in self.claims]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def to_csv(self) -> str:
        buf = io.StringIO()
        cols = list(Claim.__dataclass_fields__)
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(cols)
        for c in self.claims:
            row = asdict(c)
            writer.writerow([format(row[k], ".17g") if isinstance(row[k], float) else row[k] for k in cols])
        return buf.getvalue()


def is_normal_base(specs: Sequence[MeixnerSpec]) -> bool:
    return all(s.type is MeixnerType.NORMAL for s in specs)
