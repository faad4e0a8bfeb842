"""
End-to-end verification reports for each kind of construction.

Each ``verify_*`` function runs the numerical checks that certify one
construction and returns a :class:`~margsum.verify.VerificationReport`.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np
from scipy import special

from .copula import CopulaSpec, check_conditions, sample_theta
from .density import (
    ExpansionDensitySpec,
    base_density,
    density_eval,
    kappa_max,
    mgf_closed_form,
)
from .expansion import check_marginal_condition, check_sum_condition
from .marginals import MarginalDescriptor
from .matcher import (
    STATISTICS,
    identical_marginals,
    recombine,
    sample_independent,
    sample_matched,
)
from .meixner import (
    MeixnerSpec,
    MeixnerType,
    convolve_params,
    density,
    poly_norm,
    poly_table,
    runge_residual,
    runge_residual_multi,
    support,
)
from .similar import SimilarConstruction
from .verify import (
    DEFAULT_SEED,
    VerificationReport,
    chi2_uniform,
    conditional_identity,
    gauss_legendre,
    is_normal_base,
    ks_two_sample,
    marginal_on_grid,
    mgf_compare,
    rejection_sample,
    sum_density_conv,
)

QUAD_TOL = 1e-6
NORM_TOL = 1e-7
MC_N = 100_000


# -- polynomial identities -------------------------------------------------------


IDENTITY_CLASSES = (
    MeixnerSpec.normal(0.3, 1.5),
    MeixnerSpec.gamma(-0.7, 0.2, 1.3),
    MeixnerSpec.poisson(0.8, 0.5, 1.2),
)


def _weighted_nodes(spec: MeixnerSpec, n: int):
    """Nodes and weights integrating polynomials of degree ``< 2n`` exactly against the law."""
    if spec.type is MeixnerType.NORMAL:
        x, w = special.roots_hermitenorm(n)
        return spec.m + math.sqrt(spec.s2) * x, w / math.sqrt(2 * math.pi)
    if spec.type is MeixnerType.GAMMA:
        shape = spec.s2 / spec.a ** 2
        y, w = special.roots_genlaguerre(n, shape - 1)
        return spec.m + spec.s2 / spec.a - spec.a * y, w / math.gamma(shape)
    return support(spec, tail=1e-40)


def orthogonality_error(spec: MeixnerSpec, n_max: int = 8) -> float:
    """Max ``|E[P_j P_k] - delta_jk h_k| / sqrt(h_j h_k)`` for ``j, k <= n_max``."""
    x, w = _weighted_nodes(spec, n_max + 2)
    tab = poly_table(spec, n_max, x)
    gram = (tab * w) @ tab.T
    h = np.array([poly_norm(spec, k) for k in range(n_max + 1)])
    return float(np.max(np.abs(gram - np.diag(h)) / np.sqrt(np.outer(h, h))))


def _relative(res: float, scale: float) -> float:
    return abs(res) / max(1.0, abs(scale))


def poly_check(n_max: int = 8, seed: int = DEFAULT_SEED) -> VerificationReport:
    """
    Additivity and orthogonality identities of the continuous and Poisson classes.

    Runge residuals are scaled by ``max(1, |P_n(x1 + x2)|)`` at random
    points within two standard deviations of each mean.
    """
    rng = np.random.default_rng(seed)
    rep = VerificationReport()
    for spec in IDENTITY_CLASSES:
        tag = spec.type.value
        r1, r2 = (spec.m, spec.s2), (0.5 * spec.m, 0.7 * spec.s2)
        s1, s2 = spec.with_params(*r1), spec.with_params(*r2)
        x1 = s1.m + math.sqrt(s1.s2) * rng.uniform(-2, 2, 50)
        x2 = s2.m + math.sqrt(s2.s2) * rng.uniform(-2, 2, 50)
        if spec.is_discrete:
            x1 = support(s1)[0][rng.integers(0, 6, 50)]
            x2 = support(s2)[0][rng.integers(0, 6, 50)]
        total = convolve_params(s1, s2)
        worst = 0.0
        for n in range(n_max + 1):
            res = np.atleast_1d(runge_residual(spec, r1, r2, n, x1, x2))
            scale = np.atleast_1d(poly_table(total, n, x1 + x2)[n])
            worst = max(worst, float(np.max(np.abs(res) / np.maximum(1.0, np.abs(scale)))))
        rep.add(f"runge {tag}", "identity", worst, 1e-9, f"n<={n_max}, 50 points", resolution=50, seed=seed)
        rep.add(f"orthogonality {tag}", "identity", orthogonality_error(spec, n_max), 1e-7, "Gauss rule / lattice sum")
        rs = [(spec.m, spec.s2), (0.2, 0.4 * spec.s2), (-0.1, 0.9 * spec.s2)]
        parts = [spec.with_params(*r) for r in rs]
        worst = 0.0
        for _ in range(20):
            if spec.is_discrete:
                xs = [float(support(p)[0][rng.integers(0, 5)]) for p in parts]
            else:
                xs = [p.m + math.sqrt(p.s2) * rng.uniform(-2, 2) for p in parts]
            tot = parts[0]
            for p in parts[1:]:
                tot = convolve_params(tot, p)
            for m in range(n_max + 1):
                res = runge_residual_multi(spec, rs, m, xs)
                worst = max(worst, _relative(res, poly_table(tot, m, sum(xs))[m]))
        rep.add(f"runge d=3 {tag}", "identity", worst, 1e-9, "multivariate, 20 points", resolution=20, seed=seed)
    worst = 0.0
    for n1, n2 in ((1, 1), (2, 1), (2, 3), (3, 3)):
        lhs, rhs = conditional_identity((0.2, 1.0), (-0.4, 2.0), n1, n2, np.cos)
        worst = max(worst, abs(lhs - rhs) / abs(rhs))
    rep.add("projection onto the sum NormalI", "identity", worst, 1e-4, "2-D Gauss-Legendre, f=cos")
    return rep


# -- expansion densities -------------------------------------------------------------


def _coord_box(spec: MeixnerSpec, width: float = 12.0):
    sd = math.sqrt(spec.s2)
    lo, hi = spec.m - width * sd, spec.m + width * sd
    if spec.type is MeixnerType.GAMMA:
        edge = spec.m + spec.s2 / spec.a
        lo, hi = (max(lo, edge), hi + 4 * width * sd) if spec.a < 0 else (lo - 4 * width * sd, min(hi, edge))
    return lo, hi


def _sum_law(base: Sequence[MeixnerSpec]) -> MeixnerSpec:
    total = base[0]
    for s in base[1:]:
        total = convolve_params(total, s)
    return total


def _grid(spec: MeixnerSpec, n: int, width: float = 8.0) -> np.ndarray:
    lo, hi = _coord_box(spec, width)
    if spec.type is MeixnerType.GAMMA:
        sd = math.sqrt(spec.s2)
        lo, hi = max(lo, spec.m - width * sd), min(hi, spec.m + width * sd)
        span = hi - lo
        lo, hi = lo + 1e-3 * span, hi - 1e-3 * span
    return np.linspace(lo, hi, n)


def sample_base(base: Sequence[MeixnerSpec], rng: np.random.Generator, n: int) -> np.ndarray:
    """Independent draws from continuous base laws."""
    cols = []
    for s in base:
        if s.type is MeixnerType.NORMAL:
            cols.append(s.m + math.sqrt(s.s2) * rng.standard_normal(n))
        elif s.type is MeixnerType.GAMMA:
            cols.append(s.m + s.s2 / s.a - s.a * rng.gamma(s.s2 / s.a ** 2, size=n))
        else:
            raise ValueError("sampling needs continuous base laws")
    return np.column_stack(cols) if n else np.empty((0, len(base)))


def sample_expansion(spec: ExpansionDensitySpec, n: int, seed: int = DEFAULT_SEED):
    """Exact draws by rejection against the product of base laws."""
    if spec.kappa == 0 or not len(spec.H):
        env = 1.0
    else:
        up = kappa_max(ExpansionDensitySpec(spec.base, spec.tilt, spec.H.scale(-1.0), spec.N, 0.0))
        env = 1.0 + 1.01 * spec.kappa / up

    def proposal(rng, k):
        return sample_base(spec.base, rng, k)

    return rejection_sample(lambda x: density_eval(spec, x), proposal, lambda x: base_density(spec, x), env, n, seed)


def verify_expansion(spec: ExpansionDensitySpec, grid: int = 401, seed: int = DEFAULT_SEED,
                     n: int = MC_N) -> VerificationReport:
    """
    Certify nonnegativity, normalization, marginals, sum law and MGF.

    Bivariate specs are checked by quadrature; higher dimensions by the
    algebraic table conditions plus Monte Carlo KS tests.
    """
    rep = VerificationReport()
    kmax = kappa_max(spec)
    rep.add("kappa within nonnegativity limit", "constant", spec.kappa / kmax if math.isfinite(kmax) else 0.0, 1.0,
            "grid search + Nelder-Mead")
    bad = check_marginal_condition(spec.H)
    rep.add("marginal condition on table", "marginal", float(len(bad)), 0.0, "index scan")
    res = check_sum_condition(spec.H, spec.tilt)
    worst = max((abs(v) for v in res.values()), default=0.0)
    rep.add("sum condition on table", "sum", worst, 1e-12, "weighted degree sums")
    total = _sum_law(spec.base)
    f = lambda x: density_eval(spec, x)
    if spec.d == 2:
        boxes = [_coord_box(b) for b in spec.base]
        nodes0, w0 = gauss_legendre(*boxes[0], 48, 20)
        nodes1, w1 = gauss_legendre(*boxes[1], 48, 20)
        a, b = np.meshgrid(nodes0, nodes1, indexing="ij")
        mass = float(np.sum(np.outer(w0, w1) * f(np.stack([a, b], -1))))
        rep.add("normalization", "normalization", abs(mass - 1), NORM_TOL, "tensor Gauss-Legendre", resolution=960)
        vals = f(np.stack([a, b], -1))
        rep.add("nonnegative on quadrature grid", "normalization", max(0.0, -float(vals.min())), 1e-12, "grid scan")
        for axis in range(2):
            g = _grid(spec.base[axis], grid)
            m = marginal_on_grid(f, axis, g, other=boxes[1 - axis])
            err = float(np.max(np.abs(m - density(spec.base[axis], g))))
            rep.add(f"marginal {axis + 1}", "marginal", err, QUAD_TOL, "Gauss-Legendre", resolution=grid)
        g = _grid(total, grid)
        edge_pts = None
        if any(b.type is MeixnerType.GAMMA for b in spec.base):
            e1 = boxes[1][0] if spec.base[1].a < 0 else boxes[1][1]
            edge_pts = lambda s: [s - e1]
        conv = sum_density_conv(f, g, x_range=boxes[0], check_mass=False, breakpoints=edge_pts)
        err = float(np.max(np.abs(conv - density(total, g))))
        rep.add("sum law", "sum", err, QUAD_TOL, "convolution quadrature", resolution=grid)
        if is_normal_base(spec.base):
            t = np.linspace(-1.5, 1.5, 9)
            tt = np.stack(np.meshgrid(t, t, indexing="ij"), -1).reshape(-1, 2)
            err = mgf_compare(f, lambda s: mgf_closed_form(spec, s), tt)
            rep.add("mgf closed form", "mgf", err, 1e-5, "tensor Gauss-Legendre", resolution=81)
        return rep
    draws = sample_expansion(spec, n, seed).samples
    rng = np.random.default_rng(seed + 1)
    ref = sample_base(spec.base, rng, n)
    w = density_eval(spec, ref) / base_density(spec, ref)
    se = float(w.std(ddof=1) / math.sqrt(n))
    rep.add("normalization", "normalization", abs(float(w.mean()) - 1) / max(se, 1e-300), 3.0,
            "importance MC in standard errors", resolution=n, seed=seed)
    for axis in range(spec.d):
        ks = ks_two_sample(draws[:, axis], ref[:, axis])
        rep.add(f"marginal {axis + 1}", "marginal", ks.statistic, ks.crit01, "two-sample KS", resolution=n, seed=seed)
    ks = ks_two_sample(draws.sum(1), ref.sum(1))
    rep.add("sum law", "sum", ks.statistic, ks.crit01, "two-sample KS", resolution=n, seed=seed)
    return rep


# -- copulas --------------------------------------------------------------------------


def verify_copula(spec: CopulaSpec, n: int = MC_N, seed: int = DEFAULT_SEED) -> VerificationReport:
    """Exact balance conditions plus Monte Carlo uniformity and symmetric-statistic checks."""
    rep = VerificationReport()
    cond = check_conditions(spec.epsilon, spec.d)
    rep.add("mass balance", "normalization", float(cond.mass.worst), 0.0, "exact enumeration")
    rep.add("symmetric-statistic balance", "symmetric-stat", float(cond.symmetric.worst), 0.0, "exact enumeration")
    rep.add("one-dimensional balance", "marginal", float(cond.marginal.worst), 0.0, "exact enumeration")
    for k, c in enumerate(cond.partial):
        rep.add(f"balance without coordinate {k + 1}", "subsum", float(c.worst), 0.0, "exact enumeration")
    if n == 0:
        return rep
    v = sample_theta(spec, n, seed)
    ref = spec.base.sample(np.random.default_rng(seed + 1), n, spec.d)
    for k in range(spec.d):
        rep.add(f"uniform marginal {k + 1}", "marginal", chi2_uniform(v[:, k]), 0.01, "chi-square, 50 bins",
                resolution=n, seed=seed, higher_is_better=True)
    for tag in ("sum", "max", "sumsq"):
        ks = ks_two_sample(STATISTICS[tag](v), STATISTICS[tag](ref))
        rep.add(f"{tag} vs base copula", "symmetric-stat", ks.statistic, ks.crit01, "two-sample KS",
                resolution=n, seed=seed)
    return rep


def verify_match(spec: CopulaSpec, marginals: Sequence[MarginalDescriptor], n: int = MC_N,
                 seed: int = DEFAULT_SEED, grid: int = 401) -> VerificationReport:
    """Marginal and sum checks of a recombined density."""
    rep = VerificationReport()
    if not identical_marginals(marginals):
        rep.add("no matching guarantee: marginals differ", "constant", 1.0, 0.0, "descriptor comparison")
    f = lambda x: recombine(spec, marginals, x)
    if spec.d == 2 and all(m.name == "normal" for m in marginals):
        for axis, phi in enumerate(marginals):
            mu, var = phi.params
            g = np.linspace(mu - 8 * math.sqrt(var), mu + 8 * math.sqrt(var), grid)
            other = marginals[1 - axis]
            om, ov = other.params
            kinks = lambda x, o=other, p=phi: sorted({float(o.quantile(np.clip(q, 1e-300, 1 - 1e-16)))
                                                      for q in (p.cdf(x), 1 - p.cdf(x))} | {om})
            m = marginal_on_grid(f, axis, g, other=(om - 12 * math.sqrt(ov), om + 12 * math.sqrt(ov)),
                                 breakpoints=kinks)
            rep.add(f"marginal {axis + 1}", "marginal", float(np.max(np.abs(m - phi.pdf(g)))), QUAD_TOL,
                    "Gauss-Legendre with region breakpoints", resolution=grid)
    y = sample_matched(spec, marginals, n, seed)
    x = sample_independent(marginals, n, seed + 1)
    ks = ks_two_sample(y.sum(1), x.sum(1))
    rep.add("sum law", "sum", ks.statistic, ks.crit01, "two-sample KS", resolution=n, seed=seed)
    for k in range(spec.d):
        ks = ks_two_sample(y[:, k], x[:, k])
        rep.add(f"marginal {k + 1} sample", "marginal", ks.statistic, ks.crit01, "two-sample KS", resolution=n, seed=seed)
    return rep


def verify_similar(con: SimilarConstruction, n: int = MC_N, seed: int = DEFAULT_SEED,
                   grid: int = 401) -> VerificationReport:
    """Quadrature marginals and the sampled sum law of a similar-marginal construction."""
    rep = VerificationReport()
    for axis, phi in enumerate((con.phi1, con.phi2)):
        other = (con.phi1, con.phi2)[1 - axis]
        sd = math.sqrt(phi.params[1]) if phi.params else 1.0
        osd = math.sqrt(other.params[1]) if other.params else 1.0
        g = np.linspace(phi.median - 8 * sd, phi.median + 8 * sd, grid)
        m = marginal_on_grid(con, axis, g, other=(other.median - 12 * osd, other.median + 12 * osd),
                             breakpoints=con.breakpoints)
        rep.add(f"marginal {axis + 1}", "marginal", float(np.max(np.abs(m - phi.pdf(g)))), QUAD_TOL,
                "Gauss-Legendre with region breakpoints", resolution=grid)
    y = con.sample(n, seed).samples
    x = sample_independent((con.phi1, con.phi2), n, seed + 1)
    ks = ks_two_sample(y.sum(1), x.sum(1))
    rep.add("sum law", "sum", ks.statistic, ks.crit01, "two-sample KS", resolution=n, seed=seed)
    ks = ks_two_sample(y.max(1), x.max(1))
    rep.add("max law", "symmetric-stat", ks.statistic, ks.crit01, "two-sample KS", resolution=n, seed=seed)
    return rep
