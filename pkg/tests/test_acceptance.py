"""
End-to-end acceptance checks, one test per numbered criterion.

Each test prints a single ``criterion N: PASS|FAIL`` line with its key
numbers, so the run log doubles as a summary table.
"""

import math
import time
from contextlib import contextmanager

import numpy as np
import pytest
from scipy import stats

from margsum.copula import (
    ExplicitEpsilon,
    SignedEpsilon,
    check_conditions,
    default_gamma,
    univariate_only_epsilon,
    perms,
    alternating_sign_check,
    signed_spec,
    theta_eval,
)
from margsum.density import (
    ExpansionDensitySpec,
    density_eval,
    kappa_max,
    mgf_closed_form,
    preset,
    printed_kappa,
    relative_form_density,
    stoyanov_density,
)
from margsum.expansion import CoefficientTable
from margsum.marginals import MarginalDescriptor
from margsum.matcher import mc_mean_se, sample_matched
from margsum.meixner import MeixnerSpec, poly_norm, poly_table
from margsum.reports import poly_check, verify_copula, verify_similar
from margsum.similar import SimilarError, similar_group, wedge_normals
from margsum.verify import marginal_on_grid, mgf_compare, sum_density_conv

STOYANOV_KAPPA = math.e ** 2 / 8


@contextmanager
def criterion(capsys, number, title):
    """Print one PASS/FAIL line for the enclosed checks."""
    notes = []
    start = time.perf_counter()
    try:
        yield notes
    except BaseException:
        status = "FAIL"
        raise
    else:
        status = "PASS"
    finally:
        elapsed = time.perf_counter() - start
        detail = "; ".join(notes)
        with capsys.disabled():
            print(f"\ncriterion {number}: {status} ({title}, {elapsed:.1f} s) {detail}")


def _tie_free_average(spec, keep, sizes):
    # midpoint grids with different powers of two in their sizes avoid every tie hyperplane
    axes = [(np.arange(n) + 0.5) / n for n in sizes]
    u = np.stack(np.meshgrid(*axes, indexing="ij"), -1)
    drop = tuple(i for i in range(spec.d) if i not in keep)
    return theta_eval(spec, u).mean(axis=drop)


def test_criterion_01_stoyanov_constant(capsys):
    with criterion(capsys, 1, "Stoyanov constant") as notes:
        start = time.perf_counter()
        kmax = kappa_max(preset("stoyanov", kappa=0.0))
        elapsed = time.perf_counter() - start
        notes.append(f"kappa_max={kmax:.12f}, e^2/8={STOYANOV_KAPPA:.12f}, {elapsed:.2f} s")
        assert abs(kmax - STOYANOV_KAPPA) <= 1e-3
        assert elapsed < 10


def test_criterion_02_expansion_equals_stoyanov(capsys):
    with criterion(capsys, 2, "expansion form equals the classical density") as notes:
        spec = preset("example3", shrink=0.5)
        x = np.random.default_rng(2).uniform(-4, 4, (100, 2))
        k = printed_kappa(spec)
        err = float(np.max(np.abs(density_eval(spec, x) - stoyanov_density(x, k))))
        err_rel = float(np.max(np.abs(relative_form_density(x, k, 0.5, False) - stoyanov_density(x, k))))
        notes.append(f"max error {err:.2e} (relative form {err_rel:.2e})")
        assert err <= 1e-12 and err_rel <= 1e-12


def test_criterion_03_gaussian_marginal_matching(capsys):
    with criterion(capsys, 3, "bivariate Gaussian marginal and sum matching") as notes:
        start = time.perf_counter()
        spec = preset("example4", kappa=0.3)
        g = np.linspace(-8, 8, 401)
        f = lambda x: density_eval(spec, x)
        marg = max(float(np.max(np.abs(marginal_on_grid(f, k, g) - stats.norm.pdf(g)))) for k in range(2))
        gs = np.linspace(-10, 10, 401)
        conv = float(np.max(np.abs(sum_density_conv(f, gs) - stats.norm.pdf(gs, scale=math.sqrt(2)))))
        broken = ExpansionDensitySpec(spec.base, spec.tilt, CoefficientTable.from_items(2, {(1, 1): 1.0}), 4, 0.3)
        ctrl = float(np.max(np.abs(sum_density_conv(lambda x: density_eval(broken, x), gs)
                                   - stats.norm.pdf(gs, scale=math.sqrt(2)))))
        elapsed = time.perf_counter() - start
        notes.append(f"marginal {marg:.1e}, sum {conv:.1e}, negative control {ctrl:.1e}, {elapsed:.1f} s")
        assert marg <= 1e-6 and conv <= 1e-6 and ctrl > 1e-3 and elapsed < 60


def test_criterion_04_mgf(capsys):
    with criterion(capsys, 4, "moment generating function") as notes:
        spec = preset("example4", kappa=0.3)
        f = lambda x: density_eval(spec, x)
        t = np.linspace(-1.5, 1.5, 9)
        grid = np.stack(np.meshgrid(t, t, indexing="ij"), -1).reshape(-1, 2)
        full = mgf_compare(f, lambda s: mgf_closed_form(spec, s), grid)
        diag = mgf_compare(f, lambda s: math.exp(s[0] ** 2), np.column_stack([t, t]))
        notes.append(f"grid {full:.1e}, diagonal {diag:.1e}")
        assert full <= 1e-5 and diag <= 1e-6


def test_criterion_05_identity_suite(capsys):
    with criterion(capsys, 5, "polynomial identity suite") as notes:
        rep = poly_check(n_max=8)
        worst = {c.name: c.metric for c in rep.claims}
        notes.append(", ".join(f"{k} {v:.1e}" for k, v in worst.items()))
        assert {"runge NormalI", "runge GammaII", "runge PoissonIII"} <= set(worst)
        assert rep.passed, [c.name for c in rep.claims if not c.passed]


def test_criterion_06_copula_conditions(capsys):
    with criterion(capsys, 6, "balance conditions") as notes:
        for d in (2, 3, 4):
            rep = check_conditions(SignedEpsilon(d))
            parts = (rep.mass, rep.symmetric, rep.marginal) + tuple(rep.partial)
            assert all(c.passed and c.worst == 0 for c in parts)
        notes.append("signed weights balance exactly for d=2,3,4")

        rng = np.random.default_rng(5)
        for _ in range(50):
            base = rng.integers(-1, 2, 6)
            eps = ExplicitEpsilon.from_function(3, lambda a, b: (-1) ** sum(a) * base[perms(3).index(b)])
            assert alternating_sign_check(eps)
            alternating_sign_check(ExplicitEpsilon(3, rng.integers(-1, 2, (8, 6))))
        notes.append("two routes agree on 100 random weight tables")

        rep = check_conditions(univariate_only_epsilon(3))
        partial = ", ".join(f"without coordinate {k + 1} {'pass' if c.passed else 'FAIL'} ({c.worst})"
                            for k, c in enumerate(rep.partial))
        notes.append(f"three-coordinate counterexample: symmetric-statistic balance "
                     f"{'pass' if rep.symmetric.passed else 'FAIL'}, one-dimensional balance "
                     f"{'pass' if rep.marginal.passed else 'FAIL'}, {partial}")
        assert rep.symmetric.passed
        # the requirement as written expects the one-dimensional balance to fail here
        assert not rep.marginal.passed


def test_criterion_07_copula_distribution(capsys):
    with criterion(capsys, 7, "trivariate copula distribution") as notes:
        start = time.perf_counter()
        eps = SignedEpsilon(3)
        spec = signed_spec(3, default_gamma(eps).value)
        rep = verify_copula(spec, n=100_000, seed=7)
        worst2 = max(float(np.max(np.abs(_tie_free_average(spec, pair, [64, 128, 201]) - 1)))
                     for pair in ((0, 1), (0, 2), (1, 2)))
        elapsed = time.perf_counter() - start
        notes.append(", ".join(f"{c.name} {c.metric:.3g}" for c in rep.claims if c.resolution)
                     + f", pair marginals {worst2:.1e}, {elapsed:.1f} s")
        assert rep.passed, [c.name for c in rep.claims if not c.passed]
        assert worst2 < 1e-3 and elapsed < 120


def test_criterion_08_projection_coefficients(capsys):
    with criterion(capsys, 8, "projection coefficients of the octal copula") as notes:
        normal = MarginalDescriptor.normal()
        y = sample_matched(signed_spec(2, 0.5), [normal, normal], 100_000, seed=8)
        herm = MeixnerSpec.normal(0.0, 1.0)
        p1, p2 = poly_table(herm, 3, y[:, 0]), poly_table(herm, 3, y[:, 1])
        vals = {}
        for n1 in range(4):
            for n2 in range(4):
                if n1 == n2 == 0:
                    continue
                terms = p1[n1] * p2[n2] / (poly_norm(herm, n1) * poly_norm(herm, n2))
                vals[n1, n2] = (terms, *mc_mean_se(terms))
        for (n1, n2), (_, mean, se) in vals.items():
            if n1 % 2 == 0 or n2 % 2 == 0:
                assert abs(mean) < 4 * se, (n1, n2, mean, se)
            else:
                pair = vals[n1, n2][0] + vals[n2, n1][0]
                m, s = mc_mean_se(pair)
                assert abs(m) < 4 * s, (n1, n2, m, s)
        diff = vals[1, 3][0] - vals[3, 1][0]
        m, s = mc_mean_se(diff)
        notes.append(f"H13={vals[1, 3][1]:+.4f}, H31={vals[3, 1][1]:+.4f}, difference {m:+.4f} ({abs(m) / s:.0f} SE)")
        assert abs(m) > 4 * s


def test_criterion_09_similar_marginals(capsys):
    with criterion(capsys, 9, "similarly distributed marginals") as notes:
        con = wedge_normals()
        rep = verify_similar(con, n=100_000, seed=9)
        notes.append(", ".join(f"{c.name} {c.metric:.2g}" for c in rep.claims))
        assert rep.passed, [c.name for c in rep.claims if not c.passed]
        squared = MarginalDescriptor(
            cdf=lambda x: stats.norm.cdf(x) ** 2,
            pdf=lambda x: 2 * stats.norm.cdf(x) * stats.norm.pdf(x),
            ppf=lambda q: stats.norm.ppf(np.sqrt(q)),
            name="max of two",
        )
        with pytest.raises(SimilarError):
            similar_group(MarginalDescriptor.normal(), squared)
        notes.append("squared-CDF partner rejected")


def test_criterion_10_suite_runtime(capsys, request):
    with criterion(capsys, 10, "desk-scale runtime") as notes:
        elapsed = time.perf_counter() - request.config.suite_started
        notes.append(f"whole session so far {elapsed:.0f} s")
        assert elapsed < 600
