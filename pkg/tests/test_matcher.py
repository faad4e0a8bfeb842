import itertools
import math

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy import stats

from margsum.copula import classify_region, signed_spec
from margsum.density import stoyanov_density
from margsum.marginals import MarginalDescriptor
from margsum.matcher import (
    MatchError,
    balanced_normal_copula,
    copula_of,
    identical_marginals,
    joint_cumulant4,
    mc_mean_se,
    push_symmetric_stat,
    recombine,
    sample_independent,
    sample_matched,
    signed_region_values,
)
from margsum.reports import verify_match
from margsum.verify import gauss_legendre, jackknife_se, ks_two_sample

NORMAL = MarginalDescriptor.normal()


class TestRecombine:
    def test_independence(self):
        x = np.random.default_rng(0).normal(size=(50, 3))
        out = recombine(lambda u: np.ones(u.shape[:-1]), [NORMAL] * 3, x)
        assert_allclose(out, np.prod(stats.norm.pdf(x), axis=1))

    def test_zero_density(self):
        unif = MarginalDescriptor.from_scipy(stats.uniform(), name="uniform")
        out = recombine(signed_spec(2), [unif, unif], np.array([[0.2, 0.3], [1.5, 0.3]]))
        assert out[1] == 0 and out[0] == 0.5

    def test_shape_check(self):
        with pytest.raises(MatchError):
            recombine(signed_spec(2), [NORMAL] * 3, np.zeros((1, 2)))

    def test_identical_flag(self):
        assert identical_marginals([NORMAL, MarginalDescriptor.normal(0, 1)])
        assert not identical_marginals([NORMAL, MarginalDescriptor.normal(0, 4)])
        rep = verify_match(signed_spec(2), [NORMAL, MarginalDescriptor.normal(0, 4)], n=1000)
        assert any("no matching guarantee" in c.name for c in rep.claims)


class TestBalancedNormal:
    def test_bivariate_report(self):
        spec, marg = balanced_normal_copula(2)
        rep = verify_match(spec, marg, n=100_000, seed=11)
        assert rep.passed, rep.to_csv()
        errs = [c.metric for c in rep.claims if c.name.startswith("marginal") and "sample" not in c.name]
        assert len(errs) == 2 and max(errs) < 1e-6

    def test_mass(self):
        spec, marg = balanced_normal_copula(2)
        nodes, w = gauss_legendre(-12, 12, 48, 20, breakpoints=(0.0,))
        a, b = np.meshgrid(nodes, nodes, indexing="ij")
        dens = recombine(spec, marg, np.stack([a, b], -1))
        assert abs(np.sum(np.outer(w, w) * dens) - 1) < 1e-6

    def test_trivariate_pairs_are_independent_normals(self):
        spec, marg = balanced_normal_copula(3)
        g = np.linspace(-4, 4, 17) + 0.0123
        nodes_w = {}
        worst = 0.0
        for x1, x2 in itertools.product(g, g):
            kinks = (0.0, x1, -x1, x2, -x2)
            nodes, w = nodes_w.setdefault((x1, x2), gauss_legendre(-12, 12, 24, 16, kinks))
            pts = np.column_stack([np.full_like(nodes, x1), np.full_like(nodes, x2), nodes])
            for perm in ((0, 1, 2), (0, 2, 1), (2, 0, 1)):
                val = w @ recombine(spec, marg, pts[:, perm])
                worst = max(worst, abs(val - stats.norm.pdf(x1) * stats.norm.pdf(x2)))
        assert worst < 1e-6

    def test_non_gaussian(self):
        spec, marg = balanced_normal_copula(3)
        y = sample_matched(spec, marg, 100_000, seed=12)
        mean, se = mc_mean_se(signed_region_values(spec, marg, y))
        assert abs(mean + spec.gamma.value) < 4 * se
        assert abs(mean) > 4 * se
        x = sample_independent(marg, 100_000, seed=13)
        mean0, se0 = mc_mean_se(signed_region_values(spec, marg, x))
        assert abs(mean0) < 4 * se0

    def test_fourth_cumulants_cannot_detect(self):
        # the perturbation is odd under each coordinate reflection, so every
        # degree-four moment with an even power vanishes against it
        spec, marg = balanced_normal_copula(3)
        y = sample_matched(spec, marg, 100_000, seed=14)
        for idx in ((0, 1, 2, 2), (0, 0, 1, 2), (0, 1, 1, 2)):
            val = joint_cumulant4(y, idx)
            se = jackknife_se(y, lambda s: joint_cumulant4(s, idx), groups=50)
            assert abs(val) < 4 * se

    def test_sum_law(self):
        spec, marg = balanced_normal_copula(3)
        y = sample_matched(spec, marg, 100_000, seed=15)
        ks = ks_two_sample(y.sum(1), np.random.default_rng(16).normal(0, math.sqrt(3), 100_000))
        assert ks.passes01


class TestStoyanovCopula:
    @pytest.mark.parametrize("kappa", [0.5, -0.5])
    def test_octal_sign_pattern(self, kappa):
        eps = signed_spec(2).epsilon
        rng = np.random.default_rng(3)
        marg = [NORMAL, NORMAL]
        seen = set()
        for u in rng.uniform(0.02, 0.98, (400, 2)):
            key = classify_region(u)
            c = copula_of(lambda x: stoyanov_density(x, kappa), marg, u)
            if abs(c - 1) < 1e-9:
                continue
            # a positive amplitude mirrors the region weights
            assert np.sign(c - 1) == np.sign(kappa) * eps.value(key.alpha, key.beta)
            seen.add((key.alpha, key.beta))
        assert len(seen) == 8

    def test_printed_pattern(self):
        # with a negative amplitude the reference cell carries the minus sign
        c = copula_of(lambda x: stoyanov_density(x, -0.5), [NORMAL, NORMAL], np.array([0.1, 0.3]))
        assert c < 1


class TestSymmetricStats:
    def test_sum_moments(self):
        vals = push_symmetric_stat(lambda n, s: sample_independent([NORMAL, NORMAL], n, s), "sum", 100_000, 1)
        se_mean = math.sqrt(2 / 100_000)
        se_var = 2 * math.sqrt(2 / 100_000)
        assert abs(vals.mean()) < 4 * se_mean and abs(vals.var() - 2) < 4 * se_var

    def test_max_matches(self):
        spec, marg = balanced_normal_copula(2)
        y = push_symmetric_stat(lambda n, s: sample_matched(spec, marg, n, s), "max", 100_000, 2)
        x = push_symmetric_stat(lambda n, s: sample_independent(marg, n, s), "max", 100_000, 3)
        assert ks_two_sample(y, x).passes01

    @pytest.mark.parametrize("tag", ["sum", "max", "min", "sumsq", "product"])
    def test_permutation_invariance(self, tag):
        y = np.random.default_rng(4).normal(size=(1000, 4))
        base = push_symmetric_stat(lambda n, s: y, tag, 1000)
        for perm in itertools.permutations(range(4)):
            assert np.array_equal(base, push_symmetric_stat(lambda n, s: y[:, perm], tag, 1000))

    def test_unknown(self):
        with pytest.raises(MatchError):
            push_symmetric_stat(lambda n, s: np.zeros((n, 2)), "median", 10)

    def test_dependence_beyond_symmetric_stats(self):
        spec, marg = balanced_normal_copula(2)
        y = sample_matched(spec, marg, 100_000, seed=5)
        frac = np.mean((y[:, 0] < y[:, 1]) & (y[:, 1] < 0))
        assert abs(frac - 0.125) > 0.05
