import math
import warnings

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose
from scipy import integrate

from margsum.meixner import (
    MeixnerError,
    MeixnerSpec,
    MeixnerType,
    convolve_params,
    density,
    generating_fn,
    hermite_transform,
    mgf,
    poly_eval,
    poly_norm,
    runge_residual,
    runge_residual_multi,
    support,
)

SPECS = {
    "normal": MeixnerSpec.normal(0.3, 1.7),
    "gamma_neg": MeixnerSpec.gamma(-1.0, 2.0, 2.0),
    "gamma_pos": MeixnerSpec.gamma(0.5, 0.0, 1.0),
    "poisson": MeixnerSpec.poisson(1.0, 0.0, 2.0),
    "poisson_neg": MeixnerSpec.poisson(-0.5, 1.0, 1.5),
    "negbinom": MeixnerSpec.negbinom(1.0, 0.5, 0.0, 1.0),
    "negbinom_swapped": MeixnerSpec.negbinom(-0.5, -1.0, 0.2, 1.5),
    "binom": MeixnerSpec.binom(1.0, -1.0, 0.0, 4.0),
    "binom_skew": MeixnerSpec.binom(2.0, -0.5, 1.0, 5.0),
}


def _sympy_generating(spec, order):
    """Series of the generating function built from the per-type closed forms."""
    z, x = sp.symbols("z x")
    a, b, m, s2 = (sp.nsimplify(v) for v in (spec.a, spec.b, spec.m, spec.s2))
    t = spec.type
    if t is MeixnerType.NORMAL:
        expr = sp.exp((x - m) * z - s2 * z**2 / 2)
    elif t is MeixnerType.GAMMA:
        u = z / (1 - a * z)
        expr = sp.exp(x * u - (s2 / a + m) * u) * (1 + a * u) ** (s2 / a**2)
    elif t is MeixnerType.POISSON:
        u = sp.log(1 / (1 - a * z)) / a
        expr = sp.exp(x * u - (m + s2 / a) * u - (s2 / a**2) * (sp.exp(-a * u) - 1))
    else:
        u = sp.log((1 - b * z) / (1 - a * z)) / (a - b)
        logm = (m + s2 / a) * u + (s2 / (a * b)) * sp.log((a - b) / (a - b * sp.exp((b - a) * u)))
        expr = sp.exp(x * u - logm)
    ser = sp.series(expr, z, 0, order + 1).removeO()
    return [sp.expand(sp.factorial(n) * ser.coeff(z, n)) for n in range(order + 1)], x


def _expect(spec, f):
    """E[f(X)] by quadrature or lattice summation."""
    if spec.is_discrete:
        pts, pmf = support(spec, tail=1e-40)
        return float(np.sum(pmf * f(pts)))
    if spec.type is MeixnerType.NORMAL:
        sd = math.sqrt(spec.s2)
        lo, hi = spec.m - 14 * sd, spec.m + 14 * sd
    else:
        edge = spec.m + spec.s2 / spec.a
        width = 80 * abs(spec.a) + 40 * math.sqrt(spec.s2)
        lo, hi = (edge, edge + width) if spec.a < 0 else (edge - width, edge)
    # cancellation in high-degree integrands trips quad's roundoff warning; the callers' tolerances guard the result
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        val, _ = integrate.quad(lambda v: f(v) * density(spec, v), lo, hi, limit=400, epsabs=1e-13, epsrel=1e-12)
    return val


class TestSpec:
    def test_invariants(self):
        with pytest.raises(MeixnerError):
            MeixnerSpec("NormalI", 1.0, 0.0, 0.0, 1.0)
        with pytest.raises(MeixnerError):
            MeixnerSpec.gamma(0.0, 0.0, 1.0)
        with pytest.raises(MeixnerError):
            MeixnerSpec.normal(0.0, 0.0)
        with pytest.raises(MeixnerError):
            MeixnerSpec.negbinom(1.0, -1.0, 0.0, 1.0)
        with pytest.raises(MeixnerError):
            MeixnerSpec.binom(1.0, -1.0, 0.0, 2.5)

    def test_binom_split(self):
        spec = MeixnerSpec.binom(1.0, -1.0, 0.0, 4.0)
        assert spec.trials == 4
        assert spec.split(2).trials == 2
        with pytest.raises(MeixnerError):
            spec.split(3)

    def test_json_roundtrip(self):
        for spec in SPECS.values():
            assert MeixnerSpec.from_dict(spec.to_dict()) == spec


class TestPolynomials:
    def test_hermite_value(self):
        assert poly_eval(MeixnerSpec.normal(0, 1), 3, 2.0) == 2.0

    @pytest.mark.parametrize("name", sorted(SPECS))
    def test_degree_zero(self, name):
        assert poly_eval(SPECS[name], 0, 17.3) == 1.0

    @pytest.mark.parametrize("name", sorted(SPECS))
    def test_against_symbolic_generating_function(self, name):
        spec = SPECS[name]
        polys, x = _sympy_generating(spec, 5)
        for xv in (-1.3, 0.0, 0.7, 2.5):
            expected = [float(p.subs(x, sp.nsimplify(xv))) for p in polys]
            got = [poly_eval(spec, n, xv) for n in range(6)]
            assert_allclose(got, expected, rtol=1e-12, atol=1e-12)

    def test_laguerre_closed_form(self):
        # monic Laguerre: P_2 = (-a)^2 2! L_2^{(k-1)}(y) with y = (x - edge)/(-a)
        spec = MeixnerSpec.gamma(-1.0, 2.0, 2.0)
        k = 2.0
        edge = spec.m + spec.s2 / spec.a
        x = 1.5
        y = x - edge
        lag = 0.5 * y * y - (k + 1) * y + 0.5 * (k + 1) * k
        assert_allclose(poly_eval(spec, 2, x), 2 * lag, rtol=1e-14)

    def test_monic(self):
        spec = SPECS["negbinom"]
        nodes = np.arange(7.0)
        for n in range(1, 7):
            vals = poly_eval(spec, n, nodes[: n + 1])
            coef = np.polyfit(nodes[: n + 1], vals, n)
            assert_allclose(coef[0], 1.0, rtol=1e-8)

    def test_degree_cap(self):
        with pytest.raises(MeixnerError):
            poly_eval(SPECS["normal"], 33, 0.0)

    def test_vectorized(self):
        spec = SPECS["poisson"]
        xs = np.linspace(-2, 3, 7)
        assert_allclose(poly_eval(spec, 4, xs), [poly_eval(spec, 4, v) for v in xs])


class TestNorms:
    def test_normal(self):
        assert poly_norm(MeixnerSpec.normal(0, 1), 4) == 24.0

    def test_gamma(self):
        assert_allclose(poly_norm(MeixnerSpec.gamma(-1.0, 0.0, 2.0), 2), 12.0)

    def test_binom_terminates(self):
        spec = SPECS["binom"]
        assert poly_norm(spec, 4) > 0
        assert poly_norm(spec, 5) == 0.0

    @pytest.mark.parametrize("name", sorted(SPECS))
    def test_orthogonality(self, name):
        spec = SPECS[name]
        top = 6
        if spec.type is MeixnerType.BINOM:
            top = min(top, spec.trials)
        for n in range(top + 1):
            for k in range(n + 1):
                val = _expect(spec, lambda v: poly_eval(spec, n, v) * poly_eval(spec, k, v))
                if n == k:
                    assert_allclose(val, poly_norm(spec, n), rtol=1e-6)
                else:
                    scale = math.sqrt(poly_norm(spec, n) * poly_norm(spec, k))
                    assert abs(val) / scale < 1e-7

    @pytest.mark.parametrize("name", sorted(SPECS))
    def test_moments_and_mass(self, name):
        spec = SPECS[name]
        assert_allclose(_expect(spec, lambda v: np.ones_like(np.asarray(v, dtype=float))), 1.0, atol=1e-8)
        assert_allclose(_expect(spec, lambda v: v), spec.m, atol=1e-8)
        assert_allclose(_expect(spec, lambda v: (v - spec.m) ** 2), spec.s2, rtol=1e-8)


class TestGeneratingFunction:
    def test_normal_value(self):
        assert_allclose(generating_fn(MeixnerSpec.normal(0, 1), 0.5, 1.0), math.exp(0.375))

    @pytest.mark.parametrize("name", sorted(SPECS))
    def test_partial_sums(self, name):
        spec = SPECS[name]
        z, x = 0.2, 0.7
        # the radius is 1/max(|a|, |b|), so slow classes need more terms
        series = sum(poly_eval(spec, n, x) * z**n / math.factorial(n) for n in range(33))
        assert_allclose(generating_fn(spec, z, x), series, rtol=1e-8)
        assert generating_fn(spec, 0.0, x) == 1.0

    @pytest.mark.parametrize("name", sorted(SPECS))
    def test_unit_expectation(self, name):
        spec = SPECS[name]
        assert_allclose(_expect(spec, lambda v: generating_fn(spec, 0.15, v)), 1.0, atol=1e-7)

    def test_domain(self):
        with pytest.raises(MeixnerError):
            generating_fn(SPECS["gamma_neg"], 1.0, 0.0)


class TestMGF:
    def test_normal(self):
        assert_allclose(mgf(MeixnerSpec.normal(0, 2), 1.0), math.e)

    @pytest.mark.parametrize("name", sorted(SPECS))
    def test_against_expectation(self, name):
        spec = SPECS[name]
        for t in (-0.3, 0.2):
            assert_allclose(_expect(spec, lambda v: np.exp(t * v)), mgf(spec, t), rtol=1e-8)

    def test_gamma_domain(self):
        spec = MeixnerSpec.gamma(-1.0, 2.0, 2.0)
        with pytest.raises(MeixnerError):
            mgf(spec, 1.0)

    @pytest.mark.parametrize("name", sorted(SPECS))
    def test_product(self, name):
        spec = SPECS[name]
        if spec.type is MeixnerType.BINOM:
            s1, s2 = spec.with_params(0.4, -2 * spec.a * spec.b), spec.with_params(-1.0, -3 * spec.a * spec.b)
        else:
            s1, s2 = spec.with_params(0.4, 0.7), spec.with_params(-1.0, 1.9)
        both = convolve_params(s1, s2)
        assert_allclose(mgf(s1, 0.3) * mgf(s2, 0.3), mgf(both, 0.3), rtol=1e-12)


class TestDensity:
    def test_standard_normal(self):
        assert_allclose(density(MeixnerSpec.normal(0, 1), 0.0), 1 / math.sqrt(2 * math.pi))

    def test_gamma_support(self):
        spec = MeixnerSpec.gamma(-1.0, 1.0, 1.0)
        assert density(spec, 0.0) == 0.0
        assert density(spec, -3.0) == 0.0
        assert density(spec, 0.5) > 0

    def test_lattice(self):
        spec = SPECS["binom"]
        assert_allclose(density(spec, [4, 2, 0, -2, -4]), [1 / 16, 4 / 16, 6 / 16, 4 / 16, 1 / 16])
        assert density(spec, 1.0) == 0.0


class TestConvolution:
    def test_pairs(self):
        assert convolve_params((0, 1), (0, 1)) == (0, 2)
        assert convolve_params((1, 2), (-1, 3)) == (0, 5)

    def test_class_mismatch(self):
        with pytest.raises(MeixnerError):
            convolve_params(SPECS["normal"], SPECS["poisson"])

    def test_mgf_random(self):
        rng = np.random.default_rng(3)
        s1 = MeixnerSpec.poisson(0.5, 0.1, 0.8)
        s2 = s1.with_params(1.2, 0.3)
        both = convolve_params(s1, s2)
        for t in rng.uniform(-1, 1, 10):
            assert_allclose(mgf(both, t), mgf(s1, t) * mgf(s2, t), rtol=1e-12)


class TestRunge:
    def test_degree_one(self):
        assert runge_residual(SPECS["normal"], (0, 1), (0, 1), 1, 0.4, -2.0) == 0.0

    def test_examples(self):
        assert abs(runge_residual(MeixnerSpec.normal(), (0, 1), (0, 2), 4, 0.3, -1.1)) < 1e-9
        assert abs(runge_residual(MeixnerSpec.gamma(-1, 0, 1), (2, 1), (2, 1), 3, 2.5, 3.0)) < 1e-9

    @settings(max_examples=40, deadline=None)
    @given(
        name=st.sampled_from(["normal", "gamma_neg", "poisson", "negbinom"]),
        n=st.integers(0, 8),
        x1=st.floats(-2, 2),
        x2=st.floats(-2, 2),
        m1=st.floats(-1, 1),
        v1=st.floats(0.2, 1.5),
        v2=st.floats(0.2, 1.5),
    )
    def test_random(self, name, n, x1, x2, m1, v1, v2):
        res = runge_residual(SPECS[name], (m1, v1), (0.3, v2), n, x1, x2)
        scale = max(1.0, abs(poly_eval(SPECS[name].with_params(m1 + 0.3, v1 + v2), n, x1 + x2)))
        assert abs(res) / scale < 1e-9

    def test_multi(self):
        rng = np.random.default_rng(0)
        for name in ("normal", "gamma_neg", "poisson"):
            for m in range(6):
                xs = rng.uniform(-1, 1, 3)
                rs = [(0.1, 0.5), (-0.2, 1.0), (0.4, 0.8)]
                assert abs(runge_residual_multi(SPECS[name], rs, m, xs)) < 1e-9


class TestHermiteTransform:
    def test_values(self):
        assert_allclose(hermite_transform(0, 1.0, 0.7), math.exp(0.245))
        assert_allclose(hermite_transform(2, 0.5, 1.0), math.exp(0.25) * 0.25)

    @pytest.mark.parametrize("n", range(7))
    def test_quadrature(self, n):
        spec = MeixnerSpec.normal(0.0, 0.6)
        t = 0.8
        val = _expect(spec, lambda v: np.exp(t * v) * poly_eval(spec, n, v))
        assert_allclose(val, hermite_transform(n, 0.6, t), rtol=1e-8, atol=1e-12)
