"""
Meixner-class laws and their monic orthogonal polynomials.

Every law in a Meixner class has an exponential generating function of the
form ``exp(x u(z)) / M(u(z))`` for its monic orthogonal polynomials.  The
class is fixed by the pair ``(a, b)``; inside a class a law is fixed by its
mean and variance ``r = (m, s2)``.  Four real types are supported:

=============  ==================  =======================  ==================
type tag       (a, b)              law                      polynomials
=============  ==================  =======================  ==================
``NormalI``    a = b = 0           normal                   Hermite
``GammaII``    a = b != 0          shifted gamma            Laguerre
``PoissonIII`` b = 0, a != 0       shifted Poisson          Charlier
``NegBinomIV`` a != b, ab > 0      shifted negative binom.  Meixner
``BinomIV``    a != b, ab < 0      shifted binomial         Krawtchouk
=============  ==================  =======================  ==================

Polynomials are evaluated by the three-term recurrence

.. math::
    x P_n = P_{n+1} + (m - n(a+b)) P_n + n (s^2 + (n-1) ab) P_{n-1},

which follows from the Riccati equation ``v' = (1 - a v)(1 - b v)`` satisfied
by the inverse of ``u``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import Sequence, Tuple, Union

import numpy as np
from scipy import stats

N_MAX = 32
"""Default cap on polynomial degree; norms grow factorially."""

_TOL = 1e-9

ArrayLike = Union[float, Sequence[float], np.ndarray]
Params = Tuple[float, float]


class MeixnerError(ValueError):
    """Invalid Meixner parameters or out-of-domain argument."""


class MeixnerType(str, Enum):
    NORMAL = "NormalI"
    GAMMA = "GammaII"
    POISSON = "PoissonIII"
    NEGBINOM = "NegBinomIV"
    BINOM = "BinomIV"


@dataclass(frozen=True)
class MeixnerSpec:
    """
    One law ``mu(r)`` inside the Meixner class ``(a, b)``.

    Parameters
    ----------
    type : MeixnerType
        Type tag; must agree with ``(a, b)``.
    a, b : float
        Class parameters (roots of the Riccati right-hand side).
    m : float
        Mean.
    s2 : float
        Variance, strictly positive.
    """

    type: MeixnerType
    a: float
    b: float
    m: float
    s2: float

    def __post_init__(self):
        object.__setattr__(self, "type", MeixnerType(self.type))
        for name in ("a", "b", "m", "s2"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if not (self.s2 > 0 and math.isfinite(self.s2)):
            raise MeixnerError(f"variance must be positive, got s2={self.s2}")
        a, b, t = self.a, self.b, self.type
        if t is MeixnerType.NORMAL:
            if a != 0 or b != 0:
                raise MeixnerError("NormalI requires a = b = 0")
        elif t is MeixnerType.GAMMA:
            if a == 0 or a != b:
                raise MeixnerError("GammaII requires a = b != 0")
        elif t is MeixnerType.POISSON:
            if b != 0 or a == 0:
                raise MeixnerError("PoissonIII requires b = 0, a != 0")
        elif t is MeixnerType.NEGBINOM:
            if a == b or a * b <= 0:
                raise MeixnerError("NegBinomIV requires a != b and ab > 0")
        elif t is MeixnerType.BINOM:
            if a == b or a * b >= 0:
                raise MeixnerError("BinomIV requires a != b and ab < 0")
            trials = -self.s2 / (a * b)
            if abs(trials - round(trials)) > _TOL or round(trials) < 1:
                raise MeixnerError(
                    f"BinomIV requires -s2/(ab) to be a positive integer, got {trials}"
                )

    # -- constructors ------------------------------------------------------

    @classmethod
    def normal(cls, m: float = 0.0, s2: float = 1.0) -> "MeixnerSpec":
        return cls(MeixnerType.NORMAL, 0.0, 0.0, m, s2)

    @classmethod
    def gamma(cls, a: float, m: float, s2: float) -> "MeixnerSpec":
        return cls(MeixnerType.GAMMA, a, a, m, s2)

    @classmethod
    def poisson(cls, a: float, m: float, s2: float) -> "MeixnerSpec":
        return cls(MeixnerType.POISSON, a, 0.0, m, s2)

    @classmethod
    def negbinom(cls, a: float, b: float, m: float, s2: float) -> "MeixnerSpec":
        return cls(MeixnerType.NEGBINOM, a, b, m, s2)

    @classmethod
    def binom(cls, a: float, b: float, m: float, s2: float) -> "MeixnerSpec":
        return cls(MeixnerType.BINOM, a, b, m, s2)

    # -- properties --------------------------------------------------------

    @property
    def r(self) -> Params:
        return (self.m, self.s2)

    @property
    def is_discrete(self) -> bool:
        return self.type in (MeixnerType.POISSON, MeixnerType.NEGBINOM, MeixnerType.BINOM)

    @property
    def trials(self) -> int:
        """Number of trials of a ``BinomIV`` law."""
        if self.type is not MeixnerType.BINOM:
            raise MeixnerError("trials only defined for BinomIV")
        return int(round(-self.s2 / (self.a * self.b)))

    def same_class(self, other: "MeixnerSpec") -> bool:
        return self.type == other.type and self.a == other.a and self.b == other.b

    def with_params(self, m: float, s2: float) -> "MeixnerSpec":
        """The law of the same class with mean ``m`` and variance ``s2``."""
        return replace(self, m=m, s2=s2)

    def split(self, n: int) -> "MeixnerSpec":
        """Law of one of ``n`` iid summands adding up to this law."""
        if n < 1:
            raise MeixnerError("n must be >= 1")
        out_s2 = self.s2 / n
        if self.type is MeixnerType.BINOM:
            trials = -out_s2 / (self.a * self.b)
            if abs(trials - round(trials)) > _TOL:
                raise MeixnerError(
                    f"BinomIV is not divisible into {n} parts: {self.trials} trials"
                )
        return self.with_params(self.m / n, out_s2)

    # -- serialization -----------------------------------------------------

    def to_dict(self) -> dict:
        return {"type": self.type.value, "a": self.a, "b": self.b, "m": self.m, "s2": self.s2}

    @classmethod
    def from_dict(cls, data: dict) -> "MeixnerSpec":
        try:
            return cls(data["type"], data.get("a", 0.0), data.get("b", 0.0), data["m"], data["s2"])
        except KeyError as exc:
            raise MeixnerError(f"missing field {exc} in MeixnerSpec") from None


def _check_degree(n: int, n_max: int = N_MAX) -> int:
    if int(n) != n or n < 0:
        raise MeixnerError(f"degree must be a nonnegative integer, got {n}")
    if n > n_max:
        raise MeixnerError(f"degree {n} exceeds cap {n_max}")
    return int(n)


def recurrence_coefficients(spec: MeixnerSpec, n: int) -> Tuple[float, float]:
    """Return ``(B_n, C_n)`` of the monic three-term recurrence."""
    a, b = spec.a, spec.b
    return spec.m - n * (a + b), n * (spec.s2 + (n - 1) * a * b)


def poly_table(spec: MeixnerSpec, n: int, x: ArrayLike, n_max: int = N_MAX) -> np.ndarray:
    """Evaluate ``P_0, ..., P_n`` at ``x``; result has shape ``(n + 1,) + x.shape``."""
    n = _check_degree(n, n_max)
    x = np.asarray(x, dtype=float)
    out = np.empty((n + 1,) + x.shape)
    out[0] = 1.0
    if n >= 1:
        out[1] = x - spec.m
    for k in range(1, n):
        bk, ck = recurrence_coefficients(spec, k)
        out[k + 1] = (x - bk) * out[k] - ck * out[k - 1]
    return out


def poly_eval(spec: MeixnerSpec, n: int, x: ArrayLike, n_max: int = N_MAX):
    """
    Monic orthogonal polynomial ``P_n(x; r)`` of the law ``spec``.

    >>> poly_eval(MeixnerSpec.normal(0, 1), 3, 2.0)
    2.0
    """
    vals = poly_table(spec, n, x, n_max)[-1]
    return float(vals) if vals.ndim == 0 else vals


def poly_norm(spec: MeixnerSpec, n: int, n_max: int = N_MAX) -> float:
    """Squared norm ``h_n = E[P_n(X)^2] = prod_{k<=n} C_k``; zero past a binomial's trials."""
    n = _check_degree(n, n_max)
    ab = spec.a * spec.b
    out = 1.0
    for k in range(1, n + 1):
        out *= k * (spec.s2 + (k - 1) * ab)
    return out


# -- u, M and the generating function -------------------------------------


def _ordered_ab(spec: MeixnerSpec) -> Tuple[float, float]:
    # The law is symmetric in (a, b); the negative binomial form needs |b| < |a|.
    a, b = spec.a, spec.b
    if spec.type is MeixnerType.NEGBINOM and abs(b) > abs(a):
        a, b = b, a
    return a, b


def u_map(spec: MeixnerSpec, z: ArrayLike):
    """The function ``u`` with ``u(0) = 0`` and ``u'(0) = 1``."""
    z = np.asarray(z, dtype=float)
    a, b = spec.a, spec.b
    t = spec.type
    if t is MeixnerType.NORMAL:
        return z
    if t is MeixnerType.GAMMA:
        return z / (1.0 - a * z)
    if t is MeixnerType.POISSON:
        return -np.log1p(-a * z) / a
    return (np.log1p(-b * z) - np.log1p(-a * z)) / (a - b)


def log_mgf(spec: MeixnerSpec, t: ArrayLike):
    """Cumulant generating function ``log M(t; r)``."""
    t = np.asarray(t, dtype=float)
    m, s2 = spec.m, spec.s2
    typ = spec.type
    if typ is MeixnerType.NORMAL:
        return m * t + 0.5 * s2 * t * t
    if typ is MeixnerType.GAMMA:
        a = spec.a
        arg = 1.0 + a * t
        if np.any(arg <= 0):
            raise MeixnerError(f"t outside the GammaII domain 1 + a t > 0 (a={a})")
        return (s2 / a + m) * t - (s2 / (a * a)) * np.log(arg)
    if typ is MeixnerType.POISSON:
        a = spec.a
        return (m + s2 / a) * t + (s2 / (a * a)) * np.expm1(-a * t)
    a, b = _ordered_ab(spec)
    q = b / a
    denom = 1.0 - q * np.exp(-(a - b) * t)
    if np.any(denom <= 0):
        raise MeixnerError("t outside the NegBinomIV domain")
    return (m + s2 / a) * t + (s2 / (a * b)) * (np.log1p(-q) - np.log(denom))


def mgf(spec: MeixnerSpec, t: ArrayLike):
    """Moment generating function ``M(t; r)``; raises outside its domain."""
    out = np.exp(log_mgf(spec, t))
    return float(out) if np.ndim(out) == 0 else out


def generating_fn(spec: MeixnerSpec, z: ArrayLike, x: ArrayLike):
    """
    Exponential generating function ``G(z, x; r) = sum_n P_n(x) z^n / n!``.

    Evaluated in closed form as ``exp(x u(z)) / M(u(z))``.  Requires
    ``|a z| < 1`` and ``|b z| < 1``.
    """
    z = np.asarray(z, dtype=float)
    if np.any(np.abs(spec.a * z) >= 1) or np.any(np.abs(spec.b * z) >= 1):
        raise MeixnerError("z outside the convergence domain |az| < 1, |bz| < 1")
    uz = u_map(spec, z)
    out = np.exp(np.asarray(x, dtype=float) * uz - log_mgf(spec, uz))
    return float(out) if np.ndim(out) == 0 else out


def hermite_transform(n: int, s2: float, t: ArrayLike):
    """``E[exp(tX) P_n(X; s2)]`` for ``X ~ N(0, s2)``, i.e. ``exp(s2 t^2 / 2) s2^n t^n``."""
    if s2 <= 0:
        raise MeixnerError("s2 must be positive")
    t = np.asarray(t, dtype=float)
    out = np.exp(0.5 * s2 * t * t) * s2**n * t**n
    return float(out) if out.ndim == 0 else out


# -- densities --------------------------------------------------------------


def lattice_form(spec: MeixnerSpec):
    """
    Representation ``X = origin - step * K`` of a discrete law.

    Returns ``(origin, step, K)`` where ``K`` is a frozen scipy distribution
    on the nonnegative integers.
    """
    m, s2, a = spec.m, spec.s2, spec.a
    if spec.type is MeixnerType.POISSON:
        return m + s2 / a, a, stats.poisson(s2 / (a * a))
    if spec.type is MeixnerType.NEGBINOM:
        a, b = _ordered_ab(spec)
        return m + s2 / a, a - b, stats.nbinom(s2 / (a * b), 1.0 - b / a)
    if spec.type is MeixnerType.BINOM:
        b = spec.b
        return m + s2 / a, a - b, stats.binom(spec.trials, b / (b - a))
    raise MeixnerError(f"{spec.type.value} is not a lattice law")


def support(spec: MeixnerSpec, tail: float = 1e-17) -> Tuple[np.ndarray, np.ndarray]:
    """Lattice points and probabilities of a discrete law, truncated where mass < ``tail``."""
    origin, step, k_law = lattice_form(spec)
    if spec.type is MeixnerType.BINOM:
        k = np.arange(spec.trials + 1)
    else:
        top = int(k_law.mean() + 10 * k_law.std()) + 20
        while k_law.logpmf(top) > math.log(tail):
            top *= 2
        k = np.arange(top + 1)
    return origin - step * k, k_law.pmf(k)


def continuous_law(spec: MeixnerSpec):
    """Frozen scipy distribution of a NormalI or GammaII spec (GammaII with a > 0 is mirrored)."""
    if spec.type is MeixnerType.NORMAL:
        return stats.norm(spec.m, math.sqrt(spec.s2))
    if spec.type is MeixnerType.GAMMA:
        a = spec.a
        shape = spec.s2 / (a * a)
        if a < 0:
            return stats.gamma(shape, loc=spec.m + spec.s2 / a, scale=-a)
        raise MeixnerError("GammaII with a > 0 is a mirrored gamma; use density()")
    raise MeixnerError(f"{spec.type.value} is not continuous")


def density(spec: MeixnerSpec, x: ArrayLike):
    """
    Density (types I, II) or lattice mass function (types III, IV) at ``x``.

    Points off the support, including non-lattice points of discrete laws,
    get 0.
    """
    x = np.asarray(x, dtype=float)
    typ = spec.type
    if typ is MeixnerType.NORMAL:
        out = np.exp(-0.5 * (x - spec.m) ** 2 / spec.s2) / math.sqrt(2 * math.pi * spec.s2)
    elif typ is MeixnerType.GAMMA:
        a = spec.a
        shape = spec.s2 / (a * a)
        y = (x - spec.m - spec.s2 / a) / (-a)
        out = np.where(y > 0, stats.gamma.pdf(y, shape) / abs(a), 0.0)
    else:
        origin, step, k_law = lattice_form(spec)
        k = (origin - x) / step
        kr = np.round(k)
        on = np.abs(k - kr) <= 1e-9 * np.maximum(1.0, np.abs(k))
        out = np.where(on, k_law.pmf(np.where(on, kr, -1)), 0.0)
    return float(out) if out.ndim == 0 else out


def log_density(spec: MeixnerSpec, x: ArrayLike):
    """Log density of a NormalI or GammaII law; ``-inf`` off the support."""
    x = np.asarray(x, dtype=float)
    if spec.type is MeixnerType.NORMAL:
        out = -0.5 * (x - spec.m) ** 2 / spec.s2 - 0.5 * math.log(2 * math.pi * spec.s2)
    elif spec.type is MeixnerType.GAMMA:
        a = spec.a
        y = (x - spec.m - spec.s2 / a) / (-a)
        with np.errstate(divide="ignore"):
            out = np.where(y > 0, stats.gamma.logpdf(y, spec.s2 / (a * a)) - math.log(abs(a)), -np.inf)
    else:
        raise MeixnerError(f"{spec.type.value} has no Lebesgue density")
    return float(out) if out.ndim == 0 else out


def support_interval(spec: MeixnerSpec) -> Tuple[float, float]:
    """Closure of the support of a continuous law."""
    if spec.type is MeixnerType.NORMAL:
        return -math.inf, math.inf
    if spec.type is MeixnerType.GAMMA:
        edge = spec.m + spec.s2 / spec.a
        return (edge, math.inf) if spec.a < 0 else (-math.inf, edge)
    raise MeixnerError(f"{spec.type.value} is not continuous")


# -- additivity ---------------------------------------------------------------


def convolve_params(r1, r2):
    """
    Parameters of the convolution of two laws of one class.

    Accepts ``(m, s2)`` pairs, returning a pair, or two specs of the same
    class, returning a spec.
    """
    if isinstance(r1, MeixnerSpec) or isinstance(r2, MeixnerSpec):
        if not (isinstance(r1, MeixnerSpec) and isinstance(r2, MeixnerSpec)):
            raise MeixnerError("mix of spec and bare parameter pair")
        if not r1.same_class(r2):
            raise MeixnerError("convolution requires the same Meixner class")
        return r1.with_params(r1.m + r2.m, r1.s2 + r2.s2)
    return (r1[0] + r2[0], r1[1] + r2[1])


def runge_residual(spec_class: MeixnerSpec, r1: Params, r2: Params, n: int, x1: ArrayLike, x2: ArrayLike):
    """
    ``P_n(x1 + x2; r1 + r2) - sum_k C(n, k) P_k(x1; r1) P_{n-k}(x2; r2)``.

    ``spec_class`` only supplies the class ``(type, a, b)``.
    """
    s1 = spec_class.with_params(*r1)
    s2 = spec_class.with_params(*r2)
    s12 = convolve_params(s1, s2)
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    p1 = poly_table(s1, n, x1)
    p2 = poly_table(s2, n, x2)
    rhs = sum(math.comb(n, k) * p1[k] * p2[n - k] for k in range(n + 1))
    out = poly_table(s12, n, x1 + x2)[n] - rhs
    return float(out) if np.ndim(out) == 0 else out


def multinomial(idx: Sequence[int]) -> int:
    out = math.factorial(sum(idx))
    for k in idx:
        out //= math.factorial(k)
    return out


def compositions(total: int, parts: int):
    """All tuples of ``parts`` nonnegative integers summing to ``total``."""
    if parts == 1:
        yield (total,)
        return
    for first in range(total + 1):
        for rest in compositions(total - first, parts - 1):
            yield (first,) + rest


def runge_residual_multi(spec_class: MeixnerSpec, rs: Sequence[Params], m: int, xs: Sequence[float]) -> float:
    """Multivariate Runge residual ``P_m(<x>; <r>) - sum_{<n>=m} multinom * prod P_{n_i}(x_i; r_i)``."""
    specs = [spec_class.with_params(*r) for r in rs]
    total = specs[0]
    for s in specs[1:]:
        total = convolve_params(total, s)
    tables = [poly_table(s, m, x) for s, x in zip(specs, xs)]
    rhs = 0.0
    for idx in compositions(m, len(specs)):
        term = float(multinomial(idx))
        for tab, k in zip(tables, idx):
            term *= tab[k]
        rhs += term
    return float(poly_table(total, m, float(sum(xs)))[m] - rhs)

