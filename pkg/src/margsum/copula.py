"""
Symmetry-balancing perturbations of copula densities.

The unit cube minus a null set splits into ``2^d d!`` cells

    Delta(alpha, beta) = {u : sigma_beta(tau_alpha(u)) in Delta(0, id)},
    Delta(0, id) = {0 < u_1 < ... < u_d < 1/2},

where ``tau_alpha`` reflects the coordinates flagged by ``alpha`` and
``sigma_beta(u) = (u_{beta(1)}, ..., u_{beta(d)})``.  A generator ``gamma`` on
the reference cell is copied onto every cell with sign ``epsilon(alpha, beta)``:

    theta(u) = c(u) - epsilon(alpha, beta) gamma(sigma_beta(tau_alpha(u))).

Balanced signs keep the total mass, every 1-D marginal, and the law of every
symmetric statistic.  Permutations are 0-based index tuples throughout;
``alpha`` codes read ``alpha_1`` as the most significant bit and ``beta``
ranks are lexicographic positions in ``itertools.permutations(range(d))``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

MAX_ENUM_DIM = 8
FLOAT_TOL = 1e-12

Perm = Tuple[int, ...]
Bits = Tuple[int, ...]


class CopulaError(ValueError):
    """Invalid copula definition or failed copula check."""


# -- permutations and bit vectors ----------------------------------------------------


@lru_cache(maxsize=None)
def perms(d: int) -> Tuple[Perm, ...]:
    """All permutations of ``range(d)`` in lexicographic order."""
    if d > MAX_ENUM_DIM:
        raise CopulaError(f"enumeration capped at d={MAX_ENUM_DIM}")
    return tuple(itertools.permutations(range(d)))


@lru_cache(maxsize=None)
def perm_index(d: int) -> Dict[Perm, int]:
    return {p: i for i, p in enumerate(perms(d))}


@lru_cache(maxsize=None)
def bit_vectors(d: int) -> Tuple[Bits, ...]:
    """All of ``{0,1}^d`` ordered by code, ``alpha_1`` most significant."""
    return tuple(itertools.product((0, 1), repeat=d))


def alpha_code(alpha: Sequence[int]) -> int:
    out = 0
    for a in alpha:
        out = 2 * out + int(a)
    return out


def sgn(beta: Sequence[int]) -> int:
    """Signature of a permutation by cycle counting."""
    seen = [False] * len(beta)
    parity = 0
    for i in range(len(beta)):
        if not seen[i]:
            j, length = i, 0
            while not seen[j]:
                seen[j] = True
                j = beta[j]
                length += 1
            parity += length - 1
    return -1 if parity % 2 else 1


def inverse(beta: Sequence[int]) -> Perm:
    out = [0] * len(beta)
    for i, b in enumerate(beta):
        out[b] = i
    return tuple(out)


def compose(b1: Sequence[int], b2: Sequence[int]) -> Perm:
    """Index tuple ``p`` with ``sigma_p = sigma_b2 o sigma_b1``, i.e. ``p[i] = b1[b2[i]]``."""
    return tuple(b1[i] for i in b2)


def tau(alpha, u):
    """Reflect ``u_i -> 1 - u_i`` where ``alpha_i = 1``; works on trailing axis."""
    alpha = np.asarray(alpha, dtype=bool)
    u = np.asarray(u, dtype=float)
    return np.where(alpha, 1.0 - u, u)


def sigma(beta, u):
    """``sigma_beta(u) = (u_{beta(1)}, ..., u_{beta(d)})`` on the trailing axis."""
    return np.asarray(u)[..., list(beta)]


def chi(b: Sequence[int], j: int, k: int) -> Perm:
    """
    Permutation of ``range(d)`` with ``beta(j) = k`` built from ``b`` in ``S_{d-1}``.

    The other values are those of ``b`` with entries ``>= k`` shifted up by
    one, placed before and after slot ``j`` in order.
    """
    d = len(b) + 1
    if not (0 <= j < d and 0 <= k < d):
        raise CopulaError(f"j={j}, k={k} out of range for d={d}")
    out = []
    for i in range(d):
        if i == j:
            out.append(k)
        else:
            v = b[i] if i < j else b[i - 1]
            out.append(v + (v >= k))
    return tuple(out)


def chi_inverse(beta: Sequence[int], k: int) -> Tuple[int, Perm]:
    """``(j, b)`` with ``chi(b, j, k) == beta``: ``j = beta^{-1}(k)``, the rest shifted down."""
    j = list(beta).index(k)
    b = tuple(v - (v > k) for i, v in enumerate(beta) if i != j)
    return j, b


def omega(k: int, a: Sequence[int], r: int) -> Bits:
    """Insert the bit ``r`` at position ``k`` of ``a``."""
    return tuple(a[:k]) + (int(r),) + tuple(a[k:])


# -- region classification -------------------------------------------------------------


@dataclass(frozen=True)
class RegionKey:
    alpha: Bits
    beta: Perm


BOUNDARY = None


def classify_region(u) -> Optional[RegionKey]:
    """
    The unique ``(alpha, beta)`` whose cell contains ``u``, or ``None`` on the null boundary.

    ``alpha_i = [u_i > 1/2]`` and ``beta`` sorts the reflected coordinates.
    """
    u = np.asarray(u, dtype=float)
    codes, ranks, edge = classify_many(u[None, :])
    if edge[0]:
        return BOUNDARY
    d = len(u)
    return RegionKey(bit_vectors(d)[codes[0]], perms(d)[ranks[0]])


def _lehmer_rank(beta: np.ndarray) -> np.ndarray:
    n, d = beta.shape
    rank = np.zeros(n, dtype=np.int64)
    for i in range(d):
        smaller = (beta[:, i + 1:] < beta[:, i:i + 1]).sum(axis=1)
        rank += smaller * math.factorial(d - 1 - i)
    return rank


def classify_many(u: np.ndarray):
    """
    Vectorized classification of points ``u`` of shape ``(n, d)``.

    Returns ``(alpha_codes, beta_ranks, boundary)`` and the sorted images are
    available from :func:`reference_image`.
    """
    u = np.asarray(u, dtype=float)
    d = u.shape[1]
    alpha = u > 0.5
    q0 = np.where(alpha, 1.0 - u, u)
    beta = np.argsort(q0, axis=1, kind="stable")
    q = np.take_along_axis(q0, beta, axis=1)
    boundary = (u == 0.5).any(axis=1) | (q[:, 0] <= 0.0)
    if d > 1:
        boundary |= (np.diff(q, axis=1) == 0).any(axis=1)
    codes = alpha.astype(np.int64) @ (1 << np.arange(d - 1, -1, -1))
    return codes, _lehmer_rank(beta), boundary


def reference_image(u: np.ndarray) -> np.ndarray:
    """``sigma_beta(tau_alpha(u))``: the reflected coordinates sorted ascending."""
    u = np.asarray(u, dtype=float)
    return np.sort(np.where(u > 0.5, 1.0 - u, u), axis=-1)


# -- epsilon assignments -------------------------------------------------------------


class Epsilon:
    """Sign pattern ``epsilon : {0,1}^d x S_d -> [-1, 1]``."""

    d: int

    def value(self, alpha: Sequence[int], beta: Sequence[int]):
        raise NotImplementedError

    def table(self) -> np.ndarray:
        """Dense ``(2^d, d!)`` array indexed by alpha code and beta rank."""
        return _dense(self)

    def to_dict(self) -> dict:
        raise NotImplementedError


def _dense(eps: "Epsilon") -> np.ndarray:
    vals = [[eps.value(a, b) for b in perms(eps.d)] for a in bit_vectors(eps.d)]
    if all(isinstance(v, (int, np.integer)) for row in vals for v in row):
        return np.array(vals, dtype=np.int64)
    return np.array(vals, dtype=float)


def _check_range(vals) -> None:
    arr = np.asarray(vals, dtype=float)
    if np.any(np.abs(arr) > 1):
        raise CopulaError("epsilon values must lie in [-1, 1]")


@dataclass(frozen=True)
class SignedEpsilon(Epsilon):
    """``epsilon(alpha, beta) = (-1)^{|alpha|} sgn(beta)``; balances every condition."""

    d: int

    def value(self, alpha, beta) -> int:
        return (-1) ** int(sum(alpha)) * sgn(beta)

    def to_dict(self) -> dict:
        return {"form": "signed"}


@dataclass(frozen=True)
class FactoredEpsilon(Epsilon):
    """
    ``epsilon(alpha, beta) = zeta(alpha) psi(beta)``.

    ``zeta`` is indexed by alpha code, ``psi`` by lexicographic beta rank.
    """

    d: int
    zeta: Tuple[Union[int, float], ...]
    psi: Tuple[Union[int, float], ...]

    def __post_init__(self):
        object.__setattr__(self, "zeta", tuple(self.zeta))
        object.__setattr__(self, "psi", tuple(self.psi))
        if len(self.zeta) != 2**self.d or len(self.psi) != math.factorial(self.d):
            raise CopulaError("zeta needs 2^d entries and psi d! entries")
        _check_range(np.outer(self.zeta, self.psi))

    def value(self, alpha, beta):
        return self.zeta[alpha_code(alpha)] * self.psi[perm_index(self.d)[tuple(beta)]]

    def to_dict(self) -> dict:
        return {"form": "factored", "zeta": list(self.zeta), "psi": list(self.psi)}


@dataclass(frozen=True)
class ExplicitEpsilon(Epsilon):
    """Dense table of values, rows by alpha code and columns by beta rank."""

    d: int
    values: np.ndarray = field(compare=False)

    def __post_init__(self):
        if self.d > MAX_ENUM_DIM:
            raise CopulaError(f"explicit tables capped at d={MAX_ENUM_DIM}")
        vals = np.asarray(self.values)
        if vals.shape != (2**self.d, math.factorial(self.d)):
            raise CopulaError(f"table must have shape (2^d, d!) = {(2**self.d, math.factorial(self.d))}")
        _check_range(vals)
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_function(cls, d: int, fn: Callable[[Bits, Perm], float]) -> "ExplicitEpsilon":
        vals = [[fn(a, b) for b in perms(d)] for a in bit_vectors(d)]
        exact = all(isinstance(v, (int, np.integer)) for row in vals for v in row)
        return cls(d, np.array(vals, dtype=np.int64 if exact else float))

    def value(self, alpha, beta):
        v = self.values[alpha_code(alpha), perm_index(self.d)[tuple(beta)]]
        return v.item()

    def table(self) -> np.ndarray:
        return self.values

    def __eq__(self, other):
        return isinstance(other, ExplicitEpsilon) and self.d == other.d and np.array_equal(self.values, other.values)

    def __hash__(self):
        return hash((self.d, self.values.tobytes()))

    def to_dict(self) -> dict:
        entries = []
        for a in bit_vectors(self.d):
            for b in perms(self.d):
                entries.append({"alpha": list(a), "beta": [i + 1 for i in b], "eps": self.value(a, b)})
        return {"form": "explicit", "entries": entries}


def univariate_only_epsilon(d: int = 3) -> FactoredEpsilon:
    """``zeta(alpha) = (-1)^{|alpha|} [alpha_3 = 0]`` with ``psi = sgn``: balanced in pairs, not in triples."""
    if d < 3:
        raise CopulaError("needs d >= 3")
    zeta = tuple((-1) ** sum(a) * (a[2] == 0) for a in bit_vectors(d))
    psi = tuple(sgn(b) for b in perms(d))
    return FactoredEpsilon(d, zeta, psi)


def epsilon_from_dict(d: int, data: dict) -> Epsilon:
    form = data.get("form")
    if form == "signed":
        return SignedEpsilon(d)
    if form == "factored":
        return FactoredEpsilon(d, data["zeta"], data["psi"])
    if form == "explicit":
        vals = np.zeros((2**d, math.factorial(d)))
        for e in data["entries"]:
            beta = tuple(i - 1 for i in e["beta"])
            vals[alpha_code(e["alpha"]), perm_index(d)[beta]] = e["eps"]
        if np.all(vals == np.round(vals)):
            vals = vals.astype(np.int64)
        return ExplicitEpsilon(d, vals)
    raise CopulaError(f"unknown epsilon form {form!r}")


# -- generators and base copulas ------------------------------------------------------


@dataclass(frozen=True)
class ConstGamma:
    value: float

    def __post_init__(self):
        if not self.value >= 0:
            raise CopulaError("gamma must be nonnegative")

    def __call__(self, q):
        return np.full(np.shape(q)[:-1], self.value)

    def sup(self, d: int) -> float:
        return self.value

    def to_dict(self) -> dict:
        return {"form": "const", "value": self.value}


@dataclass(frozen=True)
class GridGamma:
    """Piecewise-constant generator on ``(0, 1/2)^d`` split into ``n^d`` equal cells."""

    values: np.ndarray = field(compare=False)

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if np.any(vals < 0):
            raise CopulaError("gamma must be nonnegative")
        object.__setattr__(self, "values", vals)

    def __call__(self, q):
        q = np.asarray(q, dtype=float)
        n = self.values.shape[0]
        idx = np.clip(np.floor(q * 2 * n).astype(int), 0, n - 1)
        return self.values[tuple(np.moveaxis(idx, -1, 0))]

    def sup(self, d: int) -> float:
        return float(self.values.max())

    def to_dict(self) -> dict:
        return {"form": "grid", "values": self.values.tolist()}


@dataclass(frozen=True)
class FunctionGamma:
    """Caller-supplied generator; ``upper`` bounds it on the reference cell."""

    fn: Callable[[np.ndarray], np.ndarray]
    upper: float

    def __call__(self, q):
        return np.asarray(self.fn(np.asarray(q, dtype=float)), dtype=float)

    def sup(self, d: int) -> float:
        return self.upper

    def to_dict(self) -> dict:
        raise CopulaError("function generators do not serialize")


Gamma = Union[ConstGamma, GridGamma, FunctionGamma]


def gamma_from_dict(data: dict) -> Gamma:
    if data.get("form") == "const":
        return ConstGamma(float(data["value"]))
    if data.get("form") == "grid":
        return GridGamma(np.asarray(data["values"], dtype=float))
    raise CopulaError(f"unknown gamma form {data.get('form')!r}")


@dataclass(frozen=True)
class IndependenceCopula:
    def __call__(self, u):
        return np.ones(np.shape(u)[:-1])

    def sample(self, rng: np.random.Generator, n: int, d: int) -> np.ndarray:
        return rng.random((n, d))

    @property
    def inf(self) -> float:
        return 1.0

    def to_dict(self):
        return "independence"


@dataclass(frozen=True)
class GridCopula:
    """Piecewise-constant copula density on ``n^d`` equal cells of the unit cube."""

    values: np.ndarray = field(compare=False)

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if np.any(vals < 0):
            raise CopulaError("copula density must be nonnegative")
        n = vals.shape[0]
        d = vals.ndim
        for axis in range(d):
            marg = vals.sum(axis=tuple(i for i in range(d) if i != axis)) / n ** (d - 1)
            if not np.allclose(marg, 1.0, atol=1e-9):
                raise CopulaError("grid density must have uniform marginals")
        object.__setattr__(self, "values", vals)

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        n = self.values.shape[0]
        idx = np.clip(np.floor(u * n).astype(int), 0, n - 1)
        return self.values[tuple(np.moveaxis(idx, -1, 0))]

    def sample(self, rng: np.random.Generator, n: int, d: int) -> np.ndarray:
        m = self.values.shape[0]
        p = self.values.ravel() / self.values.sum()
        cells = rng.choice(p.size, size=n, p=p)
        idx = np.stack(np.unravel_index(cells, self.values.shape), axis=-1)
        return (idx + rng.random((n, d))) / m

    @property
    def inf(self) -> float:
        return float(self.values.min())

    def to_dict(self):
        return {"form": "grid", "values": self.values.tolist()}


Base = Union[IndependenceCopula, GridCopula]


def base_from_dict(data) -> Base:
    if data in (None, "independence"):
        return IndependenceCopula()
    if isinstance(data, dict) and data.get("form") == "grid":
        return GridCopula(np.asarray(data["values"], dtype=float))
    raise CopulaError(f"unknown base copula {data!r}")


# -- conditions -------------------------------------------------------------------------


@dataclass(frozen=True)
class CondResult:
    passed: bool
    worst: float


@dataclass(frozen=True)
class ConditionReport:
    """Outcome of the four balance conditions; ``partial`` has one entry per coordinate ``k``."""

    mass: CondResult
    symmetric: CondResult
    partial: Tuple[CondResult, ...]
    marginal: CondResult

    @property
    def all_passed(self) -> bool:
        return self.mass.passed and self.symmetric.passed and self.marginal.passed and all(c.passed for c in self.partial)

    def to_dict(self) -> dict:
        return {
            "mass": vars(self.mass),
            "symmetric": vars(self.symmetric),
            "partial": [vars(c) for c in self.partial],
            "marginal": vars(self.marginal),
        }


def _summarize(sums: List) -> CondResult:
    worst = max((abs(s) for s in sums), default=0)
    exact = all(isinstance(s, (int, np.integer)) for s in sums)
    passed = worst == 0 if exact else worst <= FLOAT_TOL
    return CondResult(bool(passed), float(worst))


def _lookup(table: np.ndarray, d: int):
    index = perm_index(d)

    def eps(alpha, beta):
        v = table[alpha_code(alpha), index[tuple(beta)]]
        return int(v) if table.dtype.kind == "i" else float(v)

    return eps


def _exact_sum(values):
    values = list(values)
    if all(isinstance(v, int) for v in values):
        return sum(values)
    return math.fsum(values)


def check_conditions(epsilon: Epsilon, d: Optional[int] = None) -> ConditionReport:
    """
    Enumerate the balance conditions on ``epsilon``.

    * total mass: ``sum_{alpha, beta} epsilon = 0``;
    * symmetric statistics: ``sum_beta epsilon(sigma_{beta^-1}(alpha), beta) = 0`` for each ``alpha``;
    * per coordinate ``k``: ``sum_r epsilon(omega_k(a, r), chi_j(b, k)) = 0`` for all ``j, a, b``;
    * 1-D marginals: ``sum_{a, b} epsilon(omega_k(a, r), chi_j(b, k)) = 0`` for all ``j, k`` and ``r = 0, 1``.

    Integer-valued assignments are summed exactly.
    """
    d = epsilon.d if d is None else d
    if d != epsilon.d:
        raise CopulaError("dimension mismatch")
    if d > MAX_ENUM_DIM:
        raise CopulaError(f"enumeration capped at d={MAX_ENUM_DIM}")
    eps = _lookup(epsilon.table(), d)
    alphas, betas = bit_vectors(d), perms(d)
    c23 = _summarize([_exact_sum(eps(a, b) for a in alphas for b in betas)])
    c24 = _summarize([
        _exact_sum(eps(tuple(sigma(inverse(b), np.array(a))), b) for b in betas) for a in alphas
    ])
    sub_alphas, sub_betas = bit_vectors(d - 1), perms(d - 1)
    c25 = []
    for k in range(d):
        sums = []
        for j in range(d):
            for b in sub_betas:
                beta = chi(b, j, k)
                for a in sub_alphas:
                    sums.append(_exact_sum(eps(omega(k, a, r), beta) for r in (0, 1)))
        c25.append(_summarize(sums))
    sums26 = []
    for j in range(d):
        for k in range(d):
            for r in (0, 1):
                sums26.append(_exact_sum(eps(omega(k, a, r), chi(b, j, k)) for a in sub_alphas for b in sub_betas))
    return ConditionReport(c23, c24, tuple(c25), _summarize(sums26))


def alternating_sign_check(epsilon: Epsilon, d: Optional[int] = None) -> bool:
    """
    Whether the per-coordinate condition holds for every ``k``.

    Computed twice: by enumeration over ``chi`` and ``omega``, and by the
    characterization ``epsilon(alpha, beta) = (-1)^{|alpha|} epsilon(0, beta)``.
    A disagreement raises, since it signals an error in one of the routes.
    """
    d = epsilon.d if d is None else d
    if d > 6:
        raise CopulaError("dual-route check capped at d=6")
    direct = all(c.passed for c in check_conditions(epsilon, d).partial)
    eps = _lookup(epsilon.table(), d)
    zero = (0,) * d
    tol_ok = (lambda x: x == 0) if epsilon.table().dtype.kind == "i" else (lambda x: abs(x) <= FLOAT_TOL)
    characterized = all(
        tol_ok(eps(a, b) - (-1) ** sum(a) * eps(zero, b)) for a in bit_vectors(d) for b in perms(d)
    )
    if direct != characterized:
        raise CopulaError(f"routes disagree: enumeration={direct}, characterization={characterized}")
    return direct


# -- the perturbed copula ---------------------------------------------------------------


CONDITION_NAMES = ("mass", "symmetric", "partial", "marginal")


@dataclass(frozen=True)
class CopulaSpec:
    """
    Perturbed copula ``theta = c - epsilon * gamma`` on the cell partition.

    ``require`` lists conditions (``"mass"``, ``"symmetric"``, ``"partial"``, ``"marginal"``) that
    must hold; they are verified at construction.
    """

    d: int
    epsilon: Epsilon
    gamma: Gamma
    base: Base = field(default_factory=IndependenceCopula)
    require: Tuple[str, ...] = ()
    _table: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.d < 2:
            raise CopulaError("d must be >= 2")
        if self.epsilon.d != self.d:
            raise CopulaError("epsilon dimension mismatch")
        object.__setattr__(self, "_table", self.epsilon.table())
        object.__setattr__(self, "require", tuple(str(r) for r in self.require))
        if self.require:
            rep = check_conditions(self.epsilon)
            status = {
                "mass": rep.mass.passed,
                "symmetric": rep.symmetric.passed,
                "partial": all(c.passed for c in rep.partial),
                "marginal": rep.marginal.passed,
            }
            for name in self.require:
                if name not in status:
                    raise CopulaError(f"unknown condition {name!r}")
                if not status[name]:
                    raise CopulaError(f"epsilon violates required condition ({name})")

    @property
    def table(self) -> np.ndarray:
        return self._table

    def to_dict(self) -> dict:
        return {
            "d": self.d,
            "epsilon": self.epsilon.to_dict(),
            "gamma": self.gamma.to_dict(),
            "base": self.base.to_dict(),
            "require": list(self.require),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "CopulaSpec":
        try:
            d = int(data["d"])
            return cls(
                d,
                epsilon_from_dict(d, data["epsilon"]),
                gamma_from_dict(data["gamma"]),
                base_from_dict(data.get("base")),
                tuple(data.get("require", ())),
            )
        except KeyError as exc:
            raise CopulaError(f"missing field {exc} in copula spec") from None


def signed_spec(d: int, gamma: float = 0.5, base: Optional[Base] = None) -> CopulaSpec:
    return CopulaSpec(d, SignedEpsilon(d), ConstGamma(gamma), base or IndependenceCopula())


def theta_eval(spec: CopulaSpec, u, check_bound: bool = False):
    """
    Perturbed copula density at ``u`` (trailing axis ``d``).

    Only one cell is live at any point, so this is ``c(u)`` minus one signed
    generator value; boundary points return ``c(u)``.  With ``check_bound``
    a generator above :func:`gamma_bound` raises.
    """
    u = np.asarray(u, dtype=float)
    flat = u.reshape(-1, spec.d)
    codes, ranks, edge = classify_many(flat)
    q = reference_image(flat)
    g = spec.gamma(q)
    if check_bound:
        live = ~edge
        bound = gamma_bound(spec, q[live])
        if np.any(g[live] > bound + FLOAT_TOL):
            raise CopulaError("gamma exceeds its nonnegativity bound")
    eps = spec.table[codes, ranks]
    out = spec.base(flat) - np.where(edge, 0.0, eps * g)
    out = out.reshape(u.shape[:-1])
    return float(out) if out.ndim == 0 else out


def gamma_bound(spec: CopulaSpec, q):
    """
    ``min_{epsilon > 0} c(tau_alpha(sigma_{beta^-1}(q))) / epsilon(alpha, beta)`` for ``q`` in the reference cell.

    Returns ``inf`` when no sign is positive.
    """
    q = np.asarray(q, dtype=float)
    table = spec.table
    out = np.full(q.shape[:-1], np.inf)
    for ia, a in enumerate(bit_vectors(spec.d)):
        for ib, b in enumerate(perms(spec.d)):
            e = float(table[ia, ib])
            if e > 0:
                out = np.minimum(out, spec.base(tau(a, sigma(inverse(b), q))) / e)
    return float(out) if out.ndim == 0 else out


def sample_reference(rng: np.random.Generator, n: int, d: int) -> np.ndarray:
    """Uniform points of the reference cell ``0 < q_1 < ... < q_d < 1/2``."""
    return np.sort(0.5 * rng.random((n, d)), axis=1)


def default_gamma(epsilon: Epsilon, base: Optional[Base] = None, probes: int = 10_000, seed: int = 0) -> ConstGamma:
    """Half the smallest nonnegativity bound seen on ``probes`` reference points."""
    base = base or IndependenceCopula()
    spec = CopulaSpec(epsilon.d, epsilon, ConstGamma(0.0), base)
    q = sample_reference(np.random.default_rng(seed), probes, epsilon.d)
    low = float(np.min(gamma_bound(spec, q)))
    if not math.isfinite(low):
        low = 1.0
    return ConstGamma(0.5 * low)


def envelope(spec: CopulaSpec) -> float:
    """Rejection constant ``1 + sup|epsilon| sup(gamma) / inf(c)`` against the base sampler."""
    inf_c = spec.base.inf
    if inf_c <= 0:
        raise CopulaError("base density vanishes somewhere; no finite envelope")
    return 1.0 + float(np.max(np.abs(spec.table))) * spec.gamma.sup(spec.d) / inf_c


def stream_seeds(seed: int, streams: int) -> List[np.random.SeedSequence]:
    """Independent child seeds of a master seed (``SeedSequence.spawn``)."""
    return np.random.SeedSequence(seed).spawn(streams)


def sample_theta(spec: CopulaSpec, n: int, seed: int, streams: int = 1) -> np.ndarray:
    """
    Exact draws from ``theta`` by rejection against the base copula.

    Each of ``streams`` child seeds produces a contiguous share of the
    ``n`` points, so results depend only on ``(seed, streams)``.
    """
    m = envelope(spec)
    shares = np.array_split(np.arange(n), streams)
    out = []
    for child, share in zip(stream_seeds(seed, streams), shares):
        rng = np.random.default_rng(child)
        got: List[np.ndarray] = []
        need = len(share)
        while need > 0:
            batch = max(1024, int(1.2 * need * m))
            u = spec.base.sample(rng, batch, spec.d)
            accept = rng.random(batch) * m * spec.base(u) < theta_eval(spec, u)
            keep = u[accept][:need]
            got.append(keep)
            need -= len(keep)
        out.append(np.concatenate(got) if got else np.empty((0, spec.d)))
    return np.concatenate(out) if out else np.empty((0, spec.d))


# -- the bivariate octal form -----------------------------------------------------------


def octal_theta(c: Callable, gamma: Callable, u) -> float:
    """
    Bivariate octal perturbation, evaluated branch by branch.

    ``c`` and ``gamma`` take a point of shape ``(2,)``.  Points on the
    diagonals, anti-diagonals or mid-lines return ``c(u)``.
    """
    u1, u2 = float(u[0]), float(u[1])
    base = float(c(np.array([u1, u2])))

    def g(a, b):
        return float(gamma(np.array([a, b])))

    if u1 < u2 < 0.5:
        return base - g(u1, u2)
    if 0.5 < u2 < 1 - u1:
        return base + g(u1, 1 - u2)
    if 1 - u2 < u1 < 0.5:
        return base - g(1 - u2, u1)
    if 0.5 < u1 < u2:
        return base + g(1 - u2, 1 - u1)
    if 0.5 < u2 < u1:
        return base - g(1 - u1, 1 - u2)
    if 1 - u1 < u2 < 0.5:
        return base + g(1 - u1, u2)
    if 0.5 < u1 < 1 - u2:
        return base - g(u2, 1 - u1)
    if u2 < u1 < 0.5:
        return base + g(u2, u1)
    return base
