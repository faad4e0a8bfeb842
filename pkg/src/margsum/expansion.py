"""
Sparse multi-index coefficient tables and the matching conditions on them.

A table ``H`` describes the joint law of ``Y`` through the mean-square
expansion of its density against the product law,

.. math::
    \\frac{d\\mathcal{L}(Y)}{d\\mu^{\\otimes}}(x)
        = \\sum_n H_n \\prod_i P_{n_i}(x_i; r_i),

with ``H_0 = 1`` implicit.  Marginals match when no stored index has a single
nonzero entry; the law of the sum matches when for every total degree ``m``
the weighted sum ``sum_{<n>=m} H_n prod h_{n_i} / n_i!`` vanishes.
"""

from __future__ import annotations

import itertools
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Sequence, Tuple

from .meixner import N_MAX, MeixnerSpec, poly_norm

ZERO_TOL = 1e-12
MAX_ORBIT_DIM = 8

Index = Tuple[int, ...]


class ExpansionError(ValueError):
    """Malformed coefficient table or incompatible specs."""


@dataclass(frozen=True)
class CoefficientTable:
    """
    Immutable sparse map from multi-indices to coefficients ``H_n``.

    Exact zeros are dropped; the zero index is implicit and may not be stored
    with any value other than 1.

    Examples
    --------
    >>> H = CoefficientTable.from_items(2, {(1, 3): -1.0, (3, 1): 1.0})
    >>> H[(1, 3)], H[(2, 2)], H.degree
    (-1.0, 0.0, 4)
    """

    d: int
    coeffs: Mapping[Index, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.d < 2:
            raise ExpansionError(f"dimension must be >= 2, got {self.d}")
        clean: Dict[Index, float] = {}
        for idx, val in self.coeffs.items():
            idx = tuple(int(k) for k in idx)
            if len(idx) != self.d:
                raise ExpansionError(f"index {idx} has length {len(idx)}, expected {self.d}")
            if any(k < 0 for k in idx):
                raise ExpansionError(f"negative entry in index {idx}")
            if sum(idx) > N_MAX:
                raise ExpansionError(f"index {idx} exceeds total degree {N_MAX}")
            val = float(val)
            if sum(idx) == 0:
                if val != 1.0:
                    raise ExpansionError("the zero index is fixed at 1")
                continue
            if val != 0.0:
                clean[idx] = clean.get(idx, 0.0) + val
        object.__setattr__(self, "coeffs", dict(sorted(clean.items())))

    @classmethod
    def from_items(cls, d: int, items: Mapping[Sequence[int], float]) -> "CoefficientTable":
        return cls(d, {tuple(k): v for k, v in items.items()})

    @classmethod
    def zero(cls, d: int) -> "CoefficientTable":
        return cls(d, {})

    def __getitem__(self, idx: Sequence[int]) -> float:
        idx = tuple(idx)
        if sum(idx) == 0:
            return 1.0
        return self.coeffs.get(idx, 0.0)

    def __iter__(self):
        return iter(self.coeffs.items())

    def __len__(self) -> int:
        return len(self.coeffs)

    def __add__(self, other: "CoefficientTable") -> "CoefficientTable":
        if other.d != self.d:
            raise ExpansionError("dimension mismatch")
        out = dict(self.coeffs)
        for idx, val in other:
            out[idx] = out.get(idx, 0.0) + val
        return CoefficientTable(self.d, out)

    def scale(self, factor: float) -> "CoefficientTable":
        return CoefficientTable(self.d, {k: factor * v for k, v in self})

    def permute(self, perm: Sequence[int]) -> "CoefficientTable":
        """Table of ``(Y_{perm[0]}, ..., Y_{perm[d-1]})``."""
        return CoefficientTable(self.d, {tuple(idx[p] for p in perm): v for idx, v in self})

    def embed(self, d: int, coords: Sequence[int]) -> "CoefficientTable":
        """Place this table on the coordinates ``coords`` of a ``d``-dimensional table."""
        if len(coords) != self.d:
            raise ExpansionError("coords must list one target per source coordinate")
        out = {}
        for idx, val in self:
            full = [0] * d
            for c, k in zip(coords, idx):
                full[c] = k
            out[tuple(full)] = val
        return CoefficientTable(d, out)

    @property
    def degree(self) -> int:
        """Largest total degree present (0 for the empty table)."""
        return max((sum(idx) for idx in self.coeffs), default=0)

    def to_dict(self) -> dict:
        return {"d": self.d, "coeffs": [{"n": list(idx), "H": val} for idx, val in self]}

    @classmethod
    def from_dict(cls, data: dict) -> "CoefficientTable":
        try:
            return cls(int(data["d"]), {tuple(e["n"]): e["H"] for e in data["coeffs"]})
        except (KeyError, TypeError) as exc:
            raise ExpansionError(f"malformed coefficient table: {exc}") from None


def _check_specs(H: CoefficientTable, specs: Sequence[MeixnerSpec]) -> None:
    if len(specs) != H.d:
        raise ExpansionError(f"expected {H.d} specs, got {len(specs)}")
    first = specs[0]
    for s in specs[1:]:
        if not first.same_class(s):
            raise ExpansionError("all specs must share one Meixner class")


def check_marginal_condition(H: CoefficientTable) -> List[Index]:
    """Stored indices with exactly one nonzero entry; empty iff all marginals match."""
    return [idx for idx, val in H if sum(1 for k in idx if k) == 1 and val != 0.0]


def _weighted_degree_sums(items: Iterable[Tuple[Index, float]], specs: Sequence[MeixnerSpec]) -> Dict[int, float]:
    out: Dict[int, float] = defaultdict(float)
    for idx, val in items:
        w = val
        for k, spec in zip(idx, specs):
            w *= poly_norm(spec, k) / math.factorial(k)
        out[sum(idx)] += w
    return dict(sorted(out.items()))


def check_sum_condition(H: CoefficientTable, specs: Sequence[MeixnerSpec]) -> Dict[int, float]:
    """
    Residual ``sum_{<n>=m} H_n prod_i h_{n_i}(r_i) / n_i!`` per total degree ``m``.

    The sum ``Y_1 + ... + Y_d`` has the law of ``X_1 + ... + X_d`` iff every
    residual vanishes.
    """
    _check_specs(H, specs)
    return _weighted_degree_sums(H, specs)


def check_subsum_condition(H: CoefficientTable, A: Iterable[int], specs: Sequence[MeixnerSpec]) -> Dict[int, float]:
    """
    Residuals for the partial sum over the coordinates in ``A`` (0-based).

    Only indices vanishing off ``A`` contribute: they form the coefficient
    table of the sub-vector ``Y_A``.
    """
    _check_specs(H, specs)
    A = sorted(set(int(i) for i in A))
    if not A:
        raise ExpansionError("subset must be nonempty")
    if A[0] < 0 or A[-1] >= H.d:
        raise ExpansionError(f"subset {A} out of range for d={H.d}")
    off = [i for i in range(H.d) if i not in A]
    items = [(idx, v) for idx, v in H if all(idx[i] == 0 for i in off)]
    return _weighted_degree_sums(items, specs)


@dataclass(frozen=True)
class Orbit:
    """Coordinate-permutation orbit of a multi-index and its permuted sum."""

    members: Tuple[Index, ...]
    total: float


def check_symmetric_condition(H: CoefficientTable) -> List[Orbit]:
    """
    Orbits whose sum ``sum_{beta in S_d} H_{sigma_beta(n)}`` is nonzero.

    Every symmetric statistic of ``Y`` matches iff the returned list is empty.
    The sum runs over all ``d!`` permutations, so an orbit member fixed by a
    permutation subgroup is counted with that subgroup's order.
    """
    if H.d > MAX_ORBIT_DIM:
        raise ExpansionError(f"orbit enumeration capped at d={MAX_ORBIT_DIM}")
    groups: Dict[Index, List[Index]] = defaultdict(list)
    for idx, _ in H:
        groups[tuple(sorted(idx))].append(idx)
    out = []
    for key, members in groups.items():
        stab = 1
        for k in set(key):
            stab *= math.factorial(key.count(k))
        total = stab * sum(H[idx] for idx in members)
        if abs(total) > ZERO_TOL:
            out.append(Orbit(tuple(sorted(members)), total))
    return out


def check_square_summable(H: CoefficientTable, specs: Sequence[MeixnerSpec]) -> float:
    """``1 + sum_n H_n^2 prod_i h_{n_i}(r_i)``; finite for any finite table."""
    _check_specs(H, specs)
    total = 1.0
    for idx, val in H:
        w = val * val
        for k, spec in zip(idx, specs):
            w *= poly_norm(spec, k)
        total += w
    return total


def all_zero(residuals: Mapping[int, float], tol: float = ZERO_TOL) -> bool:
    return all(abs(v) <= tol for v in residuals.values())


def pairwise_table(d: int, pair_table: CoefficientTable) -> CoefficientTable:
    """Sum of copies of a bivariate table placed on every coordinate pair ``i < j``."""
    if pair_table.d != 2:
        raise ExpansionError("pair table must be bivariate")
    out = CoefficientTable.zero(d)
    for i, j in itertools.combinations(range(d), 2):
        out = out + pair_table.embed(d, (i, j))
    return out
