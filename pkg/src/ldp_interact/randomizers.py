"""Local randomizers as exact conditional probability tables.

A :class:`Randomizer` maps each datum to a row distribution over messages.
Tables (rather than samplers) are what make posteriors, rejection-sampling
acceptance probabilities and privacy audits exactly computable.
"""
from __future__ import annotations

import bisect
import math
from collections.abc import Callable, Hashable, Sequence
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any

import numpy as np

from ldp_interact.dist import FiniteDist, SeededRng
from ldp_interact.errors import (
    InvalidParameterError,
    NonPureRandomizerError,
    UnknownSymbolError,
)

# Slack for float round-off in table checks and decompositions.
TABLE_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class Randomizer:
    """Finite-table local randomizer ``R: X -> Y``.

    Attributes:
      domain: data symbols X, in row order.
      range: message symbols Y, in column order.
      table: ``|X| x |Y|`` array, row ``x`` is the law of ``R(x)``.
      declared_eps: privacy parameter the randomizer claims.
      declared_delta: additive slack it claims.
    """

    domain: tuple
    range: tuple
    table: np.ndarray
    declared_eps: float
    declared_delta: float = 0.0
    name: str = ""
    _dom_index: dict = field(init=False, repr=False)

    def __post_init__(self):
        domain = tuple(self.domain)
        rng_ = tuple(self.range)
        table = np.array(self.table, dtype=float)
        if table.shape != (len(domain), len(rng_)):
            raise InvalidParameterError(
                f"table shape {table.shape} != ({len(domain)}, {len(rng_)})")
        if len(set(domain)) != len(domain) or len(set(rng_)) != len(rng_):
            raise InvalidParameterError("domain and range symbols must be distinct")
        # Validates and renormalises each row.
        rows = [FiniteDist(rng_, row) for row in table]
        table = np.vstack([r.probs for r in rows]) if rows else table
        table.setflags(write=False)
        if self.declared_eps < 0 or not 0 <= self.declared_delta <= 1:
            raise InvalidParameterError("declared_eps must be >= 0 and declared_delta in [0, 1]")
        object.__setattr__(self, "domain", domain)
        object.__setattr__(self, "range", rng_)
        object.__setattr__(self, "table", table)
        object.__setattr__(self, "_dom_index", {x: i for i, x in enumerate(domain)})

    @cached_property
    def rows(self) -> tuple[FiniteDist, ...]:
        return tuple(FiniteDist(self.range, row) for row in self.table)

    @cached_property
    def _cdfs(self) -> list[list[float]]:
        out = []
        for row in self.table:
            cdf = np.cumsum(row).tolist()
            cdf[-1] = 1.0
            out.append(cdf)
        return out

    @cached_property
    def _msg_index(self) -> dict:
        return {y: j for j, y in enumerate(self.range)}

    def row(self, x: Hashable) -> FiniteDist:
        return self.rows[self.domain_index(x)]

    def domain_index(self, x: Hashable) -> int:
        try:
            return self._dom_index[x]
        except KeyError:
            raise UnknownSymbolError(f"{x!r} is not in the randomizer domain") from None

    def message_index(self, y: Hashable) -> int:
        try:
            return self._msg_index[y]
        except KeyError:
            raise UnknownSymbolError(f"{y!r} is not in the randomizer range") from None

    def likelihood(self, y: Hashable) -> np.ndarray:
        """Column ``P[R(x) = y]`` for every ``x`` in domain order."""
        return self.table[:, self.message_index(y)]

    @cached_property
    def min_eps(self) -> float:
        return minimal_eps(self)

    def is_pure_dp(self, eps: float | None = None) -> bool:
        """Exhaustive table check of ``row(x)(y) <= e^eps row(x')(y) + delta``."""
        eps = self.declared_eps if eps is None else eps
        t = self.table
        hi = t.max(axis=0)
        lo = t.min(axis=0)
        bound = math.exp(eps) * lo + self.declared_delta
        return bool(np.all(hi <= bound * (1 + 1e-9) + TABLE_TOL))

    def __repr__(self) -> str:
        label = self.name or "Randomizer"
        return f"<{label} |X|={len(self.domain)} |Y|={len(self.range)} eps={self.declared_eps:.4g}>"


def make_randomized_response(domain_size: int, eps: float) -> Randomizer:
    """k-ary randomized response over ``{0, ..., k-1}``."""
    k = int(domain_size)
    if k < 2 or not eps > 0:
        raise InvalidParameterError("randomized response needs k >= 2 and eps > 0")
    denom = math.exp(eps) + k - 1
    lie = 1.0 / denom
    table = np.full((k, k), lie)
    np.fill_diagonal(table, math.exp(eps) / denom)
    return Randomizer(tuple(range(k)), tuple(range(k)), table, eps, 0.0, name=f"RR(k={k})")


def make_bernoulli(p: float, domain: Sequence[Hashable] = (0, 1)) -> Randomizer:
    """Data-independent coin: every datum publishes ``Ber(p)``."""
    if not 0.0 <= p <= 1.0:
        raise InvalidParameterError(f"bernoulli parameter {p} outside [0, 1]")
    domain = tuple(domain)
    table = np.tile([1.0 - p, p], (len(domain), 1))
    return Randomizer(domain, (0, 1), table, 0.0, 0.0, name=f"Ber({p:g})")


def make_binary(domain: Sequence[Hashable], p_one: Callable[[Any], float] | Sequence[float],
                declared_eps: float | None = None, name: str = "") -> Randomizer:
    """Binary-message randomizer from per-datum ``P[y = 1]``."""
    domain = tuple(domain)
    if callable(p_one):
        ones = np.array([p_one(x) for x in domain], dtype=float)
    else:
        ones = np.array(p_one, dtype=float)
    table = np.column_stack([1.0 - ones, ones])
    r = Randomizer(domain, (0, 1), table, 0.0, 0.0, name=name)
    eps = r.min_eps if declared_eps is None else declared_eps
    return Randomizer(domain, (0, 1), r.table, eps, 0.0, name=name)


def make_indicator_rr(domain: Sequence[Hashable], predicate: Callable[[Any], bool],
                      eps: float, name: str = "") -> Randomizer:
    """Binary randomized response applied to the bit ``predicate(x)``."""
    keep = math.exp(eps) / (math.exp(eps) + 1.0)
    return make_binary(domain, lambda x: keep if predicate(x) else 1.0 - keep,
                       declared_eps=eps, name=name or "indicatorRR")


def minimal_eps(r: Randomizer) -> float:
    """Smallest ``eps`` for which ``r`` is ``(eps, 0)``-DP, or ``inf``.

    Equals ``max_{x, x', y} ln(r(x)(y) / r(x')(y))``; only messages with
    positive probability under some datum contribute.
    """
    t = r.table
    hi = t.max(axis=0)
    lo = t.min(axis=0)
    live = hi > 0
    if np.any(lo[live] == 0):
        return math.inf
    if not np.any(live):
        return 0.0
    return max(0.0, float(np.max(np.log(hi[live]) - np.log(lo[live]))))


@dataclass(frozen=True, eq=False)
class Decomposition:
    """``R(x) = gamma * r_tilde(x) + (1 - gamma) * mu`` with ``mu = R(anchor_x0)``."""

    gamma: float
    mu: FiniteDist
    r_tilde: Randomizer
    eps_prime: float
    eps: float
    anchor_x0: Hashable
    degenerate: bool = False

    def reconstruct(self) -> np.ndarray:
        return self.gamma * self.r_tilde.table + (1.0 - self.gamma) * self.mu.probs[None, :]


def decompose(r: Randomizer, eps: float, anchor_x0: Hashable | None = None) -> Decomposition:
    """Split ``r`` into a data-independent part and a ``2 eps``-DP remainder.

    Args:
      r: a pure-DP randomizer with ``minimal_eps(r) <= eps``.
      eps: the target budget; larger values push more mass into ``mu``.
      anchor_x0: datum whose row becomes ``mu``. Defaults to ``r.domain[0]``.

    Returns:
      The decomposition. A data-independent ``r`` yields ``gamma = 0`` with
      ``degenerate=True`` and ``r_tilde`` equal to ``mu`` on every row.
    """
    if anchor_x0 is None:
        anchor_x0 = r.domain[0]
    x0 = r.domain_index(anchor_x0)
    eps_prime = r.min_eps
    if math.isinf(eps_prime) or r.declared_delta > 0:
        raise NonPureRandomizerError("decomposition requires a pure (eps, 0) randomizer")
    if eps_prime > eps * (1 + 1e-12) + 1e-15:
        raise InvalidParameterError(
            f"target eps {eps} is below the randomizer's minimal eps {eps_prime}")
    mu_row = r.table[x0]
    mu = FiniteDist(r.range, mu_row)
    if eps_prime == 0.0:
        tilde = np.tile(mu.probs, (len(r.domain), 1))
        r_tilde = Randomizer(r.domain, r.range, tilde, 0.0, 0.0, name="r_tilde")
        return Decomposition(0.0, mu, r_tilde, 0.0, eps, anchor_x0, degenerate=True)
    gamma = math.expm1(-eps_prime) / math.expm1(-eps)
    gamma = min(gamma, 1.0)
    tilde = mu_row[None, :] + (r.table - mu_row[None, :]) / gamma
    # Pure DP gives tilde >= e^{-eps} mu >= 0, so only round-off is clipped.
    if np.any(tilde < -1e-12):
        raise InvalidParameterError("negative mass in r_tilde; randomizer violates its eps")
    tilde = np.clip(tilde, 0.0, None)
    r_tilde = Randomizer(r.domain, r.range, tilde, 2.0 * eps, 0.0, name="r_tilde")
    return Decomposition(gamma, mu, r_tilde, eps_prime, eps, anchor_x0)


def apply(r: Randomizer, x: Hashable, rng: SeededRng) -> Any:
    """Publish one message ``y ~ r(x)`` using fresh randomness."""
    cdf = r._cdfs[r.domain_index(x)]
    return r.range[bisect.bisect_right(cdf, rng.random())]


def apply_index(r: Randomizer, xi: int, rng: SeededRng) -> int:
    return bisect.bisect_right(r._cdfs[xi], rng.random())
