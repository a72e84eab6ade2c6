"""Exact finite distributions, divergences and the seeded random source.

Everything downstream (randomizer rows, posteriors, transcript laws) is a
:class:`FiniteDist`.  Divergences use the natural logarithm.
"""
from __future__ import annotations

import bisect
import math
from collections.abc import Hashable, Iterable, Mapping, Sequence
from typing import Any

import numpy as np

from ldp_interact.errors import InvalidParameterError, SupportError, UnknownSymbolError

# Sums farther than this from 1 are rejected; closer ones are renormalised.
RENORM_TOL = 1e-9

_BUFFER = 512


class FiniteDist:
    """Immutable probability mass function over an ordered finite support."""

    __slots__ = ("support", "probs", "_index", "_cdf")

    def __init__(self, support: Sequence[Hashable], probs: Sequence[float]):
        support = tuple(support)
        p = np.array(probs, dtype=float).reshape(-1)
        if len(support) != p.size:
            raise InvalidParameterError(
                f"support has {len(support)} symbols but {p.size} probabilities")
        if p.size == 0:
            raise InvalidParameterError("empty support")
        if len(set(support)) != len(support):
            raise InvalidParameterError("support symbols must be distinct")
        if not np.all(np.isfinite(p)) or np.any(p < 0):
            raise InvalidParameterError("probabilities must be finite and >= 0")
        total = float(math.fsum(p))
        if abs(total - 1.0) > RENORM_TOL:
            raise InvalidParameterError(f"probabilities sum to {total!r}, not 1")
        if total != 1.0:
            p = p / total
        p.setflags(write=False)
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "probs", p)
        object.__setattr__(self, "_index", {s: i for i, s in enumerate(support)})
        cdf = list(np.cumsum(p))
        cdf[-1] = 1.0
        object.__setattr__(self, "_cdf", cdf)

    def __setattr__(self, name, value):
        raise AttributeError("FiniteDist is immutable")

    @classmethod
    def from_mapping(cls, mapping: Mapping[Hashable, float]) -> FiniteDist:
        return cls(list(mapping.keys()), list(mapping.values()))

    @classmethod
    def uniform(cls, support: Iterable[Hashable]) -> FiniteDist:
        support = tuple(support)
        return cls(support, np.full(len(support), 1.0 / len(support)))

    @classmethod
    def point_mass(cls, symbol: Hashable) -> FiniteDist:
        return cls((symbol,), (1.0,))

    @classmethod
    def bernoulli(cls, p: float) -> FiniteDist:
        """Distribution over ``(0, 1)`` with ``P[1] = p``."""
        if not 0.0 <= p <= 1.0:
            raise InvalidParameterError(f"bernoulli parameter {p} outside [0, 1]")
        return cls((0, 1), (1.0 - p, p))

    def prob(self, symbol: Hashable) -> float:
        i = self._index.get(symbol)
        return 0.0 if i is None else float(self.probs[i])

    def index(self, symbol: Hashable) -> int:
        try:
            return self._index[symbol]
        except KeyError:
            raise UnknownSymbolError(symbol) from None

    def __contains__(self, symbol: Hashable) -> bool:
        return symbol in self._index

    def __len__(self) -> int:
        return len(self.support)

    def items(self):
        return zip(self.support, self.probs.tolist())

    def as_dict(self) -> dict[Hashable, float]:
        return dict(self.items())

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, FiniteDist):
            return NotImplemented
        return self.support == other.support and bool(np.array_equal(self.probs, other.probs))

    def __hash__(self) -> int:
        return hash((self.support, self.probs.tobytes()))

    def __repr__(self) -> str:
        body = ", ".join(f"{s!r}: {p:.6g}" for s, p in self.items())
        return f"FiniteDist({{{body}}})"


class SeededRng:
    """Reproducible random stream backed by numpy's PCG64 and ``SeedSequence``.

    Child streams come from :meth:`derive`, which extends the spawn key, so
    trials run with derived seeds are statistically independent and can be
    scheduled in any order.  Scalar uniforms are served from a small buffer
    because the protocol simulators draw them one at a time.

    A stream has a single owner; never share one between threads.
    """

    def __init__(self, seed: int, key: Sequence[int] = ()):
        if not 0 <= int(seed) < 2**64:
            raise InvalidParameterError("seed must be a 64-bit unsigned integer")
        self.seed = int(seed)
        self.key = tuple(int(k) for k in key)
        self._ss = np.random.SeedSequence(self.seed, spawn_key=self.key)
        self.gen = np.random.Generator(np.random.PCG64(self._ss))
        self._buf: list[float] = []

    def derive(self, *key: int) -> SeededRng:
        return SeededRng(self.seed, self.key + tuple(key))

    def random(self) -> float:
        """Uniform draw in [0, 1)."""
        buf = self._buf
        if not buf:
            buf.extend(self.gen.random(_BUFFER).tolist()[::-1])
        return buf.pop()

    def __repr__(self) -> str:
        return f"SeededRng(seed={self.seed}, key={self.key})"


def sample(d: FiniteDist, rng: SeededRng) -> Any:
    """Draw one symbol from ``d``."""
    return d.support[bisect.bisect_right(d._cdf, rng.random())]


def sample_index(d: FiniteDist, rng: SeededRng) -> int:
    return bisect.bisect_right(d._cdf, rng.random())


def sample_many(d: FiniteDist, size: int, rng: SeededRng) -> np.ndarray:
    """Vectorised draws returned as support indices."""
    idx = np.searchsorted(np.asarray(d._cdf), rng.gen.random(size), side="right")
    return np.minimum(idx, len(d) - 1)


def aligned(p: FiniteDist, q: FiniteDist) -> tuple[np.ndarray, np.ndarray]:
    """Both pmfs over the union of supports (absent symbols get mass 0)."""
    if p.support == q.support:
        return np.asarray(p.probs), np.asarray(q.probs)
    symbols = list(p.support) + [s for s in q.support if s not in p]
    return (np.array([p.prob(s) for s in symbols]),
            np.array([q.prob(s) for s in symbols]))


def tv_distance(p: FiniteDist, q: FiniteDist) -> float:
    a, b = aligned(p, q)
    return min(1.0, 0.5 * float(np.abs(a - b).sum()))


def kl_divergence(p: FiniteDist, q: FiniteDist) -> float:
    a, b = aligned(p, q)
    mask = a > 0
    if np.any(b[mask] == 0):
        raise SupportError("KL undefined: p puts mass where q has none")
    return max(0.0, float(np.sum(a[mask] * (np.log(a[mask]) - np.log(b[mask])))))


def hellinger_sq(p: FiniteDist, q: FiniteDist) -> float:
    a, b = aligned(p, q)
    return min(1.0, max(0.0, 1.0 - float(np.sum(np.sqrt(a * b)))))
