"""Transcripts, protocols and the two experiment semantics.

``follow_expt`` draws every user's datum once and keeps it; ``bayes_expt``
redraws the selected user's datum from its posterior before each round.
Both produce the same transcript law, which is what the reduction exploits.
"""
from __future__ import annotations

import math
from collections.abc import Callable, Hashable, Iterator, Mapping, Sequence
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from ldp_interact.dist import FiniteDist, SeededRng, sample_index
from ldp_interact.errors import (
    DomainMismatchError,
    EnumerationOverflowError,
    InvalidParameterError,
    RunawayProtocolError,
    ZeroEvidenceError,
)
from ldp_interact.randomizers import Randomizer, apply_index

DEFAULT_ROUND_CAP = 10**6
DEFAULT_ENUM_CAP = 10**6
EPS_SLACK = 1e-9


class RoundRecord(NamedTuple):
    user: int
    randomizer_id: Hashable
    eps_t: float
    delta_t: float
    message: Hashable


class Assignment(NamedTuple):
    user: int
    randomizer_id: Hashable
    eps_t: float
    delta_t: float = 0.0


class Transcript:
    """Append-only sequence of :class:`RoundRecord`.

    ``append`` returns a new transcript so prefixes can be shared between
    branches of an enumeration.
    """

    __slots__ = ("rounds",)

    def __init__(self, rounds: Sequence[RoundRecord] = ()):
        self.rounds = tuple(rounds)

    def append(self, record: RoundRecord) -> Transcript:
        return Transcript(self.rounds + (record,))

    def __len__(self) -> int:
        return len(self.rounds)

    def __iter__(self) -> Iterator[RoundRecord]:
        return iter(self.rounds)

    def __getitem__(self, i):
        return self.rounds[i]

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Transcript) and self.rounds == other.rounds

    def __hash__(self) -> int:
        return hash(self.rounds)

    def __repr__(self) -> str:
        return f"Transcript({list(self.key())})"

    def messages(self) -> tuple:
        return tuple(r.message for r in self.rounds)

    def users(self) -> tuple[int, ...]:
        return tuple(r.user for r in self.rounds)

    def user_view(self, user: int) -> list[tuple[Hashable, Hashable]]:
        """``(randomizer_id, message)`` pairs of the given user's own rounds."""
        return [(r.randomizer_id, r.message) for r in self.rounds if r.user == user]

    def key(self) -> tuple:
        """Canonical map key: ``(user, randomizer_id, message)`` per round."""
        return tuple((r.user, r.randomizer_id, r.message) for r in self.rounds)


StepFn = Callable[[Transcript], "Assignment | None"]


@dataclass(frozen=True, eq=False)
class Protocol:
    """A deterministic map from transcript prefix to the next assignment.

    ``step`` returns ``None`` to halt.  ``eps`` is the protocol's overall
    declared budget; when set, the engine refuses assignments whose ``eps_t``
    exceeds it.
    """

    step: StepFn
    n_declared: int
    registry: Mapping[Hashable, Randomizer]
    eps: float | None = None
    name: str = "protocol"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        domains = {r.domain for r in self.registry.values()}
        if len(domains) > 1:
            raise DomainMismatchError("all registry randomizers must share one data domain")

    @property
    def domain(self) -> tuple:
        return next(iter(self.registry.values())).domain

    def assign(self, transcript: Transcript) -> Assignment | None:
        """Query ``step`` and validate the assignment against the registry."""
        a = self.step(transcript)
        if a is None:
            return None
        r = self.registry.get(a.randomizer_id)
        if r is None:
            raise InvalidParameterError(f"unknown randomizer id {a.randomizer_id!r}")
        if not 0 <= a.user < self.n_declared:
            raise InvalidParameterError(f"user {a.user} outside [0, {self.n_declared})")
        if a.delta_t != 0:
            raise InvalidParameterError("engine-run protocols must use delta_t = 0")
        if r.min_eps > a.eps_t + EPS_SLACK:
            raise InvalidParameterError(
                f"randomizer {a.randomizer_id!r} has minimal eps {r.min_eps:.6g} > eps_t {a.eps_t:.6g}")
        if self.eps is not None and a.eps_t > self.eps + EPS_SLACK:
            raise InvalidParameterError(
                f"eps_t {a.eps_t:.6g} exceeds the protocol budget {self.eps:.6g}")
        return a


def _check_prior(p: Protocol, prior: FiniteDist) -> list[int]:
    """Row index of each prior symbol in the shared randomizer domain."""
    r = next(iter(p.registry.values()))
    try:
        return [r._dom_index[x] for x in prior.support]
    except KeyError as exc:
        raise DomainMismatchError(f"prior symbol {exc.args[0]!r} outside the randomizer domain") from None


def follow_expt(p: Protocol, prior: FiniteDist, n: int, rng: SeededRng,
                round_cap: int = DEFAULT_ROUND_CAP) -> Transcript:
    """Draw ``n`` data i.i.d. from ``prior`` and follow the protocol to HALT."""
    if n < p.n_declared:
        raise InvalidParameterError(f"n={n} is below the protocol's {p.n_declared} users")
    rows = _check_prior(p, prior)
    data = [rows[sample_index(prior, rng)] for _ in range(n)]
    transcript = Transcript()
    for _ in range(round_cap):
        a = p.assign(transcript)
        if a is None:
            return transcript
        r = p.registry[a.randomizer_id]
        y = r.range[apply_index(r, data[a.user], rng)]
        transcript = transcript.append(RoundRecord(a.user, a.randomizer_id, a.eps_t, a.delta_t, y))
    raise RunawayProtocolError(f"protocol exceeded {round_cap} rounds")


def _unnormalised_posterior(prior: FiniteDist, user_view, registry) -> np.ndarray:
    w = np.array(prior.probs, dtype=float)
    if not user_view:
        return w
    first = registry[user_view[0][0]]
    rows = [first.domain_index(x) for x in prior.support]
    for rid, y in user_view:
        w = w * registry[rid].likelihood(y)[rows]
    return w


def posterior(prior: FiniteDist, user_view: Sequence[tuple[Hashable, Hashable]],
              registry: Mapping[Hashable, Randomizer]) -> FiniteDist:
    """Law of a user's datum given their own ``(randomizer_id, message)`` rounds."""
    w = _unnormalised_posterior(prior, user_view, registry)
    total = float(w.sum())
    if total <= 0.0:
        raise ZeroEvidenceError("user view has probability zero under the prior")
    return FiniteDist(prior.support, w / total)


def bayes_expt(p: Protocol, prior: FiniteDist, n: int, rng: SeededRng,
               round_cap: int = DEFAULT_ROUND_CAP) -> Transcript:
    """Like :func:`follow_expt` but redraw ``x_i`` from its posterior each round."""
    if n < p.n_declared:
        raise InvalidParameterError(f"n={n} is below the protocol's {p.n_declared} users")
    rows = _check_prior(p, prior)
    transcript = Transcript()
    for _ in range(round_cap):
        a = p.assign(transcript)
        if a is None:
            return transcript
        view = transcript.user_view(a.user)
        q = posterior(prior, view, p.registry) if view else prior
        x = rows[sample_index(q, rng)]
        r = p.registry[a.randomizer_id]
        y = r.range[apply_index(r, x, rng)]
        transcript = transcript.append(RoundRecord(a.user, a.randomizer_id, a.eps_t, a.delta_t, y))
    raise RunawayProtocolError(f"protocol exceeded {round_cap} rounds")


def iter_branches(p: Protocol, prior: FiniteDist, cap: int = DEFAULT_ENUM_CAP
                  ) -> Iterator[tuple[Transcript, float]]:
    """Depth-first walk of every positive-probability complete transcript.

    Probabilities use the follow semantics factorised per user:
    ``P[pi] = prod_i sum_x prior(x) prod_{t: i_t = i} R_t(x)(y_t)``.
    """
    rows = _check_prior(p, prior)
    prior_w = np.asarray(prior.probs)
    leaves = 0
    stack: list[tuple[Transcript, dict[int, np.ndarray]]] = [(Transcript(), {})]
    while stack:
        t, weights = stack.pop()
        a = p.assign(t)
        if a is None:
            leaves += 1
            if leaves > cap:
                raise EnumerationOverflowError(f"more than {cap} transcripts")
            prob = math.prod(float(w.sum()) for w in weights.values())
            yield t, prob
            continue
        r = p.registry[a.randomizer_id]
        base = weights.get(a.user, prior_w)
        for j in reversed(range(len(r.range))):
            w = base * r.table[rows, j]
            if not np.any(w > 0):
                continue
            nw = dict(weights)
            nw[a.user] = w
            stack.append((t.append(RoundRecord(a.user, a.randomizer_id, a.eps_t, a.delta_t, r.range[j])), nw))


@dataclass(frozen=True)
class CompositionReport:
    per_user_eps_sum: list[float]
    overall_eps: float
    k_worst: float
    k_average: float
    is_sequential: bool
    is_noninteractive: bool

    def as_dict(self) -> dict:
        return {
            "per_user_eps_sum": list(self.per_user_eps_sum),
            "overall_eps": self.overall_eps,
            "k_worst": self.k_worst,
            "k_average": self.k_average,
            "is_sequential": self.is_sequential,
            "is_noninteractive": self.is_noninteractive,
        }


def classify(p: Protocol, prior: FiniteDist, n: int, overall_eps: float | None = None,
             cap: int = DEFAULT_ENUM_CAP) -> CompositionReport:
    """Worst-case composition accounting over every reachable transcript.

    Each round is charged the minimal eps of its randomizer.  When
    ``overall_eps`` is omitted it is computed by an exhaustive privacy audit.
    """
    if overall_eps is None:
        from ldp_interact.verify import audit_protocol
        overall_eps = audit_protocol(p, n).realized_eps
    per_user = [0.0] * n
    worst_total = 0.0
    sequential = True
    schedules: set[tuple] = set()
    for t, _ in iter_branches(p, prior, cap):
        sums = [0.0] * n
        seen: set[int] = set()
        for rec in t:
            sums[rec.user] += p.registry[rec.randomizer_id].min_eps
            if rec.user in seen:
                sequential = False
            seen.add(rec.user)
        per_user = [max(a, b) for a, b in zip(per_user, sums)]
        worst_total = max(worst_total, sum(sums))
        schedules.add(tuple((r.user, r.randomizer_id, r.eps_t) for r in t))
    noninteractive = len(schedules) <= 1
    if overall_eps > 0:
        k_worst = max(per_user) / overall_eps if per_user else 0.0
        k_average = worst_total / (overall_eps * n)
    else:
        k_worst = 0.0 if max(per_user, default=0.0) == 0 else math.inf
        k_average = 0.0 if worst_total == 0 else math.inf
    return CompositionReport(per_user, float(overall_eps), k_worst, k_average,
                             sequential, noninteractive)
