"""Independent oracles: exact transcript laws, privacy audits, G-tests.

The follow-semantics enumerator conditions on every full dataset and sums
over them by brute force; it never calls :func:`engine.posterior`, so it is
an independent check of the Bayesian-resampling path.
"""
from __future__ import annotations

import itertools
import math
from collections import defaultdict
from collections.abc import Hashable, Mapping, Sequence
from dataclasses import dataclass

import numpy as np
from scipy import stats

from ldp_interact.dist import FiniteDist
from ldp_interact.engine import (
    DEFAULT_ENUM_CAP,
    Protocol,
    RoundRecord,
    Transcript,
    posterior,
)
from ldp_interact.errors import (
    EnumerationOverflowError,
    InsufficientCountError,
    InvalidParameterError,
)
from ldp_interact.randomizers import decompose

SEMANTICS = ("follow", "bayes")


@dataclass(frozen=True)
class TranscriptDist:
    """Exact transcript law keyed by :meth:`Transcript.key`."""

    entries: dict

    def prob(self, key) -> float:
        return self.entries.get(key, 0.0)

    def total(self) -> float:
        return math.fsum(self.entries.values())

    def max_abs_diff(self, other: TranscriptDist) -> float:
        keys = set(self.entries) | set(other.entries)
        return max((abs(self.prob(k) - other.prob(k)) for k in keys), default=0.0)

    def as_json(self) -> list[dict]:
        return [{"transcript": [list(r) for r in k], "prob": p}
                for k, p in sorted(self.entries.items(), key=lambda kv: repr(kv[0]))]


@dataclass(frozen=True)
class AuditReport:
    realized_eps: float
    witness: tuple | None  # (dataset, neighbour, transcript key, p, p')

    def as_json(self) -> dict:
        w = None
        if self.witness is not None:
            s, s2, key, a, b = self.witness
            w = {"dataset": list(s), "neighbour": list(s2),
                 "transcript": [list(r) for r in key], "p": a, "p_neighbour": b}
        return {"realized_eps": self.realized_eps, "witness": w}


def _dfs(p: Protocol, predictive, cap: int) -> dict:
    """Exact law of complete transcripts given a per-round message law.

    ``predictive(views, assignment)`` returns the probability vector over the
    assigned randomizer's range, where ``views`` maps user -> own rounds.
    """
    out: dict = {}
    stack = [(Transcript(), {}, 1.0)]
    while stack:
        t, views, prob = stack.pop()
        a = p.assign(t)
        if a is None:
            out[t.key()] = out.get(t.key(), 0.0) + prob
            if len(out) > cap:
                raise EnumerationOverflowError(f"more than {cap} transcripts")
            continue
        r = p.registry[a.randomizer_id]
        law = predictive(views, a)
        for j, y in enumerate(r.range):
            q = float(law[j])
            if q <= 0.0:
                continue
            nv = dict(views)
            nv[a.user] = views.get(a.user, ()) + ((a.randomizer_id, y),)
            stack.append((t.append(RoundRecord(a.user, a.randomizer_id, a.eps_t, a.delta_t, y)),
                          nv, prob * q))
    return out


def _law_given_data(p: Protocol, data: Sequence[Hashable], semantics: str,
                    prior: FiniteDist | None, cap: int) -> dict:
    rows = [p.registry[next(iter(p.registry))].domain_index(x) for x in data]

    if semantics == "follow":
        def predictive(views, a):
            return p.registry[a.randomizer_id].table[rows[a.user]]
    else:
        def predictive(views, a):
            r = p.registry[a.randomizer_id]
            view = views.get(a.user)
            if not view:
                return r.table[rows[a.user]]
            q = posterior(prior, list(view), p.registry)
            return _mix(q, r)
    return _dfs(p, predictive, cap)


def _mix(q: FiniteDist, r) -> np.ndarray:
    idx = [r.domain_index(x) for x in q.support]
    return np.asarray(q.probs) @ r.table[idx]


def enumerate_transcripts(p: Protocol, prior: FiniteDist, n: int, semantics: str = "follow",
                          cap: int = DEFAULT_ENUM_CAP) -> TranscriptDist:
    """Exact transcript law under FollowExpt or BayesExpt semantics.

    ``follow`` sums ``prior(S) * P[pi | S]`` over every dataset ``S`` in the
    prior's support; ``bayes`` multiplies posterior-predictive message
    probabilities round by round.
    """
    if semantics not in SEMANTICS:
        raise InvalidParameterError(f"semantics must be one of {SEMANTICS}")
    if n < p.n_declared:
        raise InvalidParameterError(f"n={n} is below the protocol's {p.n_declared} users")
    users = p.n_declared
    if semantics == "bayes":
        def predictive(views, a):
            r = p.registry[a.randomizer_id]
            view = views.get(a.user)
            q = posterior(prior, list(view), p.registry) if view else prior
            return _mix(q, r)
        return TranscriptDist(_dfs(p, predictive, cap))

    acc: dict = defaultdict(float)
    n_sets = len(prior) ** users
    if n_sets > cap:
        raise EnumerationOverflowError(f"{n_sets} datasets exceed the cap {cap}")
    probs = dict(prior.items())
    for data in itertools.product(prior.support, repeat=users):
        w = math.prod(probs[x] for x in data)
        if w == 0.0:
            continue
        for key, q in _law_given_data(p, data, "follow", None, cap).items():
            acc[key] += w * q
    return TranscriptDist(dict(acc))


def _max_log_ratio(a: Mapping, b: Mapping) -> tuple[float, Hashable | None]:
    worst, arg = -math.inf, None
    for key, pa in a.items():
        if pa <= 0.0:
            continue
        pb = b.get(key, 0.0)
        val = math.inf if pb <= 0.0 else math.log(pa / pb)
        if val > worst:
            worst, arg = val, key
    return max(worst, 0.0), arg


def audit_protocol(p: Protocol, n: int | None = None, semantics: str = "follow",
                   prior: FiniteDist | None = None, cap: int = DEFAULT_ENUM_CAP) -> AuditReport:
    """Exact worst-case privacy loss over neighbouring datasets in ``X^n``.

    Every dataset over the protocol's full data domain is enumerated, so the
    audit is definition-faithful rather than prior-weighted.  Under ``bayes``
    semantics a user's first round uses their datum and later rounds use
    posterior redraws (``prior`` defaults to uniform).
    """
    if semantics not in SEMANTICS:
        raise InvalidParameterError(f"semantics must be one of {SEMANTICS}")
    users = p.n_declared
    domain = p.domain
    if semantics == "bayes" and prior is None:
        prior = FiniteDist.uniform(domain)
    if len(domain) ** users > cap:
        raise EnumerationOverflowError("too many datasets to audit exhaustively")
    laws = {data: _law_given_data(p, data, semantics, prior, cap)
            for data in itertools.product(domain, repeat=users)}
    worst, witness = 0.0, None
    for data, law in laws.items():
        for i in range(users):
            for x in domain:
                if x == data[i]:
                    continue
                other = data[:i] + (x,) + data[i + 1:]
                val, key = _max_log_ratio(law, laws[other])
                if key is not None and (witness is None or val > worst):
                    worst = max(worst, val)
                    witness = (data, other, key, law[key], laws[other].get(key, 0.0))
    return AuditReport(worst, witness)


@dataclass(frozen=True)
class GTestResult:
    passed: bool
    p_value: float
    statistic: float
    dof: int
    cells: int


def gtest_equivalence(observed: Mapping, expected: TranscriptDist | Mapping,
                      significance: float = 0.01, min_count: int = 1000) -> GTestResult:
    """Likelihood-ratio goodness-of-fit of transcript counts against an exact law.

    Cells with expected count below 10 are merged, smallest first, into a
    tail bucket.  Any observation on a zero-probability transcript fails
    outright with ``p_value = 0``.
    """
    exp = expected.entries if isinstance(expected, TranscriptDist) else dict(expected)
    total = int(sum(observed.values()))
    if total < min_count:
        raise InsufficientCountError(f"need at least {min_count} observations, got {total}")
    if any(c > 0 and exp.get(k, 0.0) <= 0.0 for k, c in observed.items()):
        return GTestResult(False, 0.0, math.inf, 0, 0)
    cells = sorted(((total * pr, observed.get(k, 0)) for k, pr in exp.items() if pr > 0),
                   key=lambda c: c[0])
    merged: list[list[float]] = []
    bucket = [0.0, 0.0]
    for e, o in cells:
        if bucket[0] < 10.0:
            bucket[0] += e
            bucket[1] += o
        else:
            merged.append(bucket)
            bucket = [e, o]
    if bucket[0] > 0:
        if bucket[0] < 10.0 and merged:
            merged[-1][0] += bucket[0]
            merged[-1][1] += bucket[1]
        else:
            merged.append(bucket)
    if len(merged) < 2:
        return GTestResult(True, 1.0, 0.0, 0, len(merged))
    e = np.array([c[0] for c in merged])
    o = np.array([c[1] for c in merged])
    e = e * (o.sum() / e.sum())
    stat, pval = stats.power_divergence(o, e, lambda_="log-likelihood")
    return GTestResult(bool(pval >= significance), float(pval), float(stat), len(merged) - 1, len(merged))


def counts_of(transcripts) -> dict:
    out: dict = defaultdict(int)
    for t in transcripts:
        out[t.key() if isinstance(t, Transcript) else t] += 1
    return dict(out)


@dataclass(frozen=True)
class ReductionAuditReport:
    """Per-physical-user privacy loss of the compiled sequential protocol.

    ``realized_eps`` covers every physical view (first-touch message, or an
    accept bit plus at most one ``r_tilde`` message); ``accept_bit_eps`` is the
    accept-bit channel alone.
    """

    realized_eps: float
    accept_bit_eps: float
    first_touch_eps: float
    views_checked: int
    witness: tuple | None


def _pair_log_ratio(mat: np.ndarray) -> float:
    """Max over columns of ``ln(max_x / min_x)`` for a row-stochastic matrix."""
    hi = mat.max(axis=0)
    lo = mat.min(axis=0)
    live = hi > 0
    if np.any(lo[live] <= 0):
        return math.inf
    return float(np.max(np.log(hi[live]) - np.log(lo[live]))) if np.any(live) else 0.0


def audit_reduction(p: Protocol, prior: FiniteDist, eps: float, anchor_x0: Hashable | None = None,
                    cap: int = DEFAULT_ENUM_CAP) -> ReductionAuditReport:
    """Exhaustive audit of every physical user's view in the compiled protocol.

    Walks all reachable prefixes of the simulated transcript.  At a follow-up
    round of user ``i`` with own view ``v`` and decomposition ``(gamma, r_tilde)``,
    a fresh physical datum ``x`` publishes ``reject`` with probability
    ``1 - p_x/2`` or ``(accept, y)`` with ``p_x/2 * r_tilde(x)(y)``, where
    ``p_x = L_x(v) / max_x* L_x*(v)`` over the whole data domain.
    """
    from ldp_interact.reduction import view_likelihoods

    domain = p.domain
    worst = accept_worst = first_worst = 0.0
    witness = None
    views = 0
    decomps: dict = {}
    seen: set = set()
    stack = [Transcript()]
    while stack:
        t = stack.pop()
        a = p.assign(t)
        if a is None:
            continue
        r = p.registry[a.randomizer_id]
        view = tuple(t.user_view(a.user))
        if not view:
            first_worst = max(first_worst, r.min_eps)
        elif (view, a.randomizer_id) not in seen:
            seen.add((view, a.randomizer_id))
            if a.randomizer_id not in decomps:
                decomps[a.randomizer_id] = decompose(r, eps, anchor_x0)
            dec = decomps[a.randomizer_id]
            if dec.gamma > 0:
                views += 1
                lik = view_likelihoods(view, p.registry, domain)
                half = 0.5 * lik / lik.max()
                acc = np.column_stack([1.0 - half, half])
                acc_eps = _pair_log_ratio(acc)
                full = np.column_stack([1.0 - half, half[:, None] * dec.r_tilde.table])
                full_eps = _pair_log_ratio(full)
                accept_worst = max(accept_worst, acc_eps)
                if full_eps >= worst:
                    worst, witness = full_eps, (t.key(), a.randomizer_id)
        if len(stack) > cap:
            raise EnumerationOverflowError("prefix tree exceeds the cap")
        # Expand only messages reachable under the prior.
        base = posterior(prior, list(view), p.registry) if view else prior
        law = _mix(base, r)
        for j, y in enumerate(r.range):
            if law[j] > 0:
                stack.append(t.append(RoundRecord(a.user, a.randomizer_id, a.eps_t, a.delta_t, y)))
    return ReductionAuditReport(max(worst, first_worst), accept_worst, first_worst, views, witness)
