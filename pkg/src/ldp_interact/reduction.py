"""Compile a fully interactive pure-LDP protocol into a sequential one.

A user's first round is answered by a fresh datum from the prior.  Every
follow-up round splits the assigned randomizer into a data-independent part
``mu`` and a ``2 eps``-private part ``r_tilde``; with probability ``gamma`` the
message comes from ``r_tilde`` applied to a posterior draw simulated by
private rejection sampling over fresh users, otherwise straight from ``mu``.
The simulated transcript has the same law as under BayesExpt (and hence
FollowExpt), while each physical datum is used at most once.
"""
from __future__ import annotations

import bisect
import math
from collections.abc import Hashable, Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np

from ldp_interact.dist import FiniteDist, SeededRng, sample_index
from ldp_interact.engine import (
    DEFAULT_ROUND_CAP,
    Protocol,
    RoundRecord,
    Transcript,
    _check_prior,
)
from ldp_interact.errors import (
    InvalidParameterError,
    MaxDrawsExceededError,
    NonPureRandomizerError,
    ZeroLikelihoodError,
)
from ldp_interact.randomizers import Decomposition, Randomizer, apply_index, decompose

DEFAULT_MAX_DRAWS = 10**6
# Relative slack when checking the view's likelihood ratio against e^eps.
RATIO_SLACK = 1e-9


def view_likelihoods(user_view: Sequence[tuple[Hashable, Hashable]],
                     registry: Mapping[Hashable, Randomizer], domain: Sequence[Hashable]) -> np.ndarray:
    """``P_x[view] = prod over own rounds of R(x)(y)`` for every ``x`` in ``domain``."""
    lik = np.ones(len(domain))
    if not user_view:
        return lik
    rows = [registry[user_view[0][0]].domain_index(x) for x in domain]
    for rid, y in user_view:
        lik = lik * registry[rid].likelihood(y)[rows]
    return lik


def acceptance_probabilities(user_view, registry, domain, eps: float | None = None) -> np.ndarray:
    """``p_x = P_x[view] / max_x* P_x*[view]`` over ``domain``.

    When ``eps`` is given, raises if some ``p_x < e^{-eps}``: the view was not
    produced ``eps``-privately, so the accept bit would leak more than ``eps``.
    """
    lik = view_likelihoods(user_view, registry, domain)
    top = float(lik.max())
    if top <= 0.0:
        raise ZeroLikelihoodError("every datum gives the view probability zero")
    px = lik / top
    if eps is not None and float(px.min()) < math.exp(-eps) * (1 - RATIO_SLACK):
        raise InvalidParameterError(
            f"view likelihood ratio {1 / float(px.min()):.6g} exceeds e^eps = {math.exp(eps):.6g}")
    return px


def acceptance_distribution(user_view, prior: FiniteDist, registry) -> FiniteDist:
    """Closed-form law of the accepted datum: ``prior(x) p_x / sum prior p``."""
    px = acceptance_probabilities(user_view, registry, prior.support)
    w = np.asarray(prior.probs) * px
    return FiniteDist(prior.support, w / w.sum())


def rej_samp(user_view: Sequence[tuple[Hashable, Hashable]], prior: FiniteDist, eps: float,
             target_randomizer: Randomizer, rng: SeededRng, max_draws: int = DEFAULT_MAX_DRAWS,
             registry: Mapping[Hashable, Randomizer] | None = None) -> tuple[Hashable, int]:
    """Private rejection sampling of ``target_randomizer(x)`` with ``x ~ posterior``.

    Each fresh user ``x ~ prior`` publishes ``accept ~ Ber(p_x / 2)``; the first
    accepting user publishes ``target_randomizer(x)``.

    Args:
      user_view: ``(randomizer_id, message)`` pairs of the simulated user so far.
      prior: the data distribution.
      eps: privacy level at which the view was generated.
      target_randomizer: randomizer applied by the accepted user.
      rng: random source.
      max_draws: hard cap on fresh users drawn.
      registry: randomizer tables referenced by ``user_view``.

    Returns:
      ``(message, draws_used)``.
    """
    if user_view and registry is None:
        raise InvalidParameterError("a registry is needed to evaluate a non-empty view")
    px = acceptance_probabilities(user_view, registry or {}, target_randomizer.domain, eps)
    rows = [target_randomizer.domain_index(x) for x in prior.support]
    half = [0.5 * float(px[i]) for i in rows]
    xi, draws = _rejection_loop(half, prior, rng, max_draws)
    return target_randomizer.range[apply_index(target_randomizer, rows[xi], rng)], draws


def _rejection_loop(half: list[float], prior: FiniteDist, rng: SeededRng, max_draws: int) -> tuple[int, int]:
    cdf = prior._cdf
    rand = rng.random
    for draws in range(1, max_draws + 1):
        xi = bisect.bisect_right(cdf, rand())
        if rand() < half[xi]:
            return xi, draws
    raise MaxDrawsExceededError(f"no acceptance within {max_draws} draws")


@dataclass
class ReductionRun:
    """One execution of the compiled protocol.

    ``transcript`` is the simulated view of the original protocol.
    ``fresh_user_log`` holds ``(round, physical users consumed)``;
    ``branches`` records ``"first"``, ``"rejsamp"`` or ``"mu"`` per round.
    """

    transcript: Transcript
    samples_used: int
    per_round_rejections: list[int] = field(default_factory=list)
    fresh_user_log: list[tuple[int, int]] = field(default_factory=list)
    branches: list[str] = field(default_factory=list)
    physical_users: list[tuple[int, int, str]] = field(default_factory=list)


class Reduction:
    """Sequential simulator for a fixed ``(protocol, prior, eps)``.

    Decompositions and per-view acceptance probabilities are cached, so one
    instance should be reused across many runs.
    """

    def __init__(self, protocol: Protocol, prior: FiniteDist, eps: float,
                 anchor_x0: Hashable | None = None, max_draws: int = DEFAULT_MAX_DRAWS,
                 round_cap: int = DEFAULT_ROUND_CAP):
        if not eps > 0:
            raise InvalidParameterError("eps must be positive")
        for rid, r in protocol.registry.items():
            if math.isinf(r.min_eps) or r.declared_delta > 0:
                raise NonPureRandomizerError(f"randomizer {rid!r} is not pure-DP")
        self.protocol = protocol
        self.prior = prior
        self.eps = eps
        self.anchor_x0 = protocol.domain[0] if anchor_x0 is None else anchor_x0
        self.max_draws = max_draws
        self.round_cap = round_cap
        self._rows = _check_prior(protocol, prior)
        self._decomps: dict[Hashable, Decomposition] = {}
        self._half: dict[tuple, list[float]] = {}

    def decomposition(self, rid: Hashable) -> Decomposition:
        dec = self._decomps.get(rid)
        if dec is None:
            dec = decompose(self.protocol.registry[rid], self.eps, self.anchor_x0)
            self._decomps[rid] = dec
        return dec

    def _accept_half(self, view: tuple) -> list[float]:
        half = self._half.get(view)
        if half is None:
            px = acceptance_probabilities(view, self.protocol.registry, self.protocol.domain, self.eps)
            half = [0.5 * float(px[i]) for i in self._rows]
            self._half[view] = half
        return half

    def run(self, n: int, rng: SeededRng) -> ReductionRun:
        p = self.protocol
        if n < p.n_declared:
            raise InvalidParameterError(f"n={n} is below the protocol's {p.n_declared} users")
        prior, rows = self.prior, self._rows
        touched = [False] * n
        transcript = Transcript()
        out = ReductionRun(transcript, 0)
        phys = 0
        for t in range(self.round_cap):
            a = p.assign(transcript)
            if a is None:
                out.transcript = transcript
                return out
            r = p.registry[a.randomizer_id]
            if not touched[a.user]:
                touched[a.user] = True
                xi = sample_index(prior, rng)
                yj = apply_index(r, rows[xi], rng)
                out.samples_used += 1
                out.per_round_rejections.append(0)
                out.fresh_user_log.append((t, 1))
                out.branches.append("first")
                out.physical_users.append((phys, t, "first"))
                phys += 1
            else:
                dec = self.decomposition(a.randomizer_id)
                if rng.random() < dec.gamma:
                    view = tuple(transcript.user_view(a.user))
                    xi, draws = _rejection_loop(self._accept_half(view), prior, rng, self.max_draws)
                    yj = apply_index(dec.r_tilde, rows[xi], rng)
                    out.samples_used += draws
                    out.per_round_rejections.append(draws - 1)
                    out.fresh_user_log.append((t, draws))
                    out.branches.append("rejsamp")
                    for k in range(draws):
                        out.physical_users.append((phys + k, t, "accept" if k == draws - 1 else "reject"))
                    phys += draws
                else:
                    yj = sample_index(dec.mu, rng)
                    out.per_round_rejections.append(0)
                    out.fresh_user_log.append((t, 0))
                    out.branches.append("mu")
            transcript = transcript.append(
                RoundRecord(a.user, a.randomizer_id, a.eps_t, a.delta_t, r.range[yj]))
        raise MaxDrawsExceededError(f"protocol exceeded {self.round_cap} rounds")

    def run_many(self, n: int, rng: SeededRng, trials: int) -> list[ReductionRun]:
        return [self.run(n, rng) for _ in range(trials)]


def reduction_expt(p: Protocol, prior: FiniteDist, n: int, eps: float, rng: SeededRng,
                   anchor_x0: Hashable | None = None) -> ReductionRun:
    return Reduction(p, prior, eps, anchor_x0).run(n, rng)


def sample_complexity_bound(n: int, eps: float, k: float) -> float:
    """Expected-sample bound ``n (2 e^eps eps / (1 - e^-eps) k + 1)``."""
    return n * (2.0 * math.exp(eps) * eps / -math.expm1(-eps) * k + 1.0)


@dataclass(frozen=True)
class SampleComplexitySummary:
    trials: int
    mean: float
    std: float
    q50: float
    q90: float
    q99: float
    samples: tuple[int, ...]

    def as_dict(self) -> dict:
        return {"trials": self.trials, "mean": self.mean, "std": self.std,
                "q50": self.q50, "q90": self.q90, "q99": self.q99}


def empirical_sample_complexity(p: Protocol, prior: FiniteDist, n: int, eps: float,
                                trials: int, rng: SeededRng,
                                anchor_x0: Hashable | None = None) -> SampleComplexitySummary:
    """Distribution of samples drawn over ``trials`` runs with derived seeds."""
    if trials < 1:
        raise InvalidParameterError("trials must be >= 1")
    red = Reduction(p, prior, eps, anchor_x0)
    samples = np.array([red.run(n, rng.derive(i)).samples_used for i in range(trials)], dtype=float)
    q50, q90, q99 = np.quantile(samples, [0.5, 0.9, 0.99])
    std = float(samples.std(ddof=1)) if trials > 1 else 0.0
    return SampleComplexitySummary(trials, float(samples.mean()), std, float(q50), float(q90),
                                   float(q99), tuple(int(s) for s in samples))
