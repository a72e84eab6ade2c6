"""Noninteractive locally private simple and compound hypothesis tests.

Simple test: each user sends the likelihood-argmax bit through binary
randomized response and the analyst picks the larger debiased count.

Compound test: a distribution ``S`` over events is found by solving the
zero-sum game ``sup_S min_{P in H0, Q in H1} E_{E~S}[P(E) - Q(E)]``.  Each user
publishes ``E_S[1{x in E}] + Lap(1/eps)`` and the analyst thresholds the mean.
"""
from __future__ import annotations

import math
from collections.abc import Hashable, Sequence
from dataclasses import dataclass, replace

import numpy as np

from ldp_interact.dist import FiniteDist, SeededRng, aligned, sample_many, tv_distance
from ldp_interact.engine import Assignment, Protocol, Transcript
from ldp_interact.errors import (
    ConvergenceError,
    DegenerateInstanceError,
    IntractableGroundSetError,
    InvalidParameterError,
)
from ldp_interact.randomizers import make_indicator_rr

MAX_GROUND_SET = 16


@dataclass(frozen=True)
class SimpleTestInstance:
    p0: FiniteDist
    p1: FiniteDist

    def __post_init__(self):
        if self.alpha <= 0:
            raise DegenerateInstanceError("p0 and p1 coincide")

    @property
    def alpha(self) -> float:
        return tv_distance(self.p0, self.p1)

    @property
    def ground_set(self) -> tuple:
        return tuple(dict.fromkeys(self.p0.support + self.p1.support))

    def vote_bits(self) -> dict[Hashable, int]:
        """``argmax_j P_j(x)`` for every ``x``; ties go to 0."""
        return {x: int(self.p1.prob(x) > self.p0.prob(x)) for x in self.ground_set}


def debias(n_hat: float, n: int, eps: float) -> float:
    """Unbiased estimate of the true count behind a randomized-response count.

    Inverts ``E[n_hat] = (N (e^eps - 1) + n) / (e^eps + 1)``.
    """
    e = math.exp(eps)
    return (e + 1.0) / (e - 1.0) * (n_hat - n / (e + 1.0))


def simple_test(inst: SimpleTestInstance, eps: float, n: int, rng: SeededRng,
                truth: int = 0) -> int:
    """Run one test on ``n`` samples from ``P_truth``; returns the chosen index."""
    if n < 1:
        raise InvalidParameterError("n must be >= 1")
    source = inst.p1 if truth else inst.p0
    bits = inst.vote_bits()
    bit_of = np.array([bits[x] for x in source.support])
    votes = bit_of[sample_many(source, n, rng)]
    keep = math.exp(eps) / (math.exp(eps) + 1.0)
    flip = rng.gen.random(n) >= keep
    ones = int(np.count_nonzero(votes ^ flip))
    scores = [debias(n - ones, n, eps), debias(ones, n, eps)]
    return int(np.argmax(scores))


def simple_hypotest_protocol(inst: SimpleTestInstance, eps: float, n: int
                             ) -> tuple[Protocol, FiniteDist]:
    """The simple test as an engine protocol: user ``t`` answers round ``t``."""
    bits = inst.vote_bits()
    r = make_indicator_rr(inst.ground_set, lambda x: bits[x] == 1, eps, "rr_argmax")

    def step(t: Transcript) -> Assignment | None:
        return Assignment(len(t), "rr_argmax", eps) if len(t) < n else None

    proto = Protocol(step, n, {"rr_argmax": r}, eps=eps, name="simple_hypotest",
                     params={"eps": eps, "n": n})
    return proto, inst.p0


def sample_size(c: float, eps: float, alpha: float) -> int:
    return max(1, math.ceil(c / (eps * eps * alpha * alpha)))


def simple_success_rate(inst: SimpleTestInstance, eps: float, n: int, trials: int,
                        rng: SeededRng) -> float:
    """Fraction of correct decisions; the truth alternates between the two hypotheses."""
    hits = sum(simple_test(inst, eps, n, rng, truth=i % 2) == i % 2 for i in range(trials))
    return hits / trials


@dataclass(frozen=True)
class Calibration:
    c: float | None
    n: int | None
    success: float | None
    success_quarter: float | None
    sweep: tuple


def _strictly_lower(lo: float, hi: float, trials: int) -> bool:
    se = math.sqrt((lo * (1 - lo) + hi * (1 - hi)) / trials)
    return hi - lo > 2.0 * se


def calibrate_constant(success_at, alpha: float, eps: float, trials: int,
                       constants: Sequence[float] = (1, 2, 4, 8, 16, 32, 64),
                       target: float = 2 / 3) -> Calibration:
    """Smallest ``c`` with success ``>= target`` at ``n = ceil(c / (eps alpha)^2)``
    and a significantly (2 sigma) lower success at ``n / 4``.

    ``success_at(n)`` must return a success rate over ``trials`` runs.
    """
    sweep = []
    for c in constants:
        n = sample_size(c, eps, alpha)
        hi = success_at(n)
        lo = success_at(max(1, math.ceil(n / 4)))
        sweep.append((c, n, hi, lo))
        if hi >= target and _strictly_lower(lo, hi, trials):
            return Calibration(c, n, hi, lo, tuple(sweep))
    return Calibration(None, None, None, None, tuple(sweep))


@dataclass(frozen=True)
class CompoundInstance:
    """Hypotheses are the convex hulls of the given vertex lists."""

    ground_set: tuple
    h0_vertices: tuple[FiniteDist, ...]
    h1_vertices: tuple[FiniteDist, ...]
    alpha: float | None = None

    def __post_init__(self):
        if not self.h0_vertices or not self.h1_vertices:
            raise InvalidParameterError("each hypothesis needs at least one vertex")
        for v in self.h0_vertices + self.h1_vertices:
            if any(s not in self.ground_set for s in v.support):
                raise InvalidParameterError("vertex support outside the ground set")

    def matrix(self, vertices) -> np.ndarray:
        """Vertices as rows of probabilities over ``ground_set``."""
        return np.array([[v.prob(x) for x in self.ground_set] for v in vertices])


@dataclass(frozen=True)
class EventDistribution:
    """Mixed strategy over events with its certificate.

    ``value`` is the exact payoff guaranteed against every vertex pair; ``upper``
    is a certified upper bound on the game value, so ``upper - value`` is the
    duality gap.
    """

    events: tuple[tuple, ...]
    weights: FiniteDist
    value: float
    upper: float
    iterations: int

    @property
    def gap(self) -> float:
        return self.upper - self.value

    def score(self, ground_set: Sequence[Hashable]) -> np.ndarray:
        """``E_{E~S}[1{x in E}]`` for each ``x`` in ``ground_set``."""
        w = dict(zip(self.events, self.weights.probs.tolist()))
        return np.array([sum(p for e, p in w.items() if x in e) for x in ground_set])

    def as_json(self) -> dict:
        return {"events": [list(e) for e in self.events],
                "weights": self.weights.probs.tolist(),
                "value": self.value, "upper": self.upper, "gap": self.gap,
                "iterations": self.iterations}


def event_matrix(k: int) -> np.ndarray:
    """Row ``b`` is the indicator vector of the subset with bitmask ``b``."""
    masks = np.arange(2**k)[:, None]
    return ((masks >> np.arange(k)[None, :]) & 1).astype(float)


def _payoffs(inst: CompoundInstance) -> tuple[np.ndarray, np.ndarray]:
    k = len(inst.ground_set)
    if k > MAX_GROUND_SET:
        raise IntractableGroundSetError(f"|X| = {k} > {MAX_GROUND_SET}")
    p = inst.matrix(inst.h0_vertices)
    q = inst.matrix(inst.h1_vertices)
    diffs = (p[:, None, :] - q[None, :, :]).reshape(-1, k)
    return event_matrix(k) @ diffs.T, diffs


def _softmax(z: np.ndarray) -> np.ndarray:
    w = np.exp(z - z.max())
    return w / w.sum()


def solve_event_game(inst: CompoundInstance, tol: float = 1e-4, step: float = 0.5,
                     max_iters: int = 200_000, check_every: int = 50) -> EventDistribution:
    """Optimistic multiplicative weights for the event player against vertex pairs.

    Both players run optimistic Hedge.  Every ``check_every`` iterations the
    last and averaged event strategies are scored by exact best response of
    the pair player (a vertex pair, since the payoff is linear on the hulls),
    and the pair strategies by exact best response over all events; iteration
    stops once the certified gap is at most ``tol``.
    """
    a, _ = _payoffs(inst)
    n_ev, n_pairs = a.shape
    zx = np.zeros(n_ev)
    zy = np.zeros(n_pairs)
    x = np.full(n_ev, 1.0 / n_ev)
    y = np.full(n_pairs, 1.0 / n_pairs)
    gx_prev = a @ y
    hy_prev = a.T @ x
    sum_x = np.zeros(n_ev)
    sum_y = np.zeros(n_pairs)
    best_lo, best_x = -math.inf, x
    best_hi = math.inf
    for it in range(1, max_iters + 1):
        gx = a @ y
        hy = a.T @ x
        zx += step * (2.0 * gx - gx_prev)
        zy -= step * (2.0 * hy - hy_prev)
        gx_prev, hy_prev = gx, hy
        x = _softmax(zx)
        y = _softmax(zy)
        sum_x += x
        sum_y += y
        if it % check_every and it != max_iters:
            continue
        for cand in (x, sum_x / it):
            lo = float((a.T @ cand).min())
            if lo > best_lo:
                best_lo, best_x = lo, cand.copy()
        for cand in (y, sum_y / it):
            best_hi = min(best_hi, float((a @ cand).max()))
        if best_hi <= tol:
            raise DegenerateInstanceError(f"game value <= {best_hi:.3g}: hypotheses not separated")
        if best_hi - best_lo <= tol:
            return _finalise(inst, a, best_x, best_hi, it, tol)
    raise ConvergenceError(f"duality gap {best_hi - best_lo:.3g} > tol after {max_iters} iterations")


def _finalise(inst, a, x, upper, iters, tol) -> EventDistribution:
    keep = x > 1e-15
    w = np.where(keep, x, 0.0)
    w /= w.sum()
    value = float((a.T @ w).min())
    if value <= tol:
        raise DegenerateInstanceError(f"certified value {value:.3g} <= tol")
    k = len(inst.ground_set)
    idx = np.flatnonzero(keep)
    events = tuple(tuple(inst.ground_set[i] for i in range(k) if (b >> i) & 1) for b in idx)
    weights = FiniteDist(events, w[idx])
    return EventDistribution(events, weights, value, max(upper, value), iters)


def certify(inst: CompoundInstance, s: EventDistribution) -> CompoundInstance:
    """Instance carrying the certified separation ``alpha = s.value``."""
    return replace(inst, alpha=s.value)


def score_ranges(inst: CompoundInstance, s: EventDistribution) -> tuple[float, float]:
    """``(min over H0 vertices, max over H1 vertices)`` of the expected score."""
    sc = s.score(inst.ground_set)
    return float((inst.matrix(inst.h0_vertices) @ sc).min()), float((inst.matrix(inst.h1_vertices) @ sc).max())


def laplace_noise(scale: float, size: int, rng: SeededRng) -> np.ndarray:
    """Inverse-CDF Laplace draws."""
    u = rng.gen.random(size) - 0.5
    return -scale * np.sign(u) * np.log1p(-2.0 * np.abs(u))


def laplace_log_density_ratio(y: float, y_other: float, z, eps: float):
    """``ln(Lap(y, 1/eps)(z) / Lap(y_other, 1/eps)(z))`` in closed form."""
    z = np.asarray(z, dtype=float)
    return eps * (np.abs(z - y_other) - np.abs(z - y))


def compound_test(inst: CompoundInstance, s: EventDistribution, eps: float, n: int,
                  rng: SeededRng, true_dist: FiniteDist) -> int:
    """Returns 0 for H0 or 1 for H1.

    The threshold is the midpoint between the smallest H0 expected score and
    the largest H1 expected score; the certified gap keeps them ``alpha`` apart.
    """
    if n < 1:
        raise InvalidParameterError("n must be >= 1")
    lo0, hi1 = score_ranges(inst, s)
    threshold = 0.5 * (lo0 + hi1)
    sc = dict(zip(inst.ground_set, s.score(inst.ground_set).tolist()))
    per_symbol = np.array([sc[x] for x in true_dist.support])
    scores = per_symbol[sample_many(true_dist, n, rng)]
    noisy = scores + laplace_noise(1.0 / eps, n, rng)
    return 0 if float(noisy.mean()) >= threshold else 1


def compound_truths(inst: CompoundInstance) -> list[tuple[int, FiniteDist]]:
    """Test distributions: every vertex plus each hull's centroid, labelled."""
    out = []
    for label, verts in ((0, inst.h0_vertices), (1, inst.h1_vertices)):
        out.extend((label, v) for v in verts)
        if len(verts) > 1:
            m = inst.matrix(verts).mean(axis=0)
            out.append((label, FiniteDist(inst.ground_set, m)))
    return out


def compound_success_rate(inst: CompoundInstance, s: EventDistribution, eps: float, n: int,
                          trials: int, rng: SeededRng) -> float:
    """Fraction correct, cycling truth over H0 and H1 test distributions alternately."""
    h0 = [d for lbl, d in compound_truths(inst) if lbl == 0]
    h1 = [d for lbl, d in compound_truths(inst) if lbl == 1]
    hits = 0
    for i in range(trials):
        label = i % 2
        pool = h1 if label else h0
        dist = pool[(i // 2) % len(pool)]
        hits += compound_test(inst, s, eps, n, rng, dist) == label
    return hits / trials


def lp_game_value(inst: CompoundInstance) -> tuple[float, np.ndarray]:
    """Exact game value by linear programming over the full event simplex.

    Maximises ``t`` subject to ``sum_E S(E)(P_a(E) - Q_b(E)) >= t`` for every
    vertex pair and ``S`` in the simplex over all ``2^|X|`` events.  Serves as
    the independent oracle for :func:`solve_event_game`.
    """
    from scipy.optimize import linprog

    a, _ = _payoffs(inst)
    n_ev, n_pairs = a.shape
    c = np.zeros(n_ev + 1)
    c[-1] = -1.0
    a_ub = np.hstack([-a.T, np.ones((n_pairs, 1))])
    b_ub = np.zeros(n_pairs)
    a_eq = np.hstack([np.ones((1, n_ev)), np.zeros((1, 1))])
    bounds = [(0, None)] * n_ev + [(None, None)]
    res = linprog(c, A_ub=a_ub, b_ub=b_ub, A_eq=a_eq, b_eq=[1.0], bounds=bounds, method="highs")
    if not res.success:
        raise ConvergenceError(res.message)
    return float(res.x[-1]), res.x[:-1]
