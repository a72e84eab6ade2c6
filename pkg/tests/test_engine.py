import itertools
import math
from collections import Counter

import numpy as np
import pytest

from ldp_interact.dist import FiniteDist, SeededRng
from ldp_interact.engine import (
    Assignment,
    Protocol,
    RoundRecord,
    Transcript,
    bayes_expt,
    classify,
    follow_expt,
    iter_branches,
    posterior,
)
from ldp_interact.errors import (
    DomainMismatchError,
    EnumerationOverflowError,
    InvalidParameterError,
    RunawayProtocolError,
    ZeroEvidenceError,
)
from ldp_interact.protocols import corpus, example2_histogram, fixed_schedule, immediate_halt, single_round
from ldp_interact.randomizers import make_bernoulli, make_binary, make_randomized_response

LN3 = math.log(3.0)


def test_immediate_halt_gives_empty_transcript():
    proto, prior = immediate_halt()
    assert len(follow_expt(proto, prior, 1, SeededRng(0))) == 0
    assert len(bayes_expt(proto, prior, 1, SeededRng(0))) == 0


def test_single_rr_round_frequencies():
    proto, _ = single_round(make_randomized_response(2, LN3))
    prior = FiniteDist.point_mass(0)
    rng = SeededRng(11)
    msgs = Counter(follow_expt(proto, prior, 1, rng).messages()[0] for _ in range(100_000))
    assert msgs[0] / 100_000 == pytest.approx(0.75, abs=0.005)


def test_requery_bookkeeping():
    r = make_randomized_response(2, 1.0)
    proto = fixed_schedule({"r": r}, [(1, "r"), (1, "r")], n=2)
    t = follow_expt(proto, FiniteDist.uniform((0, 1)), 2, SeededRng(0))
    assert t.users() == (1, 1)


def test_runaway_protocol():
    r = make_bernoulli(0.5)
    proto = Protocol(lambda t: Assignment(0, "r", 0.0), 1, {"r": r})
    with pytest.raises(RunawayProtocolError):
        follow_expt(proto, FiniteDist.uniform((0, 1)), 1, SeededRng(0), round_cap=100)


def test_domain_mismatch():
    proto, _ = single_round(make_randomized_response(2, 1.0))
    with pytest.raises(DomainMismatchError):
        follow_expt(proto, FiniteDist.uniform(("a", "b")), 1, SeededRng(0))
    with pytest.raises(DomainMismatchError):
        Protocol(lambda t: None, 1, {"a": make_randomized_response(2, 1.0),
                                     "b": make_randomized_response(3, 1.0)})


def test_too_few_users():
    proto, prior = single_round(make_randomized_response(2, 1.0), n=3)
    with pytest.raises(InvalidParameterError):
        follow_expt(proto, prior, 2, SeededRng(0))


def test_assignment_eps_checks():
    r = make_randomized_response(2, 1.0)
    under = Protocol(lambda t: Assignment(0, "r", 0.5) if not t else None, 1, {"r": r})
    with pytest.raises(InvalidParameterError):
        under.assign(Transcript())
    over_budget = Protocol(lambda t: Assignment(0, "r", 2.0) if not t else None, 1, {"r": r}, eps=1.0)
    with pytest.raises(InvalidParameterError):
        over_budget.assign(Transcript())


def test_transcript_is_immutable_value():
    t = Transcript()
    t2 = t.append(RoundRecord(0, "r", 1.0, 0.0, 1))
    assert len(t) == 0 and len(t2) == 1
    assert t2.key() == ((0, "r", 1),)
    assert t2 == Transcript([RoundRecord(0, "r", 1.0, 0.0, 1)])


def test_posterior_examples():
    r = make_randomized_response(2, 1.0)
    prior = FiniteDist.uniform((0, 1))
    assert posterior(prior, [], {"r": r}) == prior
    post = posterior(prior, [("r", 0)], {"r": r})
    assert post.prob(0) == pytest.approx(math.e / (math.e + 1), abs=1e-15)
    coin = make_bernoulli(0.5)
    skew = FiniteDist((0, 1), (0.3, 0.7))
    assert np.allclose(posterior(skew, [("c", 1)] * 5, {"c": coin}).probs, skew.probs)


def test_posterior_zero_evidence():
    r = make_binary((0, 1), [0.0, 1.0])
    with pytest.raises(ZeroEvidenceError):
        posterior(FiniteDist.point_mass(0), [("r", 1)], {"r": r})


def _brute_joint(proto, prior, key, user):
    """``P[x_user = x, transcript]`` summed over every dataset."""
    n = proto.n_declared
    joint = Counter()
    for data in itertools.product(range(len(prior.support)), repeat=n):
        w = math.prod(prior.probs[i] for i in data)
        for u, rid, y in key:
            r = proto.registry[rid]
            w *= r.table[r.domain_index(prior.support[data[u]]), r.message_index(y)]
        joint[prior.support[data[user]]] += w
    return joint


@pytest.mark.parametrize("name", sorted(corpus(1.0)))
def test_posterior_matches_brute_force(name):
    proto, prior = corpus(1.0)[name]
    for t, _ in iter_branches(proto, prior):
        for user in set(t.users()):
            joint = _brute_joint(proto, prior, t.key(), user)
            total = sum(joint.values())
            post = posterior(prior, t.user_view(user), proto.registry)
            for x in prior.support:
                assert post.prob(x) == pytest.approx(joint[x] / total, abs=1e-12)


@pytest.mark.parametrize("name", sorted(corpus(0.5)))
def test_branches_sum_to_one(name):
    proto, prior = corpus(0.5)[name]
    assert math.fsum(p for _, p in iter_branches(proto, prior)) == pytest.approx(1.0, abs=1e-12)


def test_enumeration_cap():
    proto, prior = example2_histogram(3, 1.0, n=2)
    with pytest.raises(EnumerationOverflowError):
        list(iter_branches(proto, prior, cap=10))


def test_classify_single_round():
    proto, prior = single_round(make_randomized_response(2, 1.0), n=3)
    rep = classify(proto, prior, 3)
    assert rep.k_worst == pytest.approx(1.0)
    assert rep.is_noninteractive and rep.is_sequential


def test_classify_histogram_protocol():
    proto, prior = example2_histogram(3, 1.0)
    rep = classify(proto, prior, 1)
    per_round = math.log((math.e + 1) / 2)
    assert rep.per_user_eps_sum[0] == pytest.approx(3 * per_round, abs=1e-12)
    assert rep.overall_eps == pytest.approx(1.0, abs=1e-9)
    assert rep.k_worst == pytest.approx(1.8603435208748325, abs=1e-9)


def test_classify_adaptive_sequential():
    proto, prior = corpus(1.0)["three_user_vote"]
    rep = classify(proto, prior, 3)
    assert not rep.is_noninteractive
    assert not rep.is_sequential
    reg = {"a": make_randomized_response(2, 1.0), "b": make_randomized_response(2, 0.5)}

    def step(t):
        if len(t) == 0:
            return Assignment(0, "a", 1.0)
        if len(t) == 1:
            return Assignment(1, "a" if t.messages()[0] else "b", 1.0)
        return None

    rep = classify(Protocol(step, 2, reg, eps=1.0), FiniteDist.uniform((0, 1)), 2, overall_eps=1.0)
    assert rep.is_sequential and not rep.is_noninteractive


def test_classify_basic_composition_and_replay():
    reg = {f"r{j}": make_randomized_response(2, e) for j, e in enumerate((0.1, 0.2, 0.3))}
    proto = fixed_schedule(reg, [(0, "r0"), (0, "r1"), (0, "r2")], n=1)
    prior = FiniteDist.uniform((0, 1))
    a = classify(proto, prior, 1, overall_eps=0.6)
    b = classify(proto, prior, 1, overall_eps=0.6)
    assert a == b
    assert a.per_user_eps_sum[0] == pytest.approx(0.6, abs=1e-12)
