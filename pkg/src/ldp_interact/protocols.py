"""Named protocol builders and the small fully interactive verification corpus.

Every builder returns ``(protocol, prior)``.  Corpus protocols are tiny
(at most 3 users, 4 rounds, binary messages, 3 data symbols) so their
transcript trees can be enumerated exactly; each one is ``eps``-LDP for the
``eps`` it is built with.
"""
from __future__ import annotations

import math
from collections.abc import Callable, Hashable, Mapping

from ldp_interact.dist import FiniteDist
from ldp_interact.engine import Assignment, Protocol, Transcript
from ldp_interact.errors import InvalidParameterError
from ldp_interact.randomizers import Randomizer, make_binary, make_indicator_rr

Schedule = Callable[[tuple], "Assignment | None"]


def message_tree_protocol(name: str, registry: Mapping[Hashable, Randomizer], n: int,
                          schedule: Schedule, eps: float, params: dict | None = None) -> Protocol:
    """Protocol whose next assignment depends only on the messages so far."""

    def step(t: Transcript) -> Assignment | None:
        return schedule(t.messages())

    return Protocol(step, n, dict(registry), eps=eps, name=name, params=params or {})


def _half(eps: float) -> float:
    return eps / 2.0


def graded_response(domain: tuple, eps: float, name: str = "graded") -> Randomizer:
    """``P[y=1 | x]`` linear in the rank of ``x``; minimal eps is exactly ``eps``."""
    t = math.tanh(eps / 2.0)
    k = len(domain)
    probs = [(1.0 + t * (2.0 * i / (k - 1) - 1.0)) / 2.0 for i in range(k)]
    return make_binary(domain, probs, declared_eps=eps, name=name)


def example2_histogram(d: int, eps: float, n: int = 1, prior: FiniteDist | None = None
                       ) -> tuple[Protocol, FiniteDist]:
    """The non-compositional histogram protocol over basis vectors ``e_1..e_d``.

    Data symbol ``j`` stands for ``e_{j+1}``.  In round ``j`` every user runs
    ``RR(1, eps)`` if their datum is ``e_j`` and ``Ber(1/2)`` otherwise.
    """
    if d < 1 or n < 1 or not eps > 0:
        raise InvalidParameterError("example2_histogram needs d >= 1, n >= 1, eps > 0")
    domain = tuple(range(d))
    keep = math.exp(eps) / (math.exp(eps) + 1.0)
    registry = {
        f"hist{j}": make_binary(domain, lambda x, j=j: keep if x == j else 0.5,
                                declared_eps=eps, name=f"hist{j}")
        for j in range(d)
    }

    def step(t: Transcript) -> Assignment | None:
        r = len(t)
        if r >= n * d:
            return None
        return Assignment(r % n, f"hist{r // n}", eps)

    proto = Protocol(step, n, registry, eps=eps, name="example2_histogram",
                     params={"d": d, "eps": eps, "n": n})
    return proto, prior or FiniteDist.uniform(domain)


def _double_query(eps: float):
    domain = (0, 1)
    reg = {"rr_half": make_indicator_rr(domain, lambda x: x == 1, _half(eps), "rr_half")}

    def schedule(m):
        return Assignment(0, "rr_half", _half(eps)) if len(m) < 2 else None

    return message_tree_protocol("double_query", reg, 1, schedule, eps), FiniteDist(domain, (0.3, 0.7))


def _adaptive_two_user(eps: float):
    domain = (0, 1)
    reg = {
        "rr_half": make_indicator_rr(domain, lambda x: x == 1, _half(eps), "rr_half"),
        "rr_full": make_indicator_rr(domain, lambda x: x == 1, eps, "rr_full"),
    }
    h = _half(eps)

    def schedule(m):
        if len(m) == 0:
            return Assignment(0, "rr_half", h)
        if m[0] == 1:
            return {1: Assignment(0, "rr_half", h), 2: Assignment(1, "rr_full", eps)}.get(len(m))
        return {1: Assignment(1, "rr_half", h), 2: Assignment(1, "rr_half", h)}.get(len(m))

    return message_tree_protocol("adaptive_two_user", reg, 2, schedule, eps), FiniteDist.uniform(domain)


def _ternary_search(eps: float):
    domain = (0, 1, 2)
    h = _half(eps)
    reg = {
        "ge1": make_indicator_rr(domain, lambda x: x >= 1, h, "ge1"),
        "ge2": make_indicator_rr(domain, lambda x: x >= 2, h, "ge2"),
        "graded": graded_response(domain, h, "graded"),
    }

    def schedule(m):
        if len(m) == 0:
            return Assignment(0, "ge1", h)
        if len(m) == 1:
            return Assignment(0, "ge2", h) if m[0] == 1 else Assignment(0, "graded", h)
        return None

    return (message_tree_protocol("ternary_search", reg, 1, schedule, eps),
            FiniteDist(domain, (0.2, 0.5, 0.3)))


def _example2_d3(eps: float):
    proto, prior = example2_histogram(3, eps, n=1)
    return proto, prior


def _three_user_vote(eps: float):
    domain = (0, 1)
    h = _half(eps)
    reg = {
        "rr_half": make_indicator_rr(domain, lambda x: x == 1, h, "rr_half"),
        "rr_full": make_indicator_rr(domain, lambda x: x == 1, eps, "rr_full"),
    }

    def schedule(m):
        if len(m) == 0:
            return Assignment(0, "rr_half", h)
        if len(m) == 1:
            return Assignment(1, "rr_half", h)
        if m[0] == m[1]:
            return Assignment(2, "rr_full", eps) if len(m) == 2 else None
        return {2: Assignment(0, "rr_half", h), 3: Assignment(1, "rr_half", h)}.get(len(m))

    return message_tree_protocol("three_user_vote", reg, 3, schedule, eps), FiniteDist(domain, (0.6, 0.4))


def _graded_adaptive(eps: float):
    domain = (0, 1, 2)
    h = _half(eps)
    reg = {
        "graded": graded_response(domain, h, "graded"),
        "is0": make_indicator_rr(domain, lambda x: x == 0, h, "is0"),
    }

    def schedule(m):
        if len(m) == 0:
            return Assignment(0, "graded", h)
        if m[0] == 1:
            return Assignment(0, "is0", h) if len(m) == 1 else None
        return {1: Assignment(1, "graded", h), 2: Assignment(1, "is0", h)}.get(len(m))

    return (message_tree_protocol("graded_adaptive", reg, 2, schedule, eps),
            FiniteDist(domain, (0.5, 0.25, 0.25)))


CORPUS: dict[str, Callable[[float], tuple[Protocol, FiniteDist]]] = {
    "double_query": _double_query,
    "adaptive_two_user": _adaptive_two_user,
    "ternary_search": _ternary_search,
    "example2_d3": _example2_d3,
    "three_user_vote": _three_user_vote,
    "graded_adaptive": _graded_adaptive,
}


def corpus(eps: float) -> dict[str, tuple[Protocol, FiniteDist]]:
    """Every verification-corpus protocol built at budget ``eps``."""
    return {name: build(eps) for name, build in CORPUS.items()}


def immediate_halt(domain=(0, 1)) -> tuple[Protocol, FiniteDist]:
    reg = {"coin": make_binary(domain, [0.5] * len(domain), name="coin")}
    return Protocol(lambda t: None, 1, reg, eps=0.0, name="halt"), FiniteDist.uniform(domain)


def single_round(r: Randomizer, n: int = 1, prior: FiniteDist | None = None,
                 name: str = "single_round") -> tuple[Protocol, FiniteDist]:
    """Each of ``n`` users runs ``r`` once, in index order."""
    eps = r.declared_eps

    def step(t: Transcript) -> Assignment | None:
        return Assignment(len(t), "r", eps) if len(t) < n else None

    proto = Protocol(step, n, {"r": r}, eps=eps, name=name)
    return proto, prior or FiniteDist.uniform(r.domain)


def fixed_schedule(registry: Mapping[Hashable, Randomizer], rounds: list, n: int,
                   eps: float | None = None, name: str = "schedule") -> Protocol:
    """Noninteractive protocol from an explicit ``[(user, randomizer_id), ...]`` list."""
    rounds = [(int(u), rid) for u, rid in rounds]
    eps_of = {rid: r.declared_eps for rid, r in registry.items()}

    def step(t: Transcript) -> Assignment | None:
        if len(t) >= len(rounds):
            return None
        u, rid = rounds[len(t)]
        return Assignment(u, rid, eps_of[rid])

    return Protocol(step, n, dict(registry), eps=eps, name=name)
