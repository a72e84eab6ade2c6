import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ldp_interact.dist import SeededRng
from ldp_interact.errors import InvalidParameterError, NonPureRandomizerError, UnknownSymbolError
from ldp_interact.randomizers import (
    Randomizer,
    apply,
    decompose,
    make_bernoulli,
    make_binary,
    make_indicator_rr,
    make_randomized_response,
    minimal_eps,
)

LN3 = math.log(3.0)


def random_pure(rng: np.random.Generator, k: int, m: int, eps: float) -> Randomizer:
    """Random table with every column ratio inside ``e^eps``."""
    while True:
        base = rng.dirichlet(np.ones(m))
        scale = np.exp(rng.uniform(-eps / 2, eps / 2, size=(k, m)))
        t = base[None, :] * scale
        t /= t.sum(axis=1, keepdims=True)
        if minimal_eps(Randomizer(tuple(range(k)), tuple(range(m)), t, math.inf)) <= eps:
            return Randomizer(tuple(range(k)), tuple(range(m)), t, eps)


def test_rr_table_values():
    r = make_randomized_response(3, 1.0)
    assert r.table[0, 0] == pytest.approx(0.5761168847658291, abs=1e-15)
    assert r.table[0, 1] == pytest.approx(0.21194155761708547, abs=1e-15)
    assert minimal_eps(r) == pytest.approx(1.0, abs=1e-12)


def test_binary_rr_ln3():
    r = make_randomized_response(2, LN3)
    assert np.allclose(r.table, [[0.75, 0.25], [0.25, 0.75]])
    assert r.is_pure_dp()
    assert not r.is_pure_dp(0.9 * LN3)


def test_minimal_eps_sentinels():
    assert minimal_eps(make_bernoulli(0.3)) == 0.0
    leaky = make_binary((0, 1), [0.0, 0.5])
    assert math.isinf(leaky.min_eps)


def test_minimal_eps_ignores_dead_messages():
    r = Randomizer((0, 1), ("a", "b", "c"), [[0.5, 0.5, 0.0], [0.25, 0.75, 0.0]], 1.0)
    assert minimal_eps(r) == pytest.approx(math.log(2.0))


def test_table_validation():
    with pytest.raises(InvalidParameterError):
        Randomizer((0, 1), (0, 1), [[0.5, 0.5]], 1.0)
    with pytest.raises(InvalidParameterError):
        Randomizer((0, 1), (0, 1), [[0.5, 0.6], [0.5, 0.5]], 1.0)


def test_unknown_domain_symbol():
    r = make_randomized_response(2, 1.0)
    with pytest.raises(UnknownSymbolError):
        r.row(5)
    with pytest.raises(UnknownSymbolError):
        r.likelihood("z")


def test_apply_frequencies():
    r = make_randomized_response(2, LN3)
    rng = SeededRng(5)
    ys = [apply(r, 0, rng) for _ in range(100_000)]
    assert ys.count(0) / len(ys) == pytest.approx(0.75, abs=0.005)


def test_indicator_rr():
    r = make_indicator_rr((0, 1, 2), lambda x: x >= 1, LN3)
    assert r.row(2).prob(1) == pytest.approx(0.75)
    assert r.row(0).prob(1) == pytest.approx(0.25)


def test_decomposition_hand_computed():
    # RR(2, ln 3) at budget 2 ln 3: gamma = (1/3 - 1) / (1/9 - 1) = 3/4.
    r = make_randomized_response(2, LN3)
    dec = decompose(r, 2 * LN3)
    assert dec.gamma == pytest.approx(0.75, abs=1e-14)
    assert np.allclose(dec.mu.probs, [0.75, 0.25])
    assert np.allclose(dec.r_tilde.table, [[0.75, 0.25], [1 / 12, 11 / 12]], atol=1e-14)
    assert dec.r_tilde.min_eps == pytest.approx(math.log(9.0))


def test_decomposition_at_own_eps_is_identity():
    r = make_randomized_response(3, 1.0)
    dec = decompose(r, 1.0)
    assert dec.gamma == pytest.approx(1.0)
    assert np.allclose(dec.r_tilde.table, r.table, atol=1e-12)


def test_decomposition_degenerate():
    dec = decompose(make_bernoulli(0.4), 1.0)
    assert dec.degenerate and dec.gamma == 0.0
    assert np.allclose(dec.reconstruct(), make_bernoulli(0.4).table)


def test_decomposition_errors():
    with pytest.raises(NonPureRandomizerError):
        decompose(make_binary((0, 1), [0.0, 0.5]), 1.0)
    with pytest.raises(InvalidParameterError):
        decompose(make_randomized_response(2, 1.0), 0.5)


def test_decomposition_anchor():
    r = make_randomized_response(3, 1.0)
    dec = decompose(r, 1.5, anchor_x0=2)
    assert np.allclose(dec.mu.probs, r.table[2])
    assert np.allclose(dec.reconstruct(), r.table, atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**6), st.integers(2, 5), st.integers(2, 5), st.sampled_from([0.25, 1.0, 2.5]),
       st.floats(1.0, 3.0))
def test_decomposition_properties(seed, k, m, eps, stretch):
    r = random_pure(np.random.default_rng(seed), k, m, eps)
    target = eps * stretch
    dec = decompose(r, target)
    assert np.max(np.abs(dec.reconstruct() - r.table)) <= 1e-12
    assert dec.r_tilde.min_eps <= 2 * target + 1e-9
    assert 0.0 <= dec.gamma <= 1.0
