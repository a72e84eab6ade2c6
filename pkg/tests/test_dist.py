import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ldp_interact.dist import (
    FiniteDist,
    SeededRng,
    hellinger_sq,
    kl_divergence,
    sample,
    sample_many,
    tv_distance,
)
from ldp_interact.errors import InvalidParameterError, SupportError, UnknownSymbolError


def test_construction_renormalises_small_drift():
    d = FiniteDist(("a", "b"), (0.5, 0.5 + 5e-10))
    assert math.isclose(d.probs.sum(), 1.0, abs_tol=1e-15)


@pytest.mark.parametrize("probs", [(0.5, 0.6), (0.5, 0.4), (-0.1, 1.1)])
def test_construction_rejects_bad_mass(probs):
    with pytest.raises(InvalidParameterError):
        FiniteDist((0, 1), probs)


def test_duplicate_symbols_rejected():
    with pytest.raises(InvalidParameterError):
        FiniteDist((0, 0), (0.5, 0.5))


def test_probs_are_read_only():
    d = FiniteDist.uniform("xyz")
    with pytest.raises(ValueError):
        d.probs[0] = 1.0


def test_unknown_symbol():
    d = FiniteDist.bernoulli(0.3)
    assert d.prob(1) == pytest.approx(0.3)
    with pytest.raises(UnknownSymbolError):
        d.index(7)


def test_equality_and_hash():
    a = FiniteDist.from_mapping({"x": 0.25, "y": 0.75})
    b = FiniteDist(("x", "y"), (0.25, 0.75))
    assert a == b and hash(a) == hash(b)


def test_known_divergences():
    p = FiniteDist((0, 1), (0.5, 0.5))
    q = FiniteDist((0, 1), (0.9, 0.1))
    assert tv_distance(p, q) == pytest.approx(0.4, abs=1e-15)
    assert kl_divergence(p, q) == pytest.approx(0.5108256237659907, abs=1e-12)
    assert hellinger_sq(p, q) == pytest.approx(0.10557280900008414, abs=1e-12)


def test_divergences_on_disjoint_supports():
    p = FiniteDist.point_mass("a")
    q = FiniteDist.point_mass("b")
    assert tv_distance(p, q) == 1.0
    assert hellinger_sq(p, q) == pytest.approx(1.0)
    with pytest.raises(SupportError):
        kl_divergence(p, q)


def test_kl_is_zero_on_identical():
    p = FiniteDist.uniform(range(5))
    assert kl_divergence(p, p) == 0.0


def test_seeded_streams_reproduce():
    a = SeededRng(42).derive(3)
    b = SeededRng(42, (3,))
    assert [a.random() for _ in range(5)] == [b.random() for _ in range(5)]
    assert SeededRng(42).derive(1).random() != SeededRng(42).derive(2).random()


def test_seed_range():
    with pytest.raises(InvalidParameterError):
        SeededRng(-1)
    with pytest.raises(InvalidParameterError):
        SeededRng(2**64)


def test_sampling_frequencies():
    d = FiniteDist(("a", "b", "c"), (0.2, 0.3, 0.5))
    idx = sample_many(d, 200_000, SeededRng(0))
    freq = np.bincount(idx, minlength=3) / idx.size
    assert np.allclose(freq, d.probs, atol=0.005)
    rng = SeededRng(1)
    draws = [sample(d, rng) for _ in range(20_000)]
    assert draws.count("c") / len(draws) == pytest.approx(0.5, abs=0.015)


def _dists(k):
    return st.lists(st.floats(0.0, 1.0), min_size=k, max_size=k).filter(lambda w: sum(w) > 1e-3)


@settings(max_examples=200, deadline=None)
@given(st.integers(2, 6).flatmap(lambda k: st.tuples(_dists(k), _dists(k))))
def test_metric_inequalities(pair):
    w1, w2 = pair
    p = FiniteDist(range(len(w1)), np.array(w1) / sum(w1))
    q = FiniteDist(range(len(w2)), np.array(w2) / sum(w2))
    tv, h2 = tv_distance(p, q), hellinger_sq(p, q)
    assert 0.0 <= tv <= 1.0
    assert h2 <= tv + 1e-12
    assert tv <= math.sqrt(2.0 * h2) + 1e-12
    try:
        kl = kl_divergence(p, q)
    except SupportError:
        return
    assert 2 * tv <= math.sqrt(2 * kl) + 1e-12
    assert h2 <= 0.5 * kl + 1e-12
