import itertools
import math

import numpy as np
import pytest

from ldp_interact.dist import SeededRng
from ldp_interact.errors import InvalidParameterError, SizeOverflowError
from ldp_interact.mpj import (
    MpjDatum,
    bits_per_child,
    compositionality_of_mpj,
    compute_path,
    default_arity,
    default_group_size,
    make_instance,
    mpj_protocol,
    random_instance,
    sample_datum,
    solve_full,
    solve_sequential_cohorts,
)
from ldp_interact.verify import audit_protocol


def test_tree_example_path():
    inst = make_instance([[0], [1, 0], [0, 1, 1, 0]], s=2)
    assert inst.path == (0, 1, 1)


def test_depth_one_path():
    inst = random_instance(1, 5, SeededRng(0))
    assert inst.path == (int(inst.levels[0][0]),)


def test_paths_in_bounds_exhaustive():
    s = 3
    for z1 in range(s):
        for z2 in itertools.product(range(s), repeat=s):
            path = compute_path([np.array([z1]), np.array(z2)], s)
            assert path == (z1, z2[z1])
            assert all(0 <= p < s for p in path)


def test_random_instance_roundtrip():
    inst = random_instance(3, 4, SeededRng(2))
    assert [z.size for z in inst.levels] == [1, 4, 16]
    assert compute_path(inst.levels, 4) == inst.path


def test_level_size_invariant():
    with pytest.raises(InvalidParameterError):
        make_instance([[0], [1]], s=2)
    with pytest.raises(InvalidParameterError):
        make_instance([[2]], s=2)


def test_size_overflow():
    with pytest.raises(SizeOverflowError):
        random_instance(6, None, SeededRng(0))


def test_defaults():
    assert default_arity(3) == 81
    assert bits_per_child(81) == 7
    assert bits_per_child(2) == 1
    ratio = (math.e + 1) / (math.e - 1)
    assert default_group_size(4, 1.0) == math.ceil(512 * 16 * math.log(4) * ratio**2)


def test_datum_invariant():
    with pytest.raises(InvalidParameterError):
        MpjDatum(0, (1,))
    with pytest.raises(InvalidParameterError):
        MpjDatum(2, ())


def test_datum_frequencies():
    inst = random_instance(4, 2, SeededRng(1))
    rng = SeededRng(2)
    counts = np.zeros(5)
    for _ in range(100_000):
        x = sample_datum(inst, rng)
        counts[x.level] += 1
        if x.level:
            assert x.payload == tuple(int(v) for v in inst.levels[x.level - 1])
    freq = counts / counts.sum()
    assert freq[0] == pytest.approx(0.5, abs=0.005)
    assert np.allclose(freq[1:], 0.125, atol=0.004)


def _rate(d, s, eps, m, trials, seed, solver=solve_full):
    hits = 0
    for i in range(trials):
        rng = SeededRng(seed, (i,))
        hits += solver(random_instance(d, s, rng), eps, m, rng).success
    return hits / trials


def test_single_level_large_m():
    assert _rate(1, 2, 1.0, 10_000, 100, 0) >= 0.99


def test_near_noiseless():
    d = 3
    m = math.ceil(64 * d * d * math.log(d))
    assert _rate(d, None, 20.0, m, 100, 1) >= 1 - 1 / d


def test_solver_accounting():
    inst = random_instance(2, 16, SeededRng(0))
    res = solve_full(inst, 1.0, 10, SeededRng(1))
    assert res.n_users == 4 * 10
    assert res.rounds == 2 * 40
    assert len(res.output) == 2 and all(0 <= q < 16 for q in res.output)


def test_success_nondecreasing_in_m():
    d, s, eps = 2, 16, 1.0
    m0 = 40
    rates = [_rate(d, s, eps, m, 200, 7) for m in (m0, 2 * m0, 4 * m0)]
    for lo, hi in zip(rates, rates[1:]):
        se = math.sqrt((lo * (1 - lo) + hi * (1 - hi)) / 200)
        assert hi >= lo - 2 * se


def test_baseline_runs():
    inst = random_instance(2, 2, SeededRng(0))
    res = solve_sequential_cohorts(inst, 1.0, 100, SeededRng(0))
    assert len(res.output) == 2


def test_tiny_audit():
    proto, _ = mpj_protocol(2, 2, 2, 1.0)
    assert audit_protocol(proto).realized_eps <= 1.0 + 1e-9


def test_engine_form_matches_vectorised_solver():
    # Same law for the decoded path: compare success rates on one instance.
    from ldp_interact.engine import follow_expt
    from ldp_interact.dist import FiniteDist

    inst = make_instance([[1], [0, 1]], s=2)
    m, eps = 5, 1.0
    proto, _ = mpj_protocol(2, 2, m, eps)
    real = [(0, ())] + [(lv, tuple(int(v) for v in inst.levels[lv - 1])) for lv in (1, 2)]
    prior = FiniteDist(real, (0.5, 0.25, 0.25))
    rng = SeededRng(3)
    trials = 4000

    def decoded(msgs):
        out = []
        for r in range(2):
            qr = int(2 * sum(msgs[r * m:(r + 1) * m]) >= m)
            out.append(qr)
        return tuple(out)

    engine_rate = np.mean([decoded(follow_expt(proto, prior, m, rng).messages()) == inst.path
                           for _ in range(trials)])
    fast_rate = np.mean([solve_full(inst, eps, m, SeededRng(4, (i,))).success for i in range(trials)])
    se = math.sqrt(2 * 0.25 / trials)
    assert abs(engine_rate - fast_rate) <= 4 * se


def test_compositionality_grows_with_depth():
    ks = [compositionality_of_mpj(d, 1.0) for d in (1, 2, 3)]
    assert ks[0] <= 1.0 + 1e-12
    assert ks == pytest.approx([1.0, 2.0, 3.0], abs=1e-9)
    assert ks[2] >= 3 / 2
