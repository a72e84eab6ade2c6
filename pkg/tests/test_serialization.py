import json
import math

import numpy as np
import pytest

from ldp_interact.dist import FiniteDist
from ldp_interact.errors import InvalidParameterError
from ldp_interact.mpj import datum_domain
from ldp_interact.randomizers import Randomizer, make_randomized_response
from ldp_interact.serialization import (
    build_protocol,
    dist_from_json,
    dist_to_json,
    dumps,
    randomizer_from_json,
    randomizer_to_json,
)


def test_randomizer_roundtrip_is_exact():
    r = make_randomized_response(4, 0.37)
    obj = json.loads(json.dumps(randomizer_to_json(r)))
    assert all(isinstance(p, str) and len(p.replace(".", "").lstrip("0")) >= 15
               for row in obj["rows"] for p in row if float(p) != 0)
    back = randomizer_from_json(obj)
    assert np.array_equal(back.table, r.table)
    assert back.declared_eps == r.declared_eps and back.domain == r.domain


def test_tuple_symbols_survive():
    dom = datum_domain(2, 2)
    r = Randomizer(dom, ("n", "y"), np.full((len(dom), 2), 0.5), 0.0)
    back = randomizer_from_json(json.loads(json.dumps(randomizer_to_json(r))))
    assert back.domain == dom


def test_missing_eps_defaults_to_minimal():
    r = randomizer_from_json({"domain": [0, 1], "range": [0, 1],
                              "rows": [["0.75", "0.25"], ["0.25", "0.75"]]})
    assert r.declared_eps == pytest.approx(math.log(3.0))


def test_unknown_keys_rejected():
    with pytest.raises(InvalidParameterError):
        randomizer_from_json({"domain": [0], "range": [0], "rows": [["1"]], "colour": 1})
    with pytest.raises(InvalidParameterError):
        build_protocol({"builder": "double_query", "params": {"eps": 1}, "extra": 2})
    with pytest.raises(InvalidParameterError):
        build_protocol({"builder": "nope"})
    with pytest.raises(InvalidParameterError):
        build_protocol({"builder": "example2_histogram", "params": {"d": 2}})


def test_dist_roundtrip():
    d = FiniteDist(("a", (1, 2)), (0.1, 0.9))
    assert dist_from_json(json.loads(json.dumps(dist_to_json(d)))) == d


def test_schedule_builder():
    r = randomizer_to_json(make_randomized_response(2, 1.0))
    proto, prior, _ = build_protocol({
        "builder": "schedule", "registry": {"a": r},
        "params": {"n": 2, "rounds": [[0, "a"], [1, "a"], [0, "a"]]},
        "prior": {"support": [0, 1], "probs": ["0.5", "0.5"]},
    })
    assert proto.n_declared == 2 and prior.prob(1) == 0.5
    with pytest.raises(InvalidParameterError):
        build_protocol({"builder": "schedule", "registry": {"a": r},
                        "params": {"n": 1, "rounds": [[0, "a"]]}})


@pytest.mark.parametrize("builder,params", [
    ("example2_histogram", {"d": 2, "eps": 1.0, "n": 3}),
    ("mpj_full", {"d": 2, "s": 2, "m": 1, "eps": 1.0}),
    ("simple_hypotest", {"p0": {"support": [0, 1], "probs": [0.4, 0.6]},
                         "p1": {"support": [0, 1], "probs": [0.6, 0.4]}, "eps": 1.0, "n": 2}),
    ("ternary_search", {"eps": 0.5}),
])
def test_builders(builder, params):
    proto, prior, _ = build_protocol({"builder": builder, "params": params})
    assert proto.n_declared >= 1 and len(prior.support) >= 2


def test_dumps_formatting():
    assert dumps({"b": 0.1, "a": [1, np.float64(2.5), True, None, float("inf")]}) == \
        '{"a":[1,2.5,true,null,"inf"],"b":0.10000000000000001}'
    assert json.loads(dumps({"x": 1 / 3}))["x"] == 1 / 3
