"""JSON encodings for randomizers, distributions and protocol definitions.

Probabilities are written as decimal strings with 17 significant digits so a
round trip reproduces every float exactly.  JSON arrays inside symbols are
read back as tuples so they stay hashable.

A protocol definition names one builtin builder::

    {"builder": "example2_histogram", "params": {"d": 3, "eps": 1.0, "n": 20}}
    {"builder": "schedule", "registry": {"a": <randomizer>}, "params":
        {"n": 2, "rounds": [[0, "a"], [1, "a"]]}, "prior": <dist>}

Builders: ``example2_histogram``, ``mpj_full``, ``simple_hypotest``,
``schedule``, ``single_round`` and every verification-corpus name.  An
optional ``"reduction": {"anchor_x0": ...}`` block configures the sequential
wrapper used by the ``reduce`` subcommand.
"""
from __future__ import annotations

import json
import math
from collections.abc import Hashable

from ldp_interact.dist import FiniteDist
from ldp_interact.engine import Protocol
from ldp_interact.errors import InvalidParameterError
from ldp_interact.randomizers import Randomizer


def fmt(x: float) -> str:
    return format(float(x), ".17g")


def to_symbol(v) -> Hashable:
    """JSON value to a hashable symbol (lists become tuples, recursively)."""
    if isinstance(v, list):
        return tuple(to_symbol(e) for e in v)
    if isinstance(v, dict):
        raise InvalidParameterError("objects cannot be used as symbols")
    return v


def from_symbol(v):
    if isinstance(v, tuple):
        return [from_symbol(e) for e in v]
    return v


def _prob(s) -> float:
    try:
        p = float(s)
    except (TypeError, ValueError) as exc:
        raise InvalidParameterError(f"bad probability {s!r}") from exc
    if not math.isfinite(p):
        raise InvalidParameterError(f"bad probability {s!r}")
    return p


def randomizer_to_json(r: Randomizer) -> dict:
    return {
        "name": r.name,
        "domain": [from_symbol(x) for x in r.domain],
        "range": [from_symbol(y) for y in r.range],
        "rows": [[fmt(p) for p in row] for row in r.table],
        "eps": fmt(r.declared_eps),
        "delta": fmt(r.declared_delta),
    }


def randomizer_from_json(obj: dict) -> Randomizer:
    _require(obj, {"domain", "range", "rows"}, {"eps", "delta", "name"}, "randomizer")
    rows = [[_prob(p) for p in row] for row in obj["rows"]]
    eps = _prob(obj["eps"]) if "eps" in obj else None
    r = Randomizer(
        domain=tuple(to_symbol(x) for x in obj["domain"]),
        range=tuple(to_symbol(y) for y in obj["range"]),
        table=rows,
        declared_eps=math.inf if eps is None else eps,
        declared_delta=_prob(obj.get("delta", 0.0)),
        name=obj.get("name", "r"),
    )
    if eps is None:
        r = Randomizer(r.domain, r.range, rows, r.min_eps, r.declared_delta, r.name)
    return r


def dist_to_json(d: FiniteDist) -> dict:
    return {"support": [from_symbol(x) for x in d.support], "probs": [fmt(p) for p in d.probs]}


def dist_from_json(obj: dict) -> FiniteDist:
    _require(obj, {"support", "probs"}, set(), "distribution")
    return FiniteDist([to_symbol(x) for x in obj["support"]], [_prob(p) for p in obj["probs"]])


def _require(obj, required: set, optional: set, what: str) -> None:
    if not isinstance(obj, dict):
        raise InvalidParameterError(f"{what} must be a JSON object")
    unknown = set(obj) - required - optional
    if unknown:
        raise InvalidParameterError(f"unknown {what} keys: {sorted(unknown)}")
    missing = required - set(obj)
    if missing:
        raise InvalidParameterError(f"missing {what} keys: {sorted(missing)}")


PROTOCOL_KEYS = {"builder", "params", "registry", "prior", "reduction"}


def build_protocol(definition: dict) -> tuple[Protocol, FiniteDist, dict]:
    """Instantiate a protocol definition.

    Returns ``(protocol, prior, reduction_options)``.
    """
    from ldp_interact import hypotest, mpj, protocols

    _require(definition, {"builder"}, PROTOCOL_KEYS - {"builder"}, "protocol")
    name = definition["builder"]
    params = dict(definition.get("params", {}))
    registry = {k: randomizer_from_json(v) for k, v in definition.get("registry", {}).items()}
    prior = dist_from_json(definition["prior"]) if "prior" in definition else None
    try:
        if name == "example2_histogram":
            proto, default_prior = protocols.example2_histogram(
                int(params["d"]), float(params["eps"]), int(params.get("n", 1)))
        elif name == "mpj_full":
            proto, default_prior = mpj.mpj_protocol(
                int(params["d"]), int(params.get("s", 2)), int(params.get("m", 1)), float(params["eps"]))
        elif name == "simple_hypotest":
            inst = hypotest.SimpleTestInstance(dist_from_json(params["p0"]), dist_from_json(params["p1"]))
            proto, default_prior = hypotest.simple_hypotest_protocol(inst, float(params["eps"]), int(params["n"]))
        elif name in protocols.CORPUS:
            proto, default_prior = protocols.CORPUS[name](float(params["eps"]))
        elif name == "schedule":
            if not registry:
                raise InvalidParameterError("schedule protocols need a registry")
            rounds = [(u, to_symbol(rid)) for u, rid in params["rounds"]]
            eps = float(params["eps"]) if "eps" in params else None
            proto = protocols.fixed_schedule(registry, rounds, int(params["n"]), eps)
            default_prior = None
        elif name == "single_round":
            if len(registry) != 1:
                raise InvalidParameterError("single_round needs exactly one randomizer")
            (r,) = registry.values()
            proto, default_prior = protocols.single_round(r, int(params.get("n", 1)))
        else:
            raise InvalidParameterError(f"unknown protocol builder {name!r}")
    except KeyError as exc:
        raise InvalidParameterError(f"builder {name!r} is missing parameter {exc.args[0]!r}") from exc
    prior = prior or default_prior
    if prior is None:
        raise InvalidParameterError(f"builder {name!r} needs an explicit prior")
    return proto, prior, dict(definition.get("reduction", {}))


def dumps(obj) -> str:
    """Compact, key-sorted JSON with every float at 17 significant digits.

    Non-finite floats are written as the strings ``"inf"``, ``"-inf"``, ``"nan"``.
    """
    if isinstance(obj, (bool, type(None), str, int)) and not hasattr(obj, "dtype"):
        return json.dumps(obj)
    if hasattr(obj, "item") and callable(obj.item):
        return dumps(obj.item())
    if isinstance(obj, float):
        return fmt(obj) if math.isfinite(obj) else json.dumps(str(obj))
    if isinstance(obj, dict):
        items = sorted(((str(k), v) for k, v in obj.items()), key=lambda kv: kv[0])
        return "{" + ",".join(json.dumps(k) + ":" + dumps(v) for k, v in items) + "}"
    if isinstance(obj, (list, tuple)):
        return "[" + ",".join(dumps(v) for v in obj) + "]"
    raise TypeError(f"cannot serialise {type(obj).__name__}")
