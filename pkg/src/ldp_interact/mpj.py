"""Multi-Party Pointer Jumping: instances, data, and the interactive solver.

An instance is a complete ``s``-ary tree of depth ``d`` in which every vertex
points at one child.  Level ``i`` is stored as a flat array ``Z_i`` of length
``s**(i-1)``; vertex ``j`` at level ``i`` points at child ``Z_i[j]``.  The
root-to-leaf path follows the base-``s`` positional recursion
``P_i = Z_i[sum_{j<i} P_j * s**(i-1-j)]`` (0-based indices).

A datum is ``(level, payload)``: ``(0, ())`` is a dummy with probability 1/2,
otherwise the level is uniform on ``1..d`` and the payload is ``Z_level``.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from ldp_interact.dist import FiniteDist, SeededRng
from ldp_interact.engine import Assignment, Protocol, Transcript, classify
from ldp_interact.errors import InvalidParameterError, SizeOverflowError
from ldp_interact.randomizers import make_binary

DEFAULT_MAX_ENTRIES = 10**8


@dataclass(frozen=True, eq=False)
class MpjInstance:
    d: int
    s: int
    levels: tuple[np.ndarray, ...]
    path: tuple[int, ...]

    def __post_init__(self):
        for i, z in enumerate(self.levels, start=1):
            if z.size != self.s ** (i - 1):
                raise InvalidParameterError(f"level {i} has {z.size} entries, expected {self.s ** (i - 1)}")

    @property
    def n_entries(self) -> int:
        return sum(z.size for z in self.levels)


@dataclass(frozen=True)
class MpjDatum:
    level: int
    payload: tuple = ()

    def __post_init__(self):
        if (self.level == 0) != (len(self.payload) == 0):
            raise InvalidParameterError("dummy data (level 0) carry an empty payload and only they do")


def compute_path(levels, s: int) -> tuple[int, ...]:
    path: list[int] = []
    idx = 0
    for z in levels:
        p = int(z[idx])
        path.append(p)
        idx = idx * s + p
    return tuple(path)


def make_instance(levels, s: int) -> MpjInstance:
    dtype = np.uint8 if s <= 256 else np.int64
    arrays = tuple(np.asarray(z, dtype=dtype) for z in levels)
    for z in arrays:
        if z.size and (int(z.min()) < 0 or int(z.max()) >= s):
            raise InvalidParameterError(f"labels must lie in [0, {s})")
    return MpjInstance(len(arrays), s, arrays, compute_path(arrays, s))


def default_arity(d: int) -> int:
    return max(2, d**4)


def random_instance(d: int, s: int | None, rng: SeededRng,
                    max_entries: int = DEFAULT_MAX_ENTRIES) -> MpjInstance:
    """Instance with every label uniform on ``{0, ..., s-1}``."""
    s = default_arity(d) if s is None else s
    if d < 1 or s < 2:
        raise InvalidParameterError("need d >= 1 and s >= 2")
    total = sum(s**i for i in range(d))
    if total > max_entries:
        raise SizeOverflowError(f"instance needs {total} labels (cap {max_entries})")
    dtype = np.uint8 if s <= 256 else np.int64
    levels = [rng.gen.integers(0, s, size=s**i, dtype=dtype) for i in range(d)]
    return make_instance(levels, s)


def sample_datum(inst: MpjInstance, rng: SeededRng) -> MpjDatum:
    if rng.random() < 0.5:
        return MpjDatum(0)
    level = 1 + min(int(rng.random() * inst.d), inst.d - 1)
    return MpjDatum(level, tuple(int(v) for v in inst.levels[level - 1]))


def sample_levels(d: int, size: int, rng: SeededRng) -> np.ndarray:
    """Levels of ``size`` fresh data; 0 marks a dummy."""
    dummy = rng.gen.random(size) < 0.5
    lv = rng.gen.integers(1, d + 1, size=size)
    return np.where(dummy, 0, lv)


def bits_per_child(s: int) -> int:
    return max(1, math.ceil(math.log2(s)))


def default_group_size(d: int, eps: float) -> int:
    """Users per group ``m = 512 d^2 ln(d) ((e^eps + 1) / (e^eps - 1))^2``, rounded up."""
    ratio = (math.exp(eps) + 1.0) / math.expm1(eps)
    return max(1, math.ceil(512 * d * d * math.log(d) * ratio * ratio))


def _bit(value: int, g: int, u: int) -> int:
    """``g``-th bit (0-based, most significant first) of a ``u``-bit value."""
    return (int(value) >> (u - 1 - g)) & 1


@dataclass(frozen=True)
class MpjResult:
    output: tuple[int, ...]
    success: bool
    n_users: int
    rounds: int


def solve_full(inst: MpjInstance, eps: float, m: int, rng: SeededRng,
               levels: np.ndarray | None = None) -> MpjResult:
    """Fully interactive ``eps``-LDP pointer-jumping protocol.

    ``u = ceil(log2 s)`` groups of ``m`` users each.  In round ``r`` every user
    of group ``g`` holding level ``r`` reports bit ``g`` of ``Z_r[Q]`` through
    binary randomized response; all other users publish a fair coin.  Each
    bit of ``Q_r`` is the group's majority (ties go to 1) and ``Q <- s Q + Q_r``.
    Decoded children ``>= s`` cannot occur in a valid path and are clamped
    to ``s - 1``.
    """
    d, s = inst.d, inst.s
    u = bits_per_child(s)
    n = u * m
    if m < 1:
        raise InvalidParameterError("m must be >= 1")
    if levels is None:
        levels = sample_levels(d, n, rng)
    keep = math.exp(eps) / (math.exp(eps) + 1.0)
    group = np.repeat(np.arange(u), m)
    shifts = (u - 1 - group).astype(np.int64)
    q = 0
    out: list[int] = []
    for r in range(1, d + 1):
        target = int(inst.levels[r - 1][q])
        true_bits = (target >> shifts) & 1
        coins = rng.gen.random(n)
        on_level = levels == r
        truthful = coins < keep
        y = np.where(on_level, np.where(truthful, true_bits, 1 - true_bits), coins < 0.5)
        ones = np.bincount(group, weights=y, minlength=u)
        qr = 0
        for g in range(u):
            qr = (qr << 1) | int(2 * ones[g] >= m)
        qr = min(qr, s - 1)
        out.append(qr)
        q = q * s + qr
    output = tuple(out)
    return MpjResult(output, output == inst.path, n, d * n)


def solve_sequential_cohorts(inst: MpjInstance, eps: float, m: int, rng: SeededRng) -> MpjResult:
    """Comparison baseline: the same ``u * m`` users split into ``d`` fresh cohorts.

    Round ``r`` only queries cohort ``r``, so every user answers once.  No
    claim is attached to its success rate; it is reported for contrast.
    """
    d, s = inst.d, inst.s
    u = bits_per_child(s)
    per = max(1, m // d)
    keep = math.exp(eps) / (math.exp(eps) + 1.0)
    q = 0
    out: list[int] = []
    for r in range(1, d + 1):
        target = int(inst.levels[r - 1][q])
        qr = 0
        for g in range(u):
            b = _bit(target, g, u)
            lv = sample_levels(d, per, rng)
            coins = rng.gen.random(per)
            y = np.where(lv == r, np.where(coins < keep, b, 1 - b), coins < 0.5)
            qr = (qr << 1) | int(2 * int(y.sum()) >= per)
        qr = min(qr, s - 1)
        out.append(qr)
        q = q * s + qr
    output = tuple(out)
    return MpjResult(output, output == inst.path, u * per * d, d)


# Engine form of the solver, used for exact audits and composition accounting
# on tiny instances.  The data domain is every possible datum (dummy plus
# every payload of every level) because the protocol does not know Z.

def datum_domain(d: int, s: int) -> tuple[tuple, ...]:
    dom: list[tuple] = [(0, ())]
    for level in range(1, d + 1):
        size = s ** (level - 1)
        if s**size > 10**6:
            raise SizeOverflowError("datum domain too large to tabulate")
        dom.extend((level, payload) for payload in itertools.product(range(s), repeat=size))
    return tuple(dom)


def mpj_protocol(d: int, s: int, m: int, eps: float) -> tuple[Protocol, FiniteDist]:
    """The interactive solver as an engine :class:`Protocol` over all data.

    Users ``g*m .. g*m+m-1`` form group ``g``.  Rounds run level by level,
    group by group, user by user; randomizer ``(r, g, j)`` answers bit ``g``
    of ``Z_r[j]`` for level-``r`` data and flips a fair coin otherwise.
    """
    u = bits_per_child(s)
    domain = datum_domain(d, s)
    keep = math.exp(eps) / (math.exp(eps) + 1.0)
    registry = {}
    for r in range(1, d + 1):
        for j in range(s ** (r - 1)):
            for g in range(u):
                def p_one(x, r=r, j=j, g=g):
                    if x[0] != r:
                        return 0.5
                    return keep if _bit(x[1][j], g, u) else 1.0 - keep
                registry[(r, g, j)] = make_binary(domain, p_one, declared_eps=eps, name=f"mpj{r}.{g}.{j}")
    n = u * m

    def step(t: Transcript) -> Assignment | None:
        k = len(t)
        per_round = u * m
        r = k // per_round + 1
        if r > d:
            return None
        msgs = t.messages()
        q = 0
        for rr in range(1, r):
            block = msgs[(rr - 1) * per_round: rr * per_round]
            qr = 0
            for g in range(u):
                ones = sum(block[g * m:(g + 1) * m])
                qr = (qr << 1) | int(2 * ones >= m)
            q = q * s + min(qr, s - 1)
        pos = k % per_round
        g = pos // m
        return Assignment(g * m + pos % m, (r, g, q), eps)

    proto = Protocol(step, n, registry, eps=eps, name="mpj_full",
                     params={"d": d, "s": s, "m": m, "eps": eps})
    return proto, FiniteDist.uniform(domain)


def compositionality_of_mpj(d: int, eps: float) -> float:
    """Worst per-user ratio ``sum_t minimal_eps(R_t) / eps`` of the MPJ solver.

    Evaluated by :func:`classify` on the smallest engine instance
    (``s = 2``, one user); the per-user sum does not depend on ``s`` or ``m``.
    """
    proto, prior = mpj_protocol(d, 2, 1, eps)
    return classify(proto, prior, proto.n_declared, overall_eps=eps).k_worst
