"""Batch experiment runner.

Every subcommand resolves its flags (or a JSON config via ``run --config``)
into an :class:`ExperimentConfig`, validates it, and writes into
``output_dir``:

* ``config.json``: the fully resolved configuration,
* ``results.jsonl``: one record per trial,
* ``summary.csv``: aggregates, with the analytic bound next to the measured
  value where one exists,

plus ``audit.json``, ``transcripts.json`` or ``event_distribution.json``.
Exit codes: 0 success, 1 validation error, 2 runtime error.

Trial ``i`` always uses the stream ``SeededRng(seed, (i,))`` and records are
written in trial order, so output is byte-identical for any thread count
(set with ``LDP_INTERACT_THREADS``).
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import math
import os
import sys
from collections.abc import Callable
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ldp_interact import hypotest, mpj, reduction, verify
from ldp_interact.dist import FiniteDist, SeededRng
from ldp_interact.engine import classify
from ldp_interact.errors import InvalidParameterError, LdpError
from ldp_interact.serialization import build_protocol, dist_from_json, dumps, fmt, to_symbol

log = logging.getLogger("ldp_interact")

SUBCOMMANDS = ("reduce", "mpj", "hypotest", "audit", "enumerate")
CONFIG_KEYS = {"subcommand", "params", "seed", "trials", "output_dir"}
REQUIRED = object()

# name -> (converter, default); REQUIRED marks mandatory parameters.
PARAM_SCHEMA: dict[str, dict[str, tuple[Callable, object]]] = {
    "reduce": {"protocol": (lambda v: v, REQUIRED), "n": (int, None), "eps": (float, None),
               "anchor_x0": (to_symbol, None)},
    "mpj": {"d": (int, REQUIRED), "s": (int, None), "eps": (float, REQUIRED), "m": (int, None),
            "baseline": (str, "none")},
    "hypotest": {"mode": (str, REQUIRED), "p0": (list, None), "p1": (list, None),
                 "instance": (lambda v: v, None), "eps": (float, REQUIRED), "alpha": (float, None),
                 "n": (int, None), "auto_n": (bool, False), "c": (float, None)},
    "audit": {"protocol": (lambda v: v, REQUIRED), "semantics": (str, "follow"), "n": (int, None)},
    "enumerate": {"protocol": (lambda v: v, REQUIRED), "semantics": (str, "bayes"), "n": (int, None)},
}


class ConfigError(InvalidParameterError):
    """Invalid configuration; maps to exit code 1."""


@dataclass
class ExperimentConfig:
    subcommand: str
    params: dict = field(default_factory=dict)
    seed: int = 0
    trials: int = 1
    output_dir: str = "results"

    @classmethod
    def from_dict(cls, obj: dict) -> ExperimentConfig:
        if not isinstance(obj, dict):
            raise ConfigError("config must be a JSON object")
        unknown = set(obj) - CONFIG_KEYS
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "subcommand" not in obj:
            raise ConfigError("config is missing 'subcommand'")
        return cls(**obj).validated()

    def validated(self) -> ExperimentConfig:
        if self.subcommand not in SUBCOMMANDS:
            raise ConfigError(f"unknown subcommand {self.subcommand!r}")
        if not isinstance(self.seed, int) or not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        if not isinstance(self.trials, int) or self.trials < 1:
            raise ConfigError("trials must be a positive integer")
        if not isinstance(self.params, dict):
            raise ConfigError("params must be a JSON object")
        schema = PARAM_SCHEMA[self.subcommand]
        unknown = set(self.params) - set(schema)
        if unknown:
            raise ConfigError(f"unknown {self.subcommand} parameters: {sorted(unknown)}")
        resolved = {}
        for name, (conv, default) in schema.items():
            value = self.params.get(name)
            if value is None:
                if default is REQUIRED:
                    raise ConfigError(f"{self.subcommand} needs parameter {name!r}")
                resolved[name] = default
                continue
            try:
                resolved[name] = conv(value)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"parameter {name!r}: {exc}") from exc
        self.params = resolved
        return self


def load_json(path: str | Path, what: str):
    """Parse a JSON file; syntax errors report the line and column."""
    text = Path(path).read_text()
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{what} {path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc


def _protocol_definition(value) -> dict:
    return load_json(value, "protocol file") if isinstance(value, str) else value


def thread_count() -> int:
    raw = os.environ.get("LDP_INTERACT_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError as exc:
        raise ConfigError(f"LDP_INTERACT_THREADS must be an integer, got {raw!r}") from exc


def map_trials(fn: Callable[[int, SeededRng], dict], seed: int, trials: int) -> list[dict]:
    """Run ``fn(i, SeededRng(seed, (i,)))`` for each trial, keeping trial order."""
    jobs = range(trials)
    threads = thread_count()
    if threads == 1:
        return [fn(i, SeededRng(seed, (i,))) for i in jobs]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda i: fn(i, SeededRng(seed, (i,))), jobs))


def _csv_value(v) -> str:
    if isinstance(v, float):
        return fmt(v) if math.isfinite(v) else str(v)
    return "" if v is None else str(v)


def write_outputs(cfg: ExperimentConfig, records: list[dict], summary: dict,
                  extra: dict[str, object] | None = None) -> None:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(dumps(asdict(cfg)) + "\n")
    with open(out / "results.jsonl", "w") as fh:
        for rec in records:
            fh.write(dumps(rec) + "\n")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(list(summary))
    w.writerow([_csv_value(v) for v in summary.values()])
    (out / "summary.csv").write_text(buf.getvalue())
    for name, obj in (extra or {}).items():
        (out / name).write_text(dumps(obj) + "\n")


def transcript_hash(key: tuple) -> str:
    return hashlib.sha256(dumps(key).encode()).hexdigest()[:16]


def _stats(values) -> dict:
    a = np.asarray(values, dtype=float)
    std = float(a.std(ddof=1)) if a.size > 1 else 0.0
    return {"mean": float(a.mean()), "std": std, "stderr": std / math.sqrt(a.size)}


def _worst_composition(proto, prior, definition: dict) -> float | None:
    """``k_worst`` for the bound; ``None`` when the tree is too big to walk.

    The per-user charge of the histogram protocol does not depend on ``n``,
    so it is classified on its one-user instance.
    """
    try:
        if definition.get("builder") == "example2_histogram":
            small = dict(definition, params=dict(definition["params"], n=1))
            proto, prior, _ = build_protocol(small)
        return classify(proto, prior, proto.n_declared, cap=10**5).k_worst
    except LdpError as exc:
        log.warning("composition accounting skipped: %s", exc)
        return None


def cmd_reduce(cfg: ExperimentConfig) -> None:
    p = cfg.params
    definition = _protocol_definition(p["protocol"])
    proto, prior, opts = build_protocol(definition)
    n = p["n"] or proto.n_declared
    eps = p["eps"] if p["eps"] is not None else proto.eps
    if eps is None:
        raise ConfigError("eps is required when the protocol declares none")
    anchor = p["anchor_x0"] if p["anchor_x0"] is not None else (
        to_symbol(opts["anchor_x0"]) if "anchor_x0" in opts else None)
    red = reduction.Reduction(proto, prior, eps, anchor)

    def one(i: int, rng: SeededRng) -> dict:
        run = red.run(n, rng)
        return {"trial": i, "seed": cfg.seed, "samples_used": run.samples_used,
                "rounds": len(run.transcript), "transcript_hash": transcript_hash(run.transcript.key())}

    records = map_trials(one, cfg.seed, cfg.trials)
    st = _stats([r["samples_used"] for r in records])
    k = _worst_composition(proto, prior, definition)
    bound = reduction.sample_complexity_bound(n, eps, k) if k is not None else None
    summary = {"protocol": proto.name, "n": n, "eps": eps, "trials": cfg.trials,
               "mean_samples_used": st["mean"], "std_samples_used": st["std"],
               "k_worst": k, "bound_expected_samples": bound}
    write_outputs(cfg, records, summary)


def cmd_mpj(cfg: ExperimentConfig) -> None:
    p = cfg.params
    d, eps = p["d"], p["eps"]
    if p["baseline"] not in ("none", "sequential-cohorts"):
        raise ConfigError("baseline must be 'none' or 'sequential-cohorts'")
    s = p["s"] or mpj.default_arity(d)
    m = p["m"] or mpj.default_group_size(d, eps)
    if d < 1 or s < 2 or m < 1 or not eps > 0:
        raise ConfigError("mpj needs d >= 1, s >= 2, m >= 1, eps > 0")

    def one(i: int, rng: SeededRng) -> dict:
        inst = mpj.random_instance(d, s, rng)
        res = mpj.solve_full(inst, eps, m, rng)
        rec = {"trial": i, "seed": cfg.seed, "success": res.success, "n_users": res.n_users,
               "rounds": res.rounds, "output": list(res.output), "path": list(inst.path)}
        if p["baseline"] == "sequential-cohorts":
            rec["baseline_success"] = mpj.solve_sequential_cohorts(inst, eps, m, rng).success
        return rec

    records = map_trials(one, cfg.seed, cfg.trials)
    st = _stats([r["success"] for r in records])
    summary = {"d": d, "s": s, "eps": eps, "m": m, "m_formula": mpj.default_group_size(d, eps),
               "groups": mpj.bits_per_child(s), "n_users": records[0]["n_users"],
               "trials": cfg.trials, "success_rate": st["mean"], "success_stderr": st["stderr"],
               "target_success": 2 / 3}
    if p["baseline"] == "sequential-cohorts":
        summary["baseline_success_rate"] = _stats([r["baseline_success"] for r in records])["mean"]
    write_outputs(cfg, records, summary)


def _dist_arg(v, support=None) -> FiniteDist:
    if isinstance(v, dict):
        return dist_from_json(v)
    probs = [float(x) for x in v]
    return FiniteDist(support or tuple(range(len(probs))), probs)


def _compound_instance(obj) -> hypotest.CompoundInstance:
    if isinstance(obj, str):
        obj = load_json(obj, "instance file")
    if not isinstance(obj, dict) or set(obj) - {"ground_set", "h0", "h1"} or not {"h0", "h1"} <= set(obj):
        raise ConfigError("compound instance needs keys h0, h1 and optionally ground_set")
    k = len(obj["h0"][0])
    ground = tuple(to_symbol(x) for x in obj.get("ground_set", range(k)))
    h0 = tuple(_dist_arg(v, ground) for v in obj["h0"])
    h1 = tuple(_dist_arg(v, ground) for v in obj["h1"])
    return hypotest.CompoundInstance(ground, h0, h1)


def cmd_hypotest(cfg: ExperimentConfig) -> None:
    p = cfg.params
    eps, mode = p["eps"], p["mode"]
    extra = {}
    if mode == "simple":
        if p["p0"] is None or p["p1"] is None:
            raise ConfigError("simple mode needs p0 and p1")
        inst = hypotest.SimpleTestInstance(_dist_arg(p["p0"]), _dist_arg(p["p1"]))
        alpha = inst.alpha

        def rate(n: int, rng: SeededRng, trials: int) -> float:
            return hypotest.simple_success_rate(inst, eps, n, trials, rng)

        def one(i, rng, n):
            truth = i % 2
            decision = hypotest.simple_test(inst, eps, n, rng, truth)
            return {"trial": i, "seed": cfg.seed, "truth": truth, "decision": decision,
                    "correct": decision == truth}
    elif mode == "compound":
        if p["instance"] is None:
            raise ConfigError("compound mode needs an instance")
        inst = _compound_instance(p["instance"])
        s = hypotest.solve_event_game(inst)
        inst = hypotest.certify(inst, s)
        alpha = inst.alpha
        extra["event_distribution.json"] = s.as_json()
        truths = hypotest.compound_truths(inst)
        h0 = [dd for lbl, dd in truths if lbl == 0]
        h1 = [dd for lbl, dd in truths if lbl == 1]

        def rate(n: int, rng: SeededRng, trials: int) -> float:
            return hypotest.compound_success_rate(inst, s, eps, n, trials, rng)

        def one(i, rng, n):
            truth = i % 2
            pool = h1 if truth else h0
            decision = hypotest.compound_test(inst, s, eps, n, rng, pool[(i // 2) % len(pool)])
            return {"trial": i, "seed": cfg.seed, "truth": truth, "decision": decision,
                    "correct": decision == truth}
    else:
        raise ConfigError("mode must be 'simple' or 'compound'")
    if p["alpha"] is not None:
        alpha = p["alpha"]
    c = p["c"]
    sweep = None
    if p["n"] is not None:
        n = p["n"]
    elif p["auto_n"]:
        cal_rng = SeededRng(cfg.seed, (2**32,))
        cal = hypotest.calibrate_constant(lambda nn: rate(nn, cal_rng.derive(nn), cfg.trials),
                                          alpha, eps, cfg.trials)
        if cal.c is None:
            raise InvalidParameterError("no constant up to 64 met the calibration targets")
        c, n = cal.c, cal.n
        sweep = [list(row) for row in cal.sweep]
    elif c is not None:
        n = hypotest.sample_size(c, eps, alpha)
    else:
        raise ConfigError("give one of n, auto_n or c")
    records = map_trials(lambda i, rng: one(i, rng, n), cfg.seed, cfg.trials)
    st = _stats([r["correct"] for r in records])
    summary = {"mode": mode, "eps": eps, "alpha": alpha, "c": c, "n": n,
               "n_formula_unit": 1.0 / (eps * eps * alpha * alpha), "trials": cfg.trials,
               "success_rate": st["mean"], "success_stderr": st["stderr"], "target_success": 2 / 3}
    if sweep is not None:
        extra["calibration.json"] = {"sweep": sweep, "columns": ["c", "n", "success", "success_quarter"]}
    write_outputs(cfg, records, summary, extra)


def cmd_audit(cfg: ExperimentConfig) -> None:
    p = cfg.params
    proto, prior, _ = build_protocol(_protocol_definition(p["protocol"]))
    report = verify.audit_protocol(proto, p["n"], p["semantics"], prior)
    summary = {"protocol": proto.name, "semantics": p["semantics"], "declared_eps": proto.eps,
               "realized_eps": report.realized_eps}
    write_outputs(cfg, [report.as_json()], summary, {"audit.json": report.as_json()})


def cmd_enumerate(cfg: ExperimentConfig) -> None:
    p = cfg.params
    proto, prior, _ = build_protocol(_protocol_definition(p["protocol"]))
    dist = verify.enumerate_transcripts(proto, prior, p["n"] or proto.n_declared, p["semantics"])
    entries = dist.as_json()
    summary = {"protocol": proto.name, "semantics": p["semantics"], "transcripts": len(entries),
               "total_probability": dist.total()}
    write_outputs(cfg, entries, summary, {"transcripts.json": entries})


COMMANDS = {"reduce": cmd_reduce, "mpj": cmd_mpj, "hypotest": cmd_hypotest,
            "audit": cmd_audit, "enumerate": cmd_enumerate}


def run(cfg: ExperimentConfig) -> int:
    """Execute a validated config; returns the process exit code."""
    try:
        cfg.validated()
        COMMANDS[cfg.subcommand](cfg)
    except (ConfigError, InvalidParameterError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (LdpError, MemoryError, OSError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2
    return 0


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _json_arg(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"bad JSON argument {text!r}: {exc.msg}") from exc


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ldp-interact", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="subcommand", required=True, parser_class=_Parser)

    def common(sp, trials=True):
        sp.add_argument("--seed", type=int, default=0)
        if trials:
            sp.add_argument("--trials", type=int, default=1)
        sp.add_argument("--out", dest="output_dir", default="results")

    sp = sub.add_parser("reduce", help="sequential simulation of a protocol")
    sp.add_argument("--protocol", required=True, help="protocol definition JSON file")
    sp.add_argument("--n", type=int)
    sp.add_argument("--eps", type=float)
    sp.add_argument("--anchor-x0", dest="anchor_x0", type=_json_arg)
    common(sp)

    sp = sub.add_parser("mpj", help="pointer-jumping solver success rate")
    sp.add_argument("--d", type=int, required=True)
    sp.add_argument("--s", type=int)
    sp.add_argument("--eps", type=float, required=True)
    sp.add_argument("--m", type=int)
    sp.add_argument("--baseline", choices=("none", "sequential-cohorts"), default="none")
    common(sp)

    sp = sub.add_parser("hypotest", help="private hypothesis testing")
    sp.add_argument("--mode", choices=("simple", "compound"), required=True)
    sp.add_argument("--p0", type=_json_arg, help="JSON list of probabilities")
    sp.add_argument("--p1", type=_json_arg)
    sp.add_argument("--instance", help="compound instance JSON file")
    sp.add_argument("--eps", type=float, required=True)
    sp.add_argument("--alpha", type=float)
    sp.add_argument("--n", type=int)
    sp.add_argument("--auto-n", dest="auto_n", action="store_true")
    sp.add_argument("--c", type=float)
    common(sp)

    for name, default in (("audit", "follow"), ("enumerate", "bayes")):
        sp = sub.add_parser(name, help=f"exact {name} of a protocol")
        sp.add_argument("--protocol", required=True)
        sp.add_argument("--semantics", choices=("follow", "bayes"), default=default)
        sp.add_argument("--n", type=int)
        common(sp, trials=False)

    sp = sub.add_parser("run", help="run a JSON experiment config")
    sp.add_argument("--config", required=True)
    return parser


def config_from_args(ns: argparse.Namespace) -> ExperimentConfig:
    if ns.subcommand == "run":
        return ExperimentConfig.from_dict(load_json(ns.config, "config file"))
    skip = {"subcommand", "seed", "trials", "output_dir", "verbose"}
    params = {k: v for k, v in vars(ns).items() if k not in skip and v is not None}
    if params.get("auto_n") is False:
        del params["auto_n"]
    return ExperimentConfig(ns.subcommand, params, ns.seed, getattr(ns, "trials", 1), ns.output_dir)


def main(argv: list[str] | None = None) -> int:
    try:
        ns = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING)
        cfg = config_from_args(ns)
    except (ConfigError, InvalidParameterError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
