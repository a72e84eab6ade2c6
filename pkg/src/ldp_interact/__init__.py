"""Simulation lab for interactive locally differentially private protocols."""
from ldp_interact.dist import FiniteDist, SeededRng, hellinger_sq, kl_divergence, tv_distance
from ldp_interact.engine import Assignment, Protocol, Transcript, bayes_expt, classify, follow_expt
from ldp_interact.hypotest import (
    CompoundInstance,
    SimpleTestInstance,
    compound_test,
    simple_test,
    solve_event_game,
)
from ldp_interact.mpj import random_instance, solve_full
from ldp_interact.randomizers import Randomizer, decompose, make_randomized_response, minimal_eps
from ldp_interact.reduction import Reduction, rej_samp, reduction_expt, sample_complexity_bound
from ldp_interact.verify import audit_protocol, audit_reduction, enumerate_transcripts, gtest_equivalence

__version__ = "0.1.0"

__all__ = [
    "Assignment", "CompoundInstance", "FiniteDist", "Protocol", "Randomizer", "Reduction",
    "SeededRng", "SimpleTestInstance", "Transcript", "audit_protocol", "audit_reduction",
    "bayes_expt", "classify", "compound_test", "decompose", "enumerate_transcripts",
    "follow_expt", "gtest_equivalence", "hellinger_sq", "kl_divergence",
    "make_randomized_response", "minimal_eps", "random_instance", "reduction_expt",
    "rej_samp", "sample_complexity_bound", "simple_test", "solve_event_game", "solve_full",
    "tv_distance",
]
