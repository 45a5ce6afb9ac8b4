"""Stabilizability analysis and feedback synthesis for control systems xdot = f(x, u)."""

from .errors import (
    CompstabError,
    ConfigError,
    DomainError,
    NoConvergence,
    NoSolution,
    NotSynthesizable,
    NumericError,
    ParseError,
    SectionIncomplete,
    SingularAtOrigin,
    StepSizeUnderflow,
)
from .exprdsl import differentiate, evaluate, parse, to_string
from .model import AutonomousField, VectorFieldSpec, corpus, get_system, linearize
from .lintest import full_row_rank_test, hautus_test, spectrum_plus
from .brockett import injectivity_probe, openness_probe
from .section import build_section, check_section
from .synth import ClosedLoop, invert_map, synthesize_composition_symbol, synthesize_feedback
from .verify import classify_stability, closed_loop_spectrum, simulate

__version__ = "0.1.0"
