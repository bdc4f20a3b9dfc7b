"""Sublinear Markovian semigroups for finite-state chains with uncertain generators.

Nonlinear Markov chains whose Q-matrix is only known to lie in a finite family,
and nonlinear spin systems whose flip rates depend on an uncertain control.
The library computes the worst-case (upper) expectation semigroup, extracts a
greedy Markov policy attaining it, cross-checks both against an independent
policy oracle, and certifies ergodicity by wedging the nonlinear system
between two attractive linear spin systems.
"""

from .errors import (
    NumericalError,
    ParameterError,
    ShapeError,
    SiteError,
    SizeError,
    UncertainMarkovError,
    UsageError,
)
from .statespace import (
    MAX_SITES,
    SiteGraph,
    decode,
    encode,
    enumerate_configurations,
    flip,
    is_increasing,
    leq,
    site_sum,
    up_set_indicator,
)
from .models import (
    ControlGrid,
    SpeedFunction,
    UncertainGenerator,
    build_uncertain_generator,
    contact_speed,
    envelope_speeds,
    is_attractive,
    ising_speed,
    qmatrix_from_speed,
    tabular_speed,
)
from .semigroup import (
    SemigroupRun,
    apply_generator_sup,
    check_constants,
    check_monotone,
    check_semigroup,
    evolve,
    transition,
)
from .oracle import (
    MarkovPolicy,
    Trajectory,
    brute_force_sup,
    estimate_expectation,
    exact_expectation,
    expm_action,
    simulate,
)
from .selection import extract_policy, verify_selection
from .ergodicity import (
    ErgodicityVerdict,
    VerdictStatus,
    certify_nonlinear_ergodicity,
    contact_criterion,
    convergence_probe,
    invariance_check,
    is_ergodic_linear,
    sandwich_check,
    stationary_distributions,
)

__version__ = "0.1.0"
