"""Moment-SOS relaxations for polynomial optimization with universally quantified constraints."""
from .extraction import (
    AtomicMeasure,
    Certificate,
    ExtractionError,
    FlatnessVerdict,
    certificate_extract,
    certificate_query,
    extract_atoms,
    feasibility_gap,
    flatness_check,
    verify_atoms_in_K,
)
from .measures import CapabilityError, MeasureSpec, moment_table, span_dimension_check
from .momat import (
    OrderTooSmallError,
    TruncatedSequence,
    localizing_matrix,
    moment_matrix,
    quantified_localizing_matrix,
    y_matrix,
)
from .polyring import Polynomial, basis, omega_r, parse_polynomial, separable_decomposition
from .problemfile import ProblemFile, ProblemFileError, load_problem_file, parse_problem_text
from .relaxation import (
    QuantifierPiece,
    SipProblem,
    SolveReport,
    build_relaxation,
    k_min,
    run_hierarchy,
    solve_relaxation,
)
from .sdp import ConicProblem, ConicSolution, sdp_solve

__version__ = "0.1.0"
