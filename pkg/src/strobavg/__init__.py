"""Higher-order stroboscopic averaging toolkit for periodic ODE families.

Computes displacement-map (Melnikov) coefficients and averaged functions of
systems x' = sum_i eps^i F_i(t, x) with T-periodic fields, converts between
the two families in both directions, verifies the proportionality identities
that hold when the leading coefficients vanish, and locates periodic orbits
from simple zeros of the first non-vanishing averaged function.
"""

from .averaging import (
    AveragedTable,
    OrbitConfig,
    OrbitReport,
    VerificationReport,
    VerifyConfig,
    averaged_from_melnikov,
    compute_ytilde,
    find_periodic_orbit,
    melnikov_from_averaged,
    verify_proposition,
)
from .bell import (
    SYMBOLIC_T,
    PartitionTerm,
    TimePoly,
    bell_apply,
    enumerate_partitions,
    timepoly_integrate,
)
from .flow import (
    EpsGradedState,
    GradedSeries,
    IntegrationError,
    MelnikovTable,
    displacement_at_eps,
    graded_rhs,
    integrate_displacement,
)
from .sysdsl import (
    EvalError,
    ParseError,
    SystemSpec,
    check_periodicity,
    eval_ast,
    expr_to_str,
    parse_expression,
    parse_system,
    parse_system_file,
)
from .tpsa import (
    MultilinearMap,
    StructureError,
    TruncatedSeries,
    extract_multilinear,
    partial_derivative_map,
)

__version__ = "0.1.0"
