"""Numerical laboratory for weighted-gradient area functionals on grids.

`PAREA_THREADS` caps the thread pools of the numerical backends; it must be
applied before numpy loads, which is why it sits at the top of this module.
"""

import os as _os

_threads = _os.environ.get("PAREA_THREADS")
if _threads:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
                 "VECLIB_MAXIMUM_THREADS", "NUMEXPR_NUM_THREADS"):
        _os.environ.setdefault(_var, _threads)
del _os, _threads

from .grids import (
    Alternating3Field,
    GridDomain,
    ScalarField,
    SingularMask,
    SkewField,
    VectorField,
    build_domain,
    divergence,
    field_scale,
    gradient,
    integrate,
    quadrature_weights,
    sample,
    sample_vector,
)
from .fieldio import FieldFormatError, read_field, write_csv, write_field
from .horizontal import (
    curl_matrix,
    horizontal_normal,
    residual_norms,
    singular_set,
    singular_stats,
    structure_identity_residual,
    tangential_derivative,
    weight,
)
from .skewalg import (
    Rank2Factorization,
    SkewMatrix,
    alignment_residual,
    rank2_audit,
    rank2_factorize,
    skew_rank,
    spectral_pairs,
)
from .integrability import (
    ClassificationField,
    IntegrabilityLabel,
    classify_integrability,
    codazzi_residual_2d,
    frobenius_tensor,
    normal_contraction_residual,
    renormalize_normal,
    tangential_curl_residual,
    weight_equation_residual,
)
from .reconstruction import (
    NormalCheck,
    NotClosedError,
    PotentialResult,
    candidate_gradient,
    closedness_residual,
    integrate_potential,
    verify_normal,
)
from .variational import (
    LineProfile,
    MinimizeOptions,
    MinimizeResult,
    SkewCoefficients,
    SolverDivergenceError,
    UniquenessReport,
    first_order_residual,
    first_variation,
    functional,
    line_profile,
    minimize,
    pairwise_rotation,
    pointwise_skew_rank,
    skew_divergence,
    skew_transform,
    uniqueness_audit,
)
from .scenarios import (
    Scenario,
    UnknownScenarioError,
    builtin_scenario,
    heisenberg_field,
    interior_bump,
    random_smooth_field,
    random_smooth_scalar,
    seeded_init,
)
from .runner import ExitCode, ExperimentConfig, run

__version__ = "0.1.0"
