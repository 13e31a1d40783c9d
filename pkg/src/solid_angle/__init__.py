"""Normalized solid angles of polyhedral cones.

The measure of a cone is the fraction of the unit sphere it covers.  Cones are
split into signed simplicial pieces whose associated matrices are positive
definite, and each piece is evaluated with a convergent multivariate series.
"""

__version__ = "0.1.0"

from .cones import (
    BOUNDARY,
    INSIDE,
    OUTSIDE,
    Cone,
    LinealitySplit,
    Location,
    SimplicialCone,
    associated_matrix,
    contains_point,
    contains_points,
    dual,
    lineality_split,
    make_simplicial,
    triangulate,
)
from .decompose import (
    Decomposition,
    Form,
    HyperplaneSpec,
    Method,
    SignedCone,
    SignTable,
    bv_hyperplane,
    bv_mod_lower_dim,
    check_pieces,
    decomp1,
    decomp2,
    decompose_any,
    max_pieces,
    sign_table,
)
from .errors import *  # noqa: F401,F403
from .linalg import SymTridiag, determinant, gram, is_positive_definite, tridiag_lambda_min
from .measure import MeasureConfig, chain_measure, measure, measure_simplicial
from .oracles import McConfig, mc_estimate, measure_dim2, measure_dim3, orthogonal_product_measure
from .series import (
    AlphaVector,
    BetaVector,
    ErrorModel,
    MeasureResult,
    TruncationSpec,
    boundary_point,
    coefficient_ratio,
    on_convergence_boundary,
    psi,
    t_alpha,
    t_beta,
    truncation_decay_probe,
    truncation_errors,
)
