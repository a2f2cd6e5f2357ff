"""Numerical checks of von Neumann's inequality for commuting operator tuples."""

from .calculus import eval_matrix_poly_on_tuple, eval_poly_on_tuple, sparse_poly_apply
from .lattice import OUT_OF_LATTICE, Box, MultiIndex, rank, shift_index, unrank
from .linalg import SparseBlockOperator, kron, op_norm_dense, op_norm_sparse
from .multishift import (
    CommutingTuple,
    WeightFamily,
    build_truncated_multishift,
    constant_weight_family,
    decompose_diagonal,
    tensor_tuple,
    unitary_intertwiner,
    validate_weights,
)
from .poly import MatrixPoly, MultiPoly, coeff_upper_bound, eval_scalar, polydisc_sup, varopoulos_kaijser
from .vncheck import (
    CheckConfig,
    VaropoulosConfig,
    VnReport,
    check_matrix_vn,
    check_vn,
    pv_closed_form,
    sweep_c,
    varopoulos_tuple,
    witness_lower_bound,
)

__version__ = "0.1.0"
