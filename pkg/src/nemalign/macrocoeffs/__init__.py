"""Continuum-model coefficients: equilibria, response profile, moments, tensors."""

from .equilibrium import (
    EtaInterpolant,
    MacroParams,
    adaptive_quad,
    build_eta_interpolant,
    compute_K,
    compute_S2,
    gibbs_density,
)
from .moments import (
    CoeffTable,
    compute_coeff_table,
    compute_moment,
    compute_Pi2,
)
from .response import GciSolution, solve_h_eta
from .tensors import (
    H_TENSOR_ORDERS,
    assemble_H_tensors,
    contract,
    contract2,
    evaluate_Pi3,
)

__all__ = [
    "EtaInterpolant",
    "MacroParams",
    "adaptive_quad",
    "build_eta_interpolant",
    "compute_K",
    "compute_S2",
    "gibbs_density",
    "CoeffTable",
    "compute_coeff_table",
    "compute_moment",
    "compute_Pi2",
    "GciSolution",
    "solve_h_eta",
    "H_TENSOR_ORDERS",
    "assemble_H_tensors",
    "contract",
    "contract2",
    "evaluate_Pi3",
]
