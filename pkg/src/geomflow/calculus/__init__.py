"""Scalar fields, their covariant derivatives, probes and quadrature."""
from .derivatives import (bochner_laplacian_hess, bochner_residual, bochner_residual_batch,
                          bochner_terms, grad, hess_of_laplacian, hessian, laplacian,
                          local_calculus, zj_residual_batch, zj_terms)
from .fields import (AmbientCoordinate, Constant, FactorField, Family, FamilyFunction, Fourier,
                     Linear, MonomialBasis, ProductBasis, Quadratic, Quartic, ScalarField,
                     TrigBasis, default_basis, default_family, eigenfunction)
from .probes import Probe, cutoff, make_probe
from .quadrature import (QuadraticForms, QuadratureError, QuadratureGrid, default_grid,
                         integral_terms, integrate, polarized_quotient, rayleigh_quotient)

__all__ = [
    "bochner_laplacian_hess", "bochner_residual", "bochner_residual_batch", "bochner_terms",
    "grad", "hess_of_laplacian", "hessian", "laplacian", "local_calculus", "zj_residual_batch",
    "zj_terms", "AmbientCoordinate", "Constant", "FactorField", "Family", "FamilyFunction",
    "Fourier", "Linear", "MonomialBasis", "ProductBasis", "Quadratic", "Quartic", "ScalarField",
    "TrigBasis", "default_basis", "default_family", "eigenfunction", "Probe", "cutoff",
    "make_probe", "QuadraticForms", "QuadratureError", "QuadratureGrid", "default_grid",
    "integral_terms", "integrate", "polarized_quotient", "rayleigh_quotient",
]
