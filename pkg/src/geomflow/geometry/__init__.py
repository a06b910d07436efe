"""Chart-based Riemannian manifolds and their curvature."""
from .base import (ChartPoint, GeometryError, Manifold, coordinate_curvature, gram_schmidt,
                   orthonormal_frame, to_frame)
from .fd import FiniteDifferenceError, jets, stencil
from .ops import (CurvatureBundle, SymTensor2, action_norm, christoffel, curvature,
                  curvature_action, curvature_action_frame, curvature_frames, exp_map, exp_point,
                  log_map, log_point, nabla_ricci, r_norm, sample_points, sectional, sym_basis)
from .zoo import (ZOO, Ellipsoid, Euclidean, FlatTorus, Hyperbolic, Product, Sphere, mobius_add,
                  parse_manifold, stereo)

__all__ = [
    "ChartPoint", "GeometryError", "Manifold", "coordinate_curvature", "gram_schmidt",
    "orthonormal_frame", "to_frame", "FiniteDifferenceError", "jets", "stencil",
    "CurvatureBundle", "SymTensor2", "action_norm", "christoffel", "curvature",
    "curvature_action", "curvature_action_frame", "curvature_frames", "exp_map", "exp_point",
    "log_map", "log_point", "nabla_ricci", "r_norm", "sample_points", "sectional", "sym_basis",
    "ZOO", "Ellipsoid", "Euclidean", "FlatTorus", "Hyperbolic", "Product", "Sphere",
    "mobius_add", "parse_manifold", "stereo",
]
