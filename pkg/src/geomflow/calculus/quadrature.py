"""Quadrature on compact zoo manifolds and the integral functionals built
from first and second derivatives."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import roots_gegenbauer, roots_legendre

from ..geometry.zoo import Ellipsoid, FlatTorus, Product, Sphere
from .derivatives import coordinate_derivatives, field_jets, frame_quantities, geometry_data
from .fields import FamilyFunction, ScalarField

QUAD_STEP = 0.02


class QuadratureError(ValueError):
    pass


@dataclass(frozen=True)
class QuadratureGrid:
    manifold: str
    coords: np.ndarray
    charts: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        for a in (self.coords, self.charts, self.weights):
            a.setflags(write=False)

    @property
    def size(self):
        return len(self.weights)

    @property
    def volume(self):
        return float(self.weights.sum())


def _unit_sphere_rule(d, n_polar, n_phi):
    """Nodes (N, d+1) and weights on the unit sphere S^d."""
    phi = 2 * np.pi * np.arange(n_phi) / n_phi
    pts = np.stack([np.cos(phi), np.sin(phi)], axis=1)
    w = np.full(n_phi, 2 * np.pi / n_phi)
    for k in range(2, d + 1):
        # S^k = {(sqrt(1 - t^2) u, t)}, measure (1 - t^2)^{(k-2)/2} dt dsigma_{k-1}
        alpha = (k - 1) / 2
        t, wt = roots_legendre(n_polar) if k == 2 else roots_gegenbauer(n_polar, alpha)
        s = np.sqrt(1 - t**2)
        pts = np.concatenate([(s[:, None, None] * pts[None]).reshape(-1, pts.shape[1]),
                              np.repeat(t, len(w))[:, None]], axis=1)
        w = (wt[:, None] * w[None]).reshape(-1)
    return pts, w


def sphere_grid(m: Sphere, n_polar=None, n_phi=None):
    if n_polar is None:
        n_polar = 64 if m.dim == 2 else 16
    n_phi = n_phi or 2 * n_polar
    pts, w = _unit_sphere_rule(m.dim, n_polar, n_phi)
    x, c = m.from_global(pts)
    return QuadratureGrid(m.spec, x, c, w * m.radius**m.dim)


def ellipsoid_grid(m: Ellipsoid, n_polar=64, n_phi=None):
    n_phi = n_phi or 2 * n_polar
    pts, w = _unit_sphere_rule(2, n_polar, n_phi)
    x, c = m._unit_from_global(pts)
    det_e = np.linalg.det(m.metric(x, c))
    det_s = (4 / (1 + np.einsum("ni,ni->n", x, x)) ** 2) ** 2
    return QuadratureGrid(m.spec, x, c, w * np.sqrt(det_e / det_s))


def torus_grid(m: FlatTorus, n=32):
    ax = 2 * np.pi * np.arange(n) / n
    mesh = np.stack(np.meshgrid(*([ax] * m.dim), indexing="ij"), axis=-1).reshape(-1, m.dim)
    w = np.full(len(mesh), (2 * np.pi / n) ** m.dim)
    return QuadratureGrid(m.spec, mesh, np.zeros((len(mesh), 0)), w)


def product_grid(m: Product, sizes=None):
    grids = [default_grid(f, s) for f, s in zip(m.factors, sizes or [None] * len(m.factors))]
    x, c, w = grids[0].coords, grids[0].charts, grids[0].weights
    for g in grids[1:]:
        n1, n2 = len(w), len(g.weights)
        x = np.concatenate([np.repeat(x, n2, axis=0), np.tile(g.coords, (n1, 1))], axis=1)
        c = np.concatenate([np.repeat(c, n2, axis=0), np.tile(g.charts, (n1, 1))], axis=1)
        w = (w[:, None] * g.weights[None]).reshape(-1)
    return QuadratureGrid(m.spec, np.ascontiguousarray(x), np.ascontiguousarray(c), w)


def default_grid(m, size=None):
    """Default grid; ``size`` is the polar node count (spheres) or nodes per axis (tori)."""
    if isinstance(m, Sphere):
        return sphere_grid(m, size)
    if isinstance(m, Ellipsoid):
        return ellipsoid_grid(m, size or 64)
    if isinstance(m, FlatTorus):
        return torus_grid(m, size or 32)
    if isinstance(m, Product):
        if size is None:
            size = [8 if isinstance(f, (Sphere, Ellipsoid)) else 12 for f in m.factors]
        elif np.isscalar(size):
            size = [int(size)] * len(m.factors)
        return product_grid(m, size)
    raise QuadratureError(f"{m!r} is not a compact zoo manifold")


def _check(m, grid):
    if grid.manifold != m.spec:
        raise QuadratureError(f"grid built for {grid.manifold}, not {m.spec}")


def integrate(m, grid: QuadratureGrid, field: ScalarField):
    _check(m, grid)
    return float(grid.weights @ field(m, grid.coords, grid.charts))


def node_derivatives(m, grid, field, chunk=2048):
    """Gradient, Hessian and Laplacian of ``field`` at grid nodes (frame components)."""
    _check(m, grid)
    out = {"grad": [], "hess": [], "lap": []}
    for lo in range(0, grid.size, chunk):
        x = grid.coords[lo:lo + chunk]
        c = grid.charts[lo:lo + chunk]
        geo = geometry_data(m, x, c, 1)
        fj = field_jets(m, field, x, c, 2, step=QUAD_STEP, accuracy=8 if m.dim == 2 else 6,
                        chunk=256)
        q = frame_quantities(geo, coordinate_derivatives(geo, fj))
        for k in out:
            out[k].append(q[k])
    return {k: np.concatenate(v, axis=0) for k, v in out.items()}


class QuadraticForms:
    """Integrated bilinear forms of a basis:

    ``lap[p, q] = mu(Lap phi_p Lap phi_q)``, ``hess[p, q] = mu(<Hess phi_p, Hess phi_q>)``,
    ``grad[p, q] = mu(<grad phi_p, grad phi_q>)``.
    """

    def __init__(self, m, grid, basis):
        d = node_derivatives(m, grid, basis)
        w = grid.weights
        self.basis = basis
        self.lap = np.einsum("n,np,nq->pq", w, d["lap"], d["lap"])
        self.hess = np.einsum("n,nijp,nijq->pq", w, d["hess"], d["hess"])
        self.grad = np.einsum("n,nip,niq->pq", w, d["grad"], d["grad"])
        self.numerator = self.lap - self.hess

    def quotient(self, c, threshold=1e-12):
        c = np.atleast_2d(c)
        num = np.einsum("np,pq,nq->n", c, self.numerator, c)
        den = np.einsum("np,pq,nq->n", c, self.grad, c)
        scale = np.einsum("np,np->n", c, c) * np.abs(self.grad).max()
        if np.any(den <= threshold * scale):
            raise QuadratureError("degenerate denominator mu(|grad f|^2)")
        return num / den

    def polarized(self, c, e, K):
        """B4 residual mu(Lf Lg - <Hf, Hg>) - K mu(<grad f, grad g>), with both terms."""
        lhs = c @ self.numerator @ e
        rhs = K * (c @ self.grad @ e)
        return lhs, rhs

    def ein1(self, c, e):
        """Both sides of mu(<df,dg>) mu(fnum) = mu(|df|^2) mu(cross num)."""
        lhs = (c @ self.grad @ e) * (c @ self.numerator @ c)
        rhs = (c @ self.grad @ c) * (c @ self.numerator @ e)
        return lhs, rhs


def integral_terms(m, grid, f):
    """(mu((Lap f)^2 - |Hess f|^2), mu(|grad f|^2)) for a single field."""
    d = node_derivatives(m, grid, f)
    w = grid.weights
    num = w @ (d["lap"] ** 2 - np.einsum("nij,nij->n", d["hess"], d["hess"]))
    den = w @ np.einsum("ni,ni->n", d["grad"], d["grad"])
    return float(num), float(den)


def rayleigh_quotient(m, grid, f, forms: QuadraticForms | None = None, threshold=1e-12):
    """mu((Lap f)^2 - |Hess f|^2_HS) / mu(|grad f|^2)."""
    if forms is not None and isinstance(f, FamilyFunction) and f.basis is forms.basis:
        return float(forms.quotient(f.coeffs, threshold)[0])
    num, den = integral_terms(m, grid, f)
    if den <= threshold * max(1.0, abs(num)):
        raise QuadratureError("degenerate denominator mu(|grad f|^2)")
    return num / den


def polarized_quotient(m, grid, f, g, K):
    """(B4) residual pieces for a pair: returns (lhs, rhs) with
    lhs = mu(Lf Lg - <Hess f, Hess g>), rhs = K mu(<grad f, grad g>)."""
    df = node_derivatives(m, grid, f)
    dg = node_derivatives(m, grid, g)
    w = grid.weights
    lhs = w @ (df["lap"] * dg["lap"] - np.einsum("nij,nij->n", df["hess"], dg["hess"]))
    rhs = K * (w @ np.einsum("ni,ni->n", df["grad"], dg["grad"]))
    return float(lhs), float(rhs)
