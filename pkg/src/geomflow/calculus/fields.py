"""Scalar fields and seeded test-function families.

Fields are picklable objects evaluated on batches of chart points; most are
defined on the manifold's global coordinates (ambient point for spheres and
the ellipsoid, angles for tori, ball coordinates for hyperbolic space).
"""
from __future__ import annotations

import itertools

import numpy as np

from ..geometry.zoo import Ellipsoid, Euclidean, FlatTorus, Hyperbolic, Product, Sphere


class ScalarField:
    tag = "field"
    # when set, the field satisfies Delta f = -eigenvalue * f
    eigenvalue = None

    def __call__(self, m, x, chart):
        return self.eval_global(m.to_global(x, chart))

    def eval_global(self, z):
        raise NotImplementedError

    def __repr__(self):
        return self.tag


class Constant(ScalarField):
    tag = "const"
    eigenvalue = 0.0

    def __init__(self, c=1.0):
        self.c = float(c)

    def __call__(self, m, x, chart):
        return np.full(np.shape(x)[:-1], self.c)


class AmbientCoordinate(ScalarField):
    """Normalised ambient coordinate z_i / r of a round sphere (degree one)."""

    def __init__(self, sphere: Sphere, index=-1):
        self.index = index
        self.radius = sphere.radius
        self.eigenvalue = sphere.dim / sphere.radius**2
        self.tag = f"Y1[{index}]"

    def eval_global(self, z):
        return z[..., self.index] / self.radius


class FactorField(ScalarField):
    """Field on one factor of a product manifold."""

    def __init__(self, product: Product, factor: int, field: ScalarField):
        self.product = product
        self.factor = factor
        self.field = field
        self.eigenvalue = field.eigenvalue
        self.tag = f"{field.tag}@{factor}"

    def __call__(self, m, x, chart):
        for i, (f, xi, ci, _) in enumerate(self.product._split(np.asarray(x), np.asarray(chart))):
            if i == self.factor:
                return self.field(f, xi, ci)


class Fourier(ScalarField):
    """sin(k . z + phase) in global coordinates."""

    def __init__(self, k, phase=0.0):
        self.k = np.asarray(k, dtype=float)
        self.phase = float(phase)
        self.eigenvalue = float(self.k @ self.k)
        self.tag = f"sin({self.k.tolist()})"

    def eval_global(self, z):
        return np.sin(z @ self.k + self.phase)


class Linear(ScalarField):
    tag = "linear"
    eigenvalue = 0.0

    def __init__(self, a):
        self.a = np.asarray(a, dtype=float)

    def eval_global(self, z):
        return z @ self.a


class Quadratic(ScalarField):
    """0.5 <A z, z>."""
    tag = "quadratic"

    def __init__(self, A):
        self.A = np.asarray(A, dtype=float)

    def eval_global(self, z):
        return 0.5 * np.einsum("...i,ij,...j->...", z, self.A, z)


class Quartic(ScalarField):
    """|z|^4."""
    tag = "quartic"

    def eval_global(self, z):
        return np.einsum("...i,...i->...", z, z) ** 2


# ----------------------------------------------------------------------------
# bases: vector-valued fields whose linear combinations form a family


class Basis:
    size = 0

    def __call__(self, m, x, chart):
        return self.eval_global(m.to_global(x, chart))


class MonomialBasis(Basis):
    """Monomials of degree 1..degree in scaled global coordinates."""

    def __init__(self, n_vars, degree, scale=1.0, min_degree=1):
        self.powers = np.array([p for k in range(min_degree, degree + 1)
                                for p in _exponents(n_vars, k)], dtype=float)
        self.scale = np.broadcast_to(np.asarray(scale, dtype=float), (n_vars,)).copy()
        self.size = len(self.powers)
        self.degrees = self.powers.sum(axis=1)

    def eval_global(self, z):
        u = z / self.scale
        out = np.ones(z.shape[:-1] + (self.size,))
        for i in range(u.shape[-1]):
            p = self.powers[:, i]
            if np.any(p):
                out *= u[..., i:i + 1] ** p
        return out


def _exponents(n, k):
    for combo in itertools.combinations_with_replacement(range(n), k):
        e = [0] * n
        for i in combo:
            e[i] += 1
        yield e


class TrigBasis(Basis):
    """cos(k.z), sin(k.z) for integer frequencies 0 < |k|_inf <= order, one per +-k pair."""

    def __init__(self, dim, order, omega=1.0):
        ks = []
        for k in itertools.product(range(-order, order + 1), repeat=dim):
            k = np.array(k)
            nz = np.flatnonzero(k)
            if len(nz) and k[nz[0]] > 0:
                ks.append(k)
        self.k = np.array(ks, dtype=float) * omega
        self.size = 2 * len(ks)
        self.degrees = np.repeat(np.abs(self.k).max(axis=1), 2)

    def eval_global(self, z):
        ph = z @ self.k.T
        out = np.empty(z.shape[:-1] + (self.size,))
        out[..., 0::2] = np.cos(ph)
        out[..., 1::2] = np.sin(ph)
        return out


class ProductBasis(Basis):
    """Factor bases side by side plus products of cross pairs."""

    def __init__(self, product: Product, bases, cross):
        self.product = product
        self.bases = list(bases)
        self.cross = list(cross)  # pairs (i, j) of factor indices with their cross bases
        sizes = [b.size for b in self.bases]
        self.blocks = []
        lo = 0
        for s in sizes:
            self.blocks.append(slice(lo, lo + s))
            lo += s
        for (i, j, bi, bj) in self.cross:
            self.blocks.append(slice(lo, lo + bi.size * bj.size))
            lo += bi.size * bj.size
        self.size = lo

    def __call__(self, m, x, chart):
        parts = list(self.product._split(np.asarray(x), np.asarray(chart)))
        vals = [b(f, xi, ci) for b, (f, xi, ci, _) in zip(self.bases, parts)]
        for (i, j, bi, bj) in self.cross:
            fi, xi, ci, _ = parts[i]
            fj, xj, cj, _ = parts[j]
            a, b = bi(fi, xi, ci), bj(fj, xj, cj)
            vals.append((a[..., :, None] * b[..., None, :]).reshape(a.shape[:-1] + (-1,)))
        return np.concatenate(vals, axis=-1)


class FamilyFunction(ScalarField):
    """A fixed linear combination of basis functions."""

    def __init__(self, basis: Basis, coeffs, tag="family"):
        self.basis = basis
        self.coeffs = np.asarray(coeffs, dtype=float)
        self.tag = tag

    def __call__(self, m, x, chart):
        return self.basis(m, x, chart) @ self.coeffs


class Family:
    """Seeded random combinations of a basis, with per-block amplitudes."""

    def __init__(self, basis: Basis, blocks=None, spread=0.0, decay=None):
        self.basis = basis
        self.blocks = blocks or [slice(0, basis.size)]
        self.spread = spread
        # per-coefficient scale damping higher frequencies / degrees
        self.decay = np.ones(basis.size) if decay is None else np.asarray(decay)

    def coefficients(self, n, seed=0):
        rng = np.random.default_rng(seed)
        c = rng.normal(size=(n, self.basis.size)) * self.decay
        if self.spread:
            amp = 10.0 ** rng.uniform(-self.spread, self.spread, size=(n, len(self.blocks)))
            for b, s in enumerate(self.blocks):
                c[:, s] *= amp[:, b:b + 1]
        return c

    def sample(self, n, seed=0):
        return [FamilyFunction(self.basis, c, tag=f"family[{seed}:{i}]")
                for i, c in enumerate(self.coefficients(n, seed))]


def default_basis(m, degree=None):
    if isinstance(m, Sphere):
        return MonomialBasis(m.dim + 1, degree or 4, scale=m.radius)
    if isinstance(m, Ellipsoid):
        return MonomialBasis(3, degree or 4, scale=m.axes)
    if isinstance(m, FlatTorus):
        return TrigBasis(m.dim, degree or 3)
    if isinstance(m, Hyperbolic):
        return TrigBasis(m.dim, degree or 2, omega=1.5)
    if isinstance(m, Euclidean):
        return TrigBasis(m.dim, degree or 2, omega=0.5)
    if isinstance(m, Product):
        bases = [default_basis(f, degree or 2) for f in m.factors]
        lows = [default_basis(f, 1) for f in m.factors]
        cross = [(i, j, lows[i], lows[j]) for i in range(len(m.factors))
                 for j in range(i + 1, len(m.factors))]
        return ProductBasis(m, bases, cross)
    raise TypeError(f"no default basis for {m!r}")


def default_family(m, degree=None):
    basis = default_basis(m, degree)
    decay = 1.0 / (1.0 + np.asarray(getattr(basis, "degrees", np.zeros(basis.size)))) ** 0.5
    if isinstance(basis, ProductBasis):
        return Family(basis, blocks=basis.blocks, spread=2.0, decay=None)
    return Family(basis, decay=decay)


def eigenfunction(m):
    """A non-constant eigenfunction of the Laplacian used by semigroup checks."""
    if isinstance(m, Sphere):
        return AmbientCoordinate(m, -1)
    if isinstance(m, FlatTorus):
        k = np.zeros(m.dim)
        k[0] = 1.0
        return Fourier(k, 0.0)
    if isinstance(m, Product):
        for i, f in enumerate(m.factors):
            try:
                return FactorField(m, i, eigenfunction(f))
            except TypeError:
                continue
    if isinstance(m, Euclidean):
        k = np.zeros(m.dim)
        k[0] = 1.0
        return Fourier(k, 0.0)
    raise TypeError(f"no eigenfunction available on {m!r}")
