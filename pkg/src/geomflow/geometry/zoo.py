"""Concrete manifolds: flat spaces, round spheres, hyperbolic space, products
and a triaxial ellipsoid."""
from __future__ import annotations

from math import gamma as _gamma, pi

import numpy as np

from .base import ChartPoint, GeometryError, Manifold


def _sq(x):
    return np.einsum("...i,...i->...", x, x)


class Euclidean(Manifold):
    name = "euclidean"

    kappa = 0.0

    def __init__(self, dim=2):
        self.dim = int(dim)
        self.sectional_constant = 0.0

    @property
    def spec(self):
        return f"euclidean:{self.dim}"

    @property
    def has_oracles(self):
        return True

    def metric(self, x, chart):
        x = np.asarray(x)
        return np.broadcast_to(np.eye(self.dim), x.shape + (self.dim,)).copy()

    def random_points(self, rng, n):
        return rng.normal(size=(n, self.dim)), np.zeros((n, 0))

    def christoffel_exact(self, x, chart):
        return np.zeros(np.shape(x)[:-1] + (self.dim,) * 3)

    def riemann_exact(self, x, chart):
        return np.zeros(np.shape(x)[:-1] + (self.dim,) * 4)

    def ricci_exact(self, x, chart):
        return np.zeros(np.shape(x)[:-1] + (self.dim,) * 2)

    def nabla_ricci_exact(self, x, chart):
        return np.zeros(np.shape(x)[:-1] + (self.dim,) * 3)

    def log_exact(self, x, chart, y, ychart):
        return np.asarray(y, dtype=float) - np.asarray(x, dtype=float)

    def gamma_apply(self, x, chart, u, V):
        return np.zeros_like(V)

    def ric_frame(self, x, chart, E):
        return np.zeros_like(E)

    def riem_apply_frame(self, x, chart, E, a, b, c):
        return np.zeros(np.broadcast(a, b, c).shape)

    def curvature_kick(self, x, chart, E, w, W):
        n, d = w.shape
        return np.zeros((n, d, d, d))

    def nabla_ric_frame(self, x, chart, E):
        return np.zeros(E.shape[:1] + (self.dim,) * 3)

    def ricci_parallel_known(self):
        return True


class FlatTorus(Euclidean):
    """The flat torus (R / 2 pi Z)^d in angle coordinates."""
    name = "torus"
    compact = True

    def __init__(self, dim=2):
        super().__init__(dim)
        self.volume = (2 * pi) ** self.dim
        self.validity_radius = 40.0

    @property
    def spec(self):
        return f"torus:{self.dim}"

    def normalize(self, x, chart):
        out = (x < 0) | (x >= 2 * pi)
        if not np.any(out):
            return x, chart, None
        x = np.where(out, np.mod(x, 2 * pi), x)
        return x, chart, np.broadcast_to(np.eye(self.dim), x.shape + (self.dim,)).copy()

    def to_global(self, x, chart):
        return np.mod(np.asarray(x, dtype=float), 2 * pi)

    def random_points(self, rng, n):
        return rng.uniform(0, 2 * pi, size=(n, self.dim)), np.zeros((n, 0))

    def log_exact(self, x, chart, y, ychart):
        diff = np.asarray(y, dtype=float) - np.asarray(x, dtype=float)
        return diff - 2 * pi * np.round(diff / (2 * pi))


class _ConformalConstant(Manifold):
    """Conformally flat chart metric e^{2 sigma} I with constant curvature."""
    kappa = 0.0

    @property
    def has_oracles(self):
        return True

    def sigma(self, x):
        raise NotImplementedError

    def dsigma(self, x):
        raise NotImplementedError

    def metric(self, x, chart):
        x = np.asarray(x, dtype=float)
        e2 = np.exp(2 * self.sigma(x))
        return e2[..., None, None] * np.eye(self.dim)

    def christoffel_exact(self, x, chart):
        s = self.dsigma(np.asarray(x, dtype=float))
        eye = np.eye(self.dim)
        return (np.einsum("ki,...j->...kij", eye, s) + np.einsum("kj,...i->...kij", eye, s)
                - np.einsum("ij,...k->...kij", eye, s))

    def riemann_exact(self, x, chart):
        g = self.metric(x, chart)
        return self.kappa * (np.einsum("...jk,...il->...ijkl", g, g)
                             - np.einsum("...ik,...jl->...ijkl", g, g))

    def ricci_exact(self, x, chart):
        return self.kappa * (self.dim - 1) * self.metric(x, chart)

    def nabla_ricci_exact(self, x, chart):
        return np.zeros(np.shape(x)[:-1] + (self.dim,) * 3)

    def gamma_apply(self, x, chart, u, V):
        s = self.dsigma(x)
        sv = np.einsum("ni,nic->nc", s, V)
        su = np.einsum("ni,ni->n", s, u)
        uv = np.einsum("ni,nic->nc", u, V)
        return (u[:, :, None] * sv[:, None, :] + V * su[:, None, None]
                - s[:, :, None] * uv[:, None, :])

    def ric_frame(self, x, chart, E):
        g = self.metric(x, chart)
        return self.kappa * (self.dim - 1) * (np.swapaxes(E, -1, -2) @ g @ E)

    def riem_apply_frame(self, x, chart, E, a, b, c):
        # frame assumed orthonormal: R(a, b)c = k(<b, c> a - <a, c> b)
        bc = np.einsum("...i,...i->...", b, c)[..., None]
        ac = np.einsum("...i,...i->...", a, c)[..., None]
        return self.kappa * (bc * a - ac * b)

    def curvature_kick(self, x, chart, E, w, W):
        # k(<W e_b, W e_a> w - <w, W e_a> W e_b)
        gram = sum(W[:, k, :, None] * W[:, k, None, :] for k in range(self.dim))
        wa = np.einsum("nka,nk->na", W, w)
        return self.kappa * (gram[..., None] * w[:, None, None, :]
                             - wa[:, :, None, None] * np.swapaxes(W, 1, 2)[:, None, :, :])

    def nabla_ric_frame(self, x, chart, E):
        return np.zeros(E.shape[:1] + (self.dim,) * 3)

    def ricci_parallel_known(self):
        return True


def stereo(y, sign):
    """Unit-sphere point and its Jacobian for the stereographic chart.

    ``sign`` is -1 for the chart centred at the south pole and +1 for the
    north one; shapes broadcast as ``y (..., d)``, ``sign (...)``.
    """
    y = np.asarray(y, dtype=float)
    s = np.asarray(sign, dtype=float)
    q = _sq(y)
    den = 1.0 + q
    u = np.concatenate([2 * y / den[..., None], (s * (1.0 - q) / den)[..., None]], axis=-1)
    d = y.shape[-1]
    top = 2 * np.eye(d) / den[..., None, None] - 4 * np.einsum("...i,...j->...ij", y, y) / (den**2)[..., None, None]
    last = (-4 * s / den**2)[..., None] * y
    J = np.concatenate([top, last[..., None, :]], axis=-2)
    return u, J


def _chart_sign(chart):
    # chart label 0 is centred at the south pole, 1 at the north pole
    return np.where(np.asarray(chart)[..., 0] > 0.5, 1.0, -1.0)


class _SphereAtlas:
    switch_radius = 1.5

    def _switch(self, x, chart):
        r2 = _sq(x)
        out = r2 > self.switch_radius**2
        if not np.any(out):
            return x, chart, None
        x = x.copy()
        chart = np.array(chart, copy=True)
        d = x.shape[-1]
        J = np.broadcast_to(np.eye(d), x.shape + (d,)).copy()
        y = x[out]
        q = r2[out]
        J[out] = (np.eye(d) - 2 * np.einsum("ni,nj->nij", y, y) / q[:, None, None]) / q[:, None, None]
        x[out] = y / q[:, None]
        chart[out, 0] = 1.0 - chart[out, 0]
        return x, chart, J

    def _unit_from_global(self, u):
        u = np.atleast_2d(np.asarray(u, dtype=float))
        u = u / np.linalg.norm(u, axis=-1, keepdims=True)
        south = u[:, -1] <= 0
        y = np.where(south[:, None], u[:, :-1] / (1 - u[:, -1:]), u[:, :-1] / (1 + u[:, -1:]))
        chart = np.where(south, 0.0, 1.0)[:, None]
        return y, chart


class Sphere(_SphereAtlas, _ConformalConstant):
    name = "sphere"
    chart_size = 1
    compact = True
    validity_radius = 4.0

    def __init__(self, dim=2, radius=1.0):
        self.dim = int(dim)
        self.radius = float(radius)
        self.kappa = 1.0 / self.radius**2
        self.sectional_constant = self.kappa
        n = self.dim + 1
        self.volume = 2 * pi ** (n / 2) / _gamma(n / 2) * self.radius**self.dim

    @property
    def spec(self):
        return f"sphere:{self.dim}:{self.radius:g}"

    def sigma(self, x):
        return np.log(2 * self.radius / (1 + _sq(x)))

    def dsigma(self, x):
        return -2 * x / (1 + _sq(x))[..., None]

    def normalize(self, x, chart):
        return self._switch(x, chart)

    def to_global(self, x, chart):
        u, _ = stereo(x, _chart_sign(chart))
        return self.radius * u

    def from_global(self, z):
        return self._unit_from_global(z)

    def default_point(self):
        return ChartPoint(np.zeros(self.dim), [1.0])  # the north pole

    def random_points(self, rng, n):
        return self._unit_from_global(rng.normal(size=(n, self.dim + 1)))

    def log_exact(self, x, chart, y, ychart):
        p, Jp = stereo(x, _chart_sign(chart))
        q, _ = stereo(y, _chart_sign(ychart))
        c = np.clip(np.einsum("...i,...i->...", p, q), -1.0, 1.0)
        w = q - c[..., None] * p
        nw = np.linalg.norm(w, axis=-1)
        # atan2 stays accurate for nearby points, where arccos loses half the digits
        theta = np.arctan2(nw, c)
        if np.any(theta > pi - 1e-6):
            raise GeometryError("log map undefined at antipodal points")
        fac = np.where(nw > 0, theta / np.where(nw > 0, nw, 1.0), 1.0)
        w = w * fac[..., None]
        # chart differential is conformal: J^T J = (2 / (1 + |y|^2))^2 I
        scale = ((1 + _sq(np.asarray(x, dtype=float))) / 2) ** 2
        return scale[..., None] * np.einsum("...ai,...a->...i", Jp, w)


def mobius_add(a, x):
    """Mobius addition in the unit ball."""
    ax = np.einsum("...i,...i->...", a, x)[..., None]
    a2 = _sq(a)[..., None]
    x2 = _sq(x)[..., None]
    return ((1 + 2 * ax + x2) * a + (1 - a2) * x) / (1 + 2 * ax + a2 * x2)


class Hyperbolic(_ConformalConstant):
    """Poincare ball of curvature -1; the chart label is a Mobius anchor."""
    name = "hyperbolic"
    recenter_radius = 0.7
    validity_radius = 0.95

    def __init__(self, dim=2):
        self.dim = int(dim)
        self.chart_size = self.dim
        self.kappa = -1.0
        self.sectional_constant = -1.0

    @property
    def spec(self):
        return f"hyperbolic:{self.dim}"

    def sigma(self, x):
        return np.log(2 / (1 - _sq(x)))

    def dsigma(self, x):
        return 2 * x / (1 - _sq(x))[..., None]

    def to_global(self, x, chart):
        return mobius_add(np.asarray(chart, dtype=float), np.asarray(x, dtype=float))

    def from_global(self, z):
        z = np.atleast_2d(np.asarray(z, dtype=float))
        near = _sq(z) <= self.recenter_radius**2
        x = np.where(near[:, None], z, 0.0)
        chart = np.where(near[:, None], 0.0, z)
        return x, chart

    def random_points(self, rng, n):
        v = rng.normal(size=(n, self.dim))
        v /= np.linalg.norm(v, axis=1, keepdims=True)
        r = 0.6 * rng.uniform(size=(n, 1)) ** (1.0 / self.dim)
        return v * r, np.zeros((n, self.dim))

    def _transition_map(self, a, b, z):
        return mobius_add(-b, mobius_add(a, z))

    def normalize(self, x, chart):
        out = _sq(x) > self.recenter_radius**2
        if not np.any(out):
            return x, chart, None
        x = x.copy()
        chart = np.array(chart, copy=True)
        d = self.dim
        J = np.broadcast_to(np.eye(d), x.shape + (d,)).copy()
        a, y = chart[out], x[out]
        b = mobius_add(a, y)
        h = 1e-3 * (1 - np.sqrt(_sq(y)))[:, None]
        for j in range(d):
            e = np.zeros(d)
            e[j] = 1.0
            f = lambda s: self._transition_map(a, b, y + s * h * e)
            col = (8 * (f(1) - f(-1)) - (f(2) - f(-2))) / (12 * h)
            J[out, :, j] = col
        x[out] = 0.0
        chart[out] = b
        return x, chart, J

    def log_exact(self, x, chart, y, ychart):
        x = np.asarray(x, dtype=float)
        # express y in the chart of x
        z = mobius_add(-np.asarray(chart, dtype=float), self.to_global(y, ychart))
        w = mobius_add(-x, z)
        nw = np.sqrt(_sq(w))
        fac = np.where(nw > 0, np.arctanh(np.minimum(nw, 1 - 1e-16)) / np.where(nw > 0, nw, 1.0), 1.0)
        return (1 - _sq(x))[..., None] * fac[..., None] * w


class Ellipsoid(_SphereAtlas, Manifold):
    """Triaxial ellipsoid with semi-axes (a, b, c), on the sphere atlas."""
    name = "ellipsoid"
    chart_size = 1
    compact = True
    dim = 2
    validity_radius = 4.0

    def __init__(self, a=1.0, b=1.0, c=2.0):
        self.axes = np.array([a, b, c], dtype=float)
        self.volume = None  # set from quadrature when needed

    @property
    def spec(self):
        a, b, c = self.axes
        return f"ellipsoid:{a:g}:{b:g}:{c:g}"

    def metric(self, x, chart):
        _, J = stereo(x, _chart_sign(chart))
        DJ = self.axes[:, None] * J
        return np.einsum("...ai,...aj->...ij", DJ, DJ)

    def normalize(self, x, chart):
        return self._switch(x, chart)

    def to_global(self, x, chart):
        u, _ = stereo(x, _chart_sign(chart))
        return self.axes * u

    def from_global(self, z):
        return self._unit_from_global(np.atleast_2d(z) / self.axes)

    def default_point(self):
        return ChartPoint(np.zeros(2), [1.0])

    def random_points(self, rng, n):
        return self._unit_from_global(rng.normal(size=(n, 3)))

    def gauss_curvature(self, z):
        """Closed-form Gauss curvature at ambient points z on the surface."""
        a, b, c = self.axes
        z = np.atleast_2d(z)
        s = (z[:, 0] / a**2) ** 2 + (z[:, 1] / b**2) ** 2 + (z[:, 2] / c**2) ** 2
        return 1.0 / ((a * b * c) ** 2 * s**2)


class Product(Manifold):
    """Riemannian product; every operation acts factor-wise."""
    name = "product"

    def __init__(self, factors):
        self.factors = list(factors)
        self.dims = [f.dim for f in self.factors]
        self.dim = sum(self.dims)
        self.chart_size = sum(f.chart_size for f in self.factors)
        self._xs = np.cumsum([0] + self.dims)
        self._cs = np.cumsum([0] + [f.chart_size for f in self.factors])
        self.compact = all(f.compact for f in self.factors)
        vols = [f.volume for f in self.factors]
        self.volume = float(np.prod(vols)) if all(v is not None for v in vols) else None
        self.sectional_constant = 0.0 if all(f.sectional_constant == 0 for f in self.factors) else None
        self.validity_radius = np.inf

    @property
    def spec(self):
        return "product:" + ",".join(f.spec for f in self.factors)

    @property
    def has_oracles(self):
        return all(f.has_oracles for f in self.factors)

    def _split(self, x, chart):
        for i, f in enumerate(self.factors):
            yield (f, x[..., self._xs[i]:self._xs[i + 1]], chart[..., self._cs[i]:self._cs[i + 1]],
                   slice(self._xs[i], self._xs[i + 1]))

    def _block(self, parts, x, rank):
        out = np.zeros(np.shape(x)[:-1] + (self.dim,) * rank)
        for (f, _, _, s), p in parts:
            out[(Ellipsis,) + (s,) * rank] = p
        return out

    def in_domain(self, x, chart):
        x = np.atleast_2d(x)
        chart = np.atleast_2d(chart)
        ok = np.ones(x.shape[0], dtype=bool)
        for f, xi, ci, _ in self._split(x, chart):
            ok &= f.in_domain(xi, ci)
        return ok

    def metric(self, x, chart):
        parts = [(p, p[0].metric(p[1], p[2])) for p in self._split(np.asarray(x, dtype=float), np.asarray(chart))]
        return self._block(parts, x, 2)

    def normalize(self, x, chart):
        xs, cs, Js, moved = [], [], [], False
        for f, xi, ci, _ in self._split(x, chart):
            xn, cn, J = f.normalize(xi, ci)
            moved |= J is not None
            xs.append(xn)
            cs.append(cn)
            Js.append(J if J is not None else np.broadcast_to(np.eye(f.dim), xi.shape + (f.dim,)))
        if not moved:
            return x, chart, None
        J = np.zeros(x.shape + (self.dim,))
        for i, Ji in enumerate(Js):
            s = slice(self._xs[i], self._xs[i + 1])
            J[:, s, s] = Ji
        return np.concatenate(xs, axis=-1), np.concatenate(cs, axis=-1), J

    def to_global(self, x, chart):
        return np.concatenate([f.to_global(xi, ci) for f, xi, ci, _ in
                               self._split(np.asarray(x, dtype=float), np.asarray(chart, dtype=float))], axis=-1)

    def global_sizes(self):
        return [f.dim + 1 if isinstance(f, (Sphere, Ellipsoid)) else f.dim for f in self.factors]

    def from_global(self, z):
        z = np.atleast_2d(np.asarray(z, dtype=float))
        xs, cs, lo = [], [], 0
        for f, n in zip(self.factors, self.global_sizes()):
            xi, ci = f.from_global(z[:, lo:lo + n])
            xs.append(xi)
            cs.append(ci)
            lo += n
        return np.concatenate(xs, axis=1), np.concatenate(cs, axis=1)

    def default_point(self):
        ps = [f.default_point() for f in self.factors]
        return ChartPoint(np.concatenate([p.coords for p in ps]), np.concatenate([p.chart for p in ps]))

    def random_points(self, rng, n):
        xs, cs = zip(*[f.random_points(rng, n) for f in self.factors])
        return np.concatenate(xs, axis=1), np.concatenate(cs, axis=1)

    def _oracle(self, name, x, chart, rank):
        parts = []
        for p in self._split(np.asarray(x, dtype=float), np.asarray(chart, dtype=float)):
            val = getattr(p[0], name)(p[1], p[2])
            if val is None:
                return None
            parts.append((p, val))
        return self._block(parts, x, rank)

    def christoffel_exact(self, x, chart):
        return self._oracle("christoffel_exact", x, chart, 3)

    def riemann_exact(self, x, chart):
        return self._oracle("riemann_exact", x, chart, 4)

    def ricci_exact(self, x, chart):
        return self._oracle("ricci_exact", x, chart, 2)

    def nabla_ricci_exact(self, x, chart):
        return self._oracle("nabla_ricci_exact", x, chart, 3)

    def log_exact(self, x, chart, y, ychart):
        out = []
        it = zip(self._split(np.asarray(x, dtype=float), np.asarray(chart, dtype=float)),
                 self._split(np.asarray(y, dtype=float), np.asarray(ychart, dtype=float)))
        for (f, xi, ci, _), (_, yi, di, _) in it:
            v = f.log_exact(xi, ci, yi, di)
            if v is None:
                return None
            out.append(v)
        return np.concatenate(out, axis=-1)

    def gamma_apply(self, x, chart, u, V):
        if not self.has_oracles:
            return super().gamma_apply(x, chart, u, V)
        out = np.zeros_like(V)
        for f, xi, ci, s in self._split(x, chart):
            out[:, s, :] = f.gamma_apply(xi, ci, u[:, s], V[:, s, :])
        return out

    def _riem_coords(self, x, chart, A, B, C):
        # R(A, B)C in coordinates for constant-curvature factors
        out = np.zeros(np.broadcast(A, B, C).shape)
        for f, xi, ci, s in self._split(x, chart):
            g = f.metric(xi, ci)
            gi = g.reshape(g.shape[:1] + (1,) * (A.ndim - 2) + g.shape[1:])
            bc = np.einsum("n...i,n...ij,n...j->n...", B[..., s], gi, C[..., s])[..., None]
            ac = np.einsum("n...i,n...ij,n...j->n...", A[..., s], gi, C[..., s])[..., None]
            out[..., s] = f.kappa * (bc * A[..., s] - ac * B[..., s])
        return out

    def _constant_factors(self):
        return all(isinstance(f, (Euclidean, _ConformalConstant)) for f in self.factors)

    def ric_frame(self, x, chart, E):
        if not self.has_oracles:
            return super().ric_frame(x, chart, E)
        return np.swapaxes(E, -1, -2) @ self.ricci_exact(x, chart) @ E

    def riem_apply_frame(self, x, chart, E, a, b, c):
        if not self._constant_factors():
            return super().riem_apply_frame(x, chart, E, a, b, c)
        extra = a.ndim - 2
        Ee = E.reshape(E.shape[:1] + (1,) * extra + E.shape[1:])
        A, B, C = (np.einsum("n...ij,n...j->n...i", Ee, v) for v in (a, b, c))
        X = self._riem_coords(x, chart, A, B, C)
        g = self.metric(x, chart)
        ge = g.reshape(g.shape[:1] + (1,) * extra + g.shape[1:])
        return np.einsum("n...ip,n...ij,n...j->n...p", Ee, ge, X)

    def nabla_ric_frame(self, x, chart, E):
        if self._constant_factors():
            return np.zeros(E.shape[:1] + (self.dim,) * 3)
        return super().nabla_ric_frame(x, chart, E)

    def ricci_parallel_known(self):
        return all(f.ricci_parallel_known() for f in self.factors)


# ----------------------------------------------------------------------------


def parse_manifold(text: str) -> Manifold:
    """Build a manifold from ``name[:param...]``.

    Examples: ``sphere:2:1``, ``hyperbolic:2``, ``torus:2``, ``euclidean:3``,
    ``ellipsoid:1:1:2``, ``product:sphere:2:1,sphere:2:2``.
    """
    text = text.strip()
    head, _, rest = text.partition(":")
    head = head.lower()
    try:
        if head == "product":
            if not rest:
                raise ValueError("product needs factors")
            return Product([parse_manifold(part) for part in rest.split(",")])
        args = [float(a) for a in rest.split(":")] if rest else []
        if head == "euclidean":
            return Euclidean(int(args[0]) if args else 2)
        if head == "torus":
            return FlatTorus(int(args[0]) if args else 2)
        if head == "sphere":
            return Sphere(int(args[0]) if args else 2, args[1] if len(args) > 1 else 1.0)
        if head == "hyperbolic":
            return Hyperbolic(int(args[0]) if args else 2)
        if head == "ellipsoid":
            return Ellipsoid(*(args or [1.0, 1.0, 2.0]))
    except (ValueError, IndexError, TypeError) as exc:
        raise ValueError(f"bad manifold description {text!r}: {exc}") from exc
    raise ValueError(f"unknown manifold {head!r}")


ZOO = {
    "S2": "sphere:2:1",
    "S3": "sphere:3:1",
    "H2": "hyperbolic:2",
    "T2": "torus:2",
    "E2": "euclidean:2",
    "S2xS2": "product:sphere:2:1,sphere:2:1",
    "S2xS2(2)": "product:sphere:2:1,sphere:2:2",
    "ellipsoid": "ellipsoid:1:1:2",
}
