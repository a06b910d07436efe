"""Point-level curvature operations, the curvature action on symmetric
2-tensors, and the exponential/logarithm maps."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri
from scipy.stats import qmc

from .base import ChartPoint, GeometryError, orthonormal_frame, to_frame


class SymTensor2:
    """Symmetric bilinear form in an orthonormal frame (upper triangle stored)."""
    __slots__ = ("dim", "upper")

    def __init__(self, matrix):
        m = np.asarray(matrix, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError("SymTensor2 needs a square matrix")
        self.dim = m.shape[0]
        iu = np.triu_indices(self.dim)
        self.upper = (0.5 * (m + m.T))[iu]

    @property
    def matrix(self):
        m = np.zeros((self.dim, self.dim))
        iu = np.triu_indices(self.dim)
        m[iu] = self.upper
        m.T[iu] = self.upper
        return m

    def __array__(self, dtype=None, copy=None):
        return self.matrix if dtype is None else self.matrix.astype(dtype)

    def __repr__(self):
        return f"SymTensor2({self.matrix.tolist()})"

    def trace(self):
        return float(np.trace(self.matrix))


@dataclass
class CurvatureBundle:
    """Curvature at one point in the orthonormal frame ``frame``."""
    point: ChartPoint
    frame: np.ndarray
    riem: np.ndarray
    ric: SymTensor2
    scal: float
    nabla_ric: np.ndarray

    def symmetry_residual(self):
        R = self.riem
        return max(np.abs(R + R.transpose(1, 0, 2, 3)).max(),
                   np.abs(R + R.transpose(0, 1, 3, 2)).max(),
                   np.abs(R - R.transpose(2, 3, 0, 1)).max())

    def bianchi_residual(self):
        R = self.riem
        return float(np.abs(R + R.transpose(1, 2, 0, 3) + R.transpose(2, 0, 1, 3)).max())


def _frame_at(m, x, chart, frame):
    return orthonormal_frame(m.metric(x, chart)) if frame is None else np.asarray(frame)[None]


def christoffel(m, x: ChartPoint, method="auto"):
    """Christoffel symbols ``gamma[k, i, j]`` at a point."""
    return m.christoffel_batch(x.coords[None], x.chart[None], method=method)[0]


def curvature(m, x: ChartPoint, frame=None, method="auto") -> CurvatureBundle:
    X, C = x.coords[None], x.chart[None]
    cb = m.curvature_batch(X, C, method=method)
    E = _frame_at(m, X, C, frame)
    riem = to_frame(cb["riem"], E, 4)[0]
    ric = np.einsum("nij,nip,njq->npq", cb["ric"], E, E)[0]
    nab = to_frame(cb["nabla_ric"], E, 3)[0]
    return CurvatureBundle(x, E[0], riem, SymTensor2(ric), float(np.trace(ric)), nab)


def curvature_frames(m, x, chart, method="auto"):
    """Batched frame-component curvature: (E, riem, ric, nabla_ric)."""
    cb = m.curvature_batch(x, chart, method=method)
    E = orthonormal_frame(cb["g"])
    return (E, to_frame(cb["riem"], E, 4),
            np.einsum("nij,nip,njq->npq", cb["ric"], E, E), to_frame(cb["nabla_ric"], E, 3))


def nabla_ricci(m, x: ChartPoint, method="auto"):
    """Components ``[k, i, j] = (nabla_{e_k} Ric)(e_i, e_j)``."""
    return curvature(m, x, method=method).nabla_ric


def sectional(m, x: ChartPoint, u, v, method="auto", bundle=None):
    """Sectional curvature of span{u, v}; u, v in chart coordinates."""
    X, C = x.coords[None], x.chart[None]
    g = m.metric(X, C)[0]
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    area = (u @ g @ u) * (v @ g @ v) - (u @ g @ v) ** 2
    if area <= 1e-14 * (u @ g @ u) * (v @ g @ v):
        raise GeometryError("degenerate plane")
    if bundle is None:
        riem = m.curvature_batch(X, C, method=method)["riem"][0]
    else:
        # frame components: convert coordinates to frame coefficients
        E = bundle.frame
        u, v = np.linalg.solve(E, u), np.linalg.solve(E, v)
        riem = bundle.riem
        area = (u @ u) * (v @ v) - (u @ v) ** 2
    return float(np.einsum("ijkl,i,j,k,l->", riem, u, v, v, u) / area)


def curvature_action_frame(riem, T):
    """``(R T)_{ab} = sum_{i,m} riem[i, b, a, m] T[i, m]`` in an orthonormal frame."""
    return np.einsum("...ibam,...im->...ab", riem, T)


def curvature_action(m, x: ChartPoint, T, method="auto", bundle=None) -> SymTensor2:
    """The map T -> R T on symmetric 2-tensors given in the default frame."""
    cb = curvature(m, x, method=method) if bundle is None else bundle
    return SymTensor2(curvature_action_frame(cb.riem, np.asarray(T, dtype=float)))


def sym_basis(d):
    """Frobenius-orthonormal basis of symmetric d x d matrices."""
    out = []
    for i in range(d):
        for j in range(i, d):
            B = np.zeros((d, d))
            if i == j:
                B[i, i] = 1.0
            else:
                B[i, j] = B[j, i] = 1 / np.sqrt(2)
            out.append(B)
    return np.array(out)


def action_norm(riem):
    """Largest singular value of T -> R T on Sym^2 (Frobenius pairing)."""
    riem = np.atleast_3d(riem)
    if riem.ndim == 4:
        riem = riem[None]
    d = riem.shape[-1]
    B = sym_basis(d)
    img = curvature_action_frame(riem[:, None], B[None])
    M = np.einsum("qab,npab->nqp", B, img)
    return np.linalg.norm(M, ord=2, axis=(1, 2))


class _QuasiNormal:
    """Minimal generator with ``normal``/``uniform`` drawn from Halton points."""

    def __init__(self, seed=0):
        self.seed = seed
        self.calls = 0

    def _u(self, size):
        n, k = size if isinstance(size, tuple) and len(size) == 2 else (int(np.prod(size)), 1)
        self.calls += 1
        u = qmc.Halton(d=k, scramble=True, seed=self.seed + 7919 * self.calls).random(n)
        return u.reshape(size)

    def normal(self, size):
        return ndtri(np.clip(self._u(size), 1e-12, 1 - 1e-12))

    def uniform(self, low=0.0, high=1.0, size=None):
        return low + (high - low) * self._u(size)


def sample_points(m, n=256, seed=0):
    """Quasi-random points covering the manifold, as (coords, chart) arrays."""
    return m.random_points(_QuasiNormal(seed), n)


def r_norm(m, sample=None, method="auto"):
    """Estimate of sup_x ||R||(x) over a sample of points."""
    if sample is None:
        sample = sample_points(m)
    x, c = sample
    if m.sectional_constant == 0.0:
        return 0.0
    _, riem, _, _ = curvature_frames(m, x, c, method=method)
    return float(action_norm(riem).max())


# ----------------------------------------------------------------------------
# exponential and logarithm maps


def exp_map(m, x, chart, v, n_steps=256, normalize=True):
    """Geodesic shooting, batched: x (n, d), v (n, d) coordinate velocities.

    Fixed-step RK4 on the geodesic equation using the manifold's Christoffels.
    Returns (coords, chart) of the endpoints.
    """
    x = np.array(np.atleast_2d(x), dtype=float)
    chart = np.array(np.atleast_2d(chart), dtype=float).reshape(x.shape[0], -1)
    v = np.array(np.atleast_2d(v), dtype=float)
    h = 1.0 / n_steps

    def acc(p, w):
        gam = m.christoffel_batch(p, chart)
        return -np.einsum("nkij,ni,nj->nk", gam, w, w)

    for _ in range(n_steps):
        k1x, k1v = v, acc(x, v)
        k2x, k2v = v + 0.5 * h * k1v, acc(x + 0.5 * h * k1x, v + 0.5 * h * k1v)
        k3x, k3v = v + 0.5 * h * k2v, acc(x + 0.5 * h * k2x, v + 0.5 * h * k2v)
        k4x, k4v = v + h * k3v, acc(x + h * k3x, v + h * k3v)
        x = x + h / 6 * (k1x + 2 * k2x + 2 * k3x + k4x)
        v = v + h / 6 * (k1v + 2 * k2v + 2 * k3v + k4v)
        if normalize:
            x, chart, J = m.normalize(x, chart)
            if J is not None:
                v = np.einsum("nij,nj->ni", J, v)
    return x, chart


def express_in_chart(m, y, ychart, chart):
    """Coordinates of the points (y, ychart) in the charts ``chart``."""
    from .zoo import Ellipsoid, Hyperbolic, Product, Sphere, mobius_add
    y = np.array(np.atleast_2d(y), dtype=float)
    ychart = np.atleast_2d(ychart)
    chart = np.atleast_2d(chart)
    if isinstance(m, (Sphere, Ellipsoid)):
        flip = np.abs(ychart[:, 0] - chart[:, 0]) > 0.5
        q = np.einsum("ni,ni->n", y, y)
        y[flip] = y[flip] / q[flip, None]
        return y
    if isinstance(m, Hyperbolic):
        return mobius_add(-chart, m.to_global(y, ychart))
    if isinstance(m, Product):
        return np.concatenate([express_in_chart(f, yi, yc, c) for (f, yi, yc, _), (_, _, c, _)
                               in zip(m._split(y, ychart), m._split(y, chart))], axis=1)
    return y


def log_map(m, x, chart, y, ychart, max_iter=40, tol=1e-13, n_steps=256):
    """Inverse of :func:`exp_map`; closed form when available, else Newton
    shooting with a finite-difference Jacobian. Returns coordinate vectors."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    chart = np.atleast_2d(np.asarray(chart, dtype=float)).reshape(x.shape[0], -1)
    y = np.atleast_2d(np.asarray(y, dtype=float))
    ychart = np.atleast_2d(np.asarray(ychart, dtype=float)).reshape(y.shape[0], -1)
    v = m.log_exact(x, chart, y, ychart)
    if v is not None:
        return v
    target = express_in_chart(m, y, ychart, chart)
    v = target - x
    n, d = x.shape
    eps = 1e-6
    for _ in range(max_iter):
        pts = np.concatenate([v[None]] + [v[None] + s * eps * np.eye(d)[j][None, None]
                                          for j in range(d) for s in (1, -1)])
        flat = pts.reshape(-1, d)
        ends, _ = exp_map(m, np.tile(x, (len(pts), 1)), np.tile(chart, (len(pts), 1)), flat,
                          n_steps=n_steps, normalize=False)
        ends = ends.reshape(len(pts), n, d)
        F = ends[0] - target
        if np.all(np.abs(F) < tol * (1 + np.abs(target))):
            return v
        J = np.stack([(ends[1 + 2 * j] - ends[2 + 2 * j]) / (2 * eps) for j in range(d)], axis=-1)
        v = v - np.linalg.solve(J, F[..., None])[..., 0]
    raise GeometryError("Newton shooting for the log map did not converge")


def exp_point(m, x: ChartPoint, v, n_steps=256) -> ChartPoint:
    X, C = exp_map(m, x.coords[None], x.chart[None], np.asarray(v, dtype=float)[None], n_steps)
    return ChartPoint(X[0], C[0])


def log_point(m, x: ChartPoint, y: ChartPoint):
    return log_map(m, x.coords[None], x.chart[None], y.coords[None], y.chart[None])[0]
