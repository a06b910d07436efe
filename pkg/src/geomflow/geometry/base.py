"""Chart-based manifolds and curvature computed from the metric.

Conventions used throughout the package:

* points are pairs ``(coords, chart)``; batched arrays carry a leading axis;
* a frame ``E`` is a matrix whose columns are tangent vectors in chart
  coordinates with ``E.T @ g @ E = I``;
* ``R(X, Y)Z = nabla_X nabla_Y Z - nabla_Y nabla_X Z - nabla_[X,Y] Z`` and
  the lowered array is ``riem[i, j, k, l] = <R(e_i, e_j) e_k, e_l>``, so that
  ``Sect(u, v) = riem(u, v, v, u) / |u ^ v|^2`` is +1 on the unit sphere;
* ``Ric(v, w) = trace(u -> R(u, v) w)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .fd import jets


class GeometryError(ValueError):
    """Raised for points outside a chart or degenerate metric data."""


@dataclass(frozen=True)
class ChartPoint:
    coords: np.ndarray
    chart: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        object.__setattr__(self, "coords", np.asarray(self.coords, dtype=float).reshape(-1))
        object.__setattr__(self, "chart", np.asarray(self.chart, dtype=float).reshape(-1))


def _batch(x, chart, manifold):
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if chart is None:
        chart = np.zeros((x.shape[0], manifold.chart_size))
    chart = np.asarray(chart, dtype=float)
    if chart.ndim == 1:
        chart = np.broadcast_to(chart, (x.shape[0], chart.shape[0]))
    return x, chart, single


def _spread(chart, pts):
    """Broadcast per-point chart labels over a stencil axis."""
    return np.broadcast_to(chart[:, None, :], pts.shape[:2] + chart.shape[1:])


def as_batch(manifold, points):
    """Convert a ChartPoint, a list of them, or ``(coords, chart)`` arrays."""
    if isinstance(points, ChartPoint):
        return points.coords[None], points.chart[None]
    if isinstance(points, tuple) and len(points) == 2 and not isinstance(points[0], ChartPoint):
        x, c, _ = _batch(points[0], points[1], manifold)
        return x, c
    pts = list(points)
    x = np.stack([p.coords for p in pts])
    c = np.stack([p.chart for p in pts]) if manifold.chart_size else np.zeros((len(pts), 0))
    return x, c


# ----------------------------------------------------------------------------
# tensor algebra on coordinate jets


def coordinate_curvature(g, dg, ddg, dddg=None):
    """Christoffels, Riemann, Ricci (and nabla Ricci) from metric jets.

    Inputs are batched with jet slots first: ``dg[n, a, i, j] = d_a g_ij``.
    """
    G = np.linalg.inv(g)
    A = np.einsum("nilj->nlij", dg) + np.einsum("njli->nlij", dg) - dg
    gam = 0.5 * np.einsum("nkl,nlij->nkij", G, A)
    dA = (np.einsum("nailj->nalij", ddg) + np.einsum("najli->nalij", ddg) - ddg)
    dG = -np.einsum("nkm,namp,npl->nakl", G, dg, G)
    dgam = 0.5 * (np.einsum("nakl,nlij->nakij", dG, A) + np.einsum("nkl,nalij->nakij", G, dA))
    rup = (np.einsum("niljk->nlkij", dgam)
           - np.einsum("njlik->nlkij", dgam)
           + np.einsum("nlim,nmjk->nlkij", gam, gam)
           - np.einsum("nljm,nmik->nlkij", gam, gam))
    riem = np.einsum("nlm,nmkij->nijkl", g, rup)
    ric = np.einsum("nikij->njk", rup)
    ddG = -(np.einsum("nbkm,namp,npl->nabkl", dG, dg, G)
            + np.einsum("nkm,nabmp,npl->nabkl", G, ddg, G)
            + np.einsum("nkm,namp,nbpl->nabkl", G, dg, dG))
    out = {"g": g, "ginv": G, "dginv": dG, "ddginv": ddG, "gamma": gam, "dgamma": dgam,
           "riem": riem, "ric": ric}
    if dddg is not None:
        ddA = (np.einsum("nabilj->nablij", dddg) + np.einsum("nabjli->nablij", dddg) - dddg)
        ddgam = 0.5 * (np.einsum("nabkl,nlij->nabkij", ddG, A)
                       + np.einsum("nakl,nblij->nabkij", dG, dA)
                       + np.einsum("nbkl,nalij->nabkij", dG, dA)
                       + np.einsum("nkl,nablij->nabkij", G, ddA))
        drup = (np.einsum("nailjk->nalkij", ddgam)
                - np.einsum("najlik->nalkij", ddgam)
                + np.einsum("nalim,nmjk->nalkij", dgam, gam)
                + np.einsum("nlim,namjk->nalkij", gam, dgam)
                - np.einsum("naljm,nmik->nalkij", dgam, gam)
                - np.einsum("nljm,namik->nalkij", gam, dgam))
        dric = np.einsum("naikij->najk", drup)
        nab = (dric - np.einsum("nmaj,nmk->najk", gam, ric)
               - np.einsum("nmak,njm->najk", gam, ric))
        out.update(ddgamma=ddgam, dric=dric, nabla_ric=nab)
    return out


def orthonormal_frame(g):
    """Batched frame ``E = L^{-T}`` from the Cholesky factor ``g = L L^T``."""
    try:
        L = np.linalg.cholesky(g)
    except np.linalg.LinAlgError as exc:
        raise GeometryError("metric is not positive definite") from exc
    return np.swapaxes(np.linalg.inv(L), -1, -2)


def gram_schmidt(frame, g):
    """Modified Gram-Schmidt of the frame columns in the metric ``g``."""
    E = np.array(frame, dtype=float, copy=True)
    d = E.shape[-1]
    for j in range(d):
        v = E[..., :, j]
        for i in range(j):
            e = E[..., :, i]
            v = v - np.einsum("...a,...a->...", v, (g @ e[..., None])[..., 0])[..., None] * e
        norm = np.sqrt(np.einsum("...a,...a->...", v, (g @ v[..., None])[..., 0]))
        E[..., :, j] = v / norm[..., None]
    return E


def to_frame(tensor, E, slots):
    """Contract the first ``slots`` tensor indices (after the batch axis) with E."""
    letters = "abcdefgh"[:slots]
    upper = "pqrstuvw"[:slots]
    ops = ",".join(f"n{l}{u}" for l, u in zip(letters, upper))
    return np.einsum(f"n{letters}...,{ops}->n{upper}...", tensor, *([E] * slots))


# ----------------------------------------------------------------------------


class Manifold:
    """Base class: a metric field on an atlas of charts.

    Subclasses implement :meth:`metric` (batched over leading axes) plus the
    chart plumbing; closed-form curvature hooks return ``None`` when absent.
    """
    dim: int = 2
    chart_size: int = 0
    name: str = "manifold"
    compact: bool = False
    volume: float | None = None
    # constant sectional curvature, when the manifold has one
    sectional_constant: float | None = None
    metric_step: float = 1e-2
    validity_radius: float = np.inf

    def __repr__(self):
        return self.spec

    @property
    def spec(self) -> str:
        return self.name

    @property
    def has_oracles(self) -> bool:
        return False

    # -- chart plumbing ----------------------------------------------------
    def metric(self, x, chart):
        raise NotImplementedError

    def in_domain(self, x, chart):
        return np.linalg.norm(np.atleast_2d(x), axis=-1) < self.validity_radius

    def check_domain(self, x, chart):
        if not np.all(self.in_domain(x, chart)):
            raise GeometryError(f"point outside chart domain of {self.spec}")

    def normalize(self, x, chart):
        """Switch charts where needed. Returns (x, chart, J) with J the
        Jacobian of the transition (None when no point moved)."""
        return x, chart, None

    def to_global(self, x, chart):
        return np.asarray(x, dtype=float)

    def from_global(self, z):
        z = np.atleast_2d(np.asarray(z, dtype=float))
        return z.copy(), np.zeros((z.shape[0], self.chart_size))

    def random_points(self, rng, n):
        raise NotImplementedError

    def default_point(self):
        return ChartPoint(np.zeros(self.dim), np.zeros(self.chart_size))

    def chart_scale(self, x, chart):
        """Coordinate length of one unit of metric length at x."""
        lam = np.linalg.eigvalsh(self.metric(x, chart))[..., -1]
        return 1.0 / np.sqrt(lam)

    def frame(self, x, chart):
        return orthonormal_frame(self.metric(x, chart))

    # -- closed-form oracles (coordinate tensors), None when unavailable ----
    def christoffel_exact(self, x, chart):
        return None

    def riemann_exact(self, x, chart):
        return None

    def ricci_exact(self, x, chart):
        return None

    def nabla_ricci_exact(self, x, chart):
        return None

    def log_exact(self, x, chart, y, ychart):
        return None

    # -- finite-difference route ------------------------------------------
    def metric_jets(self, x, chart, order):
        x, chart, _ = _batch(x, chart, self)
        self.check_domain(x, chart)
        h = self.metric_step * self.chart_scale(x, chart)
        return jets(lambda pts, c: self.metric(pts, _spread(c, pts)), x, h, order,
                    accuracy=6, aux=chart)

    def curvature_fd(self, x, chart, with_nabla=True):
        gj = self.metric_jets(x, chart, 3 if with_nabla else 2)
        return coordinate_curvature(*gj) if with_nabla else coordinate_curvature(*gj[:3])

    def christoffel_batch(self, x, chart, method="auto"):
        x, chart, _ = _batch(x, chart, self)
        if method in ("auto", "exact"):
            gam = self.christoffel_exact(x, chart)
            if gam is not None:
                self.check_domain(x, chart)
                return gam
            if method == "exact":
                raise GeometryError(f"{self.spec} has no closed-form Christoffels")
        g, dg = self.metric_jets(x, chart, 1)
        G = np.linalg.inv(g)
        A = np.einsum("nilj->nlij", dg) + np.einsum("njli->nlij", dg) - dg
        return 0.5 * np.einsum("nkl,nlij->nkij", G, A)

    def curvature_batch(self, x, chart, method="auto"):
        """Coordinate Riemann (lowered), Ricci and nabla Ricci at points."""
        x, chart, _ = _batch(x, chart, self)
        if method in ("auto", "exact") and self.has_oracles:
            self.check_domain(x, chart)
            return {"g": self.metric(x, chart), "riem": self.riemann_exact(x, chart),
                    "ric": self.ricci_exact(x, chart),
                    "nabla_ric": self.nabla_ricci_exact(x, chart)}
        if method == "exact":
            raise GeometryError(f"{self.spec} has no closed-form curvature")
        return self.curvature_fd(x, chart)

    # -- frame-level hooks used by the path simulator -----------------------
    def gamma_apply(self, x, chart, u, V):
        """Gamma(u, V[:, :, j]) for every column j of V (coordinates)."""
        gam = self.christoffel_batch(x, chart)
        return np.einsum("nkij,ni,njc->nkc", gam, u, V)

    def ric_frame(self, x, chart, E):
        ric = self.curvature_batch(x, chart)["ric"]
        return np.swapaxes(E, -1, -2) @ ric @ E

    def riem_frame(self, x, chart, E):
        return to_frame(self.curvature_batch(x, chart)["riem"], E, 4)

    def riem_apply_frame(self, x, chart, E, a, b, c):
        """Frame components of R(E a, E b) E c; a, b, c broadcast over (n, ..., d)."""
        rf = self.riem_frame(x, chart, E)
        extra = a.ndim - 2
        idx = "xyz"[:extra]
        return np.einsum(f"npqrs,n{idx}p,n{idx}q,n{idx}r->n{idx}s", rf, a, b, c)

    def curvature_kick(self, x, chart, E, w, W):
        """out[n, a, b] = frame components of R(E w, E W e_b) E W e_a."""
        n, d = w.shape
        Wt = np.swapaxes(W, 1, 2)
        v1 = np.broadcast_to(Wt[:, :, None, :], (n, d, d, d))
        v2 = np.broadcast_to(Wt[:, None, :, :], (n, d, d, d))
        b = np.broadcast_to(w[:, None, None, :], (n, d, d, d))
        return self.riem_apply_frame(x, chart, E, b, v2, v1)

    def nabla_ric_frame(self, x, chart, E):
        return to_frame(self.curvature_batch(x, chart)["nabla_ric"], E, 3)

    def ricci_parallel_known(self) -> bool:
        return False
