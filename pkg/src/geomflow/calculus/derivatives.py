"""Covariant derivatives of scalar fields from coordinate jets.

Every quantity is assembled in chart coordinates from finite-difference jets
of the field and of the metric, then expressed in an orthonormal frame.
Trailing axes of a vector-valued field (a basis) are carried along.
"""
from __future__ import annotations

import numpy as np

from ..geometry.base import ChartPoint, _batch, _spread, coordinate_curvature, orthonormal_frame
from ..geometry.fd import jets
from ..geometry.ops import SymTensor2

FIELD_STEP = 0.04
FIELD_ACCURACY = 6


def field_jets(m, field, x, chart, order, step=FIELD_STEP, accuracy=FIELD_ACCURACY, chunk=4096):
    x, chart, _ = _batch(x, chart, m)
    m.check_domain(x, chart)
    h = step * m.chart_scale(x, chart)
    return jets(lambda p, c: field(m, p, _spread(c, p)), x, h, order,
                accuracy=accuracy, chunk=chunk, aux=chart)


def geometry_data(m, x, chart, level):
    """Metric-derived data: level 1 -> g, ginv, gamma; level 2 adds first
    derivatives of the connection and curvature; level 3 adds second ones."""
    x, chart, _ = _batch(x, chart, m)
    if level <= 1:
        g = m.metric(x, chart)
        return {"g": g, "ginv": np.linalg.inv(g), "gamma": m.christoffel_batch(x, chart)}
    gj = m.metric_jets(x, chart, level)
    geo = coordinate_curvature(*gj)
    if m.has_oracles:
        geo["gamma"] = m.christoffel_exact(x, chart)
        geo["ric"] = m.ricci_exact(x, chart)
    return geo


def coordinate_derivatives(geo, fj):
    """Coordinate tensors built from field jets ``fj`` (length 3..5)."""
    G, gam = geo["ginv"], geo["gamma"]
    f1, f2 = fj[1], fj[2]
    out = {"df": f1}
    H = f2 - np.einsum("nkij,nk...->nij...", gam, f1)
    out["hess"] = H
    out["lap"] = np.einsum("nij,nij...->n...", G, H)
    if len(fj) < 4:
        return out
    dG, ddG = geo["dginv"], geo["ddginv"]
    dgam = geo["dgamma"]
    f3 = fj[3]
    dH = (f3 - np.einsum("nakij,nk...->naij...", dgam, f1)
          - np.einsum("nkij,nak...->naij...", gam, f2))
    out["dhess"] = dH
    dL = np.einsum("naij,nij...->na...", dG, H) + np.einsum("nij,naij...->na...", G, dH)
    out["dlap"] = dL
    # pieces of the Bochner-Weitzenbock identity
    q = np.einsum("nij,ni...,nj...->n...", G, f1, f1)
    dq = (np.einsum("naij,ni...,nj...->na...", dG, f1, f1)
          + 2 * np.einsum("nij,nai...,nj...->na...", G, f2, f1))
    ddq = (np.einsum("nabij,ni...,nj...->nab...", ddG, f1, f1)
           + 2 * np.einsum("naij,nbi...,nj...->nab...", dG, f2, f1)
           + 2 * np.einsum("nbij,nai...,nj...->nab...", dG, f2, f1)
           + 2 * np.einsum("nij,nabi...,nj...->nab...", G, f3, f1)
           + 2 * np.einsum("nij,nai...,nbj...->nab...", G, f2, f2))
    out["gradsq"] = q
    out["lap_gradsq"] = np.einsum("nab,nab...->n...", G, ddq - np.einsum("nkab,nk...->nab...", gam, dq))
    if len(fj) < 5:
        return out
    ddgam = geo["ddgamma"]
    f4 = fj[4]
    ddH = (f4 - np.einsum("nabkij,nk...->nbaij...", ddgam, f1)
           - np.einsum("nakij,nbk...->nbaij...", dgam, f2)
           - np.einsum("nbkij,nak...->nbaij...", dgam, f2)
           - np.einsum("nkij,nabk...->nbaij...", gam, f3))
    N = (dH - np.einsum("nmai,nmj...->naij...", gam, H)
         - np.einsum("nmaj,nim...->naij...", gam, H))
    dN = (ddH - np.einsum("nbmai,nmj...->nbaij...", dgam, H)
          - np.einsum("nmai,nbmj...->nbaij...", gam, dH)
          - np.einsum("nbmaj,nim...->nbaij...", dgam, H)
          - np.einsum("nmaj,nbim...->nbaij...", gam, dH))
    NN = (dN - np.einsum("nmba,nmij...->nbaij...", gam, N)
          - np.einsum("nmbi,namj...->nbaij...", gam, N)
          - np.einsum("nmbj,naim...->nbaij...", gam, N))
    out["nabla_hess"] = N
    out["bochner_hess"] = np.einsum("nba,nbaij...->nij...", G, NN)
    ddL = (np.einsum("nabij,nij...->nab...", ddG, H)
           + np.einsum("naij,nbij...->nab...", dG, dH)
           + np.einsum("nbij,naij...->nab...", dG, dH)
           + np.einsum("nij,nbaij...->nab...", G, ddH))
    out["hess_lap"] = ddL - np.einsum("nkab,nk...->nab...", gam, dL)
    return out


def frame_quantities(geo, cd, E=None):
    """Express coordinate derivatives in the frame E (default: Cholesky frame)."""
    if E is None:
        E = orthonormal_frame(geo["g"])
    out = {"frame": E, "lap": cd["lap"]}
    out["grad"] = np.einsum("nip,ni...->np...", E, cd["df"])
    two = lambda T: np.einsum("nip,njq,nij...->npq...", E, E, T)
    out["hess"] = two(cd["hess"])
    out["ric"] = two(geo["ric"]) if "ric" in geo else None
    if "dlap" in cd:
        out["grad_lap"] = np.einsum("nip,ni...->np...", E, cd["dlap"])
        out["gradsq"] = cd["gradsq"]
        out["lap_gradsq"] = cd["lap_gradsq"]
    if "bochner_hess" in cd:
        out["bochner_hess"] = two(cd["bochner_hess"])
        out["hess_lap"] = two(cd["hess_lap"])
        out["nabla_hess"] = np.einsum("nap,niq,njr,naij...->npqr...", E, E, E, cd["nabla_hess"])
    return out


def local_calculus(m, field, x, chart=None, order=2, frame=None):
    """Frame components of the derivatives of ``field`` up to jet ``order``
    (2: grad, Hessian, Laplacian; 3: adds Bochner terms; 4: adds the Bochner
    Laplacian of the Hessian and the Hessian of the Laplacian)."""
    x, chart, _ = _batch(x, chart, m)
    geo = geometry_data(m, x, chart, 1 if order <= 2 else order - 1)
    # second-order jets tolerate a smaller step before roundoff dominates
    fj = field_jets(m, field, x, chart, order, step=0.03 if order <= 2 else FIELD_STEP)
    cd = coordinate_derivatives(geo, fj)
    return frame_quantities(geo, cd, frame)


def _point(x):
    return x.coords[None], x.chart[None]


def grad(m, f, x: ChartPoint, frame=None):
    """Orthonormal-frame components of the gradient."""
    X, C = _point(x)
    return local_calculus(m, f, X, C, 2, None if frame is None else np.asarray(frame)[None])["grad"][0]


def hessian(m, f, x: ChartPoint, frame=None) -> SymTensor2:
    X, C = _point(x)
    fr = None if frame is None else np.asarray(frame)[None]
    return SymTensor2(local_calculus(m, f, X, C, 2, fr)["hess"][0])


def laplacian(m, f, x: ChartPoint) -> float:
    X, C = _point(x)
    return float(local_calculus(m, f, X, C, 2)["lap"][0])


def bochner_laplacian_hess(m, f, x: ChartPoint) -> SymTensor2:
    """Trace of the second covariant derivative of Hess_f."""
    X, C = _point(x)
    return SymTensor2(local_calculus(m, f, X, C, 4)["bochner_hess"][0])


def hess_of_laplacian(m, f, x: ChartPoint) -> SymTensor2:
    X, C = _point(x)
    return SymTensor2(local_calculus(m, f, X, C, 4)["hess_lap"][0])


def bochner_terms(q):
    """Residual of 0.5 Lap|grad f|^2 - <grad f, grad Lap f> - Ric(grad f, grad f) - |Hess f|^2."""
    g = q["grad"]
    ric = np.einsum("npq...,np...,nq...->n...", q["ric"], g, g)
    hs = np.einsum("npq...,npq...->n...", q["hess"], q["hess"])
    gl = np.einsum("np...,np...->n...", g, q["grad_lap"])
    return 0.5 * q["lap_gradsq"] - gl - ric - hs


def bochner_residual_batch(m, f, x, chart=None):
    return bochner_terms(local_calculus(m, f, x, chart, 3))


def bochner_residual(m, f, x: ChartPoint) -> float:
    return float(bochner_residual_batch(m, f, *_point(x))[0])


class _HessNormSq:
    """x -> |Hess_f(x)|^2_HS, itself an evaluable field (inner finite differences)."""

    def __init__(self, field, inner_step):
        self.field = field
        self.inner_step = inner_step

    def __call__(self, m, p, chart):
        shape = p.shape[:-1]
        flat = p.reshape(-1, p.shape[-1])
        cflat = np.asarray(chart).reshape(-1, np.shape(chart)[-1]) if m.chart_size else np.zeros((flat.shape[0], 0))
        geo = geometry_data(m, flat, cflat, 1)
        fj = field_jets(m, self.field, flat, cflat, 2, step=self.inner_step)
        H = coordinate_derivatives(geo, fj)["hess"]
        G = geo["ginv"]
        return np.einsum("nia,njb,nij,nab->n", G, G, H, H).reshape(shape)


def zj_terms(m, f, x, chart=None):
    """Pieces of the Hessian Bochner identity at points.

    ``half_lap`` is 0.5 Lap|Hess f|^2, taken by a second, independent (nested)
    finite-difference pass; ``boch`` = <Lap Hess f, Hess f>, ``hess_lap`` =
    <Hess Lap f, Hess f>, ``nabla`` = |nabla Hess f|^2, plus ``hs`` and ``lap``.
    """
    x, chart, _ = _batch(x, chart, m)
    q = local_calculus(m, f, x, chart, 4)
    p = _HessNormSq(f, 0.01)
    geo = geometry_data(m, x, chart, 1)
    pj = field_jets(m, p, x, chart, 2, step=0.02, accuracy=6)
    return {"half_lap": 0.5 * coordinate_derivatives(geo, pj)["lap"],
            "boch": np.einsum("npq,npq->n", q["bochner_hess"], q["hess"]),
            "hess_lap": np.einsum("npq,npq->n", q["hess_lap"], q["hess"]),
            "nabla": np.einsum("npqr,npqr->n", q["nabla_hess"], q["nabla_hess"]),
            "hs": np.einsum("npq,npq->n", q["hess"], q["hess"]), "lap": q["lap"]}


def zj_residual_batch(m, f, x, chart=None):
    """Residual of 0.5 Lap|Hess f|^2 - <Lap Hess f, Hess f> - |nabla Hess f|^2,
    returned with the summed magnitude of its terms. The two Laplacians come
    from independent routes, so this compares them."""
    z = zj_terms(m, f, x, chart)
    scale = np.abs(z["half_lap"]) + np.abs(z["boch"]) + z["nabla"]
    return z["half_lap"] - z["boch"] - z["nabla"], scale
