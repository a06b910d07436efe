"""Characterization suites: pointwise, integral and semigroup identities,
and the three-valued curvature classification built from them.

Pointwise residuals are measured relative to the size of the terms,
``|lhs - rhs| / (1 + max(|lhs|, |rhs|))``, maximised over components.
Integral residuals are relative to the integrals involved. Stochastic
equalities are judged by z-scores, inequalities by their slack.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .calculus.derivatives import bochner_terms, local_calculus, zj_terms
from .calculus.fields import FamilyFunction, default_family, eigenfunction
from .calculus.probes import Probe
from .calculus.quadrature import QuadraticForms, default_grid
from .estimators import (HessianTensor, TensorField, functional_samples, gradient_W_samples,
                         hessian_samples, summarize, terminal_calculus)
from .geometry.base import ChartPoint, GeometryError
from .geometry.ops import action_norm, curvature_action_frame, curvature_frames, sample_points
from .stochastic import SimConfig, simulate

POINTWISE = ("A2", "A3", "A4", "B2", "C3", "C4", "HD", "Lemma62")
INTEGRAL = ("B3", "B4", "EIN1", "D-bounds")
SEMIGROUP = ("A1", "B1", "C2", "HS1", "HS2", "T42ineq", "T43ineq", "T71ineq", "LEO2",
             "B5-limit", "HD-limit")
ALL_SUITES = POINTWISE + INTEGRAL + SEMIGROUP

TOLERANCES = {
    "A2": 1e-4, "A3": 1e-3, "A4": 1e-4, "B2": 1e-4, "C3": 1e-4, "C4": 1e-5, "HD": 1e-3,
    "Lemma62": 1e-8, "B3": 1e-6, "B4": 1e-6, "EIN1": 1e-6, "D-bounds": 1e-4,
    "sect-spread": 1e-4, "ric-spread": 1e-4, "nabla-ric": 1e-4, "self-test": 1e-6,
}


@dataclass
class IdentityCheck:
    id: str
    lhs: object
    rhs: object
    residual: float
    tolerance: float
    stochastic: bool = False
    z_score: float | None = None
    stderr: float | None = None
    passed: bool = False
    suite: str = ""
    point: object = None
    function: str = ""
    t: float | None = None
    note: str = ""

    def to_json(self):
        d = asdict(self)
        d["pass"] = bool(d.pop("passed"))
        return _plain(d)


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _det(id_, lhs, rhs, residual, tol, **kw):
    return IdentityCheck(id_, lhs, rhs, float(residual), tol, passed=bool(abs(residual) <= tol), **kw)


def _rel(lhs, rhs):
    lhs, rhs = np.asarray(lhs, dtype=float), np.asarray(rhs, dtype=float)
    scale = 1.0 + np.maximum(np.abs(lhs), np.abs(rhs)).max()
    return float(np.abs(lhs - rhs).max() / scale)


@dataclass
class Verdict:
    constant_curvature: str
    einstein: str
    ricci_parallel: str
    evidence: list = field(default_factory=list)
    k: float | None = None
    K: float | None = None

    def triple(self):
        cc = f"yes({_fmt(self.k)})" if self.constant_curvature == "yes" else self.constant_curvature
        ein = f"yes({_fmt(self.K)})" if self.einstein == "yes" else self.einstein
        return cc, ein, self.ricci_parallel

    def chain_ok(self):
        order = [self.constant_curvature, self.einstein, self.ricci_parallel]
        for a, b in zip(order, order[1:]):
            if a == "yes" and b != "yes":
                return False
        return True

    def to_json(self):
        cc, ein, rp = self.triple()
        return {"constant_curvature": cc, "einstein": ein, "ricci_parallel": rp,
                "evidence": list(self.evidence)}


def _fmt(v):
    r = round(v)
    return str(int(r)) if abs(v - r) < 1e-3 else f"{v:.4g}"


# ----------------------------------------------------------------------------
# geometry summary


def geometry_stats(m, n_points=64, n_planes=8, seed=0):
    """Sampled Ricci spectrum, sectional range, max |nabla Ric| and ||R||."""
    x, c = sample_points(m, n_points, seed)
    E, riem, ric, nab = curvature_frames(m, x, c)
    d = m.dim
    rng = np.random.default_rng(seed)
    sects = []
    for a in range(d):
        for b in range(a + 1, d):
            sects.append(riem[:, a, b, b, a])
    for _ in range(n_planes if d > 2 else 0):
        U = np.linalg.qr(rng.normal(size=(d, 2)))[0]
        u, v = U[:, 0], U[:, 1]
        sects.append(np.einsum("nijkl,i,j,k,l->n", riem, u, v, v, u))
    sects = np.concatenate(sects)
    eig = np.linalg.eigvalsh(0.5 * (ric + np.swapaxes(ric, 1, 2)))
    return {
        "dim": d,
        "ric_min": float(eig.min()), "ric_max": float(eig.max()),
        "ric_sup": float(np.abs(eig).max()),
        "ric_spread": float(eig.max() - eig.min()),
        "ric_sample": eig[: min(4, len(eig))].tolist(),
        "sect_min": float(sects.min()), "sect_max": float(sects.max()),
        "sect_spread": float(sects.max() - sects.min()),
        "nabla_ric_max": float(np.abs(nab).max()),
        "r_norm": 0.0 if m.sectional_constant == 0.0 else float(action_norm(riem).max()),
        "k": float(sects.mean()), "K": float(eig.mean()),
    }


# ----------------------------------------------------------------------------
# pointwise suites


def _family_calculus(m, x, c, functions, order):
    """Frame derivatives for a list of fields, trailing axis = function index."""
    if functions and all(isinstance(f, FamilyFunction) for f in functions) \
            and all(f.basis is functions[0].basis for f in functions):
        q = local_calculus(m, functions[0].basis, x, c, order)
        C = np.stack([f.coeffs for f in functions], axis=1)
        out = {"frame": q["frame"], "ric": q["ric"]}
        for k, v in q.items():
            if k not in out and v is not None:
                out[k] = v @ C
        return out
    qs = [local_calculus(m, f, x, c, order) for f in functions]
    out = {"frame": qs[0]["frame"], "ric": qs[0]["ric"]}
    for k in qs[0]:
        if k not in out and qs[0][k] is not None:
            out[k] = np.stack([q[k] for q in qs], axis=-1)
    return out


def _knote(value, given, name="k"):
    return f"{name}={value:.6g}" + ("" if given is not None else " (fitted)")


def _fit(lhs, basis):
    """Least-squares constant a minimising |lhs - a basis|."""
    den = float(np.sum(basis * basis))
    return float(np.sum(lhs * basis) / den) if den > 0 else 0.0


def _probe_calculus(m, x, c, vs, kind):
    """Order-4 calculus of probes centred at each point (one probe per point)."""
    out = []
    for i in range(len(x)):
        p = Probe(m, ChartPoint(x[i], c[i]), vs[i], kind)
        out.append(local_calculus(m, p, x[i:i + 1], c[i:i + 1], 4))
    return out


def check_pointwise(m, suite=POINTWISE, points=None, functions=None, k=None, K=None,
                    n_points=20, n_functions=10, n_probes=10, seed=0, tol=None):
    """Residuals of pointwise curvature identities at sample points."""
    tol = {**TOLERANCES, **(tol or {})}
    suite = list(suite)
    x, c = points if points is not None else sample_points(m, n_points, seed)
    if functions is None:
        functions = default_family(m).sample(n_functions, seed)
    d = m.dim
    I = np.eye(d)
    checks = []
    E, riem, ric, nab = curvature_frames(m, x, c)
    if k is None and m.sectional_constant is not None:
        k = m.sectional_constant
    needs_q = any(s in suite for s in ("A2", "B2", "C3"))
    q = _family_calculus(m, x, c, functions, 4) if needs_q else None
    ftag = f"family[{seed}]x{len(functions)}"

    if q is not None:
        H, L = q["hess"], q["lap"]            # (n, d, d, F), (n, F)
        D = q["hess_lap"] - q["bochner_hess"]  # Hess_{Lap f} - Lap Hess_f
        RH = np.moveaxis(curvature_action_frame(riem[:, None], np.moveaxis(H, -1, 1)), 1, -1)

    if "A2" in suite:
        basis = 2 * (L[:, None, None, :] * I[None, :, :, None] - d * H)
        kk = k if k is not None else _fit(D, basis)
        checks.append(_det("A2", D, kk * basis, _rel(D, kk * basis), tol["A2"], suite="A2",
                           function=ftag, note=_knote(kk, k)))
    if "B2" in suite:
        lhs = 0.5 * D
        KK = K if K is not None else _fit(lhs - RH, -H)
        rhs = RH - KK * H
        checks.append(_det("B2", lhs, rhs, _rel(lhs, rhs), tol["B2"], suite="B2", function=ftag,
                           note=_knote(KK, K, "K")))
    if "C3" in suite:
        RicH = np.einsum("nac,ncbf->nabf", ric, H)
        rhs = 2 * RH - (RicH + np.swapaxes(RicH, 1, 2))
        checks.append(_det("C3", D, rhs, _rel(D, rhs), tol["C3"], suite="C3", function=ftag,
                           note="right-hand side symmetrized in (v1, v2)"))
    if "A3" in suite:
        nA = min(len(x), 5)
        fs = functions[:3]
        lhs, basis, scale = [], [], []
        for f in fs:
            z = zj_terms(m, f, x[:nA], c[:nA])
            lhs.append(z["half_lap"] - z["hess_lap"] - z["nabla"])
            basis.append(2 * (d * z["hs"] - z["lap"] ** 2))
            scale.append(np.abs(z["half_lap"]) + np.abs(z["hess_lap"]) + z["nabla"])
        lhs, basis, scale = map(np.concatenate, (lhs, basis, scale))
        kk = k if k is not None else _fit(lhs, basis)
        res = np.abs(lhs - kk * basis) / (1 + scale + np.abs(kk * basis))
        checks.append(_det("A3", lhs, kk * basis, float(res.max()), tol["A3"], suite="A3",
                           function=f"family[{seed}]x{len(fs)}", note=f"{_knote(kk, k)}; {nA} points"))
    rng = np.random.default_rng(seed + 1)
    nP = min(len(x), n_probes)
    if "A4" in suite:
        us = rng.normal(size=(nP, d))
        vs = rng.normal(size=(nP, d))
        # the identity as stated holds for v orthogonal to u
        vs -= (np.sum(us * vs, 1) / np.sum(us * us, 1))[:, None] * us
        qs = _probe_calculus(m, x[:nP], c[:nP], us, "rank-one")
        lhs = np.array([vs[i] @ (qq["hess_lap"][0] - qq["bochner_hess"][0]) @ vs[i]
                        for i, qq in enumerate(qs)])
        basis = 2 * (np.sum(us**2, 1) * np.sum(vs**2, 1) - np.sum(us * vs, 1) ** 2)
        kk = k if k is not None else _fit(lhs, basis)
        rhs = kk * basis
        checks.append(_det("A4", lhs, rhs, _rel(lhs, rhs), tol["A4"], suite="A4",
                           function="rank-one probe", note=_knote(kk, k)))
    if "C4" in suite or "HD" in suite:
        vs = rng.normal(size=(nP, d))
        vs /= np.linalg.norm(vs, axis=1, keepdims=True)
        qs = _probe_calculus(m, x[:nP], c[:nP], vs, "gradient")
        # (Lap Hess_f - Hess_{Lap f})(v1, e_b) for v1 = grad f(x)
        diff = np.array([qq["bochner_hess"][0] - qq["hess_lap"][0] for qq in qs])
        hess0 = max(float(np.abs(qq["hess"][0]).max()) for qq in qs)
        if "C4" in suite:
            checks.append(_det("C4", diff, np.zeros_like(diff), _rel(diff, 0 * diff), tol["C4"],
                               suite="C4", function="gradient probe",
                               note=f"max |Hess f(x)| = {hess0:.2e}"))
        if "HD" in suite:
            lhs = np.einsum("nbij,ni,nj->nb", nab[:nP], vs, vs)  # (nabla_{e_b} Ric)(v1, v1)
            rhs = np.einsum("nab,na->nb", diff, vs)
            checks.append(_det("HD", lhs, rhs, float(np.abs(lhs - rhs).max()), tol["HD"],
                               suite="HD", function="gradient probe",
                               note="nabla Ric from metric jets vs probe fourth derivatives"))
    if "Lemma62" in suite:
        T = rng.normal(size=(len(x), d, d))
        T = T + np.swapaxes(T, 1, 2)
        lhs = curvature_action_frame(riem, T)
        basis = np.trace(T, axis1=1, axis2=2)[:, None, None] * I - T
        kk = k if k is not None else _fit(lhs, basis)
        rhs = kk * basis
        checks.append(_det("Lemma62", lhs, rhs, _rel(lhs, rhs), tol["Lemma62"], suite="Lemma62",
                           function="random symmetric T", note=_knote(kk, k)))
    return checks


# ----------------------------------------------------------------------------
# integral suites


def check_integral(m, grid=None, suite=INTEGRAL, functions=None, K=None, n_functions=50,
                   seed=0, tol=None, forms=None, stats=None):
    """Quadrature checks of the integrated Bochner identities."""
    if not m.compact:
        raise GeometryError(f"{m.spec} is not compact; integral suites need a compact manifold")
    tol = {**TOLERANCES, **(tol or {})}
    grid = grid or default_grid(m)
    if functions is None:
        functions = default_family(m).sample(n_functions, seed)
    basis = functions[0].basis
    forms = forms if forms is not None and forms.basis is basis else QuadraticForms(m, grid, basis)
    C = np.stack([f.coeffs for f in functions])
    num = np.einsum("np,pq,nq->n", C, forms.numerator, C)
    den = np.einsum("np,pq,nq->n", C, forms.grad, C)
    keep = den > 1e-12 * np.einsum("np,np->n", C, C) * np.abs(forms.grad).max()
    skipped = int((~keep).sum())
    C, num, den = C[keep], num[keep], den[keep]
    quot = num / den
    checks = []
    skip_note = f"{skipped} degenerate denominators skipped" if skipped else ""
    if K is None and stats is not None and stats["ric_spread"] <= TOLERANCES["ric-spread"]:
        K = stats["K"]
    KK = K if K is not None else float(quot.mean())
    Knote = f"K={KK:.6g}" + ("" if K is not None else " (fitted)")
    if "B3" in suite:
        res = np.abs(num - KK * den) / den
        checks.append(_det("B3", num, KK * den, float(res.max()), tol["B3"], suite="B3",
                           function=f"family[{seed}]x{len(C)}", note="; ".join(filter(None, [Knote, skip_note]))))
    if "B4" in suite or "EIN1" in suite:
        rng = np.random.default_rng(seed + 7)
        perm = rng.permutation(len(C))
        Dm = C[perm]
        if "B4" in suite:
            lhs = np.einsum("np,pq,nq->n", C, forms.numerator, Dm)
            rhs = KK * np.einsum("np,pq,nq->n", C, forms.grad, Dm)
            scale = np.sqrt(den * den[perm])
            res = np.abs(lhs - rhs) / scale
            checks.append(_det("B4", lhs, rhs, float(res.max()), tol["B4"], suite="B4",
                               function=f"pairs x{len(C)}", note=Knote))
        if "EIN1" in suite:
            gfg = np.einsum("np,pq,nq->n", C, forms.grad, Dm)
            cross = np.einsum("np,pq,nq->n", C, forms.numerator, Dm)
            lhs = gfg * num
            rhs = den * cross
            # bound each side by its terms before the cancellation in the numerator
            mag = np.einsum("np,pq,nq->n", C, forms.lap + forms.hess, C)
            scale = np.maximum(np.sqrt(den * den[perm]) * mag, den * np.sqrt(mag * mag[perm]))
            res = np.abs(lhs - rhs) / scale
            checks.append(_det("EIN1", lhs, rhs, float(res.max()), tol["EIN1"], suite="EIN1",
                               function=f"pairs x{len(C)}"))
    if "D-bounds" in suite:
        st = stats or geometry_stats(m)
        lo, hi = st["ric_min"], st["ric_max"]
        viol = max(lo - quot.min(), quot.max() - hi, 0.0)
        checks.append(_det("D-bounds", [float(quot.min()), float(quot.max())], [lo, hi], viol,
                           tol["D-bounds"], suite="D-bounds", function=f"family[{seed}]x{len(C)}",
                           note="family quotient range vs sampled Ricci spectrum"))
    return checks


# ----------------------------------------------------------------------------
# semigroup suites


def _dexp(p, q, s):
    """(e^{p s} - e^{q s}) / (p - q), with its limit s e^{p s} when p = q."""
    a = p - q
    if abs(a) < 1e-12:
        return s * math.exp(p * s)
    return math.exp(q * s) * math.expm1(a * s) / a


def _int_dexp(p, q, t, n=32):
    """int_0^t _dexp(p, q, s) ds by Gauss-Legendre."""
    z, w = np.polynomial.legendre.leggauss(n)
    s = 0.5 * t * (z + 1)
    return float(0.5 * t * sum(wi * _dexp(p, q, si) for wi, si in zip(w, s)))


def _stoch_eq(id_, est_samples, ens, target=0.0, **kw):
    """Equality check from per-path difference samples; z is the worst component."""
    r = summarize(est_samples, ens, id_)
    se = np.asarray(r.stderr)
    diff = np.asarray(r.mean) - target
    z = np.where(se > 0, diff / np.where(se > 0, se, 1), np.where(np.abs(diff) < 1e-12, 0.0, np.inf))
    i = int(np.argmax(np.abs(z)))
    zmax = float(np.abs(z).reshape(-1)[i])
    return IdentityCheck(id_, r.mean, target, float(np.abs(diff).max()), 3.0, True, zmax,
                         float(se.reshape(-1)[i]), passed=bool(zmax <= 3), **kw)


def _stoch_ineq(id_, lhs, rhs, infl, ens, **kw):
    """One-sided check lhs <= rhs; ``infl`` are per-path influence values of rhs - lhs."""
    r = summarize(infl, ens, id_)
    se = float(r.stderr)
    slack = float(rhs - lhs)
    z = slack / se if se > 0 else (0.0 if slack >= -1e-12 else -np.inf)
    return IdentityCheck(id_, float(lhs), float(rhs), slack, 3.0, True, float(z), se,
                         passed=bool(slack >= -3 * se - 1e-12), **kw)


class _CurvHess(TensorField):
    """R Hess_f in the moving frame, scaled."""

    def __init__(self, f, scale=1.0):
        self.f = f
        self.scale = scale

    def frame_components(self, ens):
        H = terminal_calculus(ens, self.f)["hess"]
        riem = ens.manifold.riem_frame(ens.x, ens.chart, ens.frame)
        return self.scale * curvature_action_frame(riem, H)


class SemigroupData:
    """Per-path samples of everything the semigroup suites need at one t."""

    def __init__(self, m, x0, f, cfg):
        self.m, self.x0, self.f, self.cfg = m, x0, f, cfg
        self.ens = simulate(m, x0, replace(cfg, track_w2=True))
        ens = self.ens
        self.hess = hessian_samples(ens, f)                 # Hess_{P_t f} samples
        self.par_hess = HessianTensor(f).frame_components(ens)  # Hess_f(//e_a, //e_b)
        q = terminal_calculus(ens, f)
        self.grad_W = gradient_W_samples(ens, f)
        self.hess_W = np.einsum("nkl,nka,nlb->nab", q["hess"], ens.W, ens.W)
        self.fun = {k: functional_samples(ens, f, k)
                    for k in ("f", "f2", "lap", "gradsq", "hess_op", "hess_op2", "hess_hs2")}

    def mean(self, s):
        return np.asarray(s).mean(axis=0)


def _op_with_influence(Hbar, samples):
    """Operator norm of the symmetrized mean matrix and its per-path influence."""
    S = 0.5 * (Hbar + Hbar.T)
    w, V = np.linalg.eigh(S)
    i = int(np.argmax(np.abs(w)))
    u = V[:, i]
    sign = np.sign(w[i]) or 1.0
    return abs(w[i]), sign * np.einsum("a,nab,b->n", u, samples, u)


def _hs2_with_influence(Hbar, samples):
    S = 0.5 * (Hbar + Hbar.T)
    return float(np.sum(S * S)), 2 * np.einsum("ab,nab->n", S, samples)


def check_semigroup(m, x0=None, suite=("A1",), f=None, cfg=None, k=None, K=None, stats=None,
                    t_values=None, data=None):
    """Stochastic checks; equalities report z-scores, inequalities slack."""
    x0 = x0 or m.default_point()
    f = f or eigenfunction(m)
    cfg = cfg or SimConfig(t_final=0.5, n_paths=10000)
    st = stats or geometry_stats(m)
    d = m.dim
    t = cfg.t_final
    R = st["r_norm"]
    if k is None:
        k = m.sectional_constant
    Klow = K if K is not None else st["ric_min"]
    Kup = K if K is not None else st["ric_max"]
    einstein = st["ric_spread"] <= TOLERANCES["ric-spread"]
    checks = []
    point = x0.coords.tolist()
    meta = dict(point=point, function=repr(f), t=t)
    D = data or SemigroupData(m, x0, f, cfg)
    ens = D.ens
    Hs = D.hess
    Hbar = Hs.mean(axis=0)
    F = D.fun

    if "A1" in suite:
        if k is None:
            checks.append(IdentityCheck("A1", None, None, float("nan"), 3.0, True, note="no constant k",
                                        suite="A1", **meta))
        else:
            a = math.exp(-d * k * t)
            b = -math.expm1(-d * k * t) / d
            rhs = a * D.par_hess + b * F["lap"][:, None, None] * np.eye(d)
            checks.append(_stoch_eq("A1", Hs - rhs, ens, suite="A1", note=f"k={k:.6g}", **meta))

    lam = f.eigenvalue
    if "B1" in suite or "C2" in suite:
        if lam is None:
            for s in ("B1", "C2"):
                if s in suite:
                    checks.append(IdentityCheck(s, None, None, float("nan"), 3.0, True, suite=s,
                                                note="needs an eigenfunction", **meta))
        else:
            z, w = np.polynomial.legendre.leggauss(8)
            nodes = 0.5 * t * (z + 1)
            weights = 0.5 * t * w
            n_node = max(2, cfg.n_paths // 8)
            b1 = np.zeros((d, d))
            b1_var = np.zeros((d, d))
            c2 = np.zeros((d, d))
            c2_var = np.zeros((d, d))
            KB = Kup if einstein else None
            for j, (s, ws) in enumerate(zip(nodes, weights)):
                sub = replace(cfg, t_final=float(s), n_paths=n_node, seed=cfg.seed + 1000 * (j + 1),
                              n_steps=max(1, int(round((cfg.n_steps or 2000) * s / t))) if cfg.n_steps else None,
                              track_w2=False)
                e_s = simulate(m, x0, sub)
                scale = math.exp(-0.5 * lam * (t - s))
                RHs = _CurvHess(f, scale).frame_components(e_s)
                if KB is not None:
                    r = summarize(math.exp(-KB * s) * RHs, e_s, "B1-node")
                    b1 += ws * r.mean
                    b1_var += (ws * r.stderr) ** 2
                r = summarize(np.einsum("nab,nai,nbj->nij", RHs, e_s.W, e_s.W), e_s, "C2-node")
                c2 += ws * r.mean
                c2_var += (ws * r.stderr) ** 2
            if "B1" in suite:
                if KB is None:
                    checks.append(IdentityCheck("B1", None, None, float("nan"), 3.0, True, suite="B1",
                                                note="not Einstein", **meta))
                else:
                    main = summarize(Hs - math.exp(-KB * t) * D.par_hess, ens, "B1")
                    se = np.sqrt(main.stderr**2 + b1_var)
                    checks.append(_combine("B1", main.mean, b1, se, meta, f"K={KB:.6g}; 8 nodes"))
            if "C2" in suite:
                main = summarize(Hs - D.hess_W, ens, "C2")
                se = np.sqrt(main.stderr**2 + c2_var)
                checks.append(_combine("C2", main.mean, c2, se, meta, "8 nodes"))

    # inequalities
    if "HS1" in suite:
        lhs, inf_l = _op_with_influence(Hbar, Hs)
        c = math.exp((R - Klow) * t)
        rhs = c * F["hess_op"].mean()
        checks.append(_stoch_ineq("HS1", lhs, rhs, c * F["hess_op"] - inf_l, ens, suite="HS1",
                                  note=f"K={Klow:.6g}, ||R||={R:.6g}", **meta))
    if "HS2" in suite:
        lhs, inf_l = _hs2_with_influence(Hbar, Hs)
        c = math.exp(2 * (R - Klow) * t)
        rhs = c * F["hess_hs2"].mean()
        checks.append(_stoch_ineq("HS2", lhs, rhs, c * F["hess_hs2"] - inf_l, ens, suite="HS2",
                                  note=f"K={Klow:.6g}, ||R||={R:.6g}", **meta))

    gW = D.grad_W
    gbar = gW.mean(axis=0)
    gsq = float(gbar @ gbar)
    gsq_inf = 2 * gW @ gbar
    Pf = F["f"].mean()
    var = F["f2"].mean() - Pf**2
    var_inf = F["f2"] - 2 * Pf * F["f"]
    gap = lambda KK: (F["gradsq"].mean() - math.exp(KK * t) * gsq,
                      F["gradsq"] - math.exp(KK * t) * gsq_inf)
    op2, op2_inf = _op_with_influence(Hbar, Hs)
    op2_inf = 2 * op2 * op2_inf
    op2 = op2**2
    hs2, hs2_inf = _hs2_with_influence(Hbar, Hs)

    if "T42ineq" in suite:
        KK = Klow
        note = f"K={KK:.6g}, ||R||={R:.6g}"
        g, g_inf = gap(KK)
        c = _dexp(KK, 2 * (KK - R), t)
        checks.append(_stoch_ineq("T42-2", c * op2, g, g_inf - c * op2_inf, ens, suite="T42ineq",
                                  note=note, **meta))
        c3 = _int_dexp(KK, 2 * (KK - R), t)
        a3 = _dexp(KK, 0.0, t)
        rhs = var - a3 * gsq
        checks.append(_stoch_ineq("T42-3", c3 * op2, rhs, var_inf - a3 * gsq_inf - c3 * op2_inf, ens,
                                  suite="T42ineq", note=note, **meta))
        a4 = _dexp(0.0, -KK, t)
        c4 = math.exp(2 * (KK - R) * t) * _int_dexp(2 * (R - KK), -KK, t)
        lhs = var - a4 * F["gradsq"].mean()
        checks.append(_stoch_ineq("T42-4", lhs, -c4 * op2,
                                  -c4 * op2_inf - (var_inf - a4 * F["gradsq"]), ens,
                                  suite="T42ineq", note=note, **meta))
    if "T43ineq" in suite:
        KK = Kup
        g, g_inf = gap(KK)
        c = _dexp(2 * R - KK, 0.0, t) * d
        checks.append(_stoch_ineq("T43-2", g, c * F["hess_op2"].mean(), c * F["hess_op2"] - g_inf,
                                  ens, suite="T43ineq", note=f"K={KK:.6g}, ||R||={R:.6g}", **meta))
    if "T71ineq" in suite:
        if not einstein:
            checks.append(IdentityCheck("T71-3", None, None, float("nan"), 3.0, True, suite="T71ineq",
                                        note="not Einstein", **meta))
        else:
            KK = st["K"]
            g, g_inf = gap(KK)
            lo = _dexp(KK, 2 * (KK - R), t)
            hi = _dexp(2 * R - KK, 0.0, t)
            note = f"K={KK:.6g}, ||R||={R:.6g}; upper bound uses 2||R||-K in both places"
            checks.append(_stoch_ineq("T71-3-lower", lo * hs2, g, g_inf - lo * hs2_inf, ens,
                                      suite="T71ineq", note=note, **meta))
            checks.append(_stoch_ineq("T71-3-upper", g, hi * F["hess_hs2"].mean(),
                                      hi * F["hess_hs2"] - g_inf, ens, suite="T71ineq", note=note, **meta))
    if "LEO2" in suite:
        KK = Klow
        Dif = Hs - D.par_hess
        lhs, inf_l = _op_with_influence(Dif.mean(axis=0), Dif)
        c = st["ric_sup"] * _dexp(0.0, -KK, t) + math.exp((R - KK) * t) - math.exp(-KK * t)
        rhs = c * F["hess_op"].mean()
        checks.append(_stoch_ineq("LEO2", lhs, rhs, c * F["hess_op"] - inf_l, ens, suite="LEO2",
                                  note=f"K={KK:.6g}, ||R||={R:.6g}, ||Ric||={st['ric_sup']:.6g}", **meta))
    return checks


def _combine(id_, lhs, rhs, se, meta, note):
    diff = np.asarray(lhs) - np.asarray(rhs)
    z = np.where(se > 0, diff / np.where(se > 0, se, 1), np.where(np.abs(diff) < 1e-12, 0.0, np.inf))
    i = int(np.argmax(np.abs(z)))
    zmax = float(np.abs(z).reshape(-1)[i])
    return IdentityCheck(id_, lhs, rhs, float(np.abs(diff).max()), 3.0, True, zmax,
                         float(np.asarray(se).reshape(-1)[i]), passed=bool(zmax <= 3), suite=id_,
                         note=note, **meta)


def check_b5_limit(m, x0=None, f=None, cfg=None, K=None, t_values=(0.4, 0.2, 0.1, 0.05), stats=None):
    """Ratio |P_t|grad f|^2 - e^{Kt}|grad P_t f|^2| / (|Hess P_t f|^2 + P_t|Hess f|^2) -> 0."""
    x0 = x0 or m.default_point()
    f = f or eigenfunction(m)
    cfg = cfg or SimConfig(t_final=1.0, n_paths=10000)
    st = stats or geometry_stats(m)
    KK = K if K is not None else st["K"]
    ratios, ses = [], []
    for t in t_values:
        D = SemigroupData(m, x0, f, replace(cfg, t_final=t))
        gbar = D.grad_W.mean(axis=0)
        num_s = D.fun["gradsq"] - math.exp(KK * t) * 2 * D.grad_W @ gbar
        num = D.fun["gradsq"].mean() - math.exp(KK * t) * gbar @ gbar
        hs2, hs2_inf = _hs2_with_influence(D.hess.mean(axis=0), D.hess)
        den = hs2 + D.fun["hess_hs2"].mean()
        ratio = abs(num) / den
        infl = (np.sign(num) * num_s - ratio * (hs2_inf + D.fun["hess_hs2"])) / den
        ratios.append(ratio)
        ses.append(float(summarize(infl, D.ens, "B5").stderr))
    trend = all(b <= a + 3 * np.hypot(sa, sb) for a, b, sa, sb in zip(ratios, ratios[1:], ses, ses[1:]))
    ok = trend and ratios[-1] < ratios[0]
    return IdentityCheck("B5-limit", ratios, list(t_values), ratios[-1], 3.0, True, None,
                         ses[-1], passed=bool(ok), suite="B5-limit", point=x0.coords.tolist(),
                         function=repr(f), note=f"K={KK:.6g}; ratio must trend to 0")


def check_hd_limit(m, x0=None, f=None, cfg=None, t_values=(0.2, 0.1, 0.05)):
    """2 (P_t Hess_f - Hess_{P_t f}) / t, extrapolated to t = 0, against the
    deterministic Lap Hess_f - Hess_{Lap f} at x0 (all frame components)."""
    x0 = x0 or m.default_point()
    # low degree keeps the higher-order terms in t small
    f = f or default_family(m, degree=2).sample(1, 0)[0]
    qq = local_calculus(m, f, x0.coords[None], x0.chart[None], 4)
    target = qq["bochner_hess"][0] - qq["hess_lap"][0]
    cfg = cfg or SimConfig(t_final=0.2, n_paths=20000)
    vals, ses = [], []
    for t in t_values:
        ens = simulate(m, x0, replace(cfg, t_final=t, track_w2=True))
        diff = HessianTensor(f).frame_components(ens) - hessian_samples(ens, f)
        r = summarize(2 * diff / t, ens, "HD-limit")
        vals.append(r.mean)
        ses.append(r.stderr)
    vals, ses = np.array(vals), np.array(ses)
    # polynomial (Richardson) extrapolation to t = 0 through all the t values
    ts = np.asarray(t_values, dtype=float)
    w = np.array([np.prod([tj / (tj - ti) for tj in ts if tj != ti]) for ti in ts])
    extrap = np.tensordot(w, vals, axes=1)
    se = np.sqrt(np.tensordot(w**2, ses**2, axes=1))
    diff = extrap - target
    z = np.abs(diff) / np.where(se > 0, se, np.inf)
    i = int(np.argmax(z))
    return IdentityCheck("HD-limit", extrap, target, float(np.abs(diff).max()), 3.0, True,
                         float(z.reshape(-1)[i]), float(se.reshape(-1)[i]), passed=bool(z.max() <= 3),
                         suite="HD-limit", point=x0.coords.tolist(), function=repr(f),
                         note="Richardson extrapolation over t=" + ",".join(map(str, t_values)))


# ----------------------------------------------------------------------------
# classification


def classify(m, checks, stats=None, tol=None):
    """Three-valued verdicts from sampled curvature and the suite results."""
    tol = {**TOLERANCES, **(tol or {})}
    st = stats or geometry_stats(m)
    by = {}
    for c in checks:
        by.setdefault(c.id, []).append(c)

    def suite_state(ids):
        cs = [c for i in ids for c in by.get(i, [])]
        if not cs:
            return None, []
        ok = all(c.passed for c in cs)
        far = any((not c.stochastic and abs(c.residual) > 10 * c.tolerance)
                  or (c.stochastic and c.z_score is not None and abs(c.z_score) > 10) for c in cs)
        return ("pass" if ok else "far" if far else "fail"), [c.id for c in cs]

    def decide(quantity, qtol, ids):
        state, ev = suite_state(ids)
        if quantity <= qtol and state == "pass":
            return "yes", ev
        if quantity > 10 * qtol or state == "far":
            return "no", ev
        return "undetermined", ev

    cc, ev1 = decide(st["sect_spread"], tol["sect-spread"], ["A2"])
    ein, ev2 = decide(st["ric_spread"], tol["ric-spread"], ["B3"] if "B3" in by else ["B2"])
    rp, ev3 = decide(st["nabla_ric_max"], tol["nabla-ric"], ["C4"])
    # constant curvature => Einstein => Ricci parallel; a "yes" whose
    # consequence is not confirmed is a conflict and becomes undetermined
    if ein == "yes" and rp != "yes":
        ein = "undetermined"
    if cc == "yes" and ein != "yes":
        cc = "undetermined"
    evidence = sorted(set(ev1 + ev2 + ev3 + ["sect-spread", "ric-spread", "nabla-ric"]))
    return Verdict(cc, ein, rp, evidence, k=st["k"] if cc == "yes" else None,
                   K=st["K"] if ein == "yes" else None)


def classification_checks(m, seed=0, stats=None):
    """The deterministic suites used by :func:`classify`."""
    st = stats or geometry_stats(m, seed=seed)
    checks = check_pointwise(m, ("A2", "C4") if m.compact else ("A2", "B2", "C4"), seed=seed)
    if m.compact:
        checks += check_integral(m, suite=("B3",), seed=seed, stats=st)
    return checks


# ----------------------------------------------------------------------------
# start-up self test


def self_test():
    """Sign conventions and basic identities on the unit sphere."""
    from .geometry.zoo import Sphere
    m = Sphere(2, 1.0)
    checks = []
    x, c = sample_points(m, 8, 11)
    _, riem, _, _ = curvature_frames(m, x, c, method="fd")
    sect = riem[:, 0, 1, 1, 0]
    checks.append(_det("self-test:sect-sign", sect, 1.0, float(np.abs(sect - 1).max()), 1e-6,
                       suite="self-test"))
    T = np.array([[1.0, 0.3], [0.3, -0.5]])
    lhs = curvature_action_frame(riem, np.broadcast_to(T, (len(x), 2, 2)))
    rhs = np.trace(T) * np.eye(2) - T
    checks.append(_det("self-test:Lemma62", lhs, rhs, float(np.abs(lhs - rhs).max()), 1e-6,
                       suite="self-test"))
    f = default_family(m).sample(1, 3)[0]
    b = bochner_terms(local_calculus(m, f, x, c, 3))
    checks.append(_det("self-test:bochner", None, None, float(np.abs(b).max()), 1e-5,
                       suite="self-test"))
    return checks
