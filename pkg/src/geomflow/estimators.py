"""Monte Carlo estimators of P_t f and its first two covariant derivatives.

Vectors are frame components in the initial frame at x0 (the default
Cholesky frame unless one is passed to ``simulate``). Every estimator can
take a prebuilt ensemble so that several formulas share random numbers.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .calculus.derivatives import local_calculus
from .geometry.base import ChartPoint
from .geometry.ops import SymTensor2
from .stochastic import Ensemble, SimConfig, simulate

CHUNK = 8192


@dataclass
class EstimatorResult:
    mean: np.ndarray
    stderr: np.ndarray
    n_paths: int
    n_steps: int
    seed: int
    formula_id: str
    samples: np.ndarray | None = None

    def z_score(self, value):
        """Componentwise (mean - value) / stderr; zero where both vanish."""
        diff = np.asarray(self.mean - value, dtype=float)
        se = np.asarray(self.stderr, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            z = np.where(se > 0, diff / np.where(se > 0, se, 1.0),
                         np.where(np.abs(diff) <= 1e-12 * (1 + np.abs(np.asarray(value))), 0.0, np.inf))
        return z

    def as_tensor(self):
        return SymTensor2(self.mean)

    def to_json(self):
        return {"mean": np.asarray(self.mean).tolist(), "stderr": np.asarray(self.stderr).tolist(),
                "n_paths": self.n_paths, "n_steps": self.n_steps, "seed": self.seed,
                "formula_id": self.formula_id}


def summarize(samples, ens: Ensemble, formula_id, control=None, keep=False):
    """Mean and componentwise standard error of per-path samples.

    With antithetic sampling the error is computed from pair averages, which
    are the independent units. ``control`` is an optional (samples, mean)
    control variate subtracted with unit coefficient.
    """
    s = np.asarray(samples, dtype=float)
    if control is not None:
        cs, cm = control
        s = s - (np.asarray(cs) - cm)
    units = s
    if ens.config.antithetic:
        units = 0.5 * (s[0::2] + s[1::2])
    n = len(units)
    mean = units.mean(axis=0)
    se = units.std(axis=0, ddof=1) / np.sqrt(n) if n > 1 else np.full_like(mean, np.inf)
    return EstimatorResult(mean, se, len(s), ens.n_steps, ens.config.seed, formula_id,
                           s if keep else None)


def ensemble_for(m, x0: ChartPoint, cfg: SimConfig, ensemble=None, need_w2=False, frame0=None):
    if ensemble is not None:
        if need_w2 and ensemble.W2 is None:
            raise ValueError("ensemble was simulated without W2 tracking")
        return ensemble
    if need_w2 and not cfg.track_w2:
        cfg = replace(cfg, track_w2=True)
    return simulate(m, x0, cfg, frame0=frame0)


def terminal_calculus(ens: Ensemble, f, order=2):
    """grad/hess/lap of ``f`` at the terminal points, in the moving frames (cached)."""
    key = (id(f), order)
    hit = ens.cache.get(key)
    # entries hold their field so a recycled id can never match a stale entry
    if hit is None or hit[0] is not f:
        parts = []
        for lo in range(0, ens.n_paths, CHUNK):
            sl = slice(lo, lo + CHUNK)
            q = local_calculus(ens.manifold, f, ens.x[sl], ens.chart[sl], order, ens.frame[sl])
            parts.append({k: q[k] for k in ("grad", "hess", "lap")})
        hit = ens.cache[key] = (f, {k: np.concatenate([p[k] for p in parts]) for k in parts[0]})
    return hit[1]


def terminal_values(ens: Ensemble, f):
    key = (id(f), "value")
    hit = ens.cache.get(key)
    if hit is None or hit[0] is not f:
        hit = ens.cache[key] = (f, np.asarray(f(ens.manifold, ens.x, ens.chart), dtype=float))
    return hit[1]


# ----------------------------------------------------------------------------
# estimators


def est_semigroup(m, x0, f, cfg, ensemble=None, keep=False):
    """P_t f(x0) = E f(X_t)."""
    ens = ensemble_for(m, x0, cfg, ensemble)
    return summarize(terminal_values(ens, f), ens, "semigroup", keep=keep)


def gradient_W_samples(ens, f, v=None):
    grad = terminal_calculus(ens, f)["grad"]
    # <grad f, W e_a> for every a, in the moving frame
    vals = np.einsum("nk,nka->na", grad, ens.W)
    return vals if v is None else vals @ np.asarray(v, dtype=float)


def est_gradient_W(m, x0, v, f, cfg, ensemble=None, keep=False):
    """grad_v P_t f(x0) = E <grad f(X_t), W_t v>; ``v=None`` returns all components."""
    ens = ensemble_for(m, x0, cfg, ensemble)
    return summarize(gradient_W_samples(ens, f, v), ens, "gradient-damped", keep=keep)


def est_gradient_parallel(m, x0, v, f, cfg, ensemble=None, keep=False):
    """E <grad f(X_t), //_t v>, i.e. P_t applied to the gradient one-form."""
    ens = ensemble_for(m, x0, cfg, ensemble)
    g = terminal_calculus(ens, f)["grad"]
    return summarize(g if v is None else g @ np.asarray(v, dtype=float), ens,
                     "gradient-parallel", keep=keep)


def bismut_samples(ens, f, v=None, h="linear"):
    if h not in ens.bismut:
        raise ValueError(f"ensemble has no Bismut accumulator for weight {h!r}")
    vals = terminal_values(ens, f)[:, None] * ens.bismut[h]
    return vals if v is None else vals @ np.asarray(v, dtype=float)


def est_gradient_bismut(m, x0, v, f, cfg, ensemble=None, h=None, control=None, keep=False):
    """grad_v P_t f(x0) = E f(X_t) int_0^t h'(s) <W_s v, Phi_s dB_s>.

    ``h`` is "linear" (h_s = s/t) or "sine" (h_s = sin^2(pi s / 2t)).
    """
    h = h or cfg.bismut[0]
    if h not in cfg.bismut:
        cfg = replace(cfg, bismut=tuple(cfg.bismut) + (h,))
    ens = ensemble_for(m, x0, cfg, ensemble)
    return summarize(bismut_samples(ens, f, v, h), ens, f"gradient-bismut-{h}",
                     control=control, keep=keep)


def hessian_samples(ens, f, v1=None, v2=None):
    q = terminal_calculus(ens, f)
    W, W2 = ens.W, ens.W2
    vals = (np.einsum("nkl,nka,nlb->nab", q["hess"], W, W)
            + np.einsum("nk,nabk->nab", q["grad"], W2))
    if v1 is None:
        return vals
    return np.einsum("nab,a,b->n", vals, np.asarray(v1, dtype=float), np.asarray(v2, dtype=float))


def est_hessian(m, x0, v1, v2, f, cfg, ensemble=None, keep=False):
    """Hess P_t f(v1, v2) = E{Hess f(W v1, W v2) + <grad f(X_t), W2(v1, v2)>}.

    With ``v1 = v2 = None`` the full matrix of components is returned.
    """
    ens = ensemble_for(m, x0, cfg, ensemble, need_w2=True)
    return summarize(hessian_samples(ens, f, v1, v2), ens, "hessian", keep=keep)


class TensorField:
    """A symmetric 2-tensor field evaluated in given orthonormal frames."""

    def frame_components(self, ens: Ensemble):
        raise NotImplementedError


class MetricTensor(TensorField):
    def frame_components(self, ens):
        g = ens.manifold.metric(ens.x, ens.chart)
        F = ens.frame
        return np.swapaxes(F, 1, 2) @ g @ F


class HessianTensor(TensorField):
    def __init__(self, f):
        self.f = f

    def frame_components(self, ens):
        return terminal_calculus(ens, self.f)["hess"]


class ConstantTensor(TensorField):
    """Tensor with constant components in the moving frame."""

    def __init__(self, T):
        self.T = np.asarray(T, dtype=float)

    def frame_components(self, ens):
        return np.broadcast_to(self.T, (ens.n_paths,) + self.T.shape)


def est_tensor_semigroup(m, x0, T: TensorField, cfg, ensemble=None, keep=False):
    """(P_t T)(e_a, e_b) = E T(//_t e_a, //_t e_b)."""
    ens = ensemble_for(m, x0, cfg, ensemble)
    return summarize(T.frame_components(ens), ens, "tensor-semigroup", keep=keep)


# ----------------------------------------------------------------------------
# scalar functionals of f used by the inequality suites


def functional_samples(ens, f, name):
    """Per-path values of a pointwise functional of f at X_t."""
    if name == "f":
        return terminal_values(ens, f)
    if name == "f2":
        return terminal_values(ens, f) ** 2
    q = terminal_calculus(ens, f)
    if name == "lap":
        return q["lap"]
    if name == "gradsq":
        return np.einsum("ni,ni->n", q["grad"], q["grad"])
    if name == "hess_op":
        return np.abs(np.linalg.eigvalsh(q["hess"])).max(axis=-1)
    if name == "hess_op2":
        return np.abs(np.linalg.eigvalsh(q["hess"])).max(axis=-1) ** 2
    if name == "hess_hs2":
        return np.einsum("nij,nij->n", q["hess"], q["hess"])
    raise ValueError(f"unknown functional {name!r}")


def est_functional(m, x0, f, name, cfg, ensemble=None, keep=False):
    ens = ensemble_for(m, x0, cfg, ensemble)
    return summarize(functional_samples(ens, f, name), ens, f"semigroup-{name}", keep=keep)
