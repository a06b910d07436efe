"""Local test functions with prescribed gradient or Hessian at a point."""
from __future__ import annotations

import numpy as np

from ..geometry.base import ChartPoint, orthonormal_frame
from ..geometry.ops import log_map
from .fields import ScalarField


def _psi(t):
    return np.where(t > 0, np.exp(-1.0 / np.where(t > 0, t, 1.0)), 0.0)


def cutoff(r, inner=0.3, outer=0.6):
    """Smooth bump: 1 for r <= inner, 0 for r >= outer."""
    a, b = _psi(outer - r), _psi(r - inner)
    return a / (a + b)


class Probe(ScalarField):
    """Normal-coordinate probe centred at ``x0``.

    ``kind="gradient"``: f(y) = <v, log_x0 y> chi, so grad f(x0) = v and
    Hess f(x0) = 0. ``kind="rank-one"``: f(y) = 0.5 <v, log_x0 y>^2 chi, so
    grad f(x0) = 0 and Hess f(x0) = v (x) v. Vectors are frame components
    in the default frame at x0.
    """

    def __init__(self, m, x0: ChartPoint, v, kind="gradient", n_steps=32):
        if kind not in ("gradient", "rank-one"):
            raise ValueError(f"unknown probe kind {kind!r}")
        self.x0 = x0
        self.v = np.asarray(v, dtype=float)
        self.kind = kind
        self.n_steps = n_steps
        g0 = m.metric(x0.coords[None], x0.chart[None])
        E0 = orthonormal_frame(g0)
        # coordinate vector -> frame components
        self._to_frame = (g0 @ E0)[0]
        self.tag = f"probe-{kind}"

    def __call__(self, m, x, chart):
        x = np.asarray(x, dtype=float)
        shape = x.shape[:-1]
        flat = x.reshape(-1, x.shape[-1])
        cflat = np.asarray(chart, dtype=float).reshape(flat.shape[0], -1)
        n = flat.shape[0]
        ell = log_map(m, np.tile(self.x0.coords, (n, 1)), np.tile(self.x0.chart, (n, 1)),
                      flat, cflat, n_steps=self.n_steps)
        a = ell @ self._to_frame
        s = a @ self.v
        chi = cutoff(np.linalg.norm(a, axis=-1))
        val = s if self.kind == "gradient" else 0.5 * s**2
        return (val * chi).reshape(shape)


def make_probe(m, x0: ChartPoint, v, kind="gradient"):
    return Probe(m, x0, v, kind)
