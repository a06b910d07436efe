"""Horizontal Brownian motion on the orthonormal frame bundle with damped and
doubled damped transports.

All transports are stored in frame coordinates: ``W[:, :, a]`` holds the
components of W_t(e_a) in the moving frame, where e_a is the initial frame,
and ``W2[:, a, b, :]`` holds those of W_t^(2)(e_a, e_b).
"""
from __future__ import annotations

import math
import os
import struct
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .geometry.base import ChartPoint, gram_schmidt, orthonormal_frame
from .geometry.ops import r_norm
from .rng import PathStreams

BLOCK = 4096
DUMP_MAGIC = b"GFPD"
DUMP_VERSION = 1
# running totals of simulated work, read by report accounting
COUNTERS = {"ensembles": 0, "paths": 0, "path_steps": 0}


@dataclass(frozen=True)
class SimConfig:
    t_final: float
    n_paths: int = 1000
    n_steps: int | None = None
    seed: int = 0
    track_w2: bool = False
    track_pairs: tuple = ()
    w2_rule: str = "ito"
    antithetic: bool = False
    bismut: tuple = ("linear",)
    record_paths: bool = False
    workers: int | None = None

    def __post_init__(self):
        if not self.t_final > 0:
            raise ValueError("t_final must be positive")
        if self.n_paths < 1 or (self.n_steps is not None and self.n_steps < 1):
            raise ValueError("n_paths and n_steps must be at least 1")
        if self.w2_rule not in ("ito", "stratonovich"):
            raise ValueError(f"unknown W2 rule {self.w2_rule!r}")
        if self.antithetic and self.n_paths % 2:
            raise ValueError("antithetic sampling needs an even path count")
        for h in self.bismut:
            if h not in ("linear", "sine"):
                raise ValueError(f"unknown Bismut weight {h!r}")
        if self.track_pairs:
            object.__setattr__(self, "track_w2", True)


def default_steps(m, t, rnorm=None):
    """max(2000, ceil(400 t ||R||_inf))."""
    if rnorm is None:
        rnorm = r_norm(m)
    return max(2000, int(math.ceil(400 * t * rnorm)))


@dataclass
class PathState:
    x: np.ndarray
    chart: np.ndarray
    frame: np.ndarray
    W: np.ndarray
    W2: np.ndarray | None
    t: float = 0.0
    bismut: dict = field(default_factory=dict)

    @classmethod
    def start(cls, m, x0: ChartPoint, n, frame0=None, track_w2=False, bismut=()):
        d = m.dim
        frame0 = orthonormal_frame(m.metric(x0.coords[None], x0.chart[None]))[0] if frame0 is None else frame0
        return cls(np.tile(x0.coords, (n, 1)), np.tile(x0.chart, (n, 1)),
                   np.tile(frame0, (n, 1, 1)), np.tile(np.eye(d), (n, 1, 1)),
                   np.zeros((n, d, d, d)) if track_w2 else None, 0.0,
                   {h: np.zeros((n, d)) for h in bismut})


def _h_dot(name, s, t):
    if name == "linear":
        return 1.0 / t
    return math.pi / (2 * t) * math.sin(math.pi * s / t)


def _cycle(nab, W):
    # C[a, b, k] = nab[k, Wa, Wb] - nab[Wa, Wb, k] - nab[Wb, Wa, k]
    T = np.einsum("nkij,nia,njb->nabk", nab, W, W, optimize=True)
    return T - np.einsum("nijk,nia,njb->nabk", nab + np.swapaxes(nab, 1, 2), W, W, optimize=True)


def step(m, state: PathState, dB, dt, w2_rule="ito", ric_left=None, horizon=None):
    """One Stratonovich-Heun step of the frame SDE plus the transports.

    Returns (new_state, ric_right) where ric_right is the frame Ricci at the
    new point, reusable as ``ric_left`` for the next step.
    """
    x, c, F = state.x, state.chart, state.frame
    u = np.einsum("nij,nj->ni", F, dB)
    k1 = m.gamma_apply(x, c, u, F)
    xp, Fp = x + u, F - k1
    up = np.einsum("nij,nj->ni", Fp, dB)
    k2 = m.gamma_apply(xp, c, up, Fp)
    xn = x + 0.5 * (u + up)
    Fn = gram_schmidt(F - 0.5 * (k1 + k2), m.metric(xn, c))

    R0 = m.ric_frame(x, c, F) if ric_left is None else ric_left
    R1 = m.ric_frame(xn, c, Fn)
    Rb = 0.5 * (R0 + R1)
    # exp(-dt/2 Rb) to fourth order, Horner form
    A = -0.5 * dt * Rb
    I = np.eye(m.dim)
    E = I + A @ (I + A @ (I + A @ (I + A / 4) / 3) / 2)
    Wn = E @ state.W

    W2n = None
    if state.W2 is not None:
        S = m.curvature_kick(x, c, F, dB, state.W)
        if w2_rule == "stratonovich":
            S = 0.5 * (S + m.curvature_kick(xn, c, Fn, dB, Wn))
        n, d = dB.shape
        W2n = (state.W2.reshape(n, d * d, d) @ np.swapaxes(E, 1, 2)).reshape(n, d, d, d) + S
        if not m.ricci_parallel_known():
            W2n += 0.5 * dt * _cycle(m.nabla_ric_frame(x, c, F), state.W)

    acc = {}
    if state.bismut:
        WtdB = np.einsum("nji,nj->ni", state.W, dB)
        T = horizon if horizon is not None else state.t + dt
        for h, a in state.bismut.items():
            acc[h] = a + _h_dot(h, state.t, T) * WtdB

    xn, cn, J = m.normalize(xn, c)
    if J is not None:
        Fn = gram_schmidt(np.einsum("nij,njk->nik", J, Fn), m.metric(xn, cn))
    return PathState(xn, cn, Fn, Wn, W2n, state.t + dt, acc), R1


@dataclass
class Ensemble:
    manifold: object
    x0: ChartPoint
    frame0: np.ndarray
    config: SimConfig
    n_steps: int
    x: np.ndarray
    chart: np.ndarray
    frame: np.ndarray
    W: np.ndarray
    W2: np.ndarray | None
    bismut: dict
    paths: np.ndarray | None = None
    cache: dict = field(default_factory=dict, repr=False)

    @property
    def n_paths(self):
        return len(self.x)

    @property
    def dt(self):
        return self.config.t_final / self.n_steps


def _run_block(args):
    m, x0, frame0, cfg, n_steps, start, stop = args
    n = stop - start
    dt = cfg.t_final / n_steps
    streams = PathStreams(cfg.seed, start, stop, m.dim, cfg.antithetic)
    s = PathState.start(m, x0, n, frame0, cfg.track_w2, cfg.bismut)
    rec = [s.x.copy()] if cfg.record_paths else None
    ric = None
    for k in range(n_steps):
        dB = streams.increments(k, dt)
        s, ric = step(m, s, dB, dt, cfg.w2_rule, ric, cfg.t_final)
        s.t = (k + 1) * dt
        if rec is not None:
            rec.append(s.x.copy())
    out = {"x": s.x, "chart": s.chart, "frame": s.frame, "W": s.W, "W2": s.W2,
           "bismut": s.bismut}
    if rec is not None:
        out["paths"] = np.stack(rec, axis=1)
    return out


def worker_count(requested=None):
    env = os.environ.get("GEOMFLOW_THREADS")
    n = requested or (int(env) if env else os.cpu_count() or 1)
    if env:
        n = min(n, int(env))
    return max(1, n)


def simulate(m, x0: ChartPoint, cfg: SimConfig, frame0=None, rnorm=None) -> Ensemble:
    """Run ``cfg.n_paths`` independent frame-bundle paths from x0.

    Paths are processed in fixed blocks, each a pure function of
    (seed, path range), so the result does not depend on the worker count.
    """
    m.check_domain(x0.coords[None], x0.chart[None])
    if frame0 is None:
        frame0 = orthonormal_frame(m.metric(x0.coords[None], x0.chart[None]))[0]
    n_steps = cfg.n_steps or default_steps(m, cfg.t_final, rnorm)
    jobs = [(m, x0, frame0, cfg, n_steps, lo, min(cfg.n_paths, lo + BLOCK))
            for lo in range(0, cfg.n_paths, BLOCK)]
    workers = min(worker_count(cfg.workers), len(jobs))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_run_block, jobs))
    else:
        parts = [_run_block(j) for j in jobs]
    COUNTERS["ensembles"] += 1
    COUNTERS["paths"] += cfg.n_paths
    COUNTERS["path_steps"] += cfg.n_paths * n_steps
    cat = lambda k: np.concatenate([p[k] for p in parts], axis=0)
    return Ensemble(m, x0, frame0, cfg, n_steps, cat("x"), cat("chart"), cat("frame"), cat("W"),
                    cat("W2") if cfg.track_w2 else None,
                    {h: np.concatenate([p["bismut"][h] for p in parts]) for h in cfg.bismut},
                    cat("paths") if cfg.record_paths else None)


def transport_deviation(ens: Ensemble, K=None, ric_sup=None):
    """Per-path operator norm of W_t - parallel transport (frame coordinates),
    with the bound ||Ric||_inf (1 - e^{-Kt/2}) / K when K and ||Ric||_inf are given."""
    d = ens.manifold.dim
    dev = np.linalg.norm(ens.W - np.eye(d), ord=2, axis=(1, 2))
    out = {"per_path": dev, "max": float(dev.max()), "mean": float(dev.mean())}
    if K is not None and ric_sup is not None:
        t = ens.config.t_final
        out["bound"] = float(ric_sup * (t / 2 if K == 0 else -math.expm1(-K * t / 2) / K))
    return out


def write_path_dump(path, ens: Ensemble):
    """Little-endian float64 trajectories after a {magic, version, d, n_steps} header."""
    if ens.paths is None:
        raise ValueError("ensemble was simulated without record_paths")
    with open(path, "wb") as fh:
        fh.write(DUMP_MAGIC + struct.pack("<III", DUMP_VERSION, ens.manifold.dim, ens.n_steps))
        fh.write(np.ascontiguousarray(ens.paths, dtype="<f8").tobytes())


def read_path_dump(path):
    with open(path, "rb") as fh:
        head = fh.read(16)
        if head[:4] != DUMP_MAGIC:
            raise ValueError("not a path dump")
        version, d, n_steps = struct.unpack("<III", head[4:])
        data = np.frombuffer(fh.read(), dtype="<f8")
    return version, data.reshape(-1, n_steps + 1, d)


