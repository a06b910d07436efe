"""Central finite-difference jets on tensor-product stencils.

All partial derivatives of a function up to a given order are obtained
from a single batched evaluation on the union of the product stencils
needed for each multi-index.
"""
from __future__ import annotations

import itertools
from fractions import Fraction
from functools import lru_cache
from math import factorial

import numpy as np


class FiniteDifferenceError(ValueError):
    pass


@lru_cache(maxsize=None)
def central_weights(deriv: int, accuracy: int) -> tuple[tuple[int, ...], tuple[float, ...]]:
    """Offsets and weights of the central stencil for ``d^deriv/dx^deriv``.

    The stencil has truncation error O(h**accuracy); ``accuracy`` must be even.
    """
    if accuracy % 2:
        raise FiniteDifferenceError("accuracy must be even")
    if deriv == 0:
        return (0,), (1.0,)
    half = (deriv - 1) // 2 + accuracy // 2
    offsets = list(range(-half, half + 1))
    n = len(offsets)
    # Taylor matching: sum_j w_j s_j^m / m! = delta_{m, deriv}, solved exactly
    A = [[Fraction(s**m, factorial(m)) for s in offsets] + [Fraction(int(m == deriv))]
         for m in range(n)]
    for col in range(n):
        piv = next(r for r in range(col, n) if A[r][col] != 0)
        A[col], A[piv] = A[piv], A[col]
        for r in range(n):
            if r != col and A[r][col] != 0:
                fac = A[r][col] / A[col][col]
                A[r] = [a - fac * b for a, b in zip(A[r], A[col])]
    w = [A[r][n] / A[r][r] for r in range(n)]
    pairs = [(s, float(v)) for s, v in zip(offsets, w) if v != 0]
    return tuple(s for s, _ in pairs), tuple(v for _, v in pairs)


def _multi_indices(dim: int, order: int):
    for k in range(order + 1):
        for combo in itertools.combinations_with_replacement(range(dim), k):
            counts = [0] * dim
            for i in combo:
                counts[i] += 1
            yield tuple(counts)


@lru_cache(maxsize=None)
def stencil(dim: int, order: int, accuracy: int):
    """Union stencil for all multi-indices of total degree <= ``order``.

    Returns ``(offsets, alphas, weights)`` with ``offsets`` of shape (P, dim),
    ``alphas`` a tuple of count-tuples, and ``weights`` of shape (len(alphas), P).
    """
    index: dict[tuple[int, ...], int] = {}
    rows = []
    alphas = tuple(_multi_indices(dim, order))
    for alpha in alphas:
        axes = [(ax, central_weights(c, accuracy)) for ax, c in enumerate(alpha) if c]
        row: dict[int, float] = {}
        if not axes:
            key = (0,) * dim
            row[index.setdefault(key, len(index))] = 1.0
        else:
            for picks in itertools.product(*[list(zip(*sw)) for _, sw in axes]):
                off = [0] * dim
                wt = 1.0
                for (ax, _), (s, w) in zip(axes, picks):
                    off[ax] = s
                    wt *= w
                key = tuple(off)
                j = index.setdefault(key, len(index))
                row[j] = row.get(j, 0.0) + wt
        rows.append(row)
    offsets = np.zeros((len(index), dim))
    for key, j in index.items():
        offsets[j] = key
    weights = np.zeros((len(alphas), len(index)))
    for a, row in enumerate(rows):
        for j, w in row.items():
            weights[a, j] = w
    offsets.setflags(write=False)
    weights.setflags(write=False)
    return offsets, alphas, weights


def jets(func, x, h, order: int, accuracy: int = 6, chunk: int = 4096, aux=None):
    """Partial derivatives of ``func`` at the points ``x`` up to ``order``.

    ``func`` maps an array of shape (N, P, dim) to (N, P, *trail). ``h`` is a
    scalar or per-point step of shape (N,). Returns a list whose k-th entry
    has shape (N, dim, ..., dim, *trail) with k copies of ``dim``; the tensors
    are fully symmetric in the derivative slots. When ``aux`` is given (one
    row per point) it is sliced alongside and passed as ``func(pts, aux)``.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    n, dim = x.shape
    h = np.broadcast_to(np.asarray(h, dtype=float), (n,))
    if np.any(h <= 0) or np.any(h < 1e-7 * np.maximum(1.0, np.abs(x).max(axis=1))):
        raise FiniteDifferenceError("finite-difference step underflow relative to chart scale")
    offsets, alphas, weights = stencil(dim, order, accuracy)
    degree = np.array([sum(a) for a in alphas])

    parts = []
    for lo in range(0, n, chunk):
        hi = min(n, lo + chunk)
        pts = x[lo:hi, None, :] + h[lo:hi, None, None] * offsets[None]
        vals = func(pts) if aux is None else func(pts, aux[lo:hi])
        vals = np.asarray(vals, dtype=float)
        trail = vals.shape[2:]
        flat = vals.reshape(hi - lo, offsets.shape[0], -1)
        d = np.einsum("ap,npt->nat", weights, flat)
        d /= h[lo:hi, None, None] ** degree[None, :, None]
        parts.append(d.reshape((hi - lo, len(alphas)) + trail))
    raw = np.concatenate(parts, axis=0)

    pos = {a: i for i, a in enumerate(alphas)}
    out = []
    for k in range(order + 1):
        shape = (n,) + (dim,) * k + raw.shape[2:]
        tensor = np.empty(shape)
        for idx in itertools.product(range(dim), repeat=k):
            counts = [0] * dim
            for i in idx:
                counts[i] += 1
            tensor[(slice(None),) + idx] = raw[:, pos[tuple(counts)]]
        out.append(tensor)
    return out
