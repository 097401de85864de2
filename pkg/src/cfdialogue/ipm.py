"""Wasserstein-1 distances between empirical samples of representations.

The 1-D distance integrates the absolute difference of the two empirical
quantile functions.  Both are step functions, so the integral is an exact
finite sum over the merged breakpoints ``{i/m} U {j/n}``: each piece pairs one
sorted point of ``a`` with one sorted point of ``b`` and carries the piece's
length as mass.  That coupling is the monotone optimal transport plan; it
depends only on ``(m, n)``, which is what makes the sliced version cheap to
differentiate.
"""

from __future__ import annotations

import functools
import logging

import numpy as np

from .nn import autodiff as ad
from .nn.autodiff import Var

log = logging.getLogger(__name__)

DEFAULT_N_PROJ = 50


@functools.lru_cache(maxsize=256)
def quantile_coupling(m: int, n: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Index pairs into sorted samples and the mass of each pair.

    Breakpoints are compared with integer arithmetic (``i*n`` against ``j*m``)
    so coincident breakpoints merge exactly.
    """
    if m < 1 or n < 1:
        raise ValueError("both samples must be non-empty")
    ia, ib, w = [], [], []
    i = j = 0
    prev = 0  # position on the common grid of step 1/(m*n)
    while i < m and j < n:
        next_a = (i + 1) * n
        next_b = (j + 1) * m
        nxt = min(next_a, next_b)
        ia.append(i)
        ib.append(j)
        w.append((nxt - prev) / (m * n))
        prev = nxt
        if next_a == nxt:
            i += 1
        if next_b == nxt:
            j += 1
    out = (np.array(ia), np.array(ib), np.array(w))
    for a in out:
        a.setflags(write=False)
    return out


def wasserstein1_1d(a, b) -> float:
    """Exact W1 between two empirical distributions on the line."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.size == 0 or b.size == 0:
        raise ValueError("wasserstein1_1d needs non-empty samples")
    ia, ib, w = quantile_coupling(a.size, b.size)
    sa = np.sort(a, kind="stable")
    sb = np.sort(b, kind="stable")
    return float(np.sum(w * np.abs(sa[ia] - sb[ib])))


def random_directions(dim: int, n_proj: int, rng: np.random.Generator) -> np.ndarray:
    """``(dim, n_proj)`` matrix of unit column vectors, uniform on the sphere."""
    d = rng.standard_normal((dim, n_proj))
    return d / np.linalg.norm(d, axis=0, keepdims=True)


def sliced_w1(a, b, directions) -> Var:
    """Mean over columns of ``directions`` of the 1-D W1 of the projections.

    Differentiable in ``a`` and ``b``: the subgradient uses the sorting found
    in the forward pass (ties broken by index).
    """
    av, bv = ad._val(a), ad._val(b)
    theta = np.asarray(directions, dtype=np.float64)
    if av.ndim != 2 or bv.ndim != 2:
        raise ValueError("samples must be (m, H) matrices")
    if av.shape[1] != bv.shape[1] or theta.shape[0] != av.shape[1]:
        raise ValueError(
            f"dimension mismatch: a has {av.shape[1]}, b has {bv.shape[1]}, directions have {theta.shape[0]}"
        )
    m, n = av.shape[0], bv.shape[0]
    P = theta.shape[1]
    ia, ib, w = quantile_coupling(m, n)
    pa = av @ theta
    pb = bv @ theta
    oa = np.argsort(pa, axis=0, kind="stable")
    ob = np.argsort(pb, axis=0, kind="stable")
    cols = np.arange(P)
    ra = oa[ia]  # original row of a for each (piece, projection)
    rb = ob[ib]
    diff = pa[ra, cols] - pb[rb, cols]
    value = float(np.sum(w[:, None] * np.abs(diff))) / P
    out = Var(value)

    def fn(g):
        coef = (float(g) / P) * w[:, None] * np.sign(diff)
        gpa = np.zeros_like(pa)
        gpb = np.zeros_like(pb)
        np.add.at(gpa, (ra, np.broadcast_to(cols, ra.shape)), coef)
        np.add.at(gpb, (rb, np.broadcast_to(cols, rb.shape)), -coef)
        return gpa @ theta.T, gpb @ theta.T

    return ad._record(out, (a, b), fn)


def sliced_wasserstein(a, b, n_proj: int = DEFAULT_N_PROJ, seed: int = 0) -> float:
    """Sliced W1 with ``n_proj`` seeded random directions."""
    av = np.asarray(a, dtype=np.float64)
    bv = np.asarray(b, dtype=np.float64)
    if av.ndim == 1:
        av = av[:, None]
    if bv.ndim == 1:
        bv = bv[:, None]
    if av.shape[0] == 0 or bv.shape[0] == 0:
        raise ValueError("sliced_wasserstein needs non-empty samples")
    if av.shape[1] != bv.shape[1]:
        raise ValueError(f"dimension mismatch: {av.shape[1]} vs {bv.shape[1]}")
    theta = random_directions(av.shape[1], n_proj, np.random.default_rng(seed))
    return sliced_w1(av, bv, theta).item()


def ipm_term(phi_t0, phi_t1, directions) -> Var:
    """IPM penalty between the two groups' representations.

    Zero (and gradient-free) when either group has fewer than two points.
    """
    m = ad._val(phi_t0).shape[0] if phi_t0 is not None else 0
    n = ad._val(phi_t1).shape[0] if phi_t1 is not None else 0
    if m < 2 or n < 2:
        log.debug("IPM skipped: group sizes %d and %d", m, n)
        return Var(0.0)
    return sliced_w1(phi_t0, phi_t1, directions)

