"""Vectorized adaptive Gauss-Kronrod quadrature and golden-section search."""

from __future__ import annotations

import math
from typing import Callable, Sequence

import numpy as np

from ._errors import NumericalError

# 15-point Kronrod extension of the 7-point Gauss rule (QUADPACK qk15).
_XGK = np.array([
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
])
_WGK = np.array([
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
])
_WG = np.array([
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
])

NODES = np.concatenate([-_XGK[:-1], _XGK[::-1]])
KRONROD_WEIGHTS = np.concatenate([_WGK[:-1], _WGK[::-1]])
GAUSS_WEIGHTS = np.zeros(15)
# Gauss nodes are the odd-indexed Kronrod nodes.
GAUSS_WEIGHTS[[1, 3, 5]] = _WG[:3]
GAUSS_WEIGHTS[7] = _WG[3]
GAUSS_WEIGHTS[[9, 11, 13]] = _WG[2::-1]


def gk15(f: Callable[[np.ndarray], np.ndarray], a, b):
    """One GK15 pass on each interval ``[a_i, b_i]``; returns (kronrod, |K - G|)."""
    a = np.atleast_1d(np.asarray(a, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    half = 0.5 * (b - a)
    mid = 0.5 * (b + a)
    x = mid[:, None] + half[:, None] * NODES[None, :]
    fx = np.asarray(f(x.ravel()), dtype=float).reshape(x.shape)
    k = half * (fx @ KRONROD_WEIGHTS)
    g = half * (fx @ GAUSS_WEIGHTS)
    return k, np.abs(k - g)


def integrate(
    f: Callable[[np.ndarray], np.ndarray],
    a: float,
    b: float,
    *,
    breakpoints: Sequence[float] = (),
    tol: float = 1e-8,
    max_intervals: int = 20000,
) -> tuple[float, float]:
    """Integrate a vectorized ``f`` over ``[a, b]`` to absolute tolerance ``tol``.

    ``breakpoints`` inside ``(a, b)`` become initial interval edges so kinks
    of the integrand never sit inside a panel.  Intervals whose error estimate
    exceeds their length-proportional share of ``tol`` are bisected until
    the total estimate is below ``tol``.

    Returns ``(value, error_estimate)``.
    """
    if b < a:
        v, e = integrate(f, b, a, breakpoints=breakpoints, tol=tol, max_intervals=max_intervals)
        return -v, e
    if b == a:
        return 0.0, 0.0
    edges = sorted({a, b, *(float(p) for p in breakpoints if a < p < b)})
    lo = np.array(edges[:-1])
    hi = np.array(edges[1:])
    total_len = b - a
    done_val = 0.0
    done_err = 0.0
    n_seen = len(lo)
    while True:
        val, err = gk15(f, lo, hi)
        if not (np.all(np.isfinite(val)) and np.all(np.isfinite(err))):
            raise NumericalError("non-finite integrand value")
        if done_err + err.sum() <= tol:
            return done_val + float(val.sum()), done_err + float(err.sum())
        share = tol * (hi - lo) / total_len
        ok = (err <= share) | ((hi - lo) < 1e-14 * max(1.0, abs(b)))
        done_val += float(val[ok].sum())
        done_err += float(err[ok].sum())
        lo, hi = lo[~ok], hi[~ok]
        if lo.size == 0:
            return done_val, done_err
        m = 0.5 * (lo + hi)
        lo, hi = np.concatenate([lo, m]), np.concatenate([m, hi])
        n_seen += lo.size
        if n_seen > max_intervals:
            raise NumericalError("adaptive quadrature exceeded interval budget")


INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


def golden_section(f: Callable[[float], float], a: float, b: float, tol: float = 1e-10):
    """Minimize a unimodal ``f`` on ``[a, b]``; returns ``(x, f(x))``."""
    c = b - INV_PHI * (b - a)
    d = a + INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - INV_PHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + INV_PHI * (b - a)
            fd = f(d)
    x = 0.5 * (a + b)
    fx = f(x)
    # The bracket ends may beat the midpoint when the minimum sits on a boundary.
    return min([(fx, x), (fc, c), (fd, d)])[::-1]


def scan_then_golden(f: Callable[[float], float], a: float, b: float, n_scan: int = 1001,
                     tol: float = 1e-10):
    """Global grid scan followed by golden-section refinement around the best node."""
    grid = np.linspace(a, b, n_scan)
    vals = np.array([f(float(u)) for u in grid])
    i = int(np.argmin(vals))
    lo = grid[max(i - 1, 0)]
    hi = grid[min(i + 1, n_scan - 1)]
    x, fx = golden_section(f, float(lo), float(hi), tol=tol)
    if vals[i] < fx:
        return float(grid[i]), float(vals[i])
    return x, fx
