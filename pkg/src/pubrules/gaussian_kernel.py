"""Standard normal special functions and the truncated second-moment factor.

``upsilon(t)`` maps a two-sided publication mass ``t = P(|Z| >= z)`` to
``E[Z^2; |Z| >= z] = 2 z phi(z) + t``.  Its complement ``1 - upsilon(t)``
equals the regularized lower incomplete gamma ``P(3/2, z^2 / 2)``, which is
how it is evaluated here: the direct form loses all relative accuracy as
``t -> 1``.

All functions accept scalars or numpy arrays and return the same shape.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import special

from ._errors import DomainError

SQRT2 = math.sqrt(2.0)
INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def _out(x):
    return float(x) if np.ndim(x) == 0 else x


def pdf(x):
    x = np.asarray(x, dtype=float)
    return _out(INV_SQRT_2PI * np.exp(-0.5 * x * x))


def cdf(x):
    x = np.asarray(x, dtype=float)
    return _out(0.5 * special.erfc(-x / SQRT2))


def sf(x):
    """Upper tail ``1 - cdf(x)`` without cancellation."""
    x = np.asarray(x, dtype=float)
    return _out(0.5 * special.erfc(x / SQRT2))


def quantile(p):
    """Inverse of :func:`cdf` on the open interval (0, 1).

    Rational-approximation start followed by one Newton step on the cdf.
    """
    p = np.asarray(p, dtype=float)
    if np.any(~((p > 0.0) & (p < 1.0))):
        raise DomainError("quantile requires 0 < p < 1")
    x = special.ndtri(p)
    # Newton on whichever tail keeps the residual well conditioned.
    resid = np.where(x < 0, 0.5 * special.erfc(-x / SQRT2) - p,
                     (1.0 - p) - 0.5 * special.erfc(x / SQRT2))
    x = x - resid / (INV_SQRT_2PI * np.exp(-0.5 * x * x))
    return _out(x)


def std_normal(kind: str, x):
    """Dispatch to ``pdf``, ``cdf`` or ``quantile`` by name."""
    try:
        fn = {"pdf": pdf, "cdf": cdf, "quantile": quantile}[kind]
    except KeyError:
        raise ValueError(f"unknown kind {kind!r}") from None
    return fn(x)


def two_sided_z(t):
    """``z`` with ``P(|Z| >= z) = t``, i.e. ``Phi^{-1}(1 - t/2)``.

    Accurate at both ends: for t near 1 the argument ``1 - t`` is exact.
    ``t = 0`` maps to ``inf`` and ``t = 1`` to ``0``.
    """
    t = np.asarray(t, dtype=float)
    if np.any(~((t >= 0.0) & (t <= 1.0))):
        raise DomainError("mass must lie in [0, 1]")
    with np.errstate(divide="ignore"):
        small = -special.ndtri(np.minimum(t, 0.5) / 2.0)
    large = SQRT2 * special.erfinv(1.0 - np.maximum(t, 0.5))
    return _out(np.where(t < 0.5, small, large))


def upsilon_deficit(t):
    """``1 - upsilon(t)``, accurate in relative terms near ``t = 1``."""
    z = np.asarray(two_sided_z(t), dtype=float)
    return _out(special.gammainc(1.5, 0.5 * z * z))


def upsilon(t):
    """Second moment of a standard normal over ``|Z| >= z`` with tail mass ``t``.

    Continuous and strictly increasing on [0, 1] with ``upsilon(0) = 0`` and
    ``upsilon(1) = 1``.
    """
    z = np.asarray(two_sided_z(t), dtype=float)
    return _out(special.gammaincc(1.5, 0.5 * z * z))


def upsilon_prime(t):
    t = np.asarray(t, dtype=float)
    if np.any(~((t > 0.0) & (t < 1.0))):
        raise DomainError("upsilon_prime requires 0 < t < 1")
    z = np.asarray(two_sided_z(t), dtype=float)
    return _out(z * z)
