"""Normal and chi-square distribution functions.

Thin, vectorised wrappers over :mod:`scipy.special` with the domain checks
the rest of the package relies on. Every function accepts scalars or arrays
and returns the same shape (a Python float for scalar input).
"""

import numpy as np
from scipy import special


def _out(x):
    return float(x) if np.ndim(x) == 0 else x


def norm_cdf(x):
    """Standard normal CDF. Saturates to 0/1 in the extreme tails."""
    return _out(special.ndtr(np.asarray(x, dtype=float)))


def norm_sf(x):
    """Standard normal upper tail, ``1 - norm_cdf(x)`` without cancellation."""
    return _out(special.ndtr(-np.asarray(x, dtype=float)))


def norm_quantile(p):
    """Inverse of :func:`norm_cdf` on the open interval (0, 1).

    Raises
    ------
    ValueError
        If any ``p`` lies outside (0, 1).
    """
    p = np.asarray(p, dtype=float)
    if np.any(~((p > 0.0) & (p < 1.0))):
        raise ValueError("norm_quantile requires 0 < p < 1")
    return _out(special.ndtri(p))


def chisq_cdf(z, q):
    """Chi-square CDF with ``q`` degrees of freedom, P(q/2, z/2); 0 for z <= 0."""
    q = _check_dof(q)
    z = np.asarray(z, dtype=float)
    return _out(special.gammainc(q / 2.0, np.maximum(z, 0.0) / 2.0))


def chisq_sf(z, q):
    """Chi-square upper tail probability, accurate far into the tail."""
    q = _check_dof(q)
    z = np.asarray(z, dtype=float)
    return _out(special.gammaincc(q / 2.0, np.maximum(z, 0.0) / 2.0))


def chisq_to_normal(z, q):
    """Map chi-square(q) values to standard normal scores, Phi^-1(F_q(z)).

    Evaluated through whichever tail is smaller so that large statistics do
    not round to +inf. ``z <= 0`` maps to ``-inf``.
    """
    q = _check_dof(q)
    z = np.asarray(z, dtype=float)
    zc = np.maximum(z, 0.0) / 2.0
    lower = special.gammainc(q / 2.0, zc)
    upper = special.gammaincc(q / 2.0, zc)
    out = np.where(lower < 0.5, special.ndtri(lower), -special.ndtri(upper))
    return _out(out)


def normal_to_chisq(x, q):
    """Inverse of :func:`chisq_to_normal`."""
    q = _check_dof(q)
    x = np.asarray(x, dtype=float)
    with np.errstate(over="ignore"):
        lower = special.ndtr(x)
        upper = special.ndtr(-x)
        out = np.where(
            x < 0,
            2.0 * special.gammaincinv(q / 2.0, lower),
            2.0 * special.gammainccinv(q / 2.0, upper),
        )
    return _out(out)


def _check_dof(q):
    if int(q) != q or q < 1:
        raise ValueError(f"degrees of freedom must be a positive integer, got {q!r}")
    return int(q)
