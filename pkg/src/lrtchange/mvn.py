"""Orthant probabilities of a centred multivariate normal with a common limit.

Computes f(Sigma) = Pr(max_j Y_j < a) for Y ~ N(0, Sigma), Sigma a correlation
matrix, by Genz's separation of variables: the integral is mapped to the unit
cube through a Cholesky factor of Sigma (with the variables reordered so the
most constraining limits come first) and averaged over randomly shifted
rank-1 lattice points. Shift-to-shift spread gives the standard error.
"""

import logging
from dataclasses import dataclass

import numpy as np
from scipy import optimize, special

from .simulate import SeedSpec
from .specfun import chisq_sf, chisq_to_normal, normal_to_chisq, norm_quantile

log = logging.getLogger(__name__)

MAX_DIM = 64
DEFAULT_TOL = 1e-4
MAX_POINTS = 2**17
N_SHIFTS = 12
MIN_POINTS = 2**8
_TINY = 1e-300
_PIVOT_EPS = 1e-10

_PRIMES = np.array([
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71,
    73, 79, 83, 89, 97, 101, 103, 107, 109, 113, 127, 131, 137, 139, 149, 151,
    157, 163, 167, 173, 179, 181, 191, 193, 197, 199, 211, 223, 227, 229, 233,
    239, 241, 251, 257, 263, 269, 271, 277, 281, 283, 293, 307, 311,
])


@dataclass
class OrthantResult:
    value: float
    std_error: float
    points_used: int
    complement: float = None
    converged: bool = True

    def __post_init__(self):
        if self.complement is None:
            self.complement = 1.0 - self.value


def _as_matrix(cov) -> np.ndarray:
    sigma = getattr(cov, "sigma", cov)
    return np.atleast_2d(np.asarray(sigma, dtype=float))


def validate_correlation(sigma: np.ndarray) -> None:
    if sigma.ndim != 2 or sigma.shape[0] != sigma.shape[1]:
        raise ValueError("covariance must be a square matrix")
    if sigma.shape[0] > MAX_DIM:
        raise ValueError(f"dimension {sigma.shape[0]} exceeds the supported maximum {MAX_DIM}")
    if not np.all(np.isfinite(sigma)):
        raise ValueError("covariance has non-finite entries")
    if not np.allclose(sigma, sigma.T, atol=1e-10):
        raise ValueError("covariance is not symmetric")
    if not np.allclose(np.diag(sigma), 1.0, atol=1e-8):
        raise ValueError("covariance must have unit diagonal")
    if np.linalg.eigvalsh(sigma).min() < -1e-8:
        raise ValueError("covariance is not positive semidefinite")


def collapse_duplicates(sigma: np.ndarray, eps: float = 1e-12) -> np.ndarray:
    """Drop components perfectly correlated with an earlier one.

    With a common upper limit such a component adds no constraint.
    """
    keep = []
    for j in range(sigma.shape[0]):
        if not any(sigma[i, j] >= 1.0 - eps for i in keep):
            keep.append(j)
    return sigma[np.ix_(keep, keep)]


def prioritized_cholesky(sigma: np.ndarray, lower: np.ndarray, upper: np.ndarray):
    """Cholesky factor with Genz-Bretz variable ordering for box limits.

    Returns ``(L, order)`` where ``L @ L.T == sigma[order][:, order]``; the
    variable with the smallest conditional box probability goes first.
    """
    c = sigma.copy()
    lower = np.array(lower, dtype=float)
    upper = np.array(upper, dtype=float)
    m = c.shape[0]
    L = np.zeros((m, m))
    ybar = np.zeros(m)
    order = np.arange(m)
    for i in range(m):
        best, best_p = i, np.inf
        for j in range(i, m):
            s = c[j, j] - L[j, :i] @ L[j, :i]
            mean = L[j, :i] @ ybar[:i]
            if s > _PIVOT_EPS:
                sd = np.sqrt(s)
                p = special.ndtr((upper[j] - mean) / sd) - special.ndtr((lower[j] - mean) / sd)
            else:
                p = 1.0 if lower[j] <= mean <= upper[j] else 0.0
            if p < best_p:
                best, best_p = j, p
        if best != i:
            for arr in (lower, upper, order):
                arr[[i, best]] = arr[[best, i]]
            c[[i, best]] = c[[best, i]]
            c[:, [i, best]] = c[:, [best, i]]
            L[[i, best]] = L[[best, i]]
        s = c[i, i] - L[i, :i] @ L[i, :i]
        if s <= _PIVOT_EPS:
            # deterministic given earlier variables
            L[i, i] = 0.0
            L[i + 1 :, i] = 0.0
            ybar[i] = 0.0
            continue
        L[i, i] = np.sqrt(s)
        L[i + 1 :, i] = (c[i + 1 :, i] - L[i + 1 :, :i] @ L[i, :i]) / L[i, i]
        mean = L[i, :i] @ ybar[:i]
        lo, hi = (lower[i] - mean) / L[i, i], (upper[i] - mean) / L[i, i]
        mass = special.ndtr(hi) - special.ndtr(lo)
        if mass > 1e-300:
            ybar[i] = (_pdf(lo) - _pdf(hi)) / mass
        else:
            ybar[i] = hi if np.isfinite(hi) else lo
    return L, order


def _pdf(x):
    return 0.0 if np.isinf(x) else np.exp(-0.5 * x * x) / np.sqrt(2 * np.pi)


def _box_integrand(x: np.ndarray, L: np.ndarray, a: float, tail: np.ndarray) -> np.ndarray:
    """Separation-of-variables integrand for a box with one-sided limits.

    Variable ``i`` is constrained to ``[a, inf)`` where ``tail[i]`` is true and
    to ``(-inf, a)`` otherwise. ``x`` has shape (N, m-1).
    """
    n_pts, m = x.shape[0], L.shape[0]
    y = np.empty((n_pts, max(m - 1, 0)))
    log_f = np.zeros(n_pts)
    t = np.full(n_pts, a)
    for i in range(m):
        if i > 0:
            t = a - y[:, :i] @ L[i, :i]
        if L[i, i] > 0:
            z = t / L[i, i]
            log_e = special.log_ndtr(-z) if tail[i] else special.log_ndtr(z)
        else:
            z = None
            log_e = np.where((t <= 0) if tail[i] else (t > 0), 0.0, -np.inf)
        log_f = log_f + log_e
        if i == m - 1:
            break
        if z is None:
            y[:, i] = 0.0
            continue
        u = np.clip(x[:, i] * np.exp(log_e), _TINY, 1.0 - 1e-16)
        y[:, i] = -special.ndtri(u) if tail[i] else special.ndtri(u)
    return np.exp(log_f)


class _ExceedanceTerm:
    """Pr(Y_j >= a, Y_i < a for i < j) prepared for lattice evaluation."""

    def __init__(self, sigma: np.ndarray, j: int, a: float):
        sub = sigma[: j + 1, : j + 1]
        lower = np.full(j + 1, -np.inf)
        upper = np.full(j + 1, a)
        lower[j], upper[j] = a, np.inf
        self.L, order = prioritized_cholesky(sub, lower, upper)
        self.tail = order == j
        self.a = a
        self.dim = j

    def __call__(self, x):
        return _box_integrand(x[:, : self.dim], self.L, self.a, self.tail)


def mvn_orthant(cov, a_crit: float, tol: float = DEFAULT_TOL, seed: SeedSpec = SeedSpec(),
                max_points: int = MAX_POINTS, n_shifts: int = N_SHIFTS) -> OrthantResult:
    """Pr(all components < a_crit) for N(0, cov).

    ``cov`` is a :class:`~lrtchange.nullcov.CovarianceModel` or a correlation
    matrix. The complement is integrated as a sum of first-exceedance
    probabilities, which keeps the relative error flat as the tail shrinks.
    The lattice size doubles until the standard error is at most ``tol`` or
    ``max_points`` points per shift are used; in the latter case the result
    has ``converged=False``.
    """
    if not (0 < tol <= 0.01):
        raise ValueError("tol must lie in (0, 0.01]")
    sigma = _as_matrix(cov)
    validate_correlation(sigma)
    a = float(a_crit)
    if a == np.inf:
        return OrthantResult(1.0, 0.0, 0, 0.0)
    if a == -np.inf:
        return OrthantResult(0.0, 0.0, 0, 1.0)
    sigma = collapse_duplicates(sigma)
    m = sigma.shape[0]
    first = float(special.ndtr(-a))
    if m == 1:
        return OrthantResult(float(special.ndtr(a)), 0.0, 0, first)

    terms = [_ExceedanceTerm(sigma, j, a) for j in range(1, m)]
    gen = np.sqrt(_PRIMES[: m - 1].astype(float)) % 1.0
    shifts = seed.generator().random((n_shifts, m - 1))
    sums = np.zeros(n_shifts)
    used = 0
    batch = MIN_POINTS
    while True:
        k = np.arange(used + 1, used + batch + 1, dtype=float)[:, None]
        base = k * gen
        x = np.abs(2.0 * ((base[None, :, :] + shifts[:, None, :]) % 1.0) - 1.0)
        x = x.reshape(n_shifts * batch, m - 1)
        g = np.zeros(n_shifts * batch)
        for term in terms:
            g += term(x) + term(1.0 - x)
        sums += 0.5 * g.reshape(n_shifts, batch).sum(axis=1)
        used += batch
        est = first + sums / used
        se = float(est.std(ddof=1) / np.sqrt(n_shifts))
        if se <= tol or used >= max_points:
            break
        batch = min(used, max_points - used)
    comp = float(np.clip(est.mean(), 0.0, 1.0))
    converged = se <= tol
    if not converged:
        log.warning("orthant integration stopped at %d points with std error %.2e > tol %.2e",
                    used, se, tol)
    return OrthantResult(1.0 - comp, se, used * n_shifts * 2, comp, converged)


def pvalue_from_sigma(cov, b_sq: float, q: int, tol: float = DEFAULT_TOL,
                      seed: SeedSpec = SeedSpec()) -> float:
    """Pr(Q >= b_sq) under the normal approximation of the Z* vector."""
    if b_sq < 0:
        raise ValueError("b_sq must be nonnegative")
    if b_sq == 0:
        return 1.0
    sigma = _as_matrix(cov)
    if sigma.shape[0] == 1:
        return float(chisq_sf(b_sq, q))
    return mvn_orthant(sigma, chisq_to_normal(b_sq, q), tol, seed).complement


def pvalue_from_score(cov, a_crit: float, tol: float = DEFAULT_TOL,
                      seed: SeedSpec = SeedSpec()) -> float:
    """Pr(Q* >= a_crit) under the normal approximation."""
    sigma = _as_matrix(cov)
    if sigma.shape[0] == 1:
        return float(special.ndtr(-a_crit))
    return mvn_orthant(sigma, a_crit, tol, seed).complement


def critical_score(cov, alpha: float, tol: float = DEFAULT_TOL, seed: SeedSpec = SeedSpec()) -> float:
    """The normal-score threshold ``a`` with Pr(Q* >= a) = alpha."""
    if not (0 < alpha < 1):
        raise ValueError("alpha must lie in (0, 1)")
    sigma = _as_matrix(cov)
    validate_correlation(sigma)
    m = collapse_duplicates(sigma).shape[0]
    if m == 1:
        return float(norm_quantile(1.0 - alpha))
    # one coordinate <= Pr(max >= a) <= union bound
    lo = float(norm_quantile(1.0 - alpha))
    hi = float(norm_quantile(1.0 - alpha / m))

    def excess(a):
        return pvalue_from_score(sigma, a, tol, seed) - alpha

    f_lo, f_hi = excess(lo), excess(hi)
    for _ in range(20):
        if f_lo >= 0:
            break
        lo -= 0.25
        f_lo = excess(lo)
    for _ in range(20):
        if f_hi <= 0:
            break
        hi += 0.25
        f_hi = excess(hi)
    if f_lo < 0 or f_hi > 0:
        raise RuntimeError(
            f"could not bracket the critical value: p({lo:.4f})-alpha={f_lo:.3e}, "
            f"p({hi:.4f})-alpha={f_hi:.3e}")
    if f_lo == 0:
        return lo
    if f_hi == 0:
        return hi
    return float(optimize.brentq(excess, lo, hi, xtol=1e-10, rtol=1e-12))


def critical_value(cov, alpha: float, q: int, tol: float = DEFAULT_TOL,
                   seed: SeedSpec = SeedSpec()) -> float:
    """The scan threshold ``b_sq`` on the Q scale with p-value ``alpha``."""
    return float(normal_to_chisq(critical_score(cov, alpha, tol, seed), q))
