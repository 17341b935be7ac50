"""P-values for the scan statistic Q and the variance theory of p-hat.

Three estimators of Pr(Q >= b^2) under the null:

* the large-n asymptotic tail formula,
* ``p_hat``: normal approximation of the Z* vector with an estimated
  correlation matrix, integrated numerically,
* ``p_tilde``: the fraction of simulated null scans at least as large.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, special

from . import mvn
from .nullcov import CovarianceModel, sigma_empirical, sigma_first_order
from .scan import ScanResult, ScanWindow, null_scan_z, scan
from .simulate import SeedSpec

_CHUNK = 8192
MIN_HITS = 200


def asymp_pvalue(b_sq, q: int, m0: int, m1: int):
    """min(1, 2^{-q/2} / Gamma(q/2) * ln(m1/m0) * b^q * exp(-b^2/2)).

    Vectorised over ``b_sq``. ``m0 = 0`` is rejected: the log term is
    undefined, and callers that want a clamp must apply it themselves.
    """
    if m0 < 1:
        raise ValueError("the asymptotic formula needs m0 >= 1 (ln(m1/m0) is undefined at m0 = 0)")
    if m1 < m0:
        raise ValueError("need m1 >= m0")
    b_sq = np.asarray(b_sq, dtype=float)
    span = math.log(m1 / m0)
    if span == 0.0:
        out = np.zeros_like(b_sq)
    else:
        with np.errstate(divide="ignore"):
            log_p = (-(q / 2) * math.log(2.0) - special.gammaln(q / 2) + math.log(span)
                     + (q / 2) * np.log(b_sq) - b_sq / 2)
        out = np.minimum(1.0, np.exp(log_p))
    return float(out) if out.ndim == 0 else out


def asymp_critical_value(alpha: float, q: int, m0: int, m1: int) -> float:
    """Threshold on Q at which the asymptotic p-value equals ``alpha``.

    The formula is unimodal in b^2 with its peak at b^2 = q; the test rejects
    for large Q, so the root is taken on the decreasing branch.
    """
    if not (0 < alpha < 1):
        raise ValueError("alpha must lie in (0, 1)")
    if asymp_pvalue(q, q, m0, m1) <= alpha:
        return float(q)
    hi = 2.0 * q + 10.0
    while asymp_pvalue(hi, q, m0, m1) > alpha:
        hi *= 2.0
    return float(optimize.brentq(lambda b: asymp_pvalue(b, q, m0, m1) - alpha, q, hi,
                                 xtol=1e-12, rtol=1e-14))


def null_q(q: int, n: int, w: ScanWindow, B: int, seed: SeedSpec) -> np.ndarray:
    """Maxima of ``B`` simulated null scans."""
    out = np.empty(B)
    for lo in range(0, B, _CHUNK):
        hi = min(B, lo + _CHUNK)
        out[lo:hi] = null_scan_z(q, n, w, seed, lo, hi - lo).max(axis=-1)
    return out


def mc_pvalue(q_obs, q: int, n: int, w: ScanWindow, B: int, seed: SeedSpec):
    """Fraction of ``B`` null scan maxima at least as large as ``q_obs``."""
    if B < 1:
        raise ValueError("B must be positive")
    sims = np.sort(null_q(q, n, w, B, seed))
    q_obs = np.asarray(q_obs, dtype=float)
    count = B - np.searchsorted(sims, q_obs, side="left")
    out = count / B
    return float(out) if out.ndim == 0 else out


@dataclass
class CaEstimate:
    """Leading-order coefficient of var(p_hat) = c_a p^2 / B.

    ``c_a`` uses the full normal-theory covariance of the sample correlations
    (every pair of entries). ``c_a_main`` keeps only the variance terms and the
    adjacent-pair cross terms with coefficient (S_ik + S_ij S_jk);
    ``c_a_no_cross`` keeps the variance terms alone.
    """

    c_a: float
    std_error: float
    h: np.ndarray
    samples_used: int
    hits: int
    c_a_main: float = None
    c_a_no_cross: float = None

    def variance(self, p: float, B: int) -> float:
        return self.c_a * p * p / B


def _sqrt_psd(sigma):
    vals, vecs = np.linalg.eigh(sigma)
    return vecs * np.sqrt(np.clip(vals, 0.0, None))


def correlation_sampling_cov(sigma: np.ndarray) -> np.ndarray:
    """B times the asymptotic covariance of sample correlations of normal data.

    Rows and columns follow ``np.triu_indices(m, 1)``. The diagonal reduces to
    (1 - S_ij^2)^2.
    """
    r = sigma
    i, j = np.triu_indices(r.shape[0], 1)
    I, J = i[:, None], j[:, None]
    K, L = i[None, :], j[None, :]
    rij, rkl = r[I, J], r[K, L]
    rik, ril, rjk, rjl = r[I, K], r[I, L], r[J, K], r[J, L]
    return (0.5 * rij * rkl * (rik**2 + ril**2 + rjk**2 + rjl**2)
            + rik * rjl + ril * rjk
            - rij * rik * ril - rij * rjk * rjl
            - rik * rjk * rkl - ril * rjl * rkl)


def assemble_ca(sigma: np.ndarray, h: np.ndarray) -> dict:
    """Combine the h_ij(a) into the variance coefficients.

    With D = S^{-1} - h (upper triangle):

    * ``full``: D' V D, V from :func:`correlation_sampling_cov`;
    * ``main``: sum_{i<j} D_ij^2 (1 - S_ij^2)^2
      + 2 sum_{i<j<k} D_ij D_jk (S_ik + S_ij S_jk);
    * ``no_cross``: the first sum only.
    """
    d = np.linalg.inv(sigma) - h
    m = sigma.shape[0]
    iu = np.triu_indices(m, 1)
    dv = d[iu]
    pair = float(np.sum(dv**2 * (1.0 - sigma[iu] ** 2) ** 2))
    cross = 0.0
    for j in range(1, m - 1):
        i = np.arange(j)[:, None]
        k = np.arange(j + 1, m)[None, :]
        coef = sigma[i, k] + sigma[i, j] * sigma[j, k]
        cross += float(np.sum(d[i, j] * d[j, k] * coef))
    full = float(dv @ correlation_sampling_cov(sigma) @ dv)
    return {"full": full, "main": pair + 2.0 * cross, "no_cross": pair}


def estimate_ca(cov, a_crit: float, n_samples: int, seed: SeedSpec = SeedSpec(),
                n_groups: int = 20) -> CaEstimate:
    """Monte Carlo estimate of the p-hat variance coefficient c_a.

    h_ij(a) = E[ (S^{-1} y)_i (S^{-1} y)_j | max y > a ] for y ~ N(0, S), which
    is the conditional mean of y' S^{-1} (dS/dS_ij) S^{-1} y / 2 with dS/dS_ij
    the symmetric unit perturbation of the (i, j) pair. ``n_samples``
    unconditioned draws are rejection sampled; the standard error is a grouped
    jackknife.
    """
    sigma = mvn._as_matrix(cov)
    mvn.validate_correlation(sigma)
    m = sigma.shape[0]
    if m == 1:
        return CaEstimate(0.0, 0.0, np.zeros((1, 1)), 0, 0, 0.0, 0.0)
    root = _sqrt_psd(sigma)
    prec = np.linalg.inv(sigma)
    g = seed.generator()
    sums = np.zeros((n_groups, m, m))
    counts = np.zeros(n_groups, dtype=np.int64)
    done = 0
    while done < n_samples:
        size = min(65536, n_samples - done)
        y = g.standard_normal((size, m)) @ root.T
        hit = y.max(axis=1) > a_crit
        x = y[hit] @ prec
        grp = np.arange(done, done + size)[hit] % n_groups
        for gi in range(n_groups):
            xs = x[grp == gi]
            sums[gi] += xs.T @ xs
            counts[gi] += len(xs)
        done += size
    hits = int(counts.sum())
    if hits < MIN_HITS:
        raise ValueError(f"only {hits} draws exceeded a_crit={a_crit:.3f}; "
                         f"increase n_samples (need at least {MIN_HITS} hits)")
    total = sums.sum(axis=0)
    h = total / hits
    h = 0.5 * (h + h.T)
    parts = assemble_ca(sigma, h)
    reps = np.empty(n_groups)
    for gi in range(n_groups):
        hj = (total - sums[gi]) / (hits - counts[gi])
        reps[gi] = assemble_ca(sigma, 0.5 * (hj + hj.T))["full"]
    se = float(np.sqrt((n_groups - 1) / n_groups * np.sum((reps - reps.mean()) ** 2)))
    return CaEstimate(parts["full"], se, h, n_samples, hits, parts["main"], parts["no_cross"])


@dataclass
class Budgets:
    cov_B: int = 10_000
    mc_B: int = 10_000
    tol: float = mvn.DEFAULT_TOL


@dataclass
class PValueReport:
    p_asymp: float
    p_hat: float
    p_hat_se: float
    p_tilde: float
    mc_B: int
    scan: ScanResult
    cov: CovarianceModel
    method_details: dict = field(default_factory=dict)


def build_covariance(cov_mode: str, q: int, n: int, w: ScanWindow, B: int, seed: SeedSpec):
    if cov_mode == "empirical":
        return sigma_empirical(q, n, w, B, seed)
    if cov_mode in ("first_order", "firstorder"):
        return sigma_first_order(n, w, q)
    raise ValueError(f"unknown covariance mode {cov_mode!r}")


def full_report(Y, w: ScanWindow, cov_mode: str = "empirical", budgets: Budgets = Budgets(),
                seed: SeedSpec = SeedSpec(), cov: CovarianceModel = None) -> PValueReport:
    """Scan ``Y`` and compute all available p-values for its maximum.

    A precomputed ``cov`` (for example loaded from a CSV cache) skips the
    covariance step. The asymptotic p-value is ``None`` when ``m0 = 0``.
    """
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    q, n = Y.shape
    res = scan(Y, w)
    if cov is None:
        cov = build_covariance(cov_mode, q, n, w, budgets.cov_B, seed.child(1))
    elif cov.sigma.shape[0] != res.m_star:
        raise ValueError("supplied covariance does not match the scan window")
    p_asymp = asymp_pvalue(res.q_stat, q, w.m0, w.m1) if w.m0 >= 1 else None
    if res.q_stat <= 0:
        p_hat, se = 1.0, 0.0
    elif res.m_star == 1:
        p_hat, se = float(mvn.chisq_sf(res.q_stat, q)), 0.0
    else:
        orth = mvn.mvn_orthant(cov, res.q_star, budgets.tol, seed.child(3))
        p_hat, se = orth.complement, orth.std_error
    p_tilde = mc_pvalue(res.q_stat, q, n, w, budgets.mc_B, seed.child(2))
    details = {
        "cov_mode": cov.provenance,
        "m_star": res.m_star,
        "a_crit": res.q_star,
        "asymptotic": "unavailable (m0 = 0)" if p_asymp is None else "m0 >= 1",
    }
    return PValueReport(p_asymp, p_hat, se, p_tilde, budgets.mc_B, res, cov, details)
