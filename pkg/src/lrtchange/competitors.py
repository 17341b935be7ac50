"""Competing detectors: a per-day Hotelling-type statistic and Crosier's MCUSUM.

Both work on residuals from the no-change fit (rows centred at their mean)
and take their maximum over the same days as the likelihood-ratio scan: the
day ``n - d + 1`` for each window offset ``d``, i.e. the first post-change day
of each candidate split. Per-day vectors use the scan's offset ordering.
"""

from dataclasses import dataclass

import numpy as np

from .scan import ScanWindow
from .simulate import SeedSpec, null_batch

_CHUNK = 2048


@dataclass(frozen=True)
class McusumConfig:
    kappa: float = 2.0
    a_target: float = 0.0
    two_sided: bool = True

    def __post_init__(self):
        if self.kappa <= 0:
            raise ValueError("kappa must be positive")
        if self.a_target < 0:
            raise ValueError("a_target must be nonnegative")


@dataclass
class CompetitorResult:
    statistic: float
    per_day: np.ndarray
    threshold: float = None
    reject: bool = None


def residuals_h0(Y) -> np.ndarray:
    Y = np.asarray(Y, dtype=float)
    return Y - Y.mean(axis=-1, keepdims=True)


def _window_days(n: int, w: ScanWindow) -> np.ndarray:
    """0-based column indices of the window days, by increasing offset."""
    w.validate(n)
    return n - w.offsets


def hotelling_days(Y, w: ScanWindow) -> np.ndarray:
    """sum_i resid[i, j]^2 for each window day; batch shape ``(..., m_star)``."""
    Y = np.asarray(Y, dtype=float)
    r = residuals_h0(Y)[..., _window_days(Y.shape[-1], w)]
    return np.sum(r * r, axis=-2)


def hotelling_scan(Y, w: ScanWindow) -> CompetitorResult:
    per_day = hotelling_days(np.atleast_2d(Y), w)
    return CompetitorResult(float(per_day.max()), per_day)


def mcusum_path(resid, kappa: float, a_target: float = 0.0) -> np.ndarray:
    """Squared state norms sum_i s[i, j]^2 for every day, one-sided.

    ``resid`` has shape ``(..., q, n)``. The shrinkage factor uses the prior
    day's state: C_j = ||s_{j-1} + e_j - a||, and the state resets to zero
    whenever C_j <= kappa.
    """
    resid = np.asarray(resid, dtype=float)
    s = np.zeros(resid.shape[:-1])
    out = np.empty(resid.shape[:-2] + resid.shape[-1:])
    for j in range(resid.shape[-1]):
        v = s + resid[..., j] - a_target
        c = np.sqrt(np.sum(v * v, axis=-1))
        with np.errstate(divide="ignore", invalid="ignore"):
            shrink = np.where(c > kappa, 1.0 - kappa / c, 0.0)
        s = v * shrink[..., None]
        out[..., j] = np.sum(s * s, axis=-1)
    return out


def mcusum_days(Y, w: ScanWindow, cfg: McusumConfig) -> np.ndarray:
    Y = np.asarray(Y, dtype=float)
    days = _window_days(Y.shape[-1], w)
    r = residuals_h0(Y)
    stat = mcusum_path(r, cfg.kappa, cfg.a_target)[..., days]
    if cfg.two_sided:
        stat = np.maximum(stat, mcusum_path(-r, cfg.kappa, cfg.a_target)[..., days])
    return stat


def mcusum_scan(Y, w: ScanWindow, cfg: McusumConfig = McusumConfig()) -> CompetitorResult:
    """Maximum over window days of the MCUSUM squared state norm.

    Two-sided: the recursion is rerun on negated residuals and the larger of
    the two per-day values kept.
    """
    per_day = mcusum_days(np.atleast_2d(Y), w, cfg)
    return CompetitorResult(float(per_day.max()), per_day)


def statistic_batch(method: str, Y, w: ScanWindow, cfg: McusumConfig = None) -> np.ndarray:
    """Scan maxima for a batch ``(..., q, n)``."""
    if method == "hotelling":
        return hotelling_days(Y, w).max(axis=-1)
    if method == "mcusum":
        return mcusum_days(Y, w, cfg or McusumConfig()).max(axis=-1)
    raise ValueError(f"unknown method {method!r}")


def null_statistics(method, q, n, w, cfg, B, seed: SeedSpec) -> np.ndarray:
    out = np.empty(B)
    for lo in range(0, B, _CHUNK):
        hi = min(B, lo + _CHUNK)
        out[lo:hi] = statistic_batch(method, null_batch(q, n, seed, lo, hi - lo), w, cfg)
    return out


def empirical_threshold(stats, alpha: float) -> float:
    """Smallest simulated value with at most ``alpha`` of the sample strictly above it."""
    s = np.sort(np.asarray(stats))
    B = len(s)
    rank = max(int(np.ceil(B * (1.0 - alpha) - 1e-9)), 1)
    return float(s[rank - 1])


def calibrate_threshold(method: str, q: int, n: int, w: ScanWindow, cfg: McusumConfig,
                        alpha: float, B: int, seed: SeedSpec) -> float:
    """Null (1 - alpha) quantile of a competitor statistic; reject when stat > threshold."""
    if not (0 < alpha <= 1):
        raise ValueError("alpha must lie in (0, 1]")
    if B * alpha < 50:
        raise ValueError(f"B={B} too small for alpha={alpha}: need B*alpha >= 50")
    return empirical_threshold(null_statistics(method, q, n, w, cfg, B, seed), alpha)
