"""Likelihood-ratio scan statistics for a recent mean change.

For feature i and split k the standardized post-change excess is

    U[i, k] = (sum_{j>k} Y[i, j] - mean(Y[i]) * (n - k)) / sqrt(k (n - k) / n)

and the pooled statistic is Z[k] = sum_i U[i, k]^2, chi-square(q) under the
null. The scan takes the maximum over splits near the end of the series.

Splits are addressed by their offset d = n - k from the end. Vectors of scan
values are ordered by increasing offset (most recent split first); the
covariance and integration code relies on that ordering.
"""

from dataclasses import dataclass

import numpy as np

from .simulate import SeedSpec, replicate_normals
from .specfun import chisq_to_normal


@dataclass(frozen=True)
class ScanWindow:
    """Candidate change points ``n - m1 <= k <= n - m0``.

    ``k = n`` leaves no post-change data, so the smallest usable offset is
    ``max(m0, 1)``.
    """

    m0: int
    m1: int

    def __post_init__(self):
        if not (0 <= self.m0 < self.m1):
            raise ValueError(f"need 0 <= m0 < m1, got ({self.m0}, {self.m1})")

    def validate(self, n: int) -> None:
        if self.m1 >= n:
            raise ValueError(f"m1={self.m1} must be below n={n}")

    @property
    def offsets(self) -> np.ndarray:
        return np.arange(max(self.m0, 1), self.m1 + 1)

    @property
    def m_star(self) -> int:
        return self.m1 - max(self.m0, 1) + 1

    def splits(self, n: int) -> np.ndarray:
        return n - self.offsets


@dataclass
class ScanResult:
    z: np.ndarray
    z_star: np.ndarray
    q_stat: float
    q_star: float
    khat: int
    m_star: int
    offsets: np.ndarray

    @property
    def days_before_end(self) -> int:
        return int(self.offsets[int(np.argmax(self.z))])


def u_stat(y, k: int) -> float:
    y = np.asarray(y, dtype=float)
    n = y.shape[-1]
    if not (1 <= k <= n - 1):
        raise ValueError(f"split k={k} outside [1, {n - 1}]")
    tail = y[k:].sum()
    return float((tail - y.mean() * (n - k)) / np.sqrt(k * (n - k) / n))


def z_stat(Y, k: int) -> float:
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    return float(sum(u_stat(row, k) ** 2 for row in Y))


def _u_from_sums(total, tail_sums, n, offsets):
    """U for each offset from row totals and trailing sums (last axis = offset)."""
    d = offsets.astype(float)
    return (tail_sums - total[..., None] * (d / n)) / np.sqrt((n - d) * d / n)


def _trailing_sums(tail, offsets):
    # tail[..., -1] is the final day
    csum = np.cumsum(tail[..., ::-1], axis=-1)
    return csum[..., offsets - 1]


def scan_z(Y, w: ScanWindow) -> np.ndarray:
    """Z over the window for one matrix ``(q, n)`` or a batch ``(..., q, n)``.

    Returns an array of shape ``(..., m_star)`` ordered by offset.
    """
    Y = np.asarray(Y, dtype=float)
    n = Y.shape[-1]
    w.validate(n)
    offs = w.offsets
    # Centre rows first: exact location invariance and less cancellation.
    Yc = Y - Y.mean(axis=-1, keepdims=True)
    tails = _trailing_sums(Yc[..., n - w.m1 :], offs)
    u = tails / np.sqrt((n - offs) * offs / n)
    return np.sum(u * u, axis=-2)


def scan(Y, w: ScanWindow) -> ScanResult:
    """Scan a single q x n matrix.

    Ties at the maximum resolve to the most recent split.
    """
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    if Y.ndim != 2:
        raise ValueError("scan expects a single q x n matrix")
    q, n = Y.shape
    z = scan_z(Y, w)
    z_star = chisq_to_normal(z, q)
    i = int(np.argmax(z))
    offs = w.offsets
    return ScanResult(
        z=z,
        z_star=np.asarray(z_star),
        q_stat=float(z[i]),
        q_star=float(np.max(z_star)),
        khat=int(n - offs[i]),
        m_star=len(offs),
        offsets=offs,
    )


def null_scan_z(q: int, n: int, w: ScanWindow, seed: SeedSpec, start: int, count: int) -> np.ndarray:
    """Null Z vectors for replicates ``start .. start+count-1``.

    Only the sum of the first ``n - m1`` days and the last ``m1`` days enter the
    statistics, so each feature draws ``m1 + 1`` normals instead of ``n``: the
    head sum is ``sqrt(n - m1)`` times a standard normal. The result has the
    exact null law of :func:`scan_z` applied to :func:`simulate.null_batch`.
    """
    w.validate(n)
    eps = replicate_normals(seed, start, count, (q, w.m1 + 1))
    head = np.sqrt(n - w.m1) * eps[..., 0]
    tail = eps[..., 1:]
    total = head + tail.sum(axis=-1)
    offs = w.offsets
    u = _u_from_sums(total, _trailing_sums(tail, offs), n, offs)
    return np.sum(u * u, axis=-2)
