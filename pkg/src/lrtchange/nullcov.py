"""Null correlation of the normal-score scan vector Z*.

Two estimates: the first-order form cor(Z_j1, Z_j2) ~ (n - j2) / (n - j1)
for j1 < j2, and the sample correlation of simulated null Z* vectors.
"""

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .scan import ScanWindow, null_scan_z
from .simulate import SeedSpec
from .specfun import chisq_to_normal

DEFAULT_B = 10_000
EIG_FLOOR = 1e-10
_CHUNK = 8192


@dataclass
class CovarianceModel:
    sigma: np.ndarray
    provenance: str
    window: ScanWindow
    n: int
    q: int = None
    details: dict = field(default_factory=dict)

    @property
    def m_star(self) -> int:
        return self.sigma.shape[0]

    def to_csv(self, path) -> None:
        """Header row of offsets, then the matrix. Metadata goes in a ``#`` line."""
        path = Path(path)
        meta = {"provenance": self.provenance, "n": self.n, "q": self.q,
                "m0": self.window.m0, "m1": self.window.m1, **self.details}
        with path.open("w", newline="") as fh:
            fh.write("# " + ";".join(f"{k}={v}" for k, v in meta.items()) + "\n")
            writer = csv.writer(fh)
            writer.writerow([int(d) for d in self.window.offsets])
            for row in self.sigma:
                writer.writerow([repr(float(v)) for v in row])

    @classmethod
    def from_csv(cls, path) -> "CovarianceModel":
        lines = Path(path).read_text().splitlines()
        meta = {}
        if lines and lines[0].startswith("#"):
            for item in lines[0][1:].strip().split(";"):
                if "=" in item:
                    k, v = item.split("=", 1)
                    meta[k.strip()] = v.strip()
            lines = lines[1:]
        rows = list(csv.reader(lines))
        offsets = [int(v) for v in rows[0]]
        sigma = np.array([[float(v) for v in r] for r in rows[1:]])
        if sigma.shape != (len(offsets), len(offsets)):
            raise ValueError("covariance CSV is not square or does not match its header")
        m1 = int(meta.get("m1", offsets[-1]))
        m0 = int(meta.get("m0", offsets[0]))
        n = int(meta["n"]) if "n" in meta else None
        q = int(meta["q"]) if meta.get("q") not in (None, "None") else None
        window = ScanWindow(m0, m1)
        if list(window.offsets) != offsets:
            raise ValueError("covariance CSV offsets do not match its window")
        details = {k: v for k, v in meta.items() if k not in {"provenance", "n", "q", "m0", "m1"}}
        return cls(sigma, meta.get("provenance", "unknown"), window, n, q, details)


def sigma_first_order(n: int, w: ScanWindow, q: int = None) -> CovarianceModel:
    w.validate(n)
    d = w.offsets.astype(float)
    # j = n - d; (n - j2) / (n - j1) = d_small / d_large
    sigma = np.minimum.outer(d, d) / np.maximum.outer(d, d)
    return CovarianceModel(sigma, "first_order", w, n, q)


def null_scan_star(q, n, w, seed: SeedSpec, count: int, start: int = 0) -> np.ndarray:
    """Null Z* vectors, shape ``(count, m_star)``, generated in fixed chunks."""
    out = np.empty((count, w.m_star))
    for lo in range(0, count, _CHUNK):
        hi = min(count, lo + _CHUNK)
        out[lo:hi] = chisq_to_normal(null_scan_z(q, n, w, seed, start + lo, hi - lo), q)
    return out


def repair_psd(sigma: np.ndarray, floor: float = EIG_FLOOR) -> tuple:
    """Clip eigenvalues at ``floor`` and rescale to unit diagonal.

    Returns ``(matrix, repaired)``; the input is returned untouched when its
    smallest eigenvalue already clears the floor.
    """
    sigma = 0.5 * (sigma + sigma.T)
    vals, vecs = np.linalg.eigh(sigma)
    if vals.min() >= floor:
        return sigma, False
    # Rescaling can push the smallest eigenvalue slightly under the floor
    # again; a few rounds settle it.
    for _ in range(50):
        vals = np.maximum(vals, floor)
        s = (vecs * vals) @ vecs.T
        dinv = 1.0 / np.sqrt(np.diag(s))
        s = s * np.outer(dinv, dinv)
        s = 0.5 * (s + s.T)
        np.fill_diagonal(s, 1.0)
        vals, vecs = np.linalg.eigh(s)
        if vals.min() >= floor * (1 - 1e-6):
            break
    return s, True


def correlation_from_samples(x: np.ndarray) -> np.ndarray:
    c = np.corrcoef(x, rowvar=False)
    c = np.atleast_2d(c)
    c = 0.5 * (c + c.T)
    np.fill_diagonal(c, 1.0)
    return c


def sigma_empirical(q: int, n: int, w: ScanWindow, B: int = DEFAULT_B,
                    seed: SeedSpec = SeedSpec()) -> CovarianceModel:
    """Sample correlation of ``B`` simulated null Z* vectors."""
    w.validate(n)
    if B < w.m_star + 1:
        raise ValueError(f"B={B} too small for a {w.m_star}-dimensional correlation")
    zs = null_scan_star(q, n, w, seed, B)
    sigma, repaired = repair_psd(correlation_from_samples(zs))
    return CovarianceModel(
        sigma, "empirical", w, n, q,
        {"B": B, "master_seed": seed.master_seed, "stream_id": seed.stream_id,
         "psd_repaired": repaired},
    )
