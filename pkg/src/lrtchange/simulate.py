"""Seeded data generation for the mean change-point model.

Y[i, j] = mu[i] + delta[i] * (j > k) + eps[i, j], eps iid N(0, 1), with
columns indexed 1..n.

Random streams are counter-based (Philox keyed through a SeedSequence). A
``SeedSpec`` names one stream. Batch generators assign replicate ``r`` to
block ``r // BLOCK`` of its stream, so a batch can be split across workers in
any way without changing a single draw.
"""

from dataclasses import dataclass, field

import numpy as np

from .specfun import norm_quantile

BLOCK = 256
_U_SCALE = 2.0**-53


@dataclass(frozen=True)
class SeedSpec:
    master_seed: int = 0
    stream_id: int = 0

    def __post_init__(self):
        if not (0 <= self.master_seed < 2**64):
            raise ValueError("master_seed must be a 64-bit unsigned integer")
        if self.stream_id < 0:
            raise ValueError("stream_id must be nonnegative")

    def generator(self, *subkeys: int) -> np.random.Generator:
        ss = np.random.SeedSequence(self.master_seed, spawn_key=(self.stream_id, *subkeys))
        return np.random.Generator(np.random.Philox(ss))

    def child(self, stream_id: int) -> "SeedSpec":
        """A stream independent of this one, derived deterministically."""
        return SeedSpec(self.master_seed, _mix(self.stream_id, stream_id))


def _mix(a: int, b: int) -> int:
    # Cantor pairing keeps derived ids unique and nonnegative.
    return (a + b) * (a + b + 1) // 2 + b


def _open_uniform(g: np.random.Generator, shape) -> np.ndarray:
    # Midpoints of the 2^53 grid: strictly inside (0, 1).
    k = g.integers(0, 2**53, size=shape, dtype=np.int64)
    return (k.astype(np.float64) + 0.5) * _U_SCALE


def standard_normals(g: np.random.Generator, shape) -> np.ndarray:
    """Standard normals by inversion of open-interval uniforms."""
    return norm_quantile(_open_uniform(g, shape))


def replicate_normals(seed: SeedSpec, start: int, count: int, shape) -> np.ndarray:
    """Normals for replicates ``start .. start+count-1``, shape ``(count, *shape)``.

    The draws of replicate ``r`` depend only on ``(seed, r)``.
    """
    shape = tuple(shape)
    size = int(np.prod(shape)) if shape else 1
    out = np.empty((count, size))
    r = start
    stop = start + count
    while r < stop:
        block = r // BLOCK
        lo = r - block * BLOCK
        hi = min(BLOCK, stop - block * BLOCK)
        g = seed.generator(block)
        u = _open_uniform(g, (BLOCK, size))
        out[r - start : r - start + hi - lo] = u[lo:hi]
        r = block * BLOCK + hi
    return norm_quantile(out).reshape((count, *shape))


@dataclass(frozen=True)
class AlternativeSpec:
    k: int
    deltas: tuple
    mus: tuple = field(default=None)

    def __post_init__(self):
        object.__setattr__(self, "deltas", tuple(float(d) for d in self.deltas))
        if self.mus is not None:
            object.__setattr__(self, "mus", tuple(float(m) for m in self.mus))

    def validate(self, q: int, n: int) -> None:
        if not (1 <= self.k <= n - 1):
            raise ValueError(f"change point k={self.k} outside [1, {n - 1}]")
        if len(self.deltas) != q:
            raise ValueError(f"expected {q} deltas, got {len(self.deltas)}")
        if self.mus is not None and len(self.mus) != q:
            raise ValueError(f"expected {q} means, got {len(self.mus)}")

    def shift(self, q: int, n: int) -> np.ndarray:
        """The deterministic part mu + delta * (j > k) as a q x n array."""
        self.validate(q, n)
        after = np.arange(1, n + 1) > self.k
        out = np.outer(np.asarray(self.deltas), after.astype(float))
        if self.mus is not None:
            out += np.asarray(self.mus)[:, None]
        return out


def _check_dims(q: int, n: int) -> None:
    if q < 1:
        raise ValueError("need at least one feature")
    if n < 2:
        raise ValueError("need at least two time points")


def gen_null(q: int, n: int, seed: SeedSpec) -> np.ndarray:
    """A q x n matrix of iid standard normals; a pure function of the seed."""
    _check_dims(q, n)
    return standard_normals(seed.generator(), (q, n))


def gen_alt(q: int, n: int, alt: AlternativeSpec, seed: SeedSpec) -> np.ndarray:
    """``gen_null`` under the same seed plus the mean shift after column k."""
    _check_dims(q, n)
    shift = alt.shift(q, n)
    return gen_null(q, n, seed) + shift


def null_batch(q: int, n: int, seed: SeedSpec, start: int, count: int) -> np.ndarray:
    """Null data for a range of replicates, shape ``(count, q, n)``."""
    _check_dims(q, n)
    return replicate_normals(seed, start, count, (q, n))


def alt_batch(q, n, alt: AlternativeSpec, seed: SeedSpec, start: int, count: int) -> np.ndarray:
    return null_batch(q, n, seed, start, count) + alt.shift(q, n)
