import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lrtchange.simulate import (BLOCK, AlternativeSpec, SeedSpec, alt_batch, gen_alt, gen_null,
                                null_batch, replicate_normals)


def test_determinism(seed):
    a = gen_null(2, 10, seed)
    b = gen_null(2, 10, seed)
    assert a.tobytes() == b.tobytes()


def test_seeds_differ(seed):
    assert not np.array_equal(gen_null(2, 10, seed), gen_null(2, 10, SeedSpec(seed.master_seed, 1)))


def test_law_of_large_numbers(seed):
    n = 100_000
    Y = gen_null(5, n, seed)
    assert np.all(np.abs(Y.mean(axis=1)) < 0.02)
    assert np.all(np.abs(Y.var(axis=1, ddof=1) - 1) < 0.02)


def test_stream_independence():
    a = gen_null(1, 100_000, SeedSpec(7, 0)).ravel()
    b = gen_null(1, 100_000, SeedSpec(7, 1)).ravel()
    assert abs(np.corrcoef(a, b)[0, 1]) < 0.02


def test_child_streams_are_distinct():
    s = SeedSpec(3, 5)
    ids = {s.child(i).stream_id for i in range(50)} | {SeedSpec(3, 6).child(i).stream_id for i in range(50)}
    assert len(ids) == 100


def test_zero_shift_equals_null(seed):
    alt = AlternativeSpec(3, [0.0, 0.0])
    assert np.array_equal(gen_alt(2, 8, alt, seed), gen_null(2, 8, seed))


def test_indicator_placement(seed):
    diff = gen_alt(1, 4, AlternativeSpec(2, [10.0]), seed) - gen_null(1, 4, seed)
    np.testing.assert_array_equal(diff, [[0, 0, 10, 10]])


def test_shift_size_clt(seed):
    n, k = 50_000, 25_000
    Y = gen_alt(3, n, AlternativeSpec(k, [0.5] * 3), seed)
    gap = Y[:, k:].mean(axis=1) - Y[:, :k].mean(axis=1)
    assert np.all(np.abs(gap - 0.5) < 0.03)


def test_means_are_added(seed):
    alt = AlternativeSpec(1, [1.0, 2.0], mus=[5.0, -5.0])
    d = gen_alt(2, 3, alt, seed) - gen_null(2, 3, seed)
    np.testing.assert_allclose(d, [[5, 6, 6], [-5, -3, -3]])


@pytest.mark.parametrize("k", [0, 4, -1])
def test_change_point_domain(k, seed):
    with pytest.raises(ValueError):
        gen_alt(1, 4, AlternativeSpec(k, [1.0]), seed)


def test_delta_length_checked(seed):
    with pytest.raises(ValueError):
        gen_alt(2, 4, AlternativeSpec(2, [1.0]), seed)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 3 * BLOCK), st.integers(1, 2 * BLOCK), st.integers(0, 2 * BLOCK))
def test_batch_split_invariance(start, count, cut):
    # any partition of a replicate range yields the same draws
    seed = SeedSpec(99, 4)
    cut = min(cut, count)
    whole = replicate_normals(seed, start, count, (2, 3))
    left = replicate_normals(seed, start, cut, (2, 3))
    right = replicate_normals(seed, start + cut, count - cut, (2, 3))
    assert np.array_equal(whole, np.concatenate([left, right]))


def test_alt_batch_is_null_batch_plus_shift(seed):
    alt = AlternativeSpec(5, [1.0, -1.0])
    d = alt_batch(2, 8, alt, seed, 10, 4) - null_batch(2, 8, seed, 10, 4)
    np.testing.assert_allclose(d, np.broadcast_to(alt.shift(2, 8), (4, 2, 8)))


def test_normals_strictly_finite(seed):
    z = replicate_normals(seed, 0, 4096, (64,))
    assert np.all(np.isfinite(z))
    assert abs(z.mean()) < 0.01 and abs(z.std() - 1) < 0.01


@pytest.mark.parametrize("bad", [dict(master_seed=-1), dict(stream_id=-2), dict(master_seed=2**64)])
def test_seed_validation(bad):
    with pytest.raises(ValueError):
        SeedSpec(**bad)
