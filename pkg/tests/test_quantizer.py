"""Quantizer checks: the shared-init Lloyd oracle, brute-force encoding,
and the residual-MSE invariants."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dualgr import quantizer as Q


def oracle_lloyd(points, centroids, max_iters):
    """Independent straight-line Lloyd implementation (same init, same
    termination rule, scalar-loop distance math)."""
    k = len(centroids)
    centroids = [np.array(c, dtype=np.float64) for c in centroids]
    prev = None
    converged = False

    def assign():
        labels = []
        for p in points:
            best, best_j = None, 0
            for j in range(k):
                d = float(((p - centroids[j]) ** 2).sum())
                if best is None or d < best:
                    best, best_j = d, j
            labels.append(best_j)
        return np.array(labels)

    def update(labels):
        for j in range(k):
            members = [p for p, l in zip(points, labels) if l == j]
            if members:
                centroids[j] = np.mean(members, axis=0)

    for _ in range(max_iters):
        labels = assign()
        if prev is not None and np.array_equal(labels, prev):
            converged = True
            break
        prev = labels
        update(labels)
    if not converged:
        labels = assign()
    return np.stack(centroids), labels


def test_two_point_clusters_recovered_exactly():
    base = np.array([[-1.0, 0.0], [1.0, 0.0]])
    vectors = np.repeat(base, 8, axis=0)
    cb = Q.fit(vectors, [2], Q.QuantizerConfig(seed=0))
    got = sorted(map(tuple, cb.levels[0]))
    assert got == [(-1.0, 0.0), (1.0, 0.0)]


def test_k1_levels_are_means():
    rng = np.random.default_rng(3)
    vectors = rng.normal(size=(20, 3))
    cb = Q.fit(vectors, [1, 1, 1])
    np.testing.assert_allclose(cb.levels[0][0], vectors.mean(axis=0), rtol=1e-12)
    # level-2 data is residuals, whose mean is exactly zero
    np.testing.assert_allclose(cb.levels[1][0], 0.0, atol=1e-12)
    np.testing.assert_allclose(cb.levels[2][0], 0.0, atol=1e-12)


def test_fit_matches_independent_lloyd_oracle():
    rng = np.random.default_rng(7)
    vectors = rng.normal(size=(100, 4))
    cfg = Q.QuantizerConfig(max_iters=50, seed=0)
    cb = Q.fit(vectors, [4, 4], cfg)

    residual = vectors.astype(np.float64)
    for lvl in range(2):
        init = Q.kmeans_plusplus(residual, 4, np.random.default_rng([cfg.seed, lvl]))
        cents, labels = oracle_lloyd(residual, init, cfg.max_iters)
        np.testing.assert_array_equal(cb.levels[lvl], cents)
        residual = residual - cents[labels]


def test_acceptance_case_100_points_two_levels_k4():
    # same comparison as above but with the exact advertised sizes/seed
    rng = np.random.default_rng(0)
    vectors = rng.normal(size=(100, 6))
    cfg = Q.QuantizerConfig(seed=0)
    cb = Q.fit(vectors, [4, 4], cfg)
    residual = vectors.astype(np.float64)
    for lvl in range(2):
        init = Q.kmeans_plusplus(residual, 4, np.random.default_rng([cfg.seed, lvl]))
        cents, labels = oracle_lloyd(residual, init, cfg.max_iters)
        np.testing.assert_array_equal(cb.levels[lvl], cents)
        residual = residual - cents[labels]


def test_residual_mse_non_increasing():
    rng = np.random.default_rng(11)
    vectors = rng.normal(size=(200, 8))
    cb = Q.fit(vectors, [8, 4, 4], Q.QuantizerConfig(seed=5))
    report = Q.quantization_report(vectors, cb)
    mses = report.per_level_mse
    assert all(b <= a + 1e-12 for a, b in zip(mses, mses[1:]))


def test_encode_exact_reconstruction_point():
    rng = np.random.default_rng(2)
    vectors = rng.normal(size=(60, 5))
    cb = Q.fit(vectors, [4, 3, 3])
    sid = (3, 1, 0)
    point = cb.levels[0][3] + cb.levels[1][1] + cb.levels[2][0]
    # reconstruction points encode to themselves when each residual stage
    # is nearest its own centroid; verify against a brute-force scan
    got = Q.encode(point, cb)
    residual = point.copy()
    expected = []
    for level in cb.levels:
        dists = [((residual - c) ** 2).sum() for c in level]
        j = int(np.argmin(dists))
        expected.append(j)
        residual = residual - level[j]
    assert got == tuple(expected)
    if got == sid:  # holds unless another centroid is closer at some level
        np.testing.assert_allclose(cb.reconstruct(got), point, rtol=1e-12)


def test_encode_single_level_k1():
    rng = np.random.default_rng(9)
    vectors = rng.normal(size=(10, 2))
    cb = Q.fit(vectors, [1])
    assert Q.encode(rng.normal(size=2), cb) == (0,)


def test_encode_matches_brute_force_scan():
    rng = np.random.default_rng(13)
    vectors = rng.normal(size=(100, 4))
    cb = Q.fit(vectors, [8, 4], Q.QuantizerConfig(seed=1))
    sids = Q.encode_batch(vectors, cb)
    for v, sid in zip(vectors, sids):
        residual = v.astype(np.float64)
        for lvl, level in enumerate(cb.levels):
            dists = [((residual - c) ** 2).sum() for c in level]
            j = int(np.argmin(dists))
            assert sid[lvl] == j
            residual = residual - level[j]


def test_centroids_encode_to_their_own_index_level1():
    rng = np.random.default_rng(21)
    vectors = rng.normal(size=(80, 3))
    cb = Q.fit(vectors, [6], Q.QuantizerConfig(seed=3))
    for j, c in enumerate(cb.levels[0]):
        assert Q.encode(c, cb)[0] == j


def test_report_zero_mse_on_centroid_points():
    rng = np.random.default_rng(4)
    vectors = rng.normal(size=(40, 3))
    cb = Q.fit(vectors, [5], Q.QuantizerConfig(seed=2))
    report = Q.quantization_report(cb.levels[0], cb)
    assert report.per_level_mse == [0.0]


def test_report_k1_histogram_single_bucket():
    rng = np.random.default_rng(5)
    vectors = rng.normal(size=(30, 2))
    cb = Q.fit(vectors, [1, 1])
    report = Q.quantization_report(vectors, cb)
    assert report.per_level_token_histogram == [[30], [30]]
    assert report.collision_count == 30  # every item shares the single SID


def test_report_deterministic_replay():
    rng = np.random.default_rng(8)
    vectors = rng.normal(size=(120, 4))
    cb1 = Q.fit(vectors, [6, 4], Q.QuantizerConfig(seed=9))
    cb2 = Q.fit(vectors, [6, 4], Q.QuantizerConfig(seed=9))
    for a, b in zip(cb1.levels, cb2.levels):
        assert a.tobytes() == b.tobytes()
    r1 = Q.quantization_report(vectors, cb1).to_dict()
    r2 = Q.quantization_report(vectors, cb2).to_dict()
    assert r1 == r2


def test_rejects_bad_inputs():
    with pytest.raises(Q.QuantizerError, match="N >= max"):
        Q.fit(np.zeros((3, 2)), [4])
    bad = np.zeros((10, 2))
    bad[0, 0] = np.nan
    with pytest.raises(Q.QuantizerError, match="non-finite"):
        Q.fit(bad, [2])
    cb = Q.fit(np.random.default_rng(0).normal(size=(10, 2)), [2])
    with pytest.raises(Q.QuantizerError, match="vectors"):
        Q.encode(np.zeros(3), cb)


def test_codebook_round_trip(tmp_path):
    rng = np.random.default_rng(6)
    vectors = rng.normal(size=(50, 4))
    cb = Q.fit(vectors, [4, 3])
    path = tmp_path / "codebooks.dgr"
    Q.save_codebooks(path, cb)
    loaded = Q.load_codebooks(path)
    assert loaded.level_sizes == cb.level_sizes
    for a, b in zip(cb.levels, loaded.levels):
        assert a.tobytes() == b.tobytes()


def test_sid_csv_round_trip(tmp_path):
    path = tmp_path / "sids.csv"
    items = [10, 11, 12]
    sids = [(0, 1, 2), (3, 4, 5), (0, 0, 0)]
    Q.write_sid_csv(path, items, sids)
    assert Q.read_sid_csv(path) == list(zip(items, sids))


@settings(max_examples=20, deadline=None)
@given(
    seed=st.integers(0, 10_000),
    n=st.integers(20, 80),
    k1=st.integers(1, 6),
    k2=st.integers(1, 6),
)
def test_property_residual_mse_non_increasing(seed, n, k1, k2):
    rng = np.random.default_rng(seed)
    vectors = rng.normal(size=(n, 3))
    cb = Q.fit(vectors, [max(k1, 1), max(k2, 1)], Q.QuantizerConfig(seed=seed))
    mses = Q.quantization_report(vectors, cb).per_level_mse
    assert mses[1] <= mses[0] + 1e-12
