import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose, assert_array_equal

from mvladdm import features as F
from mvladdm.errors import (DegenerateInput, InsufficientData, MalformedBinary, OutOfBoundsStart,
                            RankDeficientWarning, ScaleMismatch, ViewLengthMismatch, VolumeTooSmall)

from oracles import bilinear_reference, dense_detector_response, flashing_blob


# ---------------------------------------------------------------- interest points

def test_constant_volume_has_no_points():
    assert F.detect_interest_points(np.full((16, 16, 16), 3.0), 1.5, 0.25, 0.0) == []


def test_flashing_blob_gives_one_point():
    v = flashing_blob((24, 24, 28), (12, 11, 14), 1.5, 0.25)
    pts = F.detect_interest_points(v, 1.5, 0.25, 0.05)
    assert len(pts) == 1
    p = pts[0]
    assert abs(p.x - 12) <= 1 and abs(p.y - 11) <= 1 and abs(p.t - 14) <= 1


def test_points_sorted_and_above_threshold(rng):
    v = rng.normal(size=(20, 20, 20))
    pts = F.detect_interest_points(v, 1.0, 0.3, 0.01)
    assert len(pts) > 1
    r = [p.response for p in pts]
    assert r == sorted(r, reverse=True) and min(r) > 0.01


def test_separable_matches_dense(rng):
    v = rng.normal(size=(16, 16, 16))
    taps = F.interest_point_kernels(1.2, 0.3)
    ref = dense_detector_response(v, *taps)
    assert_allclose(F.interest_point_response(v, 1.2, 0.3), ref, rtol=0, atol=1e-9)


def test_volume_too_small():
    with pytest.raises(VolumeTooSmall):
        F.detect_interest_points(np.zeros((5, 30, 30)), 1.5, 0.25, 0.0)
    with pytest.raises(ValueError):
        F.detect_interest_points(np.zeros((30, 30, 30)), 1.5, 0.6, 0.0)


def test_translation_covariance():
    base = np.zeros((40, 40, 40))
    base[8:32, 8:32, 8:32] = flashing_blob((24, 24, 24), (10, 12, 11), 1.5, 0.25)
    shifted = np.zeros_like(base)
    shifted[11:35, 6:30, 10:34] = base[8:32, 8:32, 8:32]
    a = F.detect_interest_points(base, 1.5, 0.25, 1e-3)
    b = F.detect_interest_points(shifted, 1.5, 0.25, 1e-3)
    assert len(a) == len(b) > 0
    for p, q in zip(a, b):
        assert (q.x - p.x, q.y - p.y, q.t - p.t) == (-2, 3, 2)
        assert_allclose(p.response, q.response, rtol=1e-9)


# ---------------------------------------------------------------- descriptors

def test_cuboid_constant_is_zero():
    d = F.cuboid_gradients(np.full((9, 9, 9), 2.0), F.InterestPoint(4, 4, 4, 1.0), (2, 2, 2))
    assert d.shape == (3 * 125,) and not d.any()


def test_cuboid_ramp():
    a = 0.7
    v = a * np.broadcast_to(np.arange(12.0)[None, :, None], (10, 12, 8)).copy()
    d = F.cuboid_gradients(v, F.InterestPoint(5, 4, 3, 1.0), (2, 1, 1))
    n = d.size // 3
    assert_allclose(d[:n], a)
    assert not d[n:].any()


def test_cuboid_matches_direct_indexing(rng):
    v = rng.normal(size=(7, 8, 6))
    p = F.InterestPoint(x=1, y=5, t=0, response=0.0)
    hx, hy, ht = 2, 1, 2
    H, W, T = v.shape
    c = lambda i, n: min(max(i, 0), n - 1)
    blocks = {"x": [], "y": [], "t": []}
    for y in range(p.y - hy, p.y + hy + 1):
        for x in range(p.x - hx, p.x + hx + 1):
            for t in range(p.t - ht, p.t + ht + 1):
                yy, xx, tt = c(y, H), c(x, W), c(t, T)
                blocks["x"].append((v[yy, c(xx + 1, W), tt] - v[yy, c(xx - 1, W), tt]) / 2)
                blocks["y"].append((v[c(yy + 1, H), xx, tt] - v[c(yy - 1, H), xx, tt]) / 2)
                blocks["t"].append((v[yy, xx, c(tt + 1, T)] - v[yy, xx, c(tt - 1, T)]) / 2)
    ref = np.array(blocks["x"] + blocks["y"] + blocks["t"])
    assert_array_equal(F.cuboid_gradients(v, p, (hx, hy, ht)), ref)


def test_contextual_examples():
    assert_allclose(F.contextual_feature((0, 0), (3, 4)), np.array([3, 4, 3, 4]) / np.sqrt(50))
    assert_allclose(F.contextual_feature((2, 0), (2, 0)), [0, 0, 1, 0])
    with pytest.raises(DegenerateInput):
        F.contextual_feature((0, 0), (0, 0))


@settings(max_examples=100, deadline=None)
@given(c=st.tuples(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3)),
       q=st.tuples(st.floats(0.5, 1e3), st.floats(-1e3, 1e3)))
def test_contextual_unit_norm(c, q):
    assert_allclose(np.linalg.norm(F.contextual_feature(c, q)), 1.0, rtol=1e-12)


# ---------------------------------------------------------------- dense sampling and tracking

def test_dense_sample_constant_frame():
    assert F.dense_sample(np.full((20, 20), 5.0), 5, 0.0) == []


def test_dense_sample_checkerboard_keeps_grid():
    step = 4
    yy, xx = np.mgrid[0:24, 0:24]
    # square corners fall on the sampling grid step // 2 + k * step
    board = (((xx - step // 2) // step + (yy - step // 2) // step) % 2).astype(float)
    lam_ref = np.empty_like(board)
    ix = np.zeros_like(board)
    iy = np.zeros_like(board)
    p = np.pad(board, 1, mode="edge")
    sob = np.array([1.0, 2.0, 1.0])
    for y in range(24):
        for x in range(24):
            w = p[y:y + 3, x:x + 3]
            ix[y, x] = sob @ (w[:, 2] - w[:, 0])
            iy[y, x] = sob @ (w[2, :] - w[0, :])
    for y in range(24):
        for x in range(24):
            ys = [min(max(k, 0), 23) for k in (y - 1, y, y + 1)]
            xs = [min(max(k, 0), 23) for k in (x - 1, x, x + 1)]
            a = np.mean(ix[np.ix_(ys, xs)] ** 2)
            b = np.mean(ix[np.ix_(ys, xs)] * iy[np.ix_(ys, xs)])
            c = np.mean(iy[np.ix_(ys, xs)] ** 2)
            lam_ref[y, x] = np.linalg.eigvalsh(np.array([[a, b], [b, c]]))[0]
    assert_allclose(F.min_eigenvalue_map(board), lam_ref, atol=1e-12)
    grid = [(x, y) for y in range(2, 24, step) for x in range(2, 24, step)]
    assert all(lam_ref[y, x] > 0.01 for x, y in grid)
    assert F.dense_sample(board, step, 0.01) == grid


def test_dense_sample_step_equal_to_frame(rng):
    assert len(F.dense_sample(rng.normal(size=(16, 16)), 16, 0.0)) <= 1


def flow(T, H, W, dx, dy):
    f = np.zeros((T, H, W, 2))
    f[..., 0], f[..., 1] = dx, dy
    return f


def test_track_constant_flow():
    tr = F.track_trajectory((0, 0), flow(3, 10, 10, 2.0, 0.0), 3)
    assert_array_equal(tr.points, [[0, 0], [2, 0], [4, 0], [6, 0]])


def test_track_zero_flow():
    tr = F.track_trajectory((3.5, 2.0), flow(5, 10, 10, 0.0, 0.0), 5)
    assert len(tr) == 6 and np.all(tr.points == [3.5, 2.0])


def test_track_ignores_salt_noise():
    f = flow(4, 12, 12, 1.0, 0.5)
    f[0, 4, 3] = [40.0, -40.0]
    tr = F.track_trajectory((3, 4), f, 4)
    assert_allclose(tr.points, [[3 + k, 4 + 0.5 * k] for k in range(5)])


def test_track_truncation():
    assert len(F.track_trajectory((0, 0), flow(5, 10, 10, 9.0, 0.0), 5)) == 1
    assert len(F.track_trajectory((0, 0), flow(6, 10, 10, 3.0, 0.0), 6)) == 4
    with pytest.raises(OutOfBoundsStart):
        F.track_trajectory((10, 0), flow(2, 10, 10, 0, 0), 2)
    with pytest.raises(OutOfBoundsStart):
        F.track_trajectory((-0.5, 0), flow(2, 10, 10, 0, 0), 2)


@settings(max_examples=40, deadline=None)
@given(dx=st.floats(-2, 2), dy=st.floats(-2, 2), L=st.integers(1, 5),
       x=st.floats(12, 18), y=st.floats(12, 18))
def test_track_reversal(dx, dy, L, x, y):
    fwd = F.track_trajectory((x, y), flow(L, 30, 30, dx, dy), L)
    back = F.track_trajectory(tuple(fwd.points[-1]), flow(L, 30, 30, -dx, -dy), L)
    assert np.hypot(*(back.points[-1] - [x, y])) <= 1.0


def test_pool_constant_and_single_point(rng):
    maps = np.full((4, 6, 7, 3), 2.5)
    tr = F.Trajectory([[1.2, 3.4], [2.0, 3.9], [3.3, 4.1]])
    assert_allclose(F.trajectory_pool(tr, maps), [2.5, 2.5, 2.5])
    maps = rng.normal(size=(2, 6, 7, 3))
    assert_array_equal(F.trajectory_pool(F.Trajectory([[4, 2]], start_frame=1), maps), maps[1, 2, 4])


def test_pool_matches_bilinear_reference(rng):
    maps = rng.normal(size=(6, 9, 11, 4))
    pts = rng.uniform(0, 4.9, size=(5, 2))
    tr = F.Trajectory(pts, start_frame=1)
    ref = np.mean([bilinear_reference(maps[1 + k], 2 * x, 2 * y) for k, (x, y) in enumerate(pts)], axis=0)
    assert_allclose(F.trajectory_pool(tr, maps, 2.0), ref, rtol=0, atol=1e-12)
    with pytest.raises(ScaleMismatch):
        F.trajectory_pool(F.Trajectory([[6, 1]]), maps, 2.0)


# ---------------------------------------------------------------- GMM and Fisher vectors

def test_gmm_single_component_closed_form(rng):
    X = rng.normal(size=(50, 3)) * [1, 2, 3] + 4
    g = F.gmm_fit(X, 1, 20, 0)
    assert_array_equal(g.weights, [1.0])
    assert_array_equal(g.means[0], X.mean(axis=0))
    assert_array_equal(g.stds[0], np.sqrt(X.var(axis=0)))


def test_gmm_two_clusters(rng):
    centers = np.array([[-3.0, 1.0], [4.0, -2.0]])
    X = np.concatenate([rng.normal(size=(300, 2)) * 0.5 + c for c in centers])
    g = F.gmm_fit(X, 2, 100, seed=3)
    order = np.argsort(g.means[:, 0])
    assert_allclose(g.means[order], centers, atol=0.1)
    assert_allclose(g.weights.sum(), 1.0)
    assert np.all(np.diff(g.log_likelihood) >= -1e-9)


def test_gmm_errors_and_floor():
    with pytest.raises(InsufficientData):
        F.gmm_fit(np.zeros((2, 3)), 3)
    g = F.gmm_fit(np.zeros((10, 2)), 2, 10)
    assert np.all(g.stds ** 2 >= F.VAR_FLOOR * (1 - 1e-12))


def test_soft_assign_examples():
    one = F.GmmModel([1.0], [[0.0, 0.0]], [[1.0, 2.0]])
    assert_array_equal(F.soft_assign([5.0, -3.0], one), [1.0])
    two = F.GmmModel([0.5, 0.5], [[0.0], [2.0]], [[1.0], [1.0]])
    assert_allclose(F.soft_assign([1.0], two), [0.5, 0.5], rtol=1e-15)
    assert_allclose(F.soft_assign([0.5], two)[0], 1 / (1 + np.exp(-1)), rtol=1e-14)


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), K=st.integers(1, 5), D=st.integers(1, 4), scale=st.floats(0.1, 50))
def test_soft_assign_sums_to_one(seed, K, D, scale):
    r = np.random.default_rng(seed)
    w = r.uniform(0.1, 1, K)
    g = F.GmmModel(w / w.sum(), r.normal(size=(K, D)), r.uniform(0.2, 2, (K, D)))
    gamma = F.soft_assign(r.normal(size=D) * scale, g)
    assert np.all(gamma >= 0) and abs(gamma.sum() - 1) <= 1e-12


def unit_gmm(mu=0.0):
    return F.GmmModel([1.0], [[mu]], [[1.0]])


def test_fisher_hand_cases():
    g_mu, g_sig = F.fisher_gradients([[0.3]], unit_gmm(0.3))
    assert_allclose([g_mu[0, 0], g_sig[0, 0]], [0.0, -1.0], atol=1e-15)
    g_mu, g_sig = F.fisher_gradients([[1.0]], unit_gmm())
    assert_allclose([g_mu[0, 0], g_sig[0, 0]], [1.0, 0.0], atol=1e-15)
    g_mu, _ = F.fisher_gradients([[-1.5], [1.5], [-0.2], [0.2]], unit_gmm())
    assert_allclose(g_mu, 0.0, atol=1e-15)


def test_fisher_normalisation_and_empty(rng):
    g = F.gmm_fit(rng.normal(size=(100, 3)), 3, 30, 0)
    fv = F.fisher_encode(rng.normal(size=(12, 3)), g)
    assert fv.values.shape == (2 * 3 * 3,)
    a, b = fv.halves
    assert_allclose([np.linalg.norm(a), np.linalg.norm(b)], 1.0)
    empty = F.fisher_encode(np.zeros((0, 3)), g)
    assert empty.values.shape == (18,) and not empty.values.any()
    raw = F.fisher_encode(rng.normal(size=(5, 3)), g, normalize=False)
    g_mu, g_sig = F.fisher_gradients(rng.normal(size=(0, 3)), g)
    assert not g_mu.any() and not g_sig.any() and raw.values.size == 18


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), n=st.integers(1, 30))
def test_fisher_permutation_invariant(seed, n):
    r = np.random.default_rng(seed)
    g = F.GmmModel([0.3, 0.7], r.normal(size=(2, 2)), r.uniform(0.5, 1.5, (2, 2)))
    X = r.normal(size=(n, 2))
    assert_allclose(F.fisher_encode(X, g).values, F.fisher_encode(X[r.permutation(n)], g).values,
                    rtol=1e-10, atol=1e-12)


# ---------------------------------------------------------------- PCA

def test_pca_line(rng):
    t = rng.normal(size=(40, 1))
    X = t @ np.array([[1.0, -2.0, 0.5]]) + [3, 1, 2]
    model, P = F.pca_fit_transform(X, 1)
    recon = P @ model.components.T + model.mean
    assert_allclose(recon, X, atol=1e-10)


def test_pca_full_keep_and_diagonal_covariance(rng):
    X = rng.normal(size=(60, 4)) @ rng.normal(size=(4, 4))
    model, P = F.pca_fit_transform(X, 4)
    Xc = X - X.mean(axis=0)
    assert_allclose(np.sum(P ** 2), np.sum(Xc ** 2), rtol=1e-12)
    assert_allclose(model.components.T @ model.components, np.eye(4), atol=1e-12)
    cov = np.cov(P.T)
    assert_allclose(cov - np.diag(np.diag(cov)), 0.0, atol=1e-8)
    assert np.all(np.diff(np.diag(cov)) <= 0)


def test_pca_rank_deficient_warns(rng):
    X = rng.normal(size=(30, 1)) @ np.array([[1.0, 2.0, 0.0, 1.0]])
    with pytest.warns(RankDeficientWarning):
        model, P = F.pca_fit_transform(X, 3)
    assert_allclose(model.components.T @ model.components, np.eye(3), atol=1e-12)
    with pytest.raises(InsufficientData):
        F.pca_fit_transform(X, 5)


# ---------------------------------------------------------------- window assembly and I/O

def stream(frames, K=2, D=2, seed=0):
    X = np.concatenate([f for f in frames if len(f)])
    return F.FeatureStream(frames, F.gmm_fit(X, K, 20, seed))


def test_assemble_shapes_and_windows(rng):
    T = 6
    frames_a = [rng.normal(size=(3, 2)) for _ in range(T)]
    frames_b = [rng.normal(size=(2, 3)) for _ in range(T)]
    sa, sb = stream(frames_a), stream(frames_b, K=3, D=3)
    seq = F.assemble_window_features([[sa, sb], [sa]], 1)
    assert seq.length == T and seq.feature_dims == (2 * 2 * 2 + 2 * 3 * 3, 8)
    assert_array_equal(seq.views[1][2], F.fisher_encode(frames_a[2], sa.gmm).values)
    seq5 = F.assemble_window_features([[sa]], 5)
    assert_allclose(seq5.views[0][0], F.fisher_encode(np.concatenate(frames_a[0:3]), sa.gmm).values)
    assert_allclose(seq5.views[0][3], F.fisher_encode(np.concatenate(frames_a[1:6]), sa.gmm).values)


def test_assemble_identical_frames(rng):
    f = rng.normal(size=(4, 2))
    s = stream([f] * 5)
    seq = F.assemble_window_features([[s]], 1)
    assert all(np.array_equal(seq.views[0][0], row) for row in seq.views[0])


def test_assemble_length_mismatch(rng):
    a = stream([rng.normal(size=(3, 2)) for _ in range(4)])
    b = stream([rng.normal(size=(3, 2)) for _ in range(5)])
    with pytest.raises(ViewLengthMismatch):
        F.assemble_window_features([[a], [b]], 3)


def test_window_bounds():
    assert F.window_bounds(0, 10, 4) == (0, 3)
    assert F.window_bounds(5, 10, 4) == (4, 8)
    assert F.window_bounds(9, 10, 5) == (7, 10)


def test_binary_round_trip(tmp_path, rng):
    a = rng.normal(size=(3, 4, 2, 5)).astype(np.float32)
    F.write_binary(tmp_path / "a.bin", a)
    assert (tmp_path / "a.bin").read_bytes().startswith(b"3 4 2 5\n")
    assert_array_equal(F.read_binary(tmp_path / "a.bin"), a.astype(np.float64))
    assert F.read_frames(tmp_path / "a.bin").shape == (5, 3, 4, 2)
    with pytest.raises(MalformedBinary):
        F.read_volume(tmp_path / "a.bin")


@pytest.mark.parametrize("blob", [b"3 4 1\n" + bytes(48), b"2 2 1 2\n" + bytes(10), b"x y z w\n", b""])
def test_binary_malformed(tmp_path, blob):
    (tmp_path / "bad.bin").write_bytes(blob)
    with pytest.raises(MalformedBinary):
        F.read_binary(tmp_path / "bad.bin")


def test_encode_recording_blob_and_constant():
    vol = flashing_blob((32, 32, 40), (16, 15, 20), 1.5, 0.25)
    s = F.EncodeSettings(window_len=5)
    seq = F.encode_recording([vol, np.full_like(vol, 1.0)], s)
    assert seq.length == 40
    active = np.flatnonzero(np.abs(seq.views[0]).sum(axis=1) > 0)
    assert active.size > 0 and active.min() >= 20 - 2 - 3 and active.max() <= 20 + 2 + 3
    assert 18 in active or 20 in active
    assert not seq.views[1].any()
    assert seq.views[0].shape[1] == seq.views[1].shape[1] == 2 * s.gmm_k * (s.pca_keep + 4)
