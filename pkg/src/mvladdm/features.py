"""View-specific window features.

Interest points come from a spatial Laplacian of Gaussian followed by a
temporal Gabor quadrature pair; each point yields a cuboid gradient
descriptor and a contextual location feature.  Dense points are tracked
through externally supplied flow fields and pooled over externally supplied
descriptor maps.  Every feature type is Fisher-encoded against its own
diagonal GMM inside a sliding window centred on each frame.

Volumes are ``(H, W, T)`` arrays; pixel ``x`` is the column, ``y`` the row.
"""
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from . import kernels
from .data import MultiViewSequence
from .errors import (DegenerateInput, InsufficientData, MalformedBinary, OutOfBoundsStart,
                     RankDeficientWarning, ScaleMismatch, ShapeMismatch, ViewLengthMismatch,
                     VolumeTooSmall)

VAR_FLOOR = 1e-6
MAX_DISPLACEMENT = 8.0


# ---------------------------------------------------------------- interest points

@dataclass(frozen=True)
class InterestPoint:
    x: int
    y: int
    t: int
    response: float


def interest_point_kernels(sigma_spatial, omega_temporal):
    """1-D taps ``(g, g2, even, odd)`` of the separable detector.

    ``g`` is a normalised Gaussian and ``g2`` its second derivative made
    exactly zero-sum and scaled by ``sigma**2``; the 2-D LoG is
    ``g2(x) g(y) + g(x) g2(y)``.  The temporal pair is
    ``cos/sin(2 pi omega t) * exp(-t^2 / tau^2)`` with ``tau = 1 / (2 omega)``;
    the even tap has its DC component removed so static structure does not
    respond.
    """
    if not sigma_spatial > 0:
        raise ValueError("sigma_spatial must be > 0")
    if not 0 < omega_temporal < 0.5:
        raise ValueError("omega_temporal must lie in (0, 0.5) cycles/frame")
    r = int(math.ceil(3.0 * sigma_spatial))
    u = np.arange(-r, r + 1, dtype=np.float64)
    g = np.exp(-u * u / (2.0 * sigma_spatial ** 2))
    g /= g.sum()
    g2 = (u * u / sigma_spatial ** 4 - 1.0 / sigma_spatial ** 2) * g
    g2 -= g2.mean()
    g2 *= sigma_spatial ** 2

    tau = 1.0 / (2.0 * omega_temporal)
    rt = int(math.ceil(2.5 * tau))
    s = np.arange(-rt, rt + 1, dtype=np.float64)
    env = np.exp(-s * s / (tau * tau))
    even = np.cos(2.0 * np.pi * omega_temporal * s) * env
    even -= (even.sum() / env.sum()) * env
    odd = np.sin(2.0 * np.pi * omega_temporal * s) * env
    return g, g2, even, odd


def _check_volume(v, g, even):
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 3:
        raise ShapeMismatch(f"volume must be (H, W, T), got shape {v.shape}")
    H, W, T = v.shape
    if min(H, W) < g.size or T < even.size:
        raise VolumeTooSmall(f"volume {v.shape} smaller than filter support "
                             f"({g.size} spatial, {even.size} temporal)")
    return v


def interest_point_response(v, sigma_spatial, omega_temporal):
    """Quadrature energy ``even**2 + odd**2`` of the LoG-filtered volume.

    Borders are handled by edge replication along each axis.
    """
    g, g2, even, odd = interest_point_kernels(sigma_spatial, omega_temporal)
    v = _check_volume(v, g, even)
    c1 = ndimage.correlate1d
    gx = c1(v, g, axis=1, mode="nearest")
    g2x = c1(v, g2, axis=1, mode="nearest")
    lap = c1(g2x, g, axis=0, mode="nearest") + c1(gx, g2, axis=0, mode="nearest")
    e = c1(lap, even, axis=2, mode="nearest")
    o = c1(lap, odd, axis=2, mode="nearest")
    return e * e + o * o


def detect_interest_points(v, sigma_spatial=1.5, omega_temporal=0.25, threshold=1e-4):
    """Strict 3x3x3 maxima of the detector response above ``threshold``,
    strongest first (ties broken by ``(t, y, x)``)."""
    if threshold < 0:
        raise ValueError("threshold must be >= 0")
    resp = interest_point_response(v, sigma_spatial, omega_temporal)
    idx = kernels.nonmax3d(np.ascontiguousarray(resp), float(threshold))
    pts = [InterestPoint(x=int(x), y=int(y), t=int(t), response=float(resp[y, x, t]))
           for y, x, t in idx]
    pts.sort(key=lambda p: (-p.response, p.t, p.y, p.x))
    return pts


def volume_gradients(v):
    """Central differences ``(Gx, Gy, Gt)`` with replicated borders."""
    v = np.asarray(v, dtype=np.float64)
    out = []
    for axis in (1, 0, 2):
        p = np.concatenate([np.take(v, [0], axis=axis), v, np.take(v, [-1], axis=axis)], axis=axis)
        n = v.shape[axis]
        out.append(0.5 * (np.take(p, np.arange(2, n + 2), axis=axis)
                          - np.take(p, np.arange(0, n), axis=axis)))
    return out


def cuboid_gradients(v, p, half_size=(2, 2, 2), grads=None):
    """Flattened ``[Gx, Gy, Gt]`` over the cuboid centred on ``p``.

    Cuboid cells outside the volume repeat the nearest border cell.  Each
    block is laid out ``(y, x, t)``.  Pass precomputed ``grads`` from
    :func:`volume_gradients` when describing many points of one volume.
    """
    v = np.asarray(v, dtype=np.float64)
    H, W, T = v.shape
    hx, hy, ht = half_size
    ys = np.clip(np.arange(p.y - hy, p.y + hy + 1), 0, H - 1)
    xs = np.clip(np.arange(p.x - hx, p.x + hx + 1), 0, W - 1)
    ts = np.clip(np.arange(p.t - ht, p.t + ht + 1), 0, T - 1)
    grads = volume_gradients(v) if grads is None else grads
    return np.concatenate([G[np.ix_(ys, xs, ts)].ravel() for G in grads])


def contextual_feature(center, query):
    """``[Xq - Xc, Yq - Yc, Xq, Yq]`` scaled to unit length."""
    xc, yc = (float(c) for c in center)
    xq, yq = (float(c) for c in query)
    f = np.array([xq - xc, yq - yc, xq, yq])
    n = np.linalg.norm(f)
    if n == 0.0:
        raise DegenerateInput("contextual feature of a point at the origin relative to itself")
    return f / n


# ---------------------------------------------------------------- dense trajectories

def min_eigenvalue_map(frame):
    """Smaller eigenvalue of the 3x3 box-averaged structure tensor built from
    3x3 Sobel gradients."""
    f = np.asarray(frame, dtype=np.float64)
    ix = ndimage.sobel(f, axis=1, mode="nearest")
    iy = ndimage.sobel(f, axis=0, mode="nearest")
    sxx = ndimage.uniform_filter(ix * ix, size=3, mode="nearest")
    syy = ndimage.uniform_filter(iy * iy, size=3, mode="nearest")
    sxy = ndimage.uniform_filter(ix * iy, size=3, mode="nearest")
    half_tr = 0.5 * (sxx + syy)
    disc = np.sqrt(np.maximum(0.25 * (sxx - syy) ** 2 + sxy * sxy, 0.0))
    return half_tr - disc


def dense_sample(frame, step=5, eig_threshold=1e-3):
    """Grid points ``(x, y)`` at ``step // 2 + k * step`` whose smaller
    structure-tensor eigenvalue exceeds ``eig_threshold``, row-major order."""
    if step < 1:
        raise ValueError("step must be >= 1")
    lam = min_eigenvalue_map(frame)
    H, W = lam.shape
    out = []
    for y in range(step // 2, H, step):
        for x in range(step // 2, W, step):
            if lam[y, x] > eig_threshold:
                out.append((x, y))
    return out


@dataclass
class Trajectory:
    points: np.ndarray
    scale: int = 0
    start_frame: int = 0

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64).reshape(-1, 2)

    def __len__(self):
        return self.points.shape[0]


def track_trajectory(start, flows, L=15, start_frame=0, scale=0, max_displacement=MAX_DISPLACEMENT):
    """Follow 3x3 median-filtered flow for up to ``L`` frames.

    ``flows`` is ``(T, H, W, 2)`` holding ``(dx, dy)``; step ``k`` uses frame
    ``start_frame + k``.  The track stops early when it would leave the
    frame or move more than ``max_displacement`` pixels in one step.
    """
    flows = np.asarray(flows, dtype=np.float64)
    if flows.ndim != 4 or flows.shape[3] != 2:
        raise ShapeMismatch(f"flows must be (T, H, W, 2), got {flows.shape}")
    if L < 1:
        raise ValueError("L must be >= 1")
    T, H, W, _ = flows.shape
    x, y = float(start[0]), float(start[1])
    if not (0 <= x <= W - 1 and 0 <= y <= H - 1):
        raise OutOfBoundsStart(f"start ({x}, {y}) outside {W}x{H} frame")
    if not 0 <= start_frame < T:
        raise OutOfBoundsStart(f"start frame {start_frame} outside [0, {T})")
    steps = min(L, T - start_frame)
    seg = np.ascontiguousarray(flows[start_frame:start_frame + steps])
    pts = kernels.median_flow_track(seg, x, y, steps, float(max_displacement))
    return Trajectory(points=pts, scale=scale, start_frame=start_frame)


def bilinear(img, x, y):
    """Bilinear sample of an ``(H, W, C)`` map at real ``(x, y)``."""
    H, W = img.shape[:2]
    x0 = min(int(np.floor(x)), W - 2) if W > 1 else 0
    y0 = min(int(np.floor(y)), H - 2) if H > 1 else 0
    ax, ay = x - x0, y - y0
    x1, y1 = min(x0 + 1, W - 1), min(y0 + 1, H - 1)
    top = (1 - ax) * img[y0, x0] + ax * img[y0, x1]
    bot = (1 - ax) * img[y1, x0] + ax * img[y1, x1]
    return (1 - ay) * top + ay * bot


def trajectory_pool(traj, maps, map_scale=1.0):
    """Mean of bilinearly sampled ``maps`` (``(T, H, W, C)``) along ``traj``.

    Point ``k`` is sampled in map frame ``traj.start_frame + k`` at
    ``map_scale * (x, y)``.
    """
    maps = np.asarray(maps, dtype=np.float64)
    if maps.ndim != 4:
        raise ShapeMismatch(f"maps must be (T, H, W, C), got {maps.shape}")
    T, H, W, C = maps.shape
    acc = np.zeros(C)
    for k, (x, y) in enumerate(traj.points):
        t = traj.start_frame + k
        sx, sy = x * map_scale, y * map_scale
        if t >= T or not (0 <= sx <= W - 1 and 0 <= sy <= H - 1):
            raise ScaleMismatch(f"trajectory point ({sx:.3g}, {sy:.3g}, t={t}) outside "
                                f"map of {W}x{H}x{T} at scale {map_scale}")
        acc += bilinear(maps[t], sx, sy)
    return acc / len(traj)


# ---------------------------------------------------------------- GMM and Fisher vectors

@dataclass
class GmmModel:
    weights: np.ndarray
    means: np.ndarray
    stds: np.ndarray
    log_likelihood: list = field(default_factory=list)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.means = np.atleast_2d(np.asarray(self.means, dtype=np.float64))
        self.stds = np.atleast_2d(np.asarray(self.stds, dtype=np.float64))
        K = self.weights.shape[0]
        if self.means.shape[0] != K or self.stds.shape != self.means.shape:
            raise ShapeMismatch("weights, means and stds disagree on K or D")
        if np.any(self.weights <= 0) or abs(self.weights.sum() - 1.0) > 1e-9:
            raise ValueError("weights must be positive and sum to 1")
        if np.any(self.stds <= 0):
            raise ValueError("stds must be positive")

    @property
    def K(self):
        return self.weights.shape[0]

    @property
    def D(self):
        return self.means.shape[1]


def _log_joint(X, weights, means, var):
    """``log w_k + log N(x_n; mu_k, var_k)`` as an (N, K) array."""
    d = X[:, None, :] - means[None, :, :]
    quad = np.sum(d * d / var[None], axis=2)
    logdet = np.sum(np.log(var), axis=1)
    D = X.shape[1]
    return np.log(weights)[None] - 0.5 * (D * np.log(2 * np.pi) + logdet[None] + quad)


def _lse_rows(a):
    m = a.max(axis=1, keepdims=True)
    return m[:, 0] + np.log(np.exp(a - m).sum(axis=1))


def _kmeanspp(X, K, rng):
    N = X.shape[0]
    centers = [int(rng.integers(N))]
    d2 = np.sum((X - X[centers[0]]) ** 2, axis=1)
    for _ in range(1, K):
        total = d2.sum()
        if total > 0:
            c = int(rng.choice(N, p=d2 / total))
        else:
            c = int(rng.integers(N))
        centers.append(c)
        d2 = np.minimum(d2, np.sum((X - X[c]) ** 2, axis=1))
    return X[centers].copy()


def gmm_fit(X, K, max_iters=100, seed=0, tol=1e-10):
    """Diagonal-covariance EM from k-means++ seeds.

    ``log_likelihood`` on the result holds the total data log-likelihood
    before each M-step and after the last one.  Variances are floored at
    ``VAR_FLOOR``.  Iteration stops after ``max_iters`` M-steps or when the
    relative gain drops below ``tol``.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] < 1:
        raise ShapeMismatch(f"X must be (N, D) with D >= 1, got {X.shape}")
    N, D = X.shape
    if K < 1 or N < K:
        raise InsufficientData(f"need at least K={K} points, got {N}")
    if K == 1:
        mean = X.mean(axis=0)
        var = np.maximum(X.var(axis=0), VAR_FLOOR)
        ll = float(_lse_rows(_log_joint(X, np.ones(1), mean[None], var[None])).sum())
        return GmmModel(np.ones(1), mean[None], np.sqrt(var)[None], [ll])
    rng = np.random.default_rng(seed)
    means = _kmeanspp(X, K, rng)
    var = np.tile(np.maximum(X.var(axis=0), VAR_FLOOR), (K, 1))
    weights = np.full(K, 1.0 / K)
    trace = []
    for it in range(max_iters + 1):
        lj = _log_joint(X, weights, means, var)
        lse = _lse_rows(lj)
        ll = float(lse.sum())
        trace.append(ll)
        if it == max_iters or (it > 0 and ll - trace[-2] <= tol * abs(ll)):
            break
        resp = np.exp(lj - lse[:, None])
        nk = resp.sum(axis=0)
        live = nk > 1e-12
        weights = np.maximum(nk, 1e-300) / N
        weights /= weights.sum()
        new_means = (resp.T @ X) / np.where(live, nk, 1.0)[:, None]
        means = np.where(live[:, None], new_means, means)
        sq = (resp.T @ (X * X)) / np.where(live, nk, 1.0)[:, None] - new_means ** 2
        new_var = np.maximum(sq, VAR_FLOOR)
        var = np.where(live[:, None], new_var, var)
    return GmmModel(weights, means, np.sqrt(var), trace)


def responsibilities(X, gmm):
    """Posterior component weights, one row per point."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != gmm.D:
        raise ShapeMismatch(f"points have dim {X.shape[1]}, model {gmm.D}")
    lj = _log_joint(X, gmm.weights, gmm.means, gmm.stds ** 2)
    r = np.exp(lj - _lse_rows(lj)[:, None])
    return r / r.sum(axis=1, keepdims=True)


def soft_assign(x, gmm):
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    return responsibilities(x[None], gmm)[0]


@dataclass
class FisherVector:
    values: np.ndarray
    power_normalized: bool = True
    l2_normalized: bool = True

    @property
    def halves(self):
        n = self.values.size // 2
        return self.values[:n], self.values[n:]


def fisher_gradients(X, gmm):
    """Raw ``(G_mu, G_sigma)``, each ``(K, D)``; zeros for an empty window."""
    X = np.asarray(X, dtype=np.float64).reshape(-1, gmm.D)
    N = X.shape[0]
    if N == 0:
        return np.zeros((gmm.K, gmm.D)), np.zeros((gmm.K, gmm.D))
    r = responsibilities(X, gmm)
    z = (X[:, None, :] - gmm.means[None]) / gmm.stds[None]
    scale = 1.0 / (N * np.sqrt(gmm.weights))
    g_mu = scale[:, None] * np.einsum("nk,nkd->kd", r, z)
    g_sig = scale[:, None] * np.einsum("nk,nkd->kd", r, z * z - 1.0)
    return g_mu, g_sig


def _l2(v):
    n = np.linalg.norm(v)
    return v / n if n > 0 else v


def fisher_encode(X, gmm, normalize=True):
    """Fisher vector ``[G_mu, G_sigma]`` of the points in one window.

    With ``normalize`` each entry is mapped to ``sign(v) sqrt(|v|)`` and each
    half is then scaled to unit L2 norm (all-zero halves stay zero).
    """
    g_mu, g_sig = fisher_gradients(X, gmm)
    a, b = g_mu.ravel(), g_sig.ravel()
    if normalize:
        a = _l2(np.sign(a) * np.sqrt(np.abs(a)))
        b = _l2(np.sign(b) * np.sqrt(np.abs(b)))
    return FisherVector(np.concatenate([a, b]), normalize, normalize)


# ---------------------------------------------------------------- PCA

@dataclass
class PcaBasis:
    mean: np.ndarray
    components: np.ndarray   # (D, keep), orthonormal columns

    def transform(self, X):
        return (np.asarray(X, dtype=np.float64) - self.mean) @ self.components


def pca_fit_transform(X, keep, seed=0):
    """Principal axes by SVD of the centred data, strongest first.

    Each axis is signed so its largest-magnitude entry is positive.  When
    the data span fewer than ``keep`` directions a ``RankDeficientWarning``
    is issued and the basis is completed with seeded orthonormal directions.
    """
    X = np.asarray(X, dtype=np.float64)
    N, D = X.shape
    if not 1 <= keep <= min(N, D):
        raise InsufficientData(f"keep={keep} must lie in [1, min(N, D)={min(N, D)}]")
    mean = X.mean(axis=0)
    _, s, vt = np.linalg.svd(X - mean, full_matrices=False)
    tol = max(N, D) * np.finfo(float).eps * (s[0] if s.size else 0.0)
    rank = int(np.sum(s > tol))
    basis = vt[:min(rank, keep)].T
    if rank < keep:
        warnings.warn(f"data rank {rank} < keep={keep}; completing the basis arbitrarily",
                      RankDeficientWarning, stacklevel=2)
        rng = np.random.default_rng(seed)
        extra = rng.standard_normal((D, keep - basis.shape[1]))
        extra -= basis @ (basis.T @ extra)
        q, _ = np.linalg.qr(extra)
        q -= basis @ (basis.T @ q)
        q, _ = np.linalg.qr(q)
        basis = np.concatenate([basis, q], axis=1)
    flip = np.sign(basis[np.argmax(np.abs(basis), axis=0), np.arange(keep)])
    basis = basis * np.where(flip == 0, 1.0, flip)
    model = PcaBasis(mean, basis)
    return model, model.transform(X)


# ---------------------------------------------------------------- window assembly

@dataclass
class FeatureStream:
    """One feature type of one view: per-frame point sets plus their GMM.

    ``out_dim`` pads every Fisher vector with zeros up to a fixed length, so
    a stream fitted with fewer Gaussians (or none at all, ``gmm=None``, when
    the recording produced no points) keeps the configured layout.
    """

    frames: list        # length T; each an (n_t, D) array, possibly empty
    gmm: GmmModel = None
    name: str = ""
    out_dim: int = None

    def __post_init__(self):
        natural = 0 if self.gmm is None else 2 * self.gmm.K * self.gmm.D
        if self.out_dim is None:
            self.out_dim = natural
        if self.out_dim < natural:
            raise ShapeMismatch(f"out_dim {self.out_dim} below Fisher vector size {natural}")

    def __len__(self):
        return len(self.frames)

    def encode(self, lo, hi):
        out = np.zeros(self.out_dim)
        if self.gmm is not None:
            pts = [np.asarray(p, dtype=np.float64).reshape(-1, self.gmm.D) for p in self.frames[lo:hi]]
            fv = fisher_encode(np.concatenate(pts, axis=0), self.gmm).values
            out[:fv.size] = fv
        return out


def window_bounds(t, T, window_len):
    """Frames ``[lo, hi)`` of the window centred on ``t``, clipped to ``[0, T)``."""
    lo = t - (window_len - 1) // 2
    hi = lo + window_len
    return max(lo, 0), min(hi, T)


def encode_view(streams, window_len):
    """(T, sum of 2 K D) matrix of concatenated per-type Fisher vectors."""
    T = len(streams[0])
    rows = []
    for t in range(T):
        lo, hi = window_bounds(t, T, window_len)
        rows.append(np.concatenate([s.encode(lo, hi) for s in streams]))
    return np.array(rows).reshape(T, -1)


def assemble_window_features(views, window_len, labels=None, seq_id=""):
    """Encode each view's streams into one sequence.

    ``views`` is a list (per view) of lists of :class:`FeatureStream`.
    Labels default to zeros when the recording is unannotated.
    """
    if window_len < 1:
        raise ValueError("window_len must be >= 1")
    lengths = {len(s) for streams in views for s in streams}
    if len(lengths) != 1:
        raise ViewLengthMismatch(f"feature streams disagree on frame count: {sorted(lengths)}")
    T = lengths.pop()
    labels = np.zeros(T, dtype=np.int64) if labels is None else np.asarray(labels, dtype=np.int64)
    if labels.shape != (T,):
        raise ViewLengthMismatch(f"{labels.size} labels for {T} frames")
    mats = [encode_view(streams, window_len) for streams in views]
    return MultiViewSequence(views=mats, labels=labels, id=seq_id)


# ---------------------------------------------------------------- binary I/O

def read_binary(path):
    """``(H, W, C, T)`` float64 array from the ``H W C T`` header format."""
    try:
        with open(path, "rb") as fh:
            header = fh.readline()
            payload = fh.read()
    except OSError as exc:
        raise MalformedBinary(f"{path}: {exc}") from exc
    try:
        dims = [int(tok) for tok in header.decode("ascii").split()]
    except (UnicodeDecodeError, ValueError):
        raise MalformedBinary(f"{path}: header is not 'H W C T'") from None
    if len(dims) != 4 or min(dims) < 1 or not header.endswith(b"\n"):
        raise MalformedBinary(f"{path}: header is not 'H W C T'")
    n = int(np.prod(dims))
    if len(payload) != 4 * n:
        raise MalformedBinary(f"{path}: expected {4 * n} data bytes, found {len(payload)}")
    return np.frombuffer(payload, dtype="<f4").astype(np.float64).reshape(dims)


def write_binary(path, arr):
    arr = np.asarray(arr)
    if arr.ndim != 4:
        raise ShapeMismatch("binary arrays are (H, W, C, T)")
    with open(path, "wb") as fh:
        fh.write(("%d %d %d %d\n" % arr.shape).encode("ascii"))
        fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def read_volume(path):
    a = read_binary(path)
    if a.shape[2] != 1:
        raise MalformedBinary(f"{path}: volume must have C=1, got C={a.shape[2]}")
    return a[:, :, 0, :]


def read_frames(path, channels=None):
    """Per-frame maps ``(T, H, W, C)`` from an ``(H, W, C, T)`` file."""
    a = read_binary(path)
    if channels is not None and a.shape[2] != channels:
        raise MalformedBinary(f"{path}: expected C={channels}, got C={a.shape[2]}")
    return np.ascontiguousarray(np.transpose(a, (3, 0, 1, 2)))


# ---------------------------------------------------------------- recording encoder

@dataclass
class EncodeSettings:
    window_len: int = 9
    sigma: float = 1.5
    omega: float = 0.25
    threshold: float = 1e-3
    cuboid: tuple = (2, 2, 2)
    pca_keep: int = 8
    gmm_k: int = 4
    gmm_iters: int = 50
    step: int = 5
    eig_threshold: float = 1e-3
    traj_len: int = 15
    map_scale: float = 1.0
    seed: int = 0


def _fit_stream(frames, dim, s, seed, name):
    """GMM over every point of a stream; degrades gracefully on tiny samples."""
    pts = [np.asarray(p, dtype=np.float64).reshape(-1, dim) for p in frames]
    X = np.concatenate(pts, axis=0)
    out_dim = 2 * s.gmm_k * dim
    if X.shape[0] == 0:
        return FeatureStream(pts, None, name, out_dim)
    gmm = gmm_fit(X, min(s.gmm_k, X.shape[0]), s.gmm_iters, seed)
    return FeatureStream(pts, gmm, name, out_dim)


def _by_frame(T, items, dim):
    frames = [[] for _ in range(T)]
    for t, f in items:
        frames[t].append(f)
    return [np.array(f).reshape(-1, dim) for f in frames]


def trajectory_shape(traj):
    """Displacement sequence normalised by its total length (``None`` if static)."""
    d = np.diff(traj.points, axis=0)
    total = np.sum(np.hypot(d[:, 0], d[:, 1]))
    return None if total == 0 else (d / total).ravel()


def view_streams(volume, settings, flows=None, maps=None, seed=0):
    """Feature streams of one view: cuboid gradients (PCA-reduced),
    contextual features and, given flows, trajectory features (pooled maps
    when supplied, trajectory shape otherwise)."""
    s = settings
    v = np.asarray(volume, dtype=np.float64)
    H, W, T = v.shape
    pts = detect_interest_points(v, s.sigma, s.omega, s.threshold)
    grads = volume_gradients(v)
    cells = int(np.prod([2 * h + 1 for h in s.cuboid]))
    desc = np.array([cuboid_gradients(v, p, s.cuboid, grads) for p in pts]).reshape(len(pts), 3 * cells)
    keep = s.pca_keep
    reduced = np.zeros((len(pts), keep))
    if len(pts):
        k = min(keep, len(pts), desc.shape[1])
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RankDeficientWarning)
            _, proj = pca_fit_transform(desc, k, s.seed)
        reduced[:, :k] = proj
    center = ((W - 1) / 2.0, (H - 1) / 2.0)
    streams = [
        _fit_stream(_by_frame(T, [(p.t, r) for p, r in zip(pts, reduced)], keep), keep, s, seed, "cuboid"),
        _fit_stream(_by_frame(T, [(p.t, contextual_feature(center, (p.x, p.y))) for p in pts], 4), 4, s,
                    seed + 1, "context"),
    ]
    if flows is not None:
        items = []
        dim = maps.shape[3] if maps is not None else 2 * s.traj_len
        for t in range(min(T, flows.shape[0])):
            for x, y in dense_sample(v[:, :, t], s.step, s.eig_threshold):
                tr = track_trajectory((x, y), flows, s.traj_len, start_frame=t)
                if maps is not None:
                    items.append((t, trajectory_pool(tr, maps, s.map_scale)))
                elif len(tr) == s.traj_len + 1:
                    f = trajectory_shape(tr)
                    if f is not None:
                        items.append((t, f))
        streams.append(_fit_stream(_by_frame(T, items, dim), dim, s, seed + 2, "trajectory"))
    return streams


def encode_recording(volumes, settings, flows=None, maps=None, labels=None, seq_id=""):
    """Window features of a multi-view recording as one ``MultiViewSequence``."""
    if len({np.shape(v)[2] for v in volumes}) != 1:
        raise ViewLengthMismatch("views have different frame counts")
    views = []
    for i, vol in enumerate(volumes):
        f = None if flows is None else flows[i]
        m = None if maps is None else maps[i]
        views.append(view_streams(vol, settings, f, m, seed=settings.seed + 10 * i))
    return assemble_window_features(views, settings.window_len, labels, seq_id)
