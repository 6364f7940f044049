"""Pure numpy implementations of the hot kernels.

These are the reference versions; ``_kernels.pyx`` mirrors them loop for loop
and the test-suite checks both backends against each other.
"""
import numpy as np


def _lse(a, axis):
    m = np.max(a, axis=axis, keepdims=True)
    return np.squeeze(m, axis=axis) + np.log(np.sum(np.exp(a - m), axis=axis))


def crf_forward_backward(unaries, trans):
    """Log partition and marginals of a batch of linear chains.

    ``unaries`` is (T, B, N), ``trans`` is (N, N) with ``trans[i, j]`` the
    score of moving from label i to label j.  Returns ``(logz, node, pair)``
    with shapes (B,), (T, B, N) and (B, N, N); ``pair`` is summed over time.
    """
    unaries = np.ascontiguousarray(unaries, dtype=np.float64)
    trans = np.ascontiguousarray(trans, dtype=np.float64)
    T, B, N = unaries.shape
    alpha = np.empty((T, B, N))
    beta = np.empty((T, B, N))
    alpha[0] = unaries[0]
    for t in range(1, T):
        alpha[t] = unaries[t] + _lse(alpha[t - 1][:, :, None] + trans[None], axis=1)
    beta[T - 1] = 0.0
    for t in range(T - 2, -1, -1):
        nxt = unaries[t + 1] + beta[t + 1]
        beta[t] = _lse(trans[None] + nxt[:, None, :], axis=2)
    logz = _lse(alpha[T - 1], axis=1)
    node = np.exp(alpha + beta - logz[None, :, None])
    pair = np.zeros((B, N, N))
    for t in range(T - 1):
        nxt = unaries[t + 1] + beta[t + 1]
        pair += np.exp(alpha[t][:, :, None] + trans[None] + nxt[:, None, :] - logz[:, None, None])
    return logz, node, pair


def viterbi(unaries, trans):
    """Maximum-score path, lexicographically smallest among ties.

    Runs the max-sum recursion backwards (best suffix score per state) and
    then walks forward picking the lowest label that attains the optimum.
    """
    unaries = np.ascontiguousarray(unaries, dtype=np.float64)
    trans = np.ascontiguousarray(trans, dtype=np.float64)
    T, N = unaries.shape
    suffix = np.empty((T, N))
    suffix[T - 1] = unaries[T - 1]
    for t in range(T - 2, -1, -1):
        suffix[t] = unaries[t] + np.max(trans + suffix[t + 1][None, :], axis=1)
    path = np.empty(T, dtype=np.int64)
    path[0] = int(np.argmax(suffix[0]))
    score = suffix[0, path[0]]
    for t in range(1, T):
        path[t] = int(np.argmax(trans[path[t - 1]] + suffix[t]))
    return path, float(score)


def nonmax3d(resp, threshold):
    """Strict 3x3x3 local maxima above ``threshold`` as an (n, 3) index array."""
    resp = np.asarray(resp, dtype=np.float64)
    H, W, T = resp.shape
    padded = np.pad(resp, 1, mode="constant", constant_values=-np.inf)
    is_max = resp > threshold
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            for dt in (-1, 0, 1):
                if dy == dx == dt == 0:
                    continue
                nb = padded[1 + dy:1 + dy + H, 1 + dx:1 + dx + W, 1 + dt:1 + dt + T]
                is_max &= resp > nb
    return np.argwhere(is_max).astype(np.int64)


def _median3x3(field, yi, xi):
    H, W = field.shape[:2]
    y0, y1 = max(yi - 1, 0), min(yi + 2, H)
    x0, x1 = max(xi - 1, 0), min(xi + 2, W)
    patch = field[y0:y1, x0:x1].reshape(-1, 2)
    return np.median(patch[:, 0]), np.median(patch[:, 1])


def median_flow_track(flows, x, y, length, max_disp):
    """Follow the 3x3 median-filtered flow from (x, y) for ``length`` frames.

    ``flows`` is (T, H, W, 2) holding (dx, dy).  Stops early when a step
    leaves the frame or exceeds ``max_disp`` pixels.
    """
    flows = np.asarray(flows, dtype=np.float64)
    _, H, W, _ = flows.shape
    pts = [(float(x), float(y))]
    for t in range(length):
        xi = int(np.floor(x + 0.5))
        yi = int(np.floor(y + 0.5))
        dx, dy = _median3x3(flows[t], yi, xi)
        if dx * dx + dy * dy > max_disp * max_disp:
            break
        nx, ny = x + dx, y + dy
        if nx < 0 or ny < 0 or nx > W - 1 or ny > H - 1:
            break
        x, y = nx, ny
        pts.append((float(x), float(y)))
    return np.array(pts, dtype=np.float64)
