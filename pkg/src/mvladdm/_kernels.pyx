# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the kernels in ``_fallback``; same signatures."""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, INFINITY, floor

cnp.import_array()


cdef inline double _lse2(double a, double b) nogil:
    if a == -INFINITY:
        return b
    if a > b:
        return a + log(1.0 + exp(b - a))
    return b + log(1.0 + exp(a - b))


def crf_forward_backward(unaries, trans):
    cdef double[:, :, ::1] u = np.ascontiguousarray(unaries, dtype=np.float64)
    cdef double[:, ::1] tr = np.ascontiguousarray(trans, dtype=np.float64)
    cdef Py_ssize_t T = u.shape[0], B = u.shape[1], N = u.shape[2]
    alpha_a = np.empty((T, B, N))
    beta_a = np.empty((T, B, N))
    logz_a = np.empty(B)
    node_a = np.empty((T, B, N))
    pair_a = np.zeros((B, N, N))
    cdef double[:, :, ::1] alpha = alpha_a
    cdef double[:, :, ::1] beta = beta_a
    cdef double[::1] logz = logz_a
    cdef double[:, :, ::1] node = node_a
    cdef double[:, :, ::1] pair = pair_a
    cdef Py_ssize_t t, b, i, j
    cdef double m, s, v, lz
    with nogil:
        for b in range(B):
            for j in range(N):
                alpha[0, b, j] = u[0, b, j]
            for t in range(1, T):
                for j in range(N):
                    m = -INFINITY
                    for i in range(N):
                        v = alpha[t - 1, b, i] + tr[i, j]
                        if v > m:
                            m = v
                    s = 0.0
                    for i in range(N):
                        s += exp(alpha[t - 1, b, i] + tr[i, j] - m)
                    alpha[t, b, j] = u[t, b, j] + m + log(s)
            for i in range(N):
                beta[T - 1, b, i] = 0.0
            for t in range(T - 2, -1, -1):
                for i in range(N):
                    m = -INFINITY
                    for j in range(N):
                        v = tr[i, j] + u[t + 1, b, j] + beta[t + 1, b, j]
                        if v > m:
                            m = v
                    s = 0.0
                    for j in range(N):
                        s += exp(tr[i, j] + u[t + 1, b, j] + beta[t + 1, b, j] - m)
                    beta[t, b, i] = m + log(s)
            m = -INFINITY
            for i in range(N):
                if alpha[T - 1, b, i] > m:
                    m = alpha[T - 1, b, i]
            s = 0.0
            for i in range(N):
                s += exp(alpha[T - 1, b, i] - m)
            lz = m + log(s)
            logz[b] = lz
            for t in range(T):
                for i in range(N):
                    node[t, b, i] = exp(alpha[t, b, i] + beta[t, b, i] - lz)
            for t in range(T - 1):
                for i in range(N):
                    for j in range(N):
                        pair[b, i, j] += exp(alpha[t, b, i] + tr[i, j] + u[t + 1, b, j]
                                             + beta[t + 1, b, j] - lz)
    return logz_a, node_a, pair_a


def viterbi(unaries, trans):
    cdef double[:, ::1] u = np.ascontiguousarray(unaries, dtype=np.float64)
    cdef double[:, ::1] tr = np.ascontiguousarray(trans, dtype=np.float64)
    cdef Py_ssize_t T = u.shape[0], N = u.shape[1]
    suffix_a = np.empty((T, N))
    path_a = np.empty(T, dtype=np.int64)
    cdef double[:, ::1] suffix = suffix_a
    cdef cnp.int64_t[::1] path = path_a
    cdef Py_ssize_t t, i, j, best
    cdef double m, v
    with nogil:
        for i in range(N):
            suffix[T - 1, i] = u[T - 1, i]
        for t in range(T - 2, -1, -1):
            for i in range(N):
                m = -INFINITY
                for j in range(N):
                    v = tr[i, j] + suffix[t + 1, j]
                    if v > m:
                        m = v
                suffix[t, i] = u[t, i] + m
        best = 0
        for i in range(1, N):
            if suffix[0, i] > suffix[0, best]:
                best = i
        path[0] = best
        for t in range(1, T):
            best = 0
            m = tr[path[t - 1], 0] + suffix[t, 0]
            for j in range(1, N):
                v = tr[path[t - 1], j] + suffix[t, j]
                if v > m:
                    m = v
                    best = j
            path[t] = best
    return path_a, float(suffix_a[0, path_a[0]])


def nonmax3d(resp, double threshold):
    cdef double[:, :, ::1] r = np.ascontiguousarray(resp, dtype=np.float64)
    cdef Py_ssize_t H = r.shape[0], W = r.shape[1], T = r.shape[2]
    cdef Py_ssize_t y, x, t, yy, xx, tt, n = 0
    cdef Py_ssize_t y0, y1, x0, x1, t0, t1
    cdef double c
    cdef bint ok
    found = np.empty((H * W * T // 2 + 1, 3), dtype=np.int64)
    cdef long long[:, ::1] f = found
    with nogil:
        for y in range(H):
            y0 = y - 1 if y > 0 else 0
            y1 = y + 2 if y + 2 <= H else H
            for x in range(W):
                x0 = x - 1 if x > 0 else 0
                x1 = x + 2 if x + 2 <= W else W
                for t in range(T):
                    c = r[y, x, t]
                    if not c > threshold:
                        continue
                    t0 = t - 1 if t > 0 else 0
                    t1 = t + 2 if t + 2 <= T else T
                    ok = True
                    yy = y0
                    while ok and yy < y1:
                        xx = x0
                        while ok and xx < x1:
                            tt = t0
                            while tt < t1:
                                if (yy != y or xx != x or tt != t) and not c > r[yy, xx, tt]:
                                    ok = False
                                    break
                                tt += 1
                            xx += 1
                        yy += 1
                    if ok:
                        f[n, 0] = y
                        f[n, 1] = x
                        f[n, 2] = t
                        n += 1
    return found[:n].copy()


cdef double _median(double* buf, int n) nogil:
    cdef int i, j
    cdef double key
    for i in range(1, n):
        key = buf[i]
        j = i - 1
        while j >= 0 and buf[j] > key:
            buf[j + 1] = buf[j]
            j -= 1
        buf[j + 1] = key
    if n % 2 == 1:
        return buf[n // 2]
    return 0.5 * (buf[n // 2 - 1] + buf[n // 2])


def median_flow_track(flows, double x, double y, int length, double max_disp):
    cdef double[:, :, :, ::1] f = np.ascontiguousarray(flows, dtype=np.float64)
    cdef Py_ssize_t H = f.shape[1], W = f.shape[2]
    cdef double bx[9]
    cdef double by[9]
    cdef int n, t, xi, yi, yy, xx
    cdef double dx, dy, nx, ny
    pts = [(x, y)]
    for t in range(length):
        xi = <int>floor(x + 0.5)
        yi = <int>floor(y + 0.5)
        n = 0
        for yy in range(yi - 1, yi + 2):
            if yy < 0 or yy >= H:
                continue
            for xx in range(xi - 1, xi + 2):
                if xx < 0 or xx >= W:
                    continue
                bx[n] = f[t, yy, xx, 0]
                by[n] = f[t, yy, xx, 1]
                n += 1
        dx = _median(bx, n)
        dy = _median(by, n)
        if dx * dx + dy * dy > max_disp * max_disp:
            break
        nx = x + dx
        ny = y + dy
        if nx < 0 or ny < 0 or nx > W - 1 or ny > H - 1:
            break
        x = nx
        y = ny
        pts.append((x, y))
    return np.array(pts, dtype=np.float64)
