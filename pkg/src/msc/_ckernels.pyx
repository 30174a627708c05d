# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops: LASSO (path following and coordinate descent) and OMP.

Mirrors ``msc._pykernels`` exactly; see that module for the contracts.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport fabs, sqrt

cnp.import_array()

cdef double SINGULAR_RTOL = 1e-10


cdef inline double _sign(double v) nogil:
    if v > 0.0:
        return 1.0
    if v < 0.0:
        return -1.0
    return 0.0


cdef double _kkt(const double[:, ::1] G, const double[::1] c, double[::1] y,
                 double lam, Py_ssize_t K) nogil:
    cdef Py_ssize_t i, j
    cdef double q, grad, viol, worst = 0.0
    for i in range(K):
        q = 0.0
        for j in range(K):
            if y[j] != 0.0:
                q += G[i, j] * y[j]
        grad = 2.0 * (q - c[i])
        if y[i] != 0.0:
            viol = fabs(grad + lam * _sign(y[i]))
        else:
            viol = fabs(grad) - lam
        if viol > worst:
            worst = viol
    return worst


cdef bint _face_step(const double[:, ::1] G, const double[::1] c, double lam,
                     double[::1] y, Py_ssize_t K, Py_ssize_t[::1] idx,
                     double[:, ::1] L, double[::1] z, double[::1] a) nogil:
    # face minimizer, or a null-direction step when the face Gram is singular;
    # y untouched on failure
    cdef Py_ssize_t i, j, k, s = 0, fail = -1
    cdef double acc, gmax = 0.0, slope, curv, t, step
    for i in range(K):
        if y[i] != 0.0:
            idx[s] = i
            s += 1
            if G[i, i] > gmax:
                gmax = G[i, i]
    if s == 0:
        return False
    for i in range(s):
        for j in range(i + 1):
            acc = G[idx[i], idx[j]]
            for k in range(j):
                acc -= L[i, k] * L[j, k]
            if i == j:
                if acc <= SINGULAR_RTOL * gmax:
                    fail = i
                    break
                L[i, i] = sqrt(acc)
            else:
                L[i, j] = acc / L[j, j]
        if fail >= 0:
            break

    if fail < 0:
        for i in range(s):
            acc = c[idx[i]] - 0.5 * lam * _sign(y[idx[i]])
            for j in range(i):
                acc -= L[i, j] * z[j]
            z[i] = acc / L[i, i]
        for i in range(s - 1, -1, -1):
            acc = z[i]
            for j in range(i + 1, s):
                acc -= L[j, i] * a[j]
            a[i] = acc / L[i, i]
        k = -1
        t = 1.0
        for i in range(s):
            if _sign(a[i]) != _sign(y[idx[i]]):
                step = y[idx[i]] / (y[idx[i]] - a[i])
                if k < 0 or step < t:
                    t = step
                    k = i
        if k < 0:
            for i in range(s):
                y[idx[i]] = a[i]
            return True
        # convex on the face: walk toward the minimizer up to the first zero
        for i in range(s):
            y[idx[i]] += t * (a[i] - y[idx[i]])
        y[idx[k]] = 0.0
        return True

    # null direction: a = [-L'^{-1} L[fail,:fail], 1, 0...]
    s = fail + 1
    for i in range(fail - 1, -1, -1):
        acc = L[fail, i]
        for j in range(i + 1, fail):
            acc -= L[j, i] * a[j]
        a[i] = acc / L[i, i]
    for i in range(fail):
        a[i] = -a[i]
    a[fail] = 1.0
    curv = 0.0
    slope = 0.0
    for i in range(s):
        acc = 0.0
        for j in range(s):
            acc += G[idx[i], idx[j]] * a[j]
        curv += a[i] * acc
        # gradient of the smooth part along the face
        acc = -c[idx[i]]
        for j in range(K):
            if y[j] != 0.0:
                acc += G[idx[i], j] * y[j]
        slope += a[i] * (2.0 * acc + lam * _sign(y[idx[i]]))
    if slope > 0.0:
        for i in range(s):
            a[i] = -a[i]
        slope = -slope
    k = -1
    t = 0.0
    for i in range(s):
        if y[idx[i]] * a[i] < 0.0:
            step = -y[idx[i]] / a[i]
            if k < 0 or step < t:
                t = step
                k = i
    if k < 0:
        return False
    if t * slope + t * t * curv > 0.0:
        return False
    for i in range(s):
        y[idx[i]] += t * a[i]
    y[idx[k]] = 0.0
    return True


cdef void _refresh_q(const double[:, ::1] G, double[::1] y, double[::1] q,
                     Py_ssize_t K) nogil:
    cdef Py_ssize_t i, j
    for i in range(K):
        q[i] = 0.0
    for j in range(K):
        if y[j] != 0.0:
            for i in range(K):
                q[i] += G[j, i] * y[j]


cdef class _Scratch:
    cdef double[::1] q
    cdef double[::1] z
    cdef double[::1] a
    cdef double[:, ::1] L
    cdef Py_ssize_t[::1] idx
    cdef double[::1] sg
    cdef double[::1] av
    cdef cnp.uint8_t[::1] act

    def __init__(self, Py_ssize_t K):
        self.sg = np.zeros(K)
        self.av = np.zeros(K)
        self.act = np.zeros(K, dtype=np.uint8)
        self.q = np.zeros(K)
        self.z = np.zeros(K)
        self.a = np.zeros(K)
        self.L = np.zeros((K, K))
        self.idx = np.zeros(K, dtype=np.intp)


cdef int _cd(const double[:, ::1] G, const double[::1] c, double lam,
             double[::1] y, _Scratch w, int max_iter, double tol,
             double *max_delta_out, double *kkt_out) noexcept:
    cdef Py_ssize_t K = c.shape[0]
    cdef Py_ssize_t i, j
    cdef double half = 0.5 * lam
    cdef double gii, old, r, new, delta, max_delta = 0.0, kkt
    cdef int sweeps = 0
    cdef bint changed, newton_ok = True
    cdef double[::1] q = w.q

    _refresh_q(G, y, q, K)
    kkt = _kkt(G, c, y, lam, K)
    while sweeps < max_iter:
        sweeps += 1
        max_delta = 0.0
        changed = False
        for i in range(K):
            gii = G[i, i]
            if gii <= 0.0:
                continue
            old = y[i]
            r = c[i] - q[i] + gii * old
            if r > half:
                new = (r - half) / gii
            elif r < -half:
                new = (r + half) / gii
            else:
                new = 0.0
            delta = new - old
            if delta != 0.0:
                if _sign(new) != _sign(old):
                    changed = True
                y[i] = new
                for j in range(K):
                    q[j] += delta * G[i, j]
                if fabs(delta) > max_delta:
                    max_delta = fabs(delta)
        if changed:
            newton_ok = True
        elif newton_ok and max_delta >= tol:
            if _face_step(G, c, lam, y, K, w.idx, w.L, w.z, w.a):
                max_delta = 0.0
            else:
                newton_ok = False
        if max_delta < tol:
            _refresh_q(G, y, q, K)
            kkt = _kkt(G, c, y, lam, K)
            if kkt < tol:
                max_delta_out[0] = max_delta
                kkt_out[0] = kkt
                return sweeps
    _refresh_q(G, y, q, K)
    kkt = _kkt(G, c, y, lam, K)
    max_delta_out[0] = max_delta
    kkt_out[0] = kkt
    return sweeps


def lasso_cd(const double[:, ::1] G, const double[::1] c, double lam,
             double[::1] y, int max_iter, double tol):
    cdef double max_delta = 0.0, kkt = 0.0
    cdef int sweeps
    cdef _Scratch w = _Scratch(c.shape[0])
    sweeps = _cd(G, c, lam, y, w, max_iter, tol, &max_delta, &kkt)
    return sweeps, max_delta, kkt


def lasso_cd_batch(const double[:, ::1] G, C, double lam, Y, int max_iter, double tol):
    cdef Py_ssize_t K = G.shape[0]
    cdef Py_ssize_t n = C.shape[1]
    cdef Py_ssize_t j
    # column-contiguous copies so each column is a ::1 view
    cdef double[:, ::1] Ct = np.ascontiguousarray(np.asarray(C).T)
    cdef double[:, ::1] Yt = np.ascontiguousarray(np.asarray(Y).T)
    cdef _Scratch w = _Scratch(K)
    cdef cnp.int64_t[::1] sweeps = np.zeros(n, dtype=np.int64)
    cdef double[::1] kkt = np.zeros(n)
    cdef double md = 0.0, kv = 0.0
    for j in range(n):
        sweeps[j] = _cd(G, Ct[j], lam, Yt[j], w, max_iter, tol, &md, &kv)
        kkt[j] = kv
    Y[...] = np.asarray(Yt).T
    return np.asarray(sweeps), np.asarray(kkt)


cdef bint _chol(const double[:, ::1] G, Py_ssize_t[::1] idx, Py_ssize_t s,
                double[:, ::1] L) noexcept nogil:
    cdef Py_ssize_t i, j, k
    cdef double acc, gmax = 0.0
    for i in range(s):
        if G[idx[i], idx[i]] > gmax:
            gmax = G[idx[i], idx[i]]
    for i in range(s):
        for j in range(i + 1):
            acc = G[idx[i], idx[j]]
            for k in range(j):
                acc -= L[i, k] * L[j, k]
            if i == j:
                if acc <= SINGULAR_RTOL * gmax:
                    return False
                L[i, i] = sqrt(acc)
            else:
                L[i, j] = acc / L[j, j]
    return True


cdef void _chol_solve(double[:, ::1] L, Py_ssize_t s, double[::1] b,
                      double[::1] z, double[::1] out) noexcept nogil:
    cdef Py_ssize_t i, j
    cdef double acc
    for i in range(s):
        acc = b[i]
        for j in range(i):
            acc -= L[i, j] * z[j]
        z[i] = acc / L[i, i]
    for i in range(s - 1, -1, -1):
        acc = z[i]
        for j in range(i + 1, s):
            acc -= L[j, i] * out[j]
        out[i] = acc / L[i, i]


cdef void _path(const double[:, ::1] G, const double[::1] c, double lam,
                double[::1] y, _Scratch w) noexcept:
    cdef Py_ssize_t K = c.shape[0]
    cdef Py_ssize_t i, j, s, step, j0 = 0, ej = 0, dropped = -1
    cdef int event, sgn
    cdef double target = 0.5 * lam, mu = 0.0, gamma, g, den, acc, esign = 0.0
    cdef Py_ssize_t[::1] idx = w.idx
    cdef double[:, ::1] L = w.L
    cdef double[::1] sg = w.sg, d = w.a, z = w.z, corr = w.q, av = w.av
    cdef cnp.uint8_t[::1] act = w.act

    for i in range(K):
        y[i] = 0.0
        act[i] = 0
        if fabs(c[i]) > mu:
            mu = fabs(c[i])
            j0 = i
    if mu <= target:
        return
    idx[0] = j0
    sg[0] = _sign(c[j0])
    act[j0] = 1
    s = 1
    for step in range(20 * K + 20):
        if not _chol(G, idx, s, L):
            break
        _chol_solve(L, s, sg, z, d)
        for j in range(K):
            acc = c[j]
            g = 0.0
            for i in range(s):
                acc -= G[j, idx[i]] * y[idx[i]]
                g += G[j, idx[i]] * d[i]
            corr[j] = acc
            av[j] = g
        gamma = mu - target
        event = 0
        for sgn in (1, -1):
            for j in range(K):
                if act[j] or j == dropped:
                    continue
                den = 1.0 - sgn * av[j]
                if den == 0.0:
                    continue
                g = (mu - sgn * corr[j]) / den
                if g > 1e-15 and g < gamma:
                    gamma = g
                    event = 1
                    ej = j
                    esign = sgn
        for i in range(s):
            if y[idx[i]] * d[i] < 0.0:
                g = -y[idx[i]] / d[i]
                if g < gamma:
                    gamma = g
                    event = 2
                    ej = i
        for i in range(s):
            y[idx[i]] += gamma * d[i]
        mu -= gamma
        dropped = -1
        if event == 0:
            break
        if event == 1:
            idx[s] = ej
            sg[s] = esign
            act[ej] = 1
            s += 1
        else:
            dropped = idx[ej]
            y[dropped] = 0.0
            act[dropped] = 0
            for i in range(ej, s - 1):
                idx[i] = idx[i + 1]
                sg[i] = sg[i + 1]
            s -= 1
            if s == 0:
                return
    # exact solve on the terminal face
    if not _chol(G, idx, s, L):
        return
    for i in range(s):
        av[i] = c[idx[i]] - target * sg[i]
    _chol_solve(L, s, av, z, d)
    for i in range(s):
        if _sign(d[i]) != sg[i]:
            return
    for i in range(s):
        y[idx[i]] = d[i]


def lasso_path(const double[:, ::1] G, const double[::1] c, double lam, int max_steps=0):
    y = np.zeros(c.shape[0])
    _path(G, c, lam, y, _Scratch(c.shape[0]))
    return y


def lasso_path_batch(const double[:, ::1] G, C, double lam, Y):
    cdef Py_ssize_t K = G.shape[0]
    cdef Py_ssize_t n = C.shape[1]
    cdef Py_ssize_t j
    cdef double[:, ::1] Ct = np.ascontiguousarray(np.asarray(C).T)
    cdef double[:, ::1] Yt = np.zeros((n, K))
    cdef _Scratch w = _Scratch(K)
    for j in range(n):
        _path(G, Ct[j], lam, Yt[j], w)
    Y[...] = np.asarray(Yt).T


def omp(const double[:, :] D, const double[:, ::1] G, const double[::1] x,
        int sparsity, double tol):
    cdef Py_ssize_t N = D.shape[0]
    cdef Py_ssize_t K = D.shape[1]
    cdef Py_ssize_t i, j, t, k, s = 0
    cdef double[:, ::1] L = np.zeros((max(sparsity, 1), max(sparsity, 1)))
    cdef double[::1] r = np.array(x, dtype=np.float64)
    cdef double[::1] c = np.zeros(K)
    cdef double[::1] z = np.zeros(max(sparsity, 1))
    cdef double[::1] a = np.zeros(max(sparsity, 1))
    cdef cnp.int64_t[::1] support = np.zeros(max(sparsity, 1), dtype=np.int64)
    cdef cnp.uint8_t[::1] selected = np.zeros(K, dtype=np.uint8)
    cdef double[::1] norms = np.zeros(sparsity + 1)
    cdef double acc, best, v, d2, gkk
    cdef int status = 0

    with nogil:
        for k in range(K):
            acc = 0.0
            for i in range(N):
                acc += D[i, k] * x[i]
            c[k] = acc
        acc = 0.0
        for i in range(N):
            acc += r[i] * r[i]
        norms[0] = sqrt(acc)

        for t in range(sparsity):
            if norms[t] <= tol:
                break
            best = -1.0
            k = -1
            for j in range(K):
                if selected[j]:
                    continue
                acc = 0.0
                for i in range(N):
                    acc += D[i, j] * r[i]
                v = fabs(acc)
                if v > best:
                    best = v
                    k = j
            if k < 0 or best <= 0.0:
                break
            gkk = G[k, k]
            # w = L^{-1} G[support, k], stored directly in row t of L
            d2 = gkk
            for i in range(t):
                acc = G[support[i], k]
                for j in range(i):
                    acc -= L[i, j] * L[t, j]
                L[t, i] = acc / L[i, i]
                d2 -= L[t, i] * L[t, i]
            if d2 <= SINGULAR_RTOL * gkk:
                status = t + 1
                break
            L[t, t] = sqrt(d2)
            support[t] = k
            selected[k] = 1
            s = t + 1
            for i in range(s):
                acc = c[support[i]]
                for j in range(i):
                    acc -= L[i, j] * z[j]
                z[i] = acc / L[i, i]
            for i in range(s - 1, -1, -1):
                acc = z[i]
                for j in range(i + 1, s):
                    acc -= L[j, i] * a[j]
                a[i] = acc / L[i, i]
            for i in range(N):
                acc = x[i]
                for j in range(s):
                    acc -= D[i, support[j]] * a[j]
                r[i] = acc
            acc = 0.0
            for i in range(N):
                acc += r[i] * r[i]
            norms[s] = sqrt(acc)

    return (np.asarray(support)[:s].copy(), np.asarray(a)[:s].copy(),
            np.asarray(norms)[: s + 1].copy(), status)
