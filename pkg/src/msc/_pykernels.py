"""Pure-Python/numpy implementations of the hot loops.

Same signatures and semantics as the compiled ``_ckernels`` module.  Used when
the extension is unavailable or ``MSC_PURE_PYTHON=1`` is set.
"""
import numpy as np

# Support Gram pivots below this fraction of the atom energy are singular.
SINGULAR_RTOL = 1e-10


def _kkt(q, c, y, lam):
    grad = 2.0 * (q - c)
    active = y != 0.0
    viol = np.where(active, np.abs(grad + lam * np.sign(y)), np.abs(grad) - lam)
    return max(float(viol.max()), 0.0) if viol.size else 0.0


def _chol_partial(A, gmax):
    """Cholesky of ``A`` up to the first singular pivot.

    Returns ``(L, fail)`` where ``fail`` is the failing row or -1.  On
    failure, row ``fail`` of ``L`` holds ``L[:fail,:fail]^{-1} A[:fail, fail]``.
    """
    s = A.shape[0]
    L = np.zeros((s, s))
    for i in range(s):
        for j in range(i + 1):
            acc = A[i, j] - L[i, :j] @ L[j, :j]
            if i == j:
                if acc <= SINGULAR_RTOL * gmax:
                    return L, i
                L[i, i] = np.sqrt(acc)
            else:
                L[i, j] = acc / L[j, j]
    return L, -1


def _face_step(G, c, lam, y):
    """Improve ``y`` on its current support/sign face.

    With a nonsingular face Gram ``y`` moves to the exact face minimizer, or
    toward it up to the first sign change.  With a singular one, ``y`` moves along a null direction
    (objective non-increasing) until one coordinate reaches zero.  Returns
    None when neither applies.
    """
    support = np.flatnonzero(y)
    if support.size == 0:
        return None
    signs = np.sign(y[support])
    gmax = float(np.max(np.diagonal(G)[support]))
    L, fail = _chol_partial(G[np.ix_(support, support)], gmax)
    if fail < 0:
        sol = _backward(L, _forward(L, c[support] - 0.5 * lam * signs))
        out = np.zeros_like(y)
        flips = np.sign(sol) != signs
        if not flips.any():
            out[support] = sol
            return out
        # convex on the face: walk toward sol and stop at the first zero
        ys = y[support]
        steps = np.where(flips, ys / np.where(flips, ys - sol, 1.0), np.inf)
        k = int(np.argmin(steps))
        out[support] = ys + steps[k] * (sol - ys)
        out[support[k]] = 0.0
        return out
    v = np.zeros(support.size)
    v[fail] = 1.0
    v[:fail] = -_backward(L[:fail, :fail], L[fail, :fail])
    Gs = G[np.ix_(support, support)]
    curv = float(v @ Gs @ v)
    slope = 2.0 * float(v @ (Gs @ y[support] - c[support])) + lam * float(signs @ v)
    if slope > 0.0:
        v = -v
        slope = -slope
    ys = y[support]
    moving = ys * v < 0.0
    if not moving.any():
        return None
    steps = np.where(moving, -ys / np.where(moving, v, 1.0), np.inf)
    k = int(np.argmin(steps))
    t = steps[k]
    if t * slope + t * t * curv > 0.0:
        return None
    out = y.copy()
    out[support] = ys + t * v
    out[support[k]] = 0.0
    return out


def lasso_cd(G, c, lam, y, max_iter, tol):
    """Cyclic coordinate descent on ``y'Gy - 2c'y + lam*|y|_1``.

    After any sweep that leaves the support and signs unchanged, an exact
    Newton step on that face is tried.  ``y`` is updated in place (warm
    start).  Returns ``(sweeps, max_delta, kkt)`` where ``kkt`` is the
    largest violation of the optimality conditions at exit.
    """
    K = c.shape[0]
    half = 0.5 * lam
    q = G @ y
    diag = np.diagonal(G).copy()
    sweeps = 0
    max_delta = 0.0
    kkt = _kkt(q, c, y, lam)
    newton_ok = True
    while sweeps < max_iter:
        sweeps += 1
        max_delta = 0.0
        pattern_changed = False
        for i in range(K):
            gii = diag[i]
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
                if np.sign(new) != np.sign(old):
                    pattern_changed = True
                y[i] = new
                q += delta * G[:, i]
                if abs(delta) > max_delta:
                    max_delta = abs(delta)
        if pattern_changed:
            newton_ok = True
        elif newton_ok and max_delta >= tol:
            jump = _face_step(G, c, lam, y)
            if jump is None:
                newton_ok = False
            else:
                y[:] = jump
                q = G @ y
                max_delta = 0.0
        if max_delta < tol:
            q = G @ y
            kkt = _kkt(q, c, y, lam)
            if kkt < tol:
                break
    else:
        q = G @ y
        kkt = _kkt(q, c, y, lam)
    return sweeps, max_delta, kkt


def lasso_path(G, c, lam, max_steps=0):
    """LASSO solution by following the regularization path from ``y = 0``.

    The penalty starts at ``2 max|c|`` and is lowered toward ``lam``; an atom
    joins when its correlation reaches the bound and leaves when its
    coefficient crosses zero.  A final exact solve on the terminal support
    removes accumulated rounding.  Stops early (returning the current point)
    if the support Gram becomes singular.
    """
    K = c.shape[0]
    y = np.zeros(K)
    target = 0.5 * lam
    if K == 0:
        return y
    j0 = int(np.argmax(np.abs(c)))
    mu = abs(float(c[j0]))
    if mu <= target:
        return y
    active = [j0]
    signs = [float(np.sign(c[j0]))]
    dropped = -1
    for _ in range(max_steps or 20 * K + 20):
        A = np.asarray(active)
        sg = np.asarray(signs)
        GA = G[np.ix_(A, A)]
        L, fail = _chol_partial(GA, float(np.max(np.diagonal(GA))))
        if fail >= 0:
            break
        d = _backward(L, _forward(L, sg))
        corr = c - G[:, A] @ y[A]
        a = G[:, A] @ d
        gamma = mu - target
        event = None
        free = np.ones(K, dtype=bool)
        free[A] = False
        if dropped >= 0:
            free[dropped] = False
        with np.errstate(divide="ignore", invalid="ignore"):
            for sign in (1.0, -1.0):
                g = (mu - sign * corr) / (1.0 - sign * a)
                g = np.where(free & (g > 1e-15), g, np.inf)
                j = int(np.argmin(g))
                if g[j] < gamma:
                    gamma, event = g[j], ("add", j, sign)
            g = np.where(y[A] * d < 0, -y[A] / d, np.inf)
        k = int(np.argmin(g))
        if g[k] < gamma:
            gamma, event = g[k], ("drop", k, 0.0)
        y[A] += gamma * d
        mu -= gamma
        dropped = -1
        if event is None:
            break
        kind, j, sign = event
        if kind == "add":
            active.append(j)
            signs.append(sign)
        else:
            dropped = active.pop(j)
            signs.pop(j)
            y[dropped] = 0.0
            if not active:
                break
    if active:
        A = np.asarray(active)
        sg = np.asarray(signs)
        GA = G[np.ix_(A, A)]
        L, fail = _chol_partial(GA, float(np.max(np.diagonal(GA))))
        if fail < 0:
            exact = _backward(L, _forward(L, c[A] - target * sg))
            if np.all(np.sign(exact) == sg):
                y[:] = 0.0
                y[A] = exact
    return y


def lasso_path_batch(G, C, lam, Y):
    """Column-wise :func:`lasso_path`; writes into ``Y`` (K x n)."""
    for j in range(C.shape[1]):
        Y[:, j] = lasso_path(G, np.ascontiguousarray(C[:, j]), lam)


def lasso_cd_batch(G, C, lam, Y, max_iter, tol):
    """Column-wise :func:`lasso_cd`; ``Y`` (K x n) is updated in place."""
    n = C.shape[1]
    sweeps = np.zeros(n, dtype=np.int64)
    kkt = np.zeros(n)
    for j in range(n):
        y = np.ascontiguousarray(Y[:, j])
        s, _, v = lasso_cd(G, np.ascontiguousarray(C[:, j]), lam, y, max_iter, tol)
        Y[:, j] = y
        sweeps[j] = s
        kkt[j] = v
    return sweeps, kkt


def omp(D, G, x, sparsity, tol):
    """Orthogonal matching pursuit with a Cholesky-updated support Gram.

    Returns ``(support, coef, residual_norms, status)``.  ``status`` is 0 on
    success, or ``t + 1`` when the support system became singular while
    adding the atom of iteration ``t``.
    """
    K = D.shape[1]
    support = []
    coef = np.zeros(0)
    L = np.zeros((sparsity, sparsity))
    r = x.copy()
    norms = [float(np.sqrt(r @ r))]
    selected = np.zeros(K, dtype=bool)
    c = D.T @ x
    for t in range(sparsity):
        if norms[-1] <= tol:
            break
        corr = np.abs(D.T @ r)
        corr[selected] = -1.0
        k = int(np.argmax(corr))
        if corr[k] <= 0.0:
            break
        gkk = G[k, k]
        if t == 0:
            d2 = gkk
            w = np.zeros(0)
        else:
            w = _forward(L[:t, :t], G[support, k])
            d2 = gkk - w @ w
        if d2 <= SINGULAR_RTOL * gkk:
            return np.asarray(support, dtype=np.int64), coef, np.asarray(norms), t + 1
        L[t, :t] = w
        L[t, t] = np.sqrt(d2)
        support.append(k)
        selected[k] = True
        idx = np.asarray(support)
        z = _forward(L[: t + 1, : t + 1], c[idx])
        coef = _backward(L[: t + 1, : t + 1], z)
        r = x - D[:, idx] @ coef
        norms.append(float(np.sqrt(r @ r)))
    return np.asarray(support, dtype=np.int64), coef, np.asarray(norms), 0


def _forward(L, b):
    n = b.shape[0]
    z = np.zeros(n)
    for i in range(n):
        z[i] = (b[i] - L[i, :i] @ z[:i]) / L[i, i]
    return z


def _backward(L, z):
    n = z.shape[0]
    a = np.zeros(n)
    for i in range(n - 1, -1, -1):
        a[i] = (z[i] - L[i + 1 : n, i] @ a[i + 1 :]) / L[i, i]
    return a
