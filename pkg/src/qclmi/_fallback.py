"""Pure NumPy versions of the compiled kernels (same signatures and results)."""

import numpy as np

_CHUNK = 1 << 21


def _factor(kind, q, p, cq, cp, hbar):
    r = ((q - cq) ** 2 + (p - cp) ** 2) / (2.0 * hbar)
    val = np.exp(-r) / (2.0 * np.pi * hbar)
    return val if kind == 0 else r * val


def _density(X, kinds, centers, hbar):
    with np.errstate(invalid="ignore", over="ignore"):
        P = _factor(kinds[0], X[..., 0], X[..., 1], centers[0], centers[1], hbar) * _factor(
            kinds[1], X[..., 2], X[..., 3], centers[2], centers[3], hbar
        )
    return np.where(np.isfinite(P), P, 0.0)


def _accumulate(P, w0, w1, w2, w3, out):
    # P has shape (rows_i, n1, n2, n3) for a slab of the first axis.
    m12, m34, acc = out
    wkl = np.outer(w2, w3)
    m12_rows = np.einsum("ijkl,kl->ij", P, wkl)
    wij = w0[:, None] * w1[None, :]
    m34 += np.einsum("ijkl,ij->kl", P, wij)
    acc[0] += np.einsum("ij,ij->", np.einsum("ijkl,kl->ij", P * P, wkl), wij)
    acc[1] += np.einsum("ij,ij->", m12_rows, wij)
    return m12_rows


def linear_grid_moments(A, b, ax0, ax1, ax2, ax3, w0, w1, w2, w3, kinds, centers, hbar):
    A = np.asarray(A, dtype=float)
    n0, n1, n2, n3 = len(ax0), len(ax1), len(ax2), len(ax3)
    U = (A[:, 0][None, None, :] * ax0[:, None, None] + A[:, 1][None, None, :] * ax1[None, :, None]) + b
    V = A[:, 2][None, None, :] * ax2[:, None, None] + A[:, 3][None, None, :] * ax3[None, :, None]
    m12 = np.zeros((n0, n1))
    m34 = np.zeros((n2, n3))
    acc = np.zeros(2)
    step = max(1, _CHUNK // max(1, n1 * n2 * n3))
    for s in range(0, n0, step):
        e = min(n0, s + step)
        X = U[s:e, :, None, None, :] + V[None, None, :, :, :]
        P = _density(X, kinds, centers, hbar)
        m12[s:e] = _accumulate(P, w0[s:e], w1, w2, w3, (m12, m34, acc))
    return m12, m34, float(acc[0]), float(acc[1])


def points_grid_moments(X, n0, n1, n2, n3, w0, w1, w2, w3, kinds, centers, hbar):
    X = np.asarray(X, dtype=float)
    if X.shape[0] != n0 * n1 * n2 * n3:
        raise ValueError("X does not match the grid shape")
    X = X.reshape(n0, n1, n2, n3, 4)
    m12 = np.zeros((n0, n1))
    m34 = np.zeros((n2, n3))
    acc = np.zeros(2)
    step = max(1, _CHUNK // max(1, n1 * n2 * n3))
    for s in range(0, n0, step):
        e = min(n0, s + step)
        P = _density(X[s:e], kinds, centers, hbar)
        m12[s:e] = _accumulate(P, w0[s:e], w1, w2, w3, (m12, m34, acc))
    return m12, m34, float(acc[0]), float(acc[1])


def _rhs(X, c):
    w1sq, w2sq, cq, cp, cn = c
    q1, p1, q2, p2 = X[:, 0], X[:, 1], X[:, 2], X[:, 3]
    return np.stack(
        (
            p1 + cp * p2 - cn * q1 * p2,
            -(w1sq * q1 + cq * q2 + cn * (q1 * q2 * q2 - p1 * p2)),
            p2 + cp * p1 - cn * q1 * p1,
            -(w2sq * q2 + cq * q1 + cn * q1 * q1 * q2),
        ),
        axis=1,
    )


def _coeffs(coeffs):
    c = tuple(float(v) for v in coeffs)
    if len(c) != 5:
        raise ValueError("coeffs must hold (w1sq, w2sq, cq, cp, cn)")
    return c


def _rk4(X, h, c):
    k1 = _rhs(X, c)
    k2 = _rhs(X + 0.5 * h * k1, c)
    k3 = _rhs(X + 0.5 * h * k2, c)
    k4 = _rhs(X + h * k3, c)
    return X + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def rk4_advance(X, h, nsteps, coeffs, bound):
    c = _coeffs(coeffs)
    live = np.all(np.isfinite(X), axis=1)
    idx = np.flatnonzero(live)
    Y = X[idx].copy()
    escaped = 0
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(int(nsteps)):
            if Y.shape[0] == 0:
                break
            Y = _rk4(Y, h, c)
            ok = np.all(np.abs(Y) < bound, axis=1)
            if not ok.all():
                gone = idx[~ok]
                X[gone] = np.nan
                escaped += gone.size
                idx, Y = idx[ok], Y[ok]
    X[idx] = Y
    return escaped


def section_crossings(X0, h, max_steps, max_crossings, coeffs, bound):
    c = _coeffs(coeffs)
    X = np.array(X0, dtype=float, copy=True)
    m = X.shape[0]
    status = np.ones(m, dtype=np.intp)
    found = np.zeros(m, dtype=np.intp)
    active = np.ones(m, dtype=bool)
    left, right, seed = [], [], []
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(int(max_steps)):
            idx = np.flatnonzero(active)
            if idx.size == 0:
                break
            prev = X[idx]
            new = _rk4(prev, h, c)
            X[idx] = new
            out = ~np.all(np.abs(new) < bound, axis=1)
            status[idx[out]] = 2
            active[idx[out]] = False
            hit = (~out) & (prev[:, 0] < 0.0) & (new[:, 0] >= 0.0)
            for j in np.flatnonzero(hit):
                i = idx[j]
                left.append(prev[j])
                right.append(new[j])
                seed.append(i)
                found[i] += 1
                if found[i] == max_crossings:
                    status[i] = 0
                    active[i] = False
    if not left:
        return np.empty((0, 4)), np.empty((0, 4)), np.empty(0, dtype=np.intp), status
    # Same ordering as the compiled kernel: grouped by orbit, then by time.
    seed = np.array(seed, dtype=np.intp)
    order = np.argsort(seed, kind="stable")
    return np.array(left)[order], np.array(right)[order], seed[order], status
