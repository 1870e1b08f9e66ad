"""Independent reference implementations used by the tests.

Nothing here calls the package's quaternion kernels: products are written
out from the defining relations and Krylov minimizers are computed with
plain numpy on real block matrices.
"""

import numpy as np


def hprod(a, b):
    """Hamilton product of two length-4 arrays, written out term by term."""
    a0, a1, a2, a3 = a
    b0, b1, b2, b3 = b
    return np.array([
        a0 * b0 - a1 * b1 - a2 * b2 - a3 * b3,
        a0 * b1 + a1 * b0 + a2 * b3 - a3 * b2,
        a0 * b2 - a1 * b3 + a2 * b0 + a3 * b1,
        a0 * b3 + a1 * b2 - a2 * b1 + a3 * b0,
    ])


def conj(a):
    return np.array([a[0], -a[1], -a[2], -a[3]])


def dense_matmul(A, B):
    """Entrywise-loop quaternion matrix product on (4, m, k) x (4, k, n) arrays."""
    m, k = A.shape[1:]
    n = B.shape[2]
    C = np.zeros((4, m, n))
    for i in range(m):
        for j in range(n):
            acc = np.zeros(4)
            for t in range(k):
                acc += hprod(A[:, i, t], B[:, t, j])
            C[:, i, j] = acc
    return C


def real_block(A):
    """Real counterpart built from 4x4 left-multiplication blocks (interleaved layout).

    ``A`` has shape (4, m, n).  Returns the 4m x 4n matrix whose (i, j)
    block maps stack(p) to stack(a_ij p).
    """
    m, n = A.shape[1:]
    R = np.zeros((4 * m, 4 * n))
    for i in range(m):
        for j in range(n):
            a0, a1, a2, a3 = A[:, i, j]
            R[4 * i:4 * i + 4, 4 * j:4 * j + 4] = [
                [a0, -a1, -a2, -a3],
                [a1, a0, -a3, a2],
                [a2, a3, a0, -a1],
                [a3, -a2, a1, a0],
            ]
    return R


def interleave(v):
    """(4, n) parts -> length 4n vector ordered entry by entry."""
    return np.asarray(v).T.reshape(-1)


def krylov_residuals(A, b, m):
    """Minimal ||b - A x|| over x in the right quaternion Krylov space K_k, k = 0..m.

    Real block Arnoldi on the interleaved real counterpart: each quaternion
    direction v contributes the four real vectors stack(v q) for q in
    {1, i, j, k}, which is exactly the 4-column block real_block(v).
    """
    RA = real_block(A)
    n = A.shape[1]
    r0 = interleave(b)
    out = [np.linalg.norm(r0)]
    Q, _ = np.linalg.qr(real_block(np.asarray(b)[:, :, None]))
    basis = Q
    for _ in range(m):
        AQ = RA @ basis
        c, *_ = np.linalg.lstsq(AQ, r0, rcond=None)
        out.append(np.linalg.norm(r0 - AQ @ c))
        if basis.shape[1] >= 4 * n:
            continue
        W = RA @ basis[:, -4:]
        for _ in range(2):
            W -= basis @ (basis.T @ W)
        Qn, Rn = np.linalg.qr(W)
        keep = np.abs(np.diag(Rn)) > 1e-12 * max(1.0, np.abs(Rn).max())
        if not keep.any():
            continue
        basis = np.hstack([basis, Qn[:, keep]])
    return np.array(out)


def conv2_periodic(img, psf):
    """Direct periodic convolution loop centred on the PSF middle."""
    m, n = img.shape
    pr, pc = psf.shape
    cr, cc = (pr - 1) // 2, (pc - 1) // 2
    out = np.zeros_like(img)
    for r in range(m):
        for c in range(n):
            s = 0.0
            for u in range(pr):
                for v in range(pc):
                    s += psf[u, v] * img[(r - u + cr) % m, (c - v + cc) % n]
            out[r, c] = s
    return out


def qtv_loop(parts, n):
    """Quaternion TV of an n x n column-major image by explicit loops.

    The horizontal and vertical difference vectors each have (n - 1) n
    entries and are paired by their position in the stacked vectors:
    entry t of D_h x compares columns a, a+1 at row r with t = a n + r,
    entry t of D_v x compares rows a', a'+1 at column c with
    t = c (n - 1) + a'.
    """
    X = np.asarray(parts).reshape(4, n, n, order="F")
    total = 0.0
    for t in range((n - 1) * n):
        a, r = divmod(t, n)
        c, a2 = divmod(t, n - 1)
        dh = X[:, r, a] - X[:, r, a + 1]
        dv = X[:, a2, c] - X[:, a2 + 1, c]
        total += np.sqrt(np.sum(dh ** 2) + np.sum(dv ** 2))
    return total
