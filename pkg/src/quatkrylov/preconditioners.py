"""Preconditioners for the QGMRES family.

A preconditioner applies ``P^{-1}`` to a quaternion vector.  Flexible
preconditioners may change from one Arnoldi step to the next; the
flexible solver tells them about the current iterate through
:meth:`Preconditioner.update` before asking for the next application.

Solvers call :meth:`Preconditioner.fresh` once per solve, so stateful
preconditioners never share mutable state between concurrent solves.
"""

from __future__ import annotations

import copy

import numpy as np
import scipy.sparse as sp

from .errors import DimensionError, PreconditionerError
from .quaternion import CONJ_SIGN, STRUCT, QMatrix, QVector, left_matrix

__all__ = [
    "Preconditioner",
    "IdentityPreconditioner",
    "FunctionPreconditioner",
    "DiagonalPreconditioner",
    "SGSPreconditioner",
    "JacobiSqrtResidual",
    "IterateSqrtWeights",
    "sgs_preconditioner",
    "jacobi_sqrt_residual",
    "as_preconditioner",
]


class Preconditioner:
    #: the operator may differ between iterations (flexible solvers only)
    flexible = False
    #: the flexible solver must call update() with the current iterate
    needs_iterate = False

    def apply(self, v: QVector, iteration: int = 0) -> QVector:
        return QVector._wrap(self.apply_parts(v.parts, iteration))

    def apply_parts(self, vp: np.ndarray, iteration: int = 0) -> np.ndarray:
        raise NotImplementedError

    def update(self, x: QVector, r: QVector, iteration: int) -> None:
        """Hook receiving iterate ``x_j`` and residual ``b - A x_j`` after step ``j``."""

    def fresh(self) -> "Preconditioner":
        return self

    def __call__(self, v: QVector, iteration: int = 0) -> QVector:
        return self.apply(v, iteration)


class IdentityPreconditioner(Preconditioner):
    def apply_parts(self, vp, iteration=0):
        return np.array(vp, copy=True)


class FunctionPreconditioner(Preconditioner):
    """Wraps ``fn(v: QVector, iteration: int) -> QVector``."""

    def __init__(self, fn, flexible: bool = False):
        self.fn = fn
        self.flexible = flexible

    def apply(self, v, iteration=0):
        return self.fn(v, iteration)

    def apply_parts(self, vp, iteration=0):
        return self.fn(QVector._wrap(np.array(vp)), iteration).parts


def as_preconditioner(P) -> Preconditioner:
    if P is None:
        return IdentityPreconditioner()
    if isinstance(P, Preconditioner):
        return P
    if callable(P):
        return FunctionPreconditioner(P)
    raise TypeError(f"cannot use {type(P).__name__} as a preconditioner")


class DiagonalPreconditioner(Preconditioner):
    """``P = diag(d)`` with quaternion diagonal; applies ``d_i^{-1} v_i``."""

    def __init__(self, d: QVector):
        mod2 = np.sum(d.parts ** 2, axis=0)
        if np.any(mod2 == 0):
            raise PreconditionerError("diagonal preconditioner has a zero entry")
        self._dinv = d.parts * CONJ_SIGN[:, None] / mod2

    def apply_parts(self, vp, iteration=0):
        return _left_mul_entries(self._dinv, vp)


def _left_mul_entries(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # entrywise a_i * b_i for (4, n) arrays
    out = np.zeros_like(b)
    for ia in range(4):
        for ib in range(4):
            c = np.nonzero(STRUCT[ia, ib])[0][0]
            out[c] += STRUCT[ia, ib, c] * a[ia] * b[ib]
    return out


class SGSPreconditioner(Preconditioner):
    """Symmetric Gauss-Seidel (SSOR with omega = 1) for a quaternion matrix.

    ``P = (D + L) D^{-1} (D + U)``, so ``P^{-1} v`` is a forward
    substitution with ``D + L``, a multiplication by ``D`` and a backward
    substitution with ``D + U``, all in quaternion arithmetic.
    """

    def __init__(self, A: QMatrix):
        n, m = A.shape
        if n != m:
            raise DimensionError("SGS needs a square matrix")
        d = A.diagonal()
        mod2 = np.sum(d.parts ** 2, axis=0)
        if np.any(mod2 == 0):
            bad = int(np.nonzero(mod2 == 0)[0][0])
            raise PreconditionerError(f"SGS needs a nonzero diagonal; entry {bad} is zero")
        self.n = n
        self._d = d.parts.copy()
        self._dinv = d.parts * CONJ_SIGN[:, None] / mod2
        self._lower = _row_blocks(A, "lower")
        self._upper = _row_blocks(A, "upper")

    def apply_parts(self, vp, iteration=0):
        n = self.n
        y = np.zeros((4, n))
        for i in range(n):
            acc = vp[:, i] - _row_sum(self._lower, i, y)
            y[:, i] = left_matrix(self._dinv[:, i]) @ acc
        t = _left_mul_entries(self._d, y)
        z = np.zeros((4, n))
        for i in range(n - 1, -1, -1):
            acc = t[:, i] - _row_sum(self._upper, i, z)
            z[:, i] = left_matrix(self._dinv[:, i]) @ acc
        return z


def _row_blocks(A: QMatrix, which: str):
    """CSR pattern of the strict lower/upper triangle with (nnz, 4) quaternion data."""
    pattern = None
    parts = []
    for k in range(4):
        p = A.parts[k]
        p = sp.csr_matrix(A.shape) if p is None else sp.csr_matrix(p)
        p = sp.tril(p, -1, format="csr") if which == "lower" else sp.triu(p, 1, format="csr")
        parts.append(p)
        mask = abs(p)
        pattern = mask if pattern is None else pattern + mask
    pattern = sp.csr_matrix(pattern)
    pattern.eliminate_zeros()
    pattern.sort_indices()
    rows = np.repeat(np.arange(A.shape[0]), np.diff(pattern.indptr))
    data = np.zeros((pattern.nnz, 4))
    for k, p in enumerate(parts):
        data[:, k] = np.asarray(p[rows, pattern.indices]).ravel()
    return pattern.indptr, pattern.indices, data


def _row_sum(blocks, i, x):
    indptr, indices, data = blocks
    lo, hi = indptr[i], indptr[i + 1]
    if lo == hi:
        return np.zeros(4)
    cols = indices[lo:hi]
    gram = data[lo:hi].T @ x[:, cols].T
    return np.einsum("ab,abc->c", gram, STRUCT)


def sgs_preconditioner(A: QMatrix) -> SGSPreconditioner:
    return SGSPreconditioner(A)


class JacobiSqrtResidual(Preconditioner):
    """Flexible diagonal preconditioner ``P_j = diag(sqrt|b - A x_j|)``.

    ``P_1`` is the identity.  After step ``j`` the diagonal is rebuilt from
    the moduli of the current residual, floored at ``floor`` so a vanishing
    residual entry never divides by zero.
    """

    flexible = True
    needs_iterate = True

    def __init__(self, A: QMatrix = None, b: QVector = None, floor: float = 1e-12):
        self.A = A
        self.b = b
        self.floor = floor
        self._diags = {}

    def fresh(self):
        other = copy.copy(self)
        other._diags = {}
        return other

    def diagonal_from_residual(self, r: QVector) -> np.ndarray:
        return np.maximum(np.sqrt(r.moduli()), self.floor)

    def update(self, x, r, iteration):
        if r is None:
            r = self.b - self.A.matvec(x)
        self._diags[iteration] = self.diagonal_from_residual(r)

    def _diag_for(self, iteration):
        keys = [k for k in self._diags if k <= iteration]
        return self._diags[max(keys)] if keys else None

    def apply_parts(self, vp, iteration=0):
        d = self._diag_for(iteration)
        if d is None:
            return np.array(vp, copy=True)
        return vp / d


class IterateSqrtWeights(JacobiSqrtResidual):
    """Flexible weights ``P_j^{-1} = diag(sqrt|x_j|)`` built from the iterate.

    This is the generic iteratively reweighted diagonal used by hybrid
    flexible GMRES for sparsity; it multiplies instead of divides.
    """

    def update(self, x, r, iteration):
        self._diags[iteration] = np.maximum(np.sqrt(x.moduli()), self.floor)

    def apply_parts(self, vp, iteration=0):
        d = self._diag_for(iteration)
        if d is None:
            return np.array(vp, copy=True)
        return vp * d


def jacobi_sqrt_residual(A: QMatrix, b: QVector, floor: float = 1e-12) -> JacobiSqrtResidual:
    return JacobiSqrtResidual(A, b, floor)
