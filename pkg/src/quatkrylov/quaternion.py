"""Quaternion scalars, vectors and matrices stored as four real parts.

Every quaternion object keeps its real part and its ``i``, ``j``, ``k``
coefficients in separate real arrays (struct of arrays).  Products are
assembled from real kernels through the Hamilton multiplication table,
so dense matrices use BLAS and sparse matrices use ``scipy.sparse``.

The inner product of two vectors is ``<w, v> = sum(conj(v_i) * w_i)``.
It is linear under right scalar multiplication in its first argument,
``<w a, v> = <w, v> a``, which makes ``Q^n`` a right quaternionic Hilbert
space; every linear combination in this package therefore multiplies
vectors by scalars from the right.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from numbers import Real

import numpy as np
import scipy.sparse as sp

from .errors import DimensionError, DivisionByZero, InvalidParameter, StructureError

__all__ = [
    "Quaternion",
    "QVector",
    "QMatrix",
    "qmul",
    "qinv",
    "inner",
    "matvec",
    "matmat",
    "vnorm",
    "fnorm",
    "to_real_counterpart",
    "from_real_counterpart",
    "left_matrix",
    "right_matrix",
    "hamilton",
    "random_qmatrix",
    "random_qvector",
]

# e_a * e_b = sign * e_c for the basis (1, i, j, k)
_TABLE = (
    (0, 0, +1, 0), (0, 1, +1, 1), (0, 2, +1, 2), (0, 3, +1, 3),
    (1, 0, +1, 1), (1, 1, -1, 0), (1, 2, +1, 3), (1, 3, -1, 2),
    (2, 0, +1, 2), (2, 1, -1, 3), (2, 2, -1, 0), (2, 3, +1, 1),
    (3, 0, +1, 3), (3, 1, +1, 2), (3, 2, -1, 1), (3, 3, -1, 0),
)

# STRUCT[a, b, c]: coefficient of e_c in e_a * e_b
STRUCT = np.zeros((4, 4, 4))
for _a, _b, _s, _c in _TABLE:
    STRUCT[_a, _b, _c] = _s

CONJ_SIGN = np.array([1.0, -1.0, -1.0, -1.0])


def hamilton(a, b, op=np.multiply):
    """Hamilton product of two four-part operands.

    ``a`` and ``b`` are length-4 sequences of real arrays (entries of ``a``
    may be ``None`` for an all-zero part).  ``op`` combines one part of ``a``
    with one part of ``b``: ``np.multiply`` gives the entrywise product,
    ``operator.matmul`` the matrix product.
    """
    out = [None] * 4
    for ia, ib, s, c in _TABLE:
        if a[ia] is None or b[ib] is None:
            continue
        term = op(a[ia], b[ib])
        if out[c] is None:
            out[c] = term if s > 0 else -term
        elif s > 0:
            out[c] = out[c] + term
        else:
            out[c] = out[c] - term
    return out


def left_matrix(q) -> np.ndarray:
    """4x4 real matrix L with stack(q p) = L @ stack(p)."""
    q0, q1, q2, q3 = _as4(q)
    return np.array([
        [q0, -q1, -q2, -q3],
        [q1, q0, -q3, q2],
        [q2, q3, q0, -q1],
        [q3, -q2, q1, q0],
    ])


def right_matrix(q) -> np.ndarray:
    """4x4 real matrix R with stack(p q) = R @ stack(p)."""
    q0, q1, q2, q3 = _as4(q)
    return np.array([
        [q0, -q1, -q2, -q3],
        [q1, q0, q3, -q2],
        [q2, -q3, q0, q1],
        [q3, q2, -q1, q0],
    ])


def _as4(q):
    if isinstance(q, Quaternion):
        return q.w0, q.w1, q.w2, q.w3
    if isinstance(q, Real):
        return float(q), 0.0, 0.0, 0.0
    arr = np.asarray(q, dtype=float)
    if arr.shape != (4,):
        raise DimensionError(f"expected four quaternion components, got shape {arr.shape}")
    return tuple(float(t) for t in arr)


@dataclass(frozen=True)
class Quaternion:
    """A quaternion w0 + w1 i + w2 j + w3 k."""

    w0: float = 0.0
    w1: float = 0.0
    w2: float = 0.0
    w3: float = 0.0

    def __post_init__(self):
        for name in ("w0", "w1", "w2", "w3"):
            object.__setattr__(self, name, float(getattr(self, name)))

    @classmethod
    def from_array(cls, arr) -> "Quaternion":
        return cls(*_as4(arr))

    def as_array(self) -> np.ndarray:
        return np.array([self.w0, self.w1, self.w2, self.w3])

    def conj(self) -> "Quaternion":
        return Quaternion(self.w0, -self.w1, -self.w2, -self.w3)

    def norm2(self) -> float:
        return self.w0 ** 2 + self.w1 ** 2 + self.w2 ** 2 + self.w3 ** 2

    def __abs__(self) -> float:
        return math.sqrt(self.norm2())

    def inverse(self) -> "Quaternion":
        n2 = self.norm2()
        if n2 == 0.0:
            raise DivisionByZero("the zero quaternion has no inverse")
        c = self.conj()
        return Quaternion(c.w0 / n2, c.w1 / n2, c.w2 / n2, c.w3 / n2)

    def is_pure(self) -> bool:
        return self.w0 == 0.0

    def __add__(self, other):
        o = _coerce(other)
        if o is None:
            return NotImplemented
        return Quaternion(self.w0 + o.w0, self.w1 + o.w1, self.w2 + o.w2, self.w3 + o.w3)

    __radd__ = __add__

    def __sub__(self, other):
        o = _coerce(other)
        if o is None:
            return NotImplemented
        return Quaternion(self.w0 - o.w0, self.w1 - o.w1, self.w2 - o.w2, self.w3 - o.w3)

    def __rsub__(self, other):
        o = _coerce(other)
        if o is None:
            return NotImplemented
        return o - self

    def __neg__(self):
        return Quaternion(-self.w0, -self.w1, -self.w2, -self.w3)

    def __mul__(self, other):
        if isinstance(other, Real):
            s = float(other)
            return Quaternion(self.w0 * s, self.w1 * s, self.w2 * s, self.w3 * s)
        if isinstance(other, Quaternion):
            return qmul(self, other)
        return NotImplemented

    def __rmul__(self, other):
        if isinstance(other, Real):
            return self * other
        return NotImplemented

    def __truediv__(self, other):
        if isinstance(other, Real):
            if other == 0:
                raise DivisionByZero("division of a quaternion by zero")
            return self * (1.0 / float(other))
        return NotImplemented

    def isclose(self, other, atol: float = 1e-12) -> bool:
        o = _coerce(other)
        return bool(np.allclose(self.as_array(), o.as_array(), rtol=0.0, atol=atol))

    def __repr__(self) -> str:
        return f"Quaternion({self.w0!r}, {self.w1!r}, {self.w2!r}, {self.w3!r})"


def _coerce(x):
    if isinstance(x, Quaternion):
        return x
    if isinstance(x, Real):
        return Quaternion(float(x))
    return None


ONE = Quaternion(1.0)
I = Quaternion(0.0, 1.0)
J = Quaternion(0.0, 0.0, 1.0)
K = Quaternion(0.0, 0.0, 0.0, 1.0)


def qmul(a: Quaternion, b: Quaternion) -> Quaternion:
    """Hamilton product ``a * b``."""
    a0, a1, a2, a3 = _as4(a)
    b0, b1, b2, b3 = _as4(b)
    return Quaternion(
        a0 * b0 - a1 * b1 - a2 * b2 - a3 * b3,
        a0 * b1 + a1 * b0 + a2 * b3 - a3 * b2,
        a0 * b2 - a1 * b3 + a2 * b0 + a3 * b1,
        a0 * b3 + a1 * b2 - a2 * b1 + a3 * b0,
    )


def qinv(q: Quaternion) -> Quaternion:
    """Inverse ``conj(q) / |q|^2``; raises :class:`DivisionByZero` for zero."""
    return _coerce(q).inverse()


class QVector:
    """Quaternion column vector held as a read-only ``(4, n)`` real array."""

    __slots__ = ("parts",)

    def __init__(self, parts):
        arr = np.array(parts, dtype=float)
        if arr.ndim != 2 or arr.shape[0] != 4:
            raise DimensionError(f"QVector parts must have shape (4, n), got {arr.shape}")
        arr.flags.writeable = False
        self.parts = arr

    @classmethod
    def _wrap(cls, arr: np.ndarray) -> "QVector":
        # takes ownership of a freshly computed (4, n) array without copying
        obj = cls.__new__(cls)
        arr = np.asarray(arr, dtype=float)
        arr.flags.writeable = False
        obj.parts = arr
        return obj

    @classmethod
    def from_components(cls, w0=None, w1=None, w2=None, w3=None, n=None) -> "QVector":
        comps = [w0, w1, w2, w3]
        if n is None:
            lens = {np.size(c) for c in comps if c is not None}
            if len(lens) != 1:
                raise DimensionError("components have inconsistent or undetermined length")
            n = lens.pop()
        out = np.zeros((4, n))
        for k, c in enumerate(comps):
            if c is not None:
                c = np.asarray(c, dtype=float).ravel()
                if c.size != n:
                    raise DimensionError("component length mismatch")
                out[k] = c
        return cls._wrap(out)

    @classmethod
    def zeros(cls, n: int) -> "QVector":
        return cls._wrap(np.zeros((4, n)))

    @classmethod
    def full(cls, n: int, q) -> "QVector":
        return cls._wrap(np.repeat(np.array(_as4(q))[:, None], n, axis=1))

    @classmethod
    def from_real(cls, stacked) -> "QVector":
        """Inverse of :meth:`to_real`: split a length-4n real vector."""
        s = np.asarray(stacked, dtype=float).ravel()
        if s.size % 4:
            raise DimensionError("stacked length must be a multiple of 4")
        return cls(s.reshape(4, -1))

    @property
    def n(self) -> int:
        return self.parts.shape[1]

    def __len__(self) -> int:
        return self.parts.shape[1]

    def __getitem__(self, idx):
        if isinstance(idx, (int, np.integer)):
            return Quaternion(*self.parts[:, idx])
        return QVector._wrap(self.parts[:, idx].copy())

    def to_real(self) -> np.ndarray:
        """Stacked real vector [x0; x1; x2; x3] (first column of the real counterpart)."""
        return self.parts.ravel().copy()

    def moduli(self) -> np.ndarray:
        return np.sqrt(np.sum(self.parts ** 2, axis=0))

    def conj(self) -> "QVector":
        return QVector._wrap(self.parts * CONJ_SIGN[:, None])

    def norm(self, p=2) -> float:
        return vnorm(self, p)

    def inner(self, other: "QVector") -> Quaternion:
        return inner(self, other)

    def is_pure(self) -> bool:
        return not np.any(self.parts[0])

    def __add__(self, other):
        if not isinstance(other, QVector):
            return NotImplemented
        _same_len(self, other)
        return QVector._wrap(self.parts + other.parts)

    def __sub__(self, other):
        if not isinstance(other, QVector):
            return NotImplemented
        _same_len(self, other)
        return QVector._wrap(self.parts - other.parts)

    def __neg__(self):
        return QVector._wrap(-self.parts)

    def __mul__(self, other):
        # right scalar multiplication v * a
        if isinstance(other, Real):
            return QVector._wrap(self.parts * float(other))
        if isinstance(other, Quaternion):
            return QVector._wrap(right_matrix(other) @ self.parts)
        return NotImplemented

    def __rmul__(self, other):
        # left scalar multiplication a * v
        if isinstance(other, Real):
            return QVector._wrap(self.parts * float(other))
        if isinstance(other, Quaternion):
            return QVector._wrap(left_matrix(other) @ self.parts)
        return NotImplemented

    def __truediv__(self, other):
        if isinstance(other, Real):
            if other == 0:
                raise DivisionByZero("division of a vector by zero")
            return QVector._wrap(self.parts / float(other))
        return NotImplemented

    def allclose(self, other: "QVector", rtol=1e-12, atol=1e-12) -> bool:
        return self.parts.shape == other.parts.shape and bool(
            np.allclose(self.parts, other.parts, rtol=rtol, atol=atol))

    def __repr__(self) -> str:
        return f"QVector(n={self.n})"


def _same_len(a: QVector, b: QVector):
    if a.n != b.n:
        raise DimensionError(f"length mismatch: {a.n} vs {b.n}")


def inner(w: QVector, v: QVector) -> Quaternion:
    """``<w, v> = sum_i conj(v_i) w_i``."""
    _same_len(w, v)
    gram = (v.parts * CONJ_SIGN[:, None]) @ w.parts.T
    return Quaternion(*np.einsum("ab,abc->c", gram, STRUCT))


def inner_parts(w: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Raw-array form of :func:`inner` returning the four components."""
    gram = (v * CONJ_SIGN[:, None]) @ w.T
    return np.einsum("ab,abc->c", gram, STRUCT)


def vnorm(v: QVector, p=2) -> float:
    """Vector p-norm of the entry moduli, ``p >= 1`` (``np.inf`` allowed)."""
    if not p >= 1:
        raise InvalidParameter(f"p-norm requires p >= 1, got {p}")
    if p == 2:
        return float(np.sqrt(np.sum(v.parts ** 2)))
    return float(np.linalg.norm(v.moduli(), ord=p))


def _is_sparse(a) -> bool:
    return sp.issparse(a)


class QMatrix:
    """Quaternion matrix A0 + A1 i + A2 j + A3 k.

    Each part is a dense 2-D array, a ``scipy.sparse`` matrix, or ``None``
    for an all-zero part (products skip ``None`` parts).  Sparse parts are
    held in compressed-column form.
    """

    __slots__ = ("parts", "shape")

    def __init__(self, A0=None, A1=None, A2=None, A3=None, shape=None):
        raw = [A0, A1, A2, A3]
        sparse = any(_is_sparse(p) for p in raw if p is not None)
        parts = []
        for p in raw:
            if p is None:
                parts.append(None)
                continue
            if sparse:
                p = sp.csc_matrix(p, dtype=float)
                p.eliminate_zeros()
                if p.nnz == 0:
                    if shape is None:
                        shape = p.shape
                    elif p.shape != tuple(shape):
                        raise DimensionError(f"part shapes disagree: {p.shape} vs {tuple(shape)}")
                    parts.append(None)
                    continue
            else:
                p = np.array(p, dtype=float)
                if p.ndim != 2:
                    raise DimensionError("matrix parts must be two-dimensional")
                p.flags.writeable = False
            if shape is None:
                shape = p.shape
            elif p.shape != tuple(shape):
                raise DimensionError(f"part shapes disagree: {p.shape} vs {tuple(shape)}")
            parts.append(p)
        if shape is None:
            raise DimensionError("cannot infer the shape of an all-zero matrix; pass shape=")
        self.shape = (int(shape[0]), int(shape[1]))
        self.parts = tuple(parts)

    @classmethod
    def from_dense(cls, arr) -> "QMatrix":
        arr = np.asarray(arr, dtype=float)
        if arr.ndim != 3 or arr.shape[0] != 4:
            raise DimensionError("dense quaternion array must have shape (4, m, n)")
        return cls(*arr)

    @classmethod
    def zeros(cls, m: int, n: int) -> "QMatrix":
        return cls(shape=(m, n))

    @classmethod
    def identity(cls, n: int, q=1.0, sparse: bool = False) -> "QMatrix":
        comps = _as4(q)
        mk = (lambda c: sp.identity(n, format="csc") * c) if sparse else (lambda c: np.eye(n) * c)
        return cls(*[mk(c) if c != 0 else None for c in comps], shape=(n, n))

    @classmethod
    def diag(cls, v: QVector, sparse: bool = True) -> "QMatrix":
        mk = (lambda c: sp.diags(c, format="csc")) if sparse else np.diag
        return cls(*[mk(c) if np.any(c) else None for c in v.parts], shape=(v.n, v.n))

    @property
    def is_sparse(self) -> bool:
        return any(_is_sparse(p) for p in self.parts if p is not None)

    @property
    def is_real(self) -> bool:
        return all(p is None for p in self.parts[1:])

    def part(self, k: int):
        """Part ``k`` materialized (zeros instead of ``None``)."""
        p = self.parts[k]
        if p is not None:
            return p
        return sp.csc_matrix(self.shape) if self.is_sparse else np.zeros(self.shape)

    def dense(self) -> np.ndarray:
        out = np.zeros((4,) + self.shape)
        for k, p in enumerate(self.parts):
            if p is not None:
                out[k] = p.toarray() if _is_sparse(p) else p
        return out

    def to_sparse(self) -> "QMatrix":
        return QMatrix(*[None if p is None else sp.csc_matrix(p) for p in self.parts],
                       shape=self.shape)

    def _apply(self, xp: np.ndarray) -> np.ndarray:
        # xp has shape (4, n) or (4, n, k)
        res = hamilton(self.parts, list(xp), op=lambda a, b: a @ b)
        out = np.zeros((4, self.shape[0]) + xp.shape[2:])
        for c in range(4):
            if res[c] is not None:
                out[c] = res[c]
        return out

    def matvec(self, x: QVector) -> QVector:
        if x.n != self.shape[1]:
            raise DimensionError(f"matvec: matrix is {self.shape}, vector has length {x.n}")
        return QVector._wrap(self._apply(x.parts))

    def matmat(self, other: "QMatrix") -> "QMatrix":
        if other.shape[0] != self.shape[1]:
            raise DimensionError(f"matmat: {self.shape} @ {other.shape}")
        if self.is_sparse and other.is_sparse:
            res = hamilton(self.parts, other.parts, op=lambda a, b: a @ b)
            return QMatrix(*res, shape=(self.shape[0], other.shape[1]))
        return QMatrix.from_dense(self._apply(other.dense()))

    def __matmul__(self, other):
        if isinstance(other, QVector):
            return self.matvec(other)
        if isinstance(other, QMatrix):
            return self.matmat(other)
        return NotImplemented

    def conj_transpose(self) -> "QMatrix":
        parts = []
        for k, p in enumerate(self.parts):
            if p is None:
                parts.append(None)
            else:
                parts.append(p.T if k == 0 else -p.T)
        return QMatrix(*parts, shape=(self.shape[1], self.shape[0]))

    @property
    def H(self) -> "QMatrix":
        return self.conj_transpose()

    def __add__(self, other):
        if not isinstance(other, QMatrix):
            return NotImplemented
        if other.shape != self.shape:
            raise DimensionError("shape mismatch in matrix sum")
        parts = [a if b is None else b if a is None else a + b
                 for a, b in zip(self.parts, other.parts)]
        return QMatrix(*parts, shape=self.shape)

    def __neg__(self):
        return QMatrix(*[None if p is None else -p for p in self.parts], shape=self.shape)

    def __sub__(self, other):
        if not isinstance(other, QMatrix):
            return NotImplemented
        return self + (-other)

    def __mul__(self, other):
        # right scalar multiplication A * a
        if isinstance(other, Real):
            return QMatrix(*[None if p is None else p * float(other) for p in self.parts],
                           shape=self.shape)
        if isinstance(other, Quaternion):
            return self._mix(right_matrix(other))
        return NotImplemented

    def __rmul__(self, other):
        if isinstance(other, Real):
            return self * other
        if isinstance(other, Quaternion):
            return self._mix(left_matrix(other))
        return NotImplemented

    def _mix(self, M: np.ndarray) -> "QMatrix":
        parts = []
        for c in range(4):
            acc = None
            for a in range(4):
                p = self.parts[a]
                if p is None or M[c, a] == 0:
                    continue
                acc = p * M[c, a] if acc is None else acc + p * M[c, a]
            parts.append(acc)
        return QMatrix(*parts, shape=self.shape)

    def fnorm(self) -> float:
        return fnorm(self)

    def diagonal(self) -> QVector:
        n = min(self.shape)
        out = np.zeros((4, n))
        for k, p in enumerate(self.parts):
            if p is not None:
                out[k] = p.diagonal()
        return QVector._wrap(out)

    def submatrix(self, k: int) -> "QMatrix":
        """Leading principal ``k x k`` block."""
        if k > min(self.shape):
            raise DimensionError(f"cannot take order-{k} principal block of {self.shape}")
        return QMatrix(*[None if p is None else p[:k, :k] for p in self.parts], shape=(k, k))

    def real_counterpart(self):
        return to_real_counterpart(self)

    def allclose(self, other: "QMatrix", rtol=1e-12, atol=1e-12) -> bool:
        return self.shape == other.shape and bool(
            np.allclose(self.dense(), other.dense(), rtol=rtol, atol=atol))

    def __repr__(self) -> str:
        kind = "sparse" if self.is_sparse else "dense"
        return f"QMatrix(shape={self.shape}, {kind})"


def matvec(A: QMatrix, x: QVector) -> QVector:
    return A.matvec(x)


def matmat(A: QMatrix, B: QMatrix) -> QMatrix:
    return A.matmat(B)


def fnorm(A: QMatrix) -> float:
    total = 0.0
    for p in A.parts:
        if p is None:
            continue
        if _is_sparse(p):
            total += float(np.sum(p.data ** 2))
        else:
            total += float(np.sum(p ** 2))
    return math.sqrt(total)


# block (row, col) -> (part, sign) in the real counterpart layout
_RC_LAYOUT = (
    ((0, 1), (1, -1), (2, -1), (3, -1)),
    ((1, 1), (0, 1), (3, -1), (2, 1)),
    ((2, 1), (3, 1), (0, 1), (1, -1)),
    ((3, 1), (2, -1), (1, 1), (0, 1)),
)


def to_real_counterpart(A):
    """Real 4m x 4n matrix with first block row [A0, -A1, -A2, -A3].

    Accepts a :class:`QMatrix` or a :class:`QVector` (treated as n x 1).
    Sparse input gives a sparse CSC result.
    """
    if isinstance(A, QVector):
        A = QMatrix(*A.parts[:, :, None])
    if A.is_sparse:
        blocks = [[None] * 4 for _ in range(4)]
        for r in range(4):
            for c in range(4):
                k, s = _RC_LAYOUT[r][c]
                p = A.part(k)
                blocks[r][c] = p if s > 0 else -p
        return sp.bmat(blocks, format="csc")
    D = A.dense()
    return np.block([[s * D[k] for k, s in row] for row in _RC_LAYOUT])


def from_real_counterpart(R, tol: float = 1e-12) -> QMatrix:
    """Inverse of :func:`to_real_counterpart`.

    Raises :class:`StructureError` unless ``R`` matches the block sign
    pattern to relative Frobenius tolerance ``tol``.
    """
    rows, cols = R.shape
    if rows % 4 or cols % 4:
        raise StructureError(f"real counterpart shape {R.shape} is not divisible into 4x4 blocks")
    m, n = rows // 4, cols // 4
    sparse = sp.issparse(R)
    if sparse:
        R = sp.csc_matrix(R)
    parts = [R[k * m:(k + 1) * m, 0:n] for k in range(4)]
    if sparse:
        Q = QMatrix(*parts, shape=(m, n)).to_sparse()
        diff = sp.linalg.norm(to_real_counterpart(Q) - R) if Q.is_sparse else sp.linalg.norm(R)
        scale = sp.linalg.norm(R)
    else:
        R = np.asarray(R, dtype=float)
        Q = QMatrix(*parts)
        diff = np.linalg.norm(to_real_counterpart(Q) - R)
        scale = np.linalg.norm(R)
    if diff > tol * max(scale, 1.0):
        raise StructureError(f"matrix violates the quaternion block pattern (defect {diff:.3e})")
    return Q


def random_qmatrix(m: int, n: int, rng=None) -> QMatrix:
    rng = np.random.default_rng(rng)
    return QMatrix.from_dense(rng.standard_normal((4, m, n)))


def random_qvector(n: int, rng=None) -> QVector:
    rng = np.random.default_rng(rng)
    return QVector._wrap(rng.standard_normal((4, n)))
