"""Quaternion Arnoldi process and the QGMRES family.

All solvers share one driver.  The Krylov basis lives in preallocated
``(4, n, m+1)`` arrays, so an Arnoldi step is a handful of BLAS calls on
the four real parts.  Linear combinations of basis vectors always
multiply the scalar coefficient from the right, which is what makes the
quaternion inner product consistent with the orthogonalization.

The small Hessenberg least-squares problem is kept in factored form: each
new column is reduced by one orthogonal transformation on an 8x4 real
block of the real counterpart (interleaved ordering), so the minimized
residual norm is available at every step without re-solving.
:func:`solve_hqls` solves the same problem from scratch and serves as the
reference.
"""

from __future__ import annotations

import enum
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.linalg as sla

from .errors import DimensionError, InvalidParameter, PreconditionerError
from .preconditioners import Preconditioner, as_preconditioner
from .quaternion import (
    STRUCT,
    QMatrix,
    QVector,
    inner_parts,
    left_matrix,
    right_matrix,
    to_real_counterpart,
)

__all__ = [
    "Termination",
    "SolverConfig",
    "SolveReport",
    "ArnoldiDecomposition",
    "LinearOperator",
    "arnoldi_step",
    "solve_hqls",
    "HessenbergLSQ",
    "qgmres",
    "qgmres_left",
    "qgmres_right",
    "fqgmres",
    "gmres_real",
    "irfgmres_real",
    "grade",
]

SIDES = ("none", "left", "right", "flexible")


class Termination(str, enum.Enum):
    CONVERGED = "converged"
    MAX_ITER = "max_iter"
    BREAKDOWN = "breakdown"
    STAGNATION = "stagnation"


@dataclass(frozen=True)
class SolverConfig:
    tol: float = 1e-6
    max_iter: int = 1000
    restart: Optional[int] = None
    breakdown_tol: float = 1e-13
    stagnation_steps: int = 20
    stagnation_tol: float = 1e-14
    reorthogonalize: bool = False

    def __post_init__(self):
        if not (self.tol > 0):
            raise InvalidParameter(f"tol must be positive, got {self.tol}")
        if int(self.max_iter) != self.max_iter or self.max_iter < 1:
            raise InvalidParameter(f"max_iter must be a positive integer, got {self.max_iter}")
        if self.restart is not None:
            if self.restart < 1:
                raise InvalidParameter(f"restart must be positive, got {self.restart}")
            if self.restart > self.max_iter:
                raise InvalidParameter("restart cannot exceed max_iter")
        if self.breakdown_tol < 0:
            raise InvalidParameter("breakdown_tol must be nonnegative")


@dataclass
class SolveReport:
    x: QVector
    residual_history: list
    iterations: int
    wall_time: float
    termination: Termination
    residual_kind: str = "true"
    true_residual: float = float("nan")
    reference_norm: float = 1.0
    tol: float = 1e-6
    solver: str = "qgmres"
    cycle_starts: list = field(default_factory=lambda: [0])
    decomposition: Optional["ArnoldiDecomposition"] = None
    objective_history: Optional[list] = None

    @property
    def relative_history(self) -> np.ndarray:
        return np.asarray(self.residual_history) / self.reference_norm

    @property
    def final_residual(self) -> float:
        """Last monitored residual relative to the reference norm."""
        return float(self.residual_history[-1]) / self.reference_norm

    @property
    def converged(self) -> bool:
        if self.termination == Termination.CONVERGED:
            return True
        # a lucky breakdown is a success when the monitored residual is small
        return self.termination == Termination.BREAKDOWN and self.final_residual <= self.tol

    def summary(self) -> str:
        return (
            f"{self.solver}: {self.termination.value} after {self.iterations} iterations, "
            f"relative residual {self.final_residual:.4e} ({self.residual_kind}), "
            f"true residual {self.true_residual:.4e}, {self.wall_time:.3f}s"
        )


@dataclass
class ArnoldiDecomposition:
    """Storage for ``A V_m = V_{m+1} Hbar_m`` (or ``A Z_m = ...`` when flexible).

    ``V`` is ``(4, n, cap+1)``, ``H`` is ``(4, cap+1, cap)`` and only the
    leading ``m`` steps are meaningful.
    """

    V: np.ndarray
    H: np.ndarray
    Z: Optional[np.ndarray] = None
    beta: float = 0.0
    m: int = 0

    @classmethod
    def allocate(cls, n: int, cap: int, flexible: bool = False) -> "ArnoldiDecomposition":
        return cls(
            V=np.zeros((4, n, cap + 1)),
            H=np.zeros((4, cap + 1, cap)),
            Z=np.zeros((4, n, cap)) if flexible else None,
        )

    @classmethod
    def start(cls, r: QVector, cap: int, flexible: bool = False) -> "ArnoldiDecomposition":
        dec = cls.allocate(r.n, cap, flexible)
        dec.beta = r.norm()
        if dec.beta > 0:
            dec.V[:, :, 0] = r.parts / dec.beta
        return dec

    @property
    def capacity(self) -> int:
        return self.H.shape[2]

    def basis(self, k: Optional[int] = None) -> QMatrix:
        k = self.m + 1 if k is None else k
        return QMatrix.from_dense(self.V[:, :, :k])

    def hessenberg(self) -> QMatrix:
        return QMatrix.from_dense(self.H[:, : self.m + 1, : self.m])

    def flexible_basis(self) -> QMatrix:
        return QMatrix.from_dense(self.Z[:, :, : self.m])

    def combine(self, y: np.ndarray, basis: str = "V") -> np.ndarray:
        """``sum_i B_i y_i`` for the V or Z basis, scalars on the right."""
        B = self.V if basis == "V" else self.Z
        k = y.shape[1]
        return _right_combine(B[:, :, :k], y)


def _right_combine(B: np.ndarray, y: np.ndarray) -> np.ndarray:
    # B: (4, n, k) quaternion columns, y: (4, k) coefficients -> sum_i B_i y_i
    out = np.zeros(B.shape[:2])
    for a in range(4):
        for b in range(4):
            c, s = _PROD[a][b]
            out[c] += s * (B[a] @ y[b])
    return out


_PROD = [[None] * 4 for _ in range(4)]
for _a in range(4):
    for _b in range(4):
        _c = int(np.nonzero(STRUCT[_a, _b])[0][0])
        _PROD[_a][_b] = (_c, float(STRUCT[_a, _b, _c]))


class LinearOperator:
    """Matrix-free quaternion operator: ``matvec`` acts on ``(4, n)`` part arrays."""

    def __init__(self, shape, matvec: Callable[[np.ndarray], np.ndarray], fnorm: float = float("nan")):
        self.shape = tuple(shape)
        self._mv = matvec
        self._fnorm = fnorm

    def _apply(self, xp: np.ndarray) -> np.ndarray:
        return self._mv(xp)

    def matvec(self, x: QVector) -> QVector:
        return QVector._wrap(self._mv(x.parts))

    def fnorm(self) -> float:
        return self._fnorm


def _operator(A):
    if isinstance(A, (QMatrix, LinearOperator)):
        return A
    if hasattr(A, "_apply") and hasattr(A, "shape"):
        return A
    raise TypeError(f"unsupported operator type {type(A).__name__}")


def _checked(P: Preconditioner, vp: np.ndarray, j: int) -> np.ndarray:
    z = np.asarray(P.apply_parts(vp, j), dtype=float)
    if z.shape != vp.shape:
        raise DimensionError(f"preconditioner returned shape {z.shape}, expected {vp.shape}")
    if not np.all(np.isfinite(z)):
        raise PreconditionerError(f"preconditioner produced non-finite values at step {j}")
    return z


def arnoldi_step(A, dec: ArnoldiDecomposition, j: int, precond=None, side: str = "none",
                 breakdown_tol: float = 1e-13, reorthogonalize: bool = False) -> bool:
    """Run Arnoldi step ``j`` (0-based): fill column ``j`` of H and ``v_{j+1}``.

    Returns True on breakdown, i.e. when ``h_{j+1,j}`` falls below
    ``breakdown_tol`` times the norm of the new vector before
    orthogonalization.  Modified Gram-Schmidt is used throughout; with
    ``reorthogonalize`` a second pass is made and its coefficients are
    folded into H.
    """
    if side not in SIDES:
        raise InvalidParameter(f"side must be one of {SIDES}, got {side!r}")
    if j >= dec.capacity:
        raise DimensionError("Arnoldi decomposition is full")
    A = _operator(A)
    if side != "none":
        precond = as_preconditioner(precond)
    v = dec.V[:, :, j]
    if side == "none":
        w = A._apply(v)
    elif side == "left":
        w = _checked(precond, A._apply(v), j)
    elif side == "right":
        w = A._apply(_checked(precond, v, j))
    else:
        z = _checked(precond, v, j)
        dec.Z[:, :, j] = z
        w = A._apply(z)
    w = np.array(w, dtype=float)
    w_norm0 = np.linalg.norm(w)
    for i in range(j + 1):
        vi = dec.V[:, :, i]
        h = inner_parts(w, vi)
        dec.H[:, i, j] = h
        w -= right_matrix(h) @ vi
    if reorthogonalize:
        for i in range(j + 1):
            vi = dec.V[:, :, i]
            h = inner_parts(w, vi)
            dec.H[:, i, j] += h
            w -= right_matrix(h) @ vi
    hn = np.linalg.norm(w)
    dec.H[:, j + 1, j] = (hn, 0.0, 0.0, 0.0)
    dec.m = j + 1
    if hn <= breakdown_tol * w_norm0 or hn == 0.0:
        return True
    dec.V[:, :, j + 1] = w / hn
    return False


def solve_hqls(H, beta: float):
    """Minimize ``||beta e1 - H y||`` over quaternion ``y`` via the real counterpart.

    Returns ``(y, resnorm)``; rank deficiency yields the minimum-norm
    minimizer.
    """
    if not isinstance(H, QMatrix):
        H = QMatrix.from_dense(np.asarray(H, dtype=float))
    m1, m = H.shape
    if m < 1:
        raise DimensionError("solve_hqls needs at least one column")
    R = to_real_counterpart(H)
    R = R.toarray() if hasattr(R, "toarray") else np.asarray(R)
    rhs = np.zeros(4 * m1)
    rhs[0] = beta
    ys, *_ = np.linalg.lstsq(R, rhs, rcond=None)
    resnorm = float(np.linalg.norm(rhs - R @ ys))
    return QVector._wrap(ys.reshape(4, m)), resnorm


class HessenbergLSQ:
    """Progressive QR of the Hessenberg matrix in interleaved real form.

    Unknown ``4i + a`` is part ``a`` of ``y_i``; row ``4i + c`` is part
    ``c`` of ``(H y)_i``, so the block ``(i, j)`` is the left
    multiplication matrix of ``h_ij``.  Upper Hessenberg structure means
    one 8x8 orthogonal factor per column annihilates the subdiagonal.
    """

    def __init__(self, beta: float, cap: int):
        self.beta = float(beta)
        self.R = np.zeros((4 * cap, 4 * cap))
        self.g = np.zeros(4 * (cap + 1))
        self.g[0] = beta
        self.Qs = []
        self.m = 0
        self._cols = []

    def add_column(self, hcol: np.ndarray) -> float:
        """Append column ``j = m`` given its ``(4, j+2)`` quaternion entries."""
        j = self.m
        self._cols.append(np.array(hcol[:, : j + 2], dtype=float))
        c = np.zeros((4 * (j + 2), 4))
        for i in range(j + 2):
            c[4 * i: 4 * i + 4] = left_matrix(hcol[:, i])
        for k, Q in enumerate(self.Qs):
            c[4 * k: 4 * k + 8] = Q.T @ c[4 * k: 4 * k + 8]
        Q, Rb = np.linalg.qr(c[4 * j: 4 * j + 8], mode="complete")
        c[4 * j: 4 * j + 8] = Rb
        self.R[: 4 * (j + 1), 4 * j: 4 * j + 4] = c[: 4 * (j + 1)]
        self.g[4 * j: 4 * j + 8] = Q.T @ self.g[4 * j: 4 * j + 8]
        self.Qs.append(Q)
        self.m += 1
        return self.resnorm()

    def resnorm(self) -> float:
        m = self.m
        return float(np.linalg.norm(self.g[4 * m: 4 * m + 4]))

    def _well_conditioned(self) -> bool:
        d = np.abs(np.diag(self.R[: 4 * self.m, : 4 * self.m]))
        return d.size > 0 and d.min() > 1e-13 * max(d.max(), 1e-300)

    def solve(self) -> np.ndarray:
        """Coefficients ``y`` as a ``(4, m)`` part array."""
        m = self.m
        if self._well_conditioned():
            ys = sla.solve_triangular(self.R[: 4 * m, : 4 * m], self.g[: 4 * m])
            return ys.reshape(m, 4).T
        H = np.zeros((4, m + 1, m))
        for j, col in enumerate(self._cols):
            H[:, : j + 2, j] = col
        y, _ = solve_hqls(H, self.beta)
        return np.array(y.parts)


def _as_qvector(b, n=None) -> QVector:
    if isinstance(b, QVector):
        return b
    arr = np.asarray(b, dtype=float)
    if arr.ndim == 2 and arr.shape[0] == 4:
        return QVector(arr)
    if arr.ndim == 1:
        return QVector.from_components(arr)
    raise DimensionError(f"cannot interpret array of shape {arr.shape} as a quaternion vector")


def _solve(A, b, x0, cfg: Optional[SolverConfig], side: str, P, name: str) -> SolveReport:
    t0 = time.perf_counter()
    cfg = cfg or SolverConfig()
    A = _operator(A)
    n, ncol = A.shape
    if n != ncol:
        raise DimensionError(f"matrix must be square, got {A.shape}")
    b = _as_qvector(b)
    if b.n != n:
        raise DimensionError(f"right-hand side has length {b.n}, matrix is {n}x{n}")
    x = np.zeros((4, n)) if x0 is None else np.array(_as_qvector(x0).parts, dtype=float)
    if x.shape != (4, n):
        raise DimensionError("initial guess has the wrong length")
    P = as_preconditioner(P).fresh() if side != "none" else None

    bp = np.array(b.parts)
    ref = np.linalg.norm(_checked(P, bp, 0)) if side == "left" else np.linalg.norm(bp)
    kind = "preconditioned" if side == "left" else "true"
    if ref == 0.0:
        ref = 1.0
        if side != "left" and x0 is None:
            # b = 0 with zero start: the solution is exactly zero
            return SolveReport(QVector._wrap(x), [0.0], 0, time.perf_counter() - t0,
                               Termination.CONVERGED, kind, 0.0, 1.0, cfg.tol, name)
    target = cfg.tol * ref
    cap_total = cfg.restart or cfg.max_iter
    history = []
    cycle_starts = []
    its = 0
    stall = 0
    termination = None
    dec = None
    while termination is None:
        r = bp - A._apply(x)
        if side == "left":
            r = _checked(P, r, its)
        beta = float(np.linalg.norm(r))
        if not history:
            history.append(beta)
        if beta <= target:
            termination = Termination.CONVERGED
            break
        if its >= cfg.max_iter:
            termination = Termination.MAX_ITER
            break
        cycle_starts.append(its)
        cap = min(cap_total, cfg.max_iter - its)
        dec = ArnoldiDecomposition.allocate(n, cap, flexible=(side == "flexible"))
        dec.beta = beta
        dec.V[:, :, 0] = r / beta
        lsq = HessenbergLSQ(beta, cap)
        for j in range(cap):
            broke = arnoldi_step(A, dec, j, P, side, cfg.breakdown_tol, cfg.reorthogonalize)
            res = lsq.add_column(dec.H[:, : j + 2, j])
            if broke:
                # a near-zero h_{j+1,j} can leave H_j singular; the progressive
                # estimate is then unreliable, so measure the least-squares residual
                e1 = np.zeros((4, j + 2))
                e1[0, 0] = beta
                res = float(np.linalg.norm(e1 - _hess_times(dec.H[:, : j + 2, : j + 1], lsq.solve())))
            its += 1
            prev = history[-1]
            history.append(res)
            if side == "flexible" and P.needs_iterate and not (res <= target or broke):
                y = lsq.solve()
                xj = x + dec.combine(y, "Z")
                e1 = np.zeros((4, j + 2))
                e1[0, 0] = beta
                coef = e1 - _hess_times(dec.H[:, : j + 2, : j + 1], y)
                rj = dec.combine(coef, "V")
                P.update(QVector._wrap(xj), QVector._wrap(rj), j + 1)
            if res <= target:
                termination = Termination.CONVERGED
            elif broke:
                termination = Termination.BREAKDOWN
            else:
                stall = stall + 1 if prev - res < cfg.stagnation_tol * prev else 0
                if stall >= cfg.stagnation_steps:
                    termination = Termination.STAGNATION
            if termination is not None:
                break
        y = lsq.solve()
        if side in ("none", "left"):
            x = x + dec.combine(y, "V")
        elif side == "right":
            x = x + _checked(P, dec.combine(y, "V"), 0)
        else:
            x = x + dec.combine(y, "Z")
        if termination is None and its >= cfg.max_iter:
            termination = Termination.MAX_ITER
    true_res = float(np.linalg.norm(bp - A._apply(x)))
    return SolveReport(
        x=QVector._wrap(x),
        residual_history=history,
        iterations=its,
        wall_time=time.perf_counter() - t0,
        termination=termination,
        residual_kind=kind,
        true_residual=true_res,
        reference_norm=ref,
        tol=cfg.tol,
        solver=name,
        cycle_starts=cycle_starts or [0],
        decomposition=dec,
    )


def _hess_times(H: np.ndarray, y: np.ndarray) -> np.ndarray:
    # (4, m+1, m) quaternion Hessenberg times (4, m) coefficients
    out = np.zeros((4, H.shape[1]))
    for a in range(4):
        for b in range(4):
            c, s = _PROD[a][b]
            out[c] += s * (H[a] @ y[b])
    return out


def qgmres(A, b, x0=None, cfg: Optional[SolverConfig] = None) -> SolveReport:
    """Quaternion GMRES: minimize ``||b - A x||`` over ``x0 + K_m(A, r0)``."""
    return _solve(A, b, x0, cfg, "none", None, "qgmres")


def qgmres_left(A, b, x0=None, P=None, cfg: Optional[SolverConfig] = None) -> SolveReport:
    """Left-preconditioned QGMRES; monitors ``||P^{-1}(b - A x)||``."""
    return _solve(A, b, x0, cfg, "left", P, "qgmres_left")


def qgmres_right(A, b, x0=None, P=None, cfg: Optional[SolverConfig] = None) -> SolveReport:
    """Right-preconditioned QGMRES; ``x_m = x0 + P^{-1} V_m y_m``."""
    return _solve(A, b, x0, cfg, "right", P, "qgmres_right")


def fqgmres(A, b, x0=None, P_seq=None, cfg: Optional[SolverConfig] = None) -> SolveReport:
    """Flexible QGMRES; the preconditioner may change every step and ``x_m = x0 + Z_m y_m``."""
    return _solve(A, b, x0, cfg, "flexible", P_seq, "fqgmres")


def _real_system(A: QMatrix, b, x0):
    R = to_real_counterpart(A)
    rb = QVector.from_components(_as_qvector(b).to_real())
    rx0 = None if x0 is None else QVector.from_components(_as_qvector(x0).to_real())
    return QMatrix(R, shape=R.shape), rb, rx0


def gmres_real(A: QMatrix, b: QVector, x0=None, cfg: Optional[SolverConfig] = None) -> SolveReport:
    """Plain real GMRES on the real counterpart system ``R(A) stack(x) = stack(b)``.

    The baseline that ignores quaternion structure: its Krylov space is
    spanned over the reals, so it usually needs more iterations.
    """
    RA, rb, rx0 = _real_system(A, b, x0)
    rep = _solve(RA, rb, rx0, cfg, "none", None, "gmres_real")
    rep.x = QVector.from_real(rep.x.parts[0])
    return rep


def irfgmres_real(A: QMatrix, b: QVector, x0=None, cfg: Optional[SolverConfig] = None,
                  floor: float = 1e-12) -> SolveReport:
    """Generic reweighted flexible GMRES on the real counterpart system.

    The flexible preconditioner is ``diag(sqrt|x_j|)`` built from the
    current real iterate, as in hybrid flexible GMRES for sparse
    solutions.  Like :func:`gmres_real` it works in real arithmetic.
    """
    from .preconditioners import IterateSqrtWeights

    RA, rb, rx0 = _real_system(A, b, x0)
    rep = _solve(RA, rb, rx0, cfg, "flexible", IterateSqrtWeights(floor=floor), "irfgmres_real")
    rep.x = QVector.from_real(rep.x.parts[0])
    return rep


def grade(A, v: QVector, tol: float = 1e-10, max_grade: Optional[int] = None) -> int:
    """Smallest ``mu`` with ``v, Av, ..., A^mu v`` right-linearly dependent.

    Works on the real counterparts of the Krylov vectors: a quaternion
    vector spans a 4-dimensional real space under right multiplication,
    so the grade is reached when the real rank stops growing by four.
    """
    A = _operator(A)
    v = _as_qvector(v)
    if v.norm() == 0:
        raise InvalidParameter("grade needs a nonzero vector")
    n = v.n
    limit = n if max_grade is None else min(max_grade, n)
    cols = []
    k = v.parts / v.norm()
    for mu in range(0, limit + 1):
        cols.append(to_real_counterpart(QVector._wrap(k)))
        M = np.hstack(cols)
        s = np.linalg.svd(M, compute_uv=False)
        rank = int(np.sum(s > tol * s[0]))
        if rank < 4 * len(cols):
            return mu
        k = A._apply(k)
        nk = np.linalg.norm(k)
        if nk == 0:
            return mu + 1
        k = k / nk
    return limit
