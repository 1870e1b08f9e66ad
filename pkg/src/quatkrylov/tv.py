"""Quaternion total variation: difference operators, IRN weights and the QTV solvers.

Images are stacked column by column into quaternion vectors of length
``N = n*n``.  The forward difference ``D1d`` is ``(n-1) x n`` with rows
``[1, -1]``; ``D_h = kron(D1d, I)`` differences neighbouring columns and
``D_v = kron(I, D1d)`` neighbouring rows, each with ``n(n-1)`` rows.  A
one-dimensional stack (just ``D1d``) serves signals and filter taps.

The total variation is approximated by reweighted quadratic penalties
``||W D x||^2`` with ``w_i = (g_i + eps^2)^(-1/4)`` and ``g_i`` the squared
gradient modulus, so that ``||W D x||^2`` reproduces ``QTV(x)`` when
``eps`` is small.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import DimensionError, InvalidParameter
from .krylov import (
    ArnoldiDecomposition,
    SolveReport,
    SolverConfig,
    Termination,
    _as_qvector,
    _hess_times,
    _operator,
    _right_combine,
    arnoldi_step,
    fqgmres,
)
from .preconditioners import Preconditioner
from .quaternion import CONJ_SIGN, STRUCT, QMatrix, QVector, to_real_counterpart

__all__ = [
    "DifferenceStack",
    "IRNWeights",
    "QTVConfig",
    "WeightedDifference",
    "TVPreconditioner",
    "d1d",
    "qtv",
    "ctv_norm",
    "gradient_tensor",
    "psi_map",
    "psi_inverse",
    "build_weights",
    "apply_p_pinv",
    "quaternion_gram",
    "quaternion_cholesky",
    "triangular_factor",
    "solve_reduced",
    "solve_reduced_direct",
    "tv_objective",
    "qtv_fqgmres",
    "qtv_fqgmres_improved",
]


def d1d(n: int) -> sp.csr_matrix:
    """Forward difference, ``(n-1) x n`` with rows ``[1, -1]``."""
    if n < 2:
        raise DimensionError("difference operator needs at least two samples")
    return sp.diags([np.ones(n - 1), -np.ones(n - 1)], [0, 1], shape=(n - 1, n), format="csr")


@dataclass
class DifferenceStack:
    """Stack of real difference operators sharing the row count ``Ntilde``."""

    shape: tuple
    ops: list

    @classmethod
    def image(cls, n: int) -> "DifferenceStack":
        D = d1d(n)
        I = sp.identity(n, format="csr")
        return cls((n, n), [sp.kron(D, I, format="csr"), sp.kron(I, D, format="csr")])

    @classmethod
    def signal(cls, length: int) -> "DifferenceStack":
        return cls((length,), [d1d(length)])

    @classmethod
    def for_length(cls, N: int) -> "DifferenceStack":
        """Square image stack when ``N`` is a perfect square, else a 1-D stack."""
        n = math.isqrt(N)
        if n * n == N and n >= 2:
            return cls.image(n)
        return cls.signal(N)

    @property
    def n(self) -> int:
        return self.shape[0]

    @property
    def N(self) -> int:
        return int(np.prod(self.shape))

    @property
    def Ntilde(self) -> int:
        return self.ops[0].shape[0]

    @property
    def D_h(self):
        return self.ops[0]

    @property
    def D_v(self):
        if len(self.ops) < 2:
            raise DimensionError("a 1-D stack has no vertical difference")
        return self.ops[1]

    @property
    def D_hv(self) -> sp.csr_matrix:
        return sp.vstack(self.ops, format="csr")

    def _check(self, parts: np.ndarray):
        if parts.shape[-1] != self.N:
            raise DimensionError(f"vector length {parts.shape[-1]} does not match N={self.N}")

    def gradients(self, xp: np.ndarray) -> np.ndarray:
        """``(nops, 4, Ntilde)`` array of ``D_k`` applied to each part."""
        self._check(xp)
        return np.stack([(D @ xp.T).T for D in self.ops])

    def apply(self, xp: np.ndarray) -> np.ndarray:
        """``D_hv x`` as a ``(4, nops*Ntilde)`` part array."""
        self._check(xp)
        return (self.D_hv @ xp.T).T

    def grad_mag2(self, xp: np.ndarray) -> np.ndarray:
        g = self.gradients(xp)
        return np.sum(g ** 2, axis=(0, 1))


def _vec(x) -> np.ndarray:
    return _as_qvector(x).parts


def _stack_for(x_len: int, n: Optional[int]) -> DifferenceStack:
    if n is None:
        return DifferenceStack.for_length(x_len)
    if n * n != x_len:
        raise DimensionError(f"vector length {x_len} is not {n}^2")
    return DifferenceStack.image(n)


def qtv(x, n: Optional[int] = None, stack: Optional[DifferenceStack] = None) -> float:
    """Quaternion total variation ``sum_i sqrt(|D_h x|_i^2 + |D_v x|_i^2)``."""
    xp = _vec(x)
    stack = stack or _stack_for(xp.shape[1], n)
    return float(np.sum(np.sqrt(stack.grad_mag2(xp))))


def psi_map(x) -> np.ndarray:
    """``N x 4`` real matrix with columns (real, i, j, k) parts."""
    return np.array(_vec(x).T)


def psi_inverse(U: np.ndarray) -> QVector:
    U = np.asarray(U, dtype=float)
    if U.ndim != 2 or U.shape[1] != 4:
        raise DimensionError("expected an N x 4 matrix")
    return QVector(U.T.copy())


def gradient_tensor(x, stack: DifferenceStack) -> np.ndarray:
    """``D Psi(x)`` as a ``(pixels, derivatives, colors)`` tensor."""
    g = stack.gradients(_vec(x))
    return np.transpose(g, (2, 0, 1))


def _pnorm(a: np.ndarray, p: float, axis: int) -> np.ndarray:
    a = np.abs(a)
    if np.isinf(p):
        return np.max(a, axis=axis)
    if p == 1:
        return np.sum(a, axis=axis)
    if p == 2:
        return np.sqrt(np.sum(a * a, axis=axis))
    return np.sum(a ** p, axis=axis) ** (1.0 / p)


def ctv_norm(U: np.ndarray, p: float = 2, q: float = 2, r: float = 1) -> float:
    """Collaborative norm: ``p`` over colors, then ``q`` over derivatives, then ``r`` over pixels.

    ``U`` has shape ``(pixels, derivatives, colors)``.
    """
    for name, val in (("p", p), ("q", q), ("r", r)):
        if not val >= 1:
            raise InvalidParameter(f"{name} must be >= 1, got {val}")
    U = np.asarray(U, dtype=float)
    if U.ndim != 3:
        raise DimensionError("ctv_norm expects a (pixels, derivatives, colors) tensor")
    return float(_pnorm(_pnorm(_pnorm(U, p, 2), q, 1), r, 0))


@dataclass
class IRNWeights:
    w: np.ndarray
    eps_irn: float
    stack: DifferenceStack

    @property
    def W2d_diag(self) -> np.ndarray:
        return np.tile(self.w, len(self.stack.ops))

    def weighted_norm2(self, x) -> float:
        """``||W_2d D_hv x||^2``."""
        g = self.stack.grad_mag2(_vec(x))
        return float(np.sum(self.w ** 2 * g))


def build_weights(x, stack: DifferenceStack, eps_irn: float = 1e-8) -> IRNWeights:
    if eps_irn < 0:
        raise InvalidParameter("eps_irn must be nonnegative")
    g = stack.grad_mag2(_vec(x))
    with np.errstate(divide="ignore"):
        w = (g + eps_irn ** 2) ** -0.25
    return IRNWeights(w, eps_irn, stack)


class WeightedDifference:
    """The real regularization matrix ``P = W_2d D_hv`` and its pseudoinverse.

    ``P`` is ``(nops*Ntilde) x N``; its null space is the constant vector.
    The pseudoinverse is applied through a factorization of the grounded
    Gram matrix ``K = P^T P`` (one unknown pinned to zero) followed by
    removal of the mean, which yields the minimum-norm solution.  A
    conjugate-gradient variant is available for very large ``N``.
    """

    def __init__(self, stack: DifferenceStack, w: Optional[np.ndarray] = None, method: str = "lu",
                 shift: float = 1e-2):
        if method not in ("lu", "cg"):
            raise InvalidParameter("method must be 'lu' or 'cg'")
        self.stack = stack
        self.w = np.ones(stack.Ntilde) if w is None else np.asarray(w, dtype=float)
        if self.w.shape != (stack.Ntilde,) or np.any(self.w <= 0) or not np.all(np.isfinite(self.w)):
            raise InvalidParameter("weights must be finite, positive and of length Ntilde")
        self.method = method
        self.P = sp.diags(np.tile(self.w, len(stack.ops))) @ stack.D_hv
        self.P = sp.csr_matrix(self.P)
        self.K = sp.csc_matrix(self.P.T @ self.P)
        self.shift = shift
        self._lu = None
        self._smoother = None

    @property
    def shape(self):
        return self.P.shape

    def matvec(self, xp: np.ndarray) -> np.ndarray:
        return (self.P @ xp.T).T

    def rmatvec(self, vp: np.ndarray) -> np.ndarray:
        return (self.P.T @ vp.T).T

    def _factor(self):
        if self._lu is None:
            self._lu = spla.splu(self.K[1:, 1:].tocsc())
        return self._lu

    def solve_gram(self, rp: np.ndarray) -> np.ndarray:
        """Minimum-norm solution of ``K z = r`` for ``r`` orthogonal to constants, per part."""
        rp = np.atleast_2d(rp)
        out = np.zeros_like(rp)
        if self.method == "lu":
            lu = self._factor()
            out[:, 1:] = lu.solve(np.ascontiguousarray(rp[:, 1:].T)).T
        else:
            for a in range(rp.shape[0]):
                if np.any(rp[a]):
                    out[a], _ = spla.cg(self.K, rp[a], rtol=1e-10, maxiter=500)
        return out - out.mean(axis=1, keepdims=True)

    def pinv(self, v) -> QVector:
        """``P^dagger v`` for a quaternion vector of length ``nops*Ntilde``."""
        vp = _vec(v)
        if vp.shape[1] != self.P.shape[0]:
            raise DimensionError(f"expected length {self.P.shape[0]}, got {vp.shape[1]}")
        return QVector._wrap(self.solve_gram(self.rmatvec(vp)))

    def smooth(self, vp: np.ndarray) -> np.ndarray:
        """``(K + delta I)^{-1} v``: the square smoothing preconditioner.

        A damped form of ``P^dagger (P^dagger)^T = (P^T P)^dagger``; the
        shift ``delta = shift * mean(diag K)`` keeps constants (the null
        space of ``P``) reachable.
        """
        if self._smoother is None:
            K = self.K
            delta = self.shift * float(K.diagonal().mean())
            self._smoother = spla.splu(sp.csc_matrix(K + delta * sp.identity(K.shape[0])))
        return self._smoother.solve(np.ascontiguousarray(np.atleast_2d(vp).T)).T


def apply_p_pinv(P: WeightedDifference, v) -> QVector:
    return P.pinv(v)


class TVPreconditioner(Preconditioner):
    """Flexible preconditioner built from ``P_j = W_(j) D_hv``.

    Applies the damped smoother ``(P_j^T P_j + delta I)^{-1}``.  The
    weights start at one and are rebuilt from each new iterate.
    """

    flexible = True
    needs_iterate = True

    def __init__(self, stack: DifferenceStack, eps_irn: float = 1e-8, method: str = "lu", shift: float = 1e-2):
        self.stack = stack
        self.eps_irn = eps_irn
        self.method = method
        self.shift = shift
        self._ops = {}

    def fresh(self):
        return TVPreconditioner(self.stack, self.eps_irn, self.method, self.shift)

    def operator_for(self, iteration: int) -> WeightedDifference:
        keys = [k for k in self._ops if k <= iteration]
        if not keys:
            self._ops[0] = WeightedDifference(self.stack, None, self.method, self.shift)
            return self._ops[0]
        return self._ops[max(keys)]

    def update(self, x, r, iteration):
        w = build_weights(x, self.stack, self.eps_irn).w
        self._ops = {k: v for k, v in self._ops.items() if k >= iteration - 1}
        self._ops[iteration] = WeightedDifference(self.stack, w, self.method, self.shift)

    def apply_parts(self, vp, iteration=0):
        return self.operator_for(iteration).smooth(vp)


@dataclass(frozen=True)
class QTVConfig:
    lam: float = 1e-2
    outer_max: int = 1
    inner: SolverConfig = field(default_factory=SolverConfig)
    eps_irn: float = 1e-8
    x_tol: float = 0.0
    pinv_method: str = "lu"

    def __post_init__(self):
        if not (self.lam >= 0) or not np.isfinite(self.lam):
            raise InvalidParameter(f"lambda must be a finite nonnegative number, got {self.lam}")
        if self.outer_max < 1:
            raise InvalidParameter("outer_max must be at least 1")
        if not self.eps_irn > 0:
            raise InvalidParameter("eps_irn must be positive")
        if self.x_tol < 0:
            raise InvalidParameter("x_tol must be nonnegative")


def quaternion_gram(B: np.ndarray, weights2: Optional[np.ndarray] = None) -> np.ndarray:
    """``G = B^* diag(weights2) B`` for a ``(4, K, m)`` quaternion matrix; returns ``(4, m, m)``."""
    WB = B if weights2 is None else B * weights2[None, :, None]
    G = np.zeros((4, B.shape[2], B.shape[2]))
    for a in range(4):
        for b in range(4):
            c = int(np.nonzero(STRUCT[a, b])[0][0])
            G[c] += CONJ_SIGN[a] * STRUCT[a, b, c] * (WB[a].T @ B[b])
    return G


def _qmul_rows(a: np.ndarray, B: np.ndarray) -> np.ndarray:
    # scalar quaternion a (4,) times row of quaternions B (4, k)
    out = np.zeros_like(B)
    for ia in range(4):
        for ib in range(4):
            c = int(np.nonzero(STRUCT[ia, ib])[0][0])
            out[c] += STRUCT[ia, ib, c] * a[ia] * B[ib]
    return out


def quaternion_cholesky(G: np.ndarray, jitter: float = 1e-14) -> np.ndarray:
    """Upper-triangular ``R`` with real positive diagonal and ``R^* R = G``.

    A pivot below ``jitter`` times the largest diagonal entry marks a
    direction with (numerically) zero penalty; its row of ``R`` is left
    zero, so a semidefinite Gram matrix still yields ``R^* R ~= G``.
    """
    G = np.asarray(G, dtype=float)
    m = G.shape[1]
    R = np.zeros_like(G)
    floor = jitter * max(float(np.max(G[0].diagonal())), 1e-300)
    S = G.copy()
    for i in range(m):
        d = S[0, i, i]
        if d <= floor:
            continue
        rii = math.sqrt(d)
        R[0, i, i] = rii
        if i + 1 < m:
            row = S[:, i, i + 1:] / rii
            R[:, i, i + 1:] = row
            # S_jk -= conj(r_ij) r_ik for j, k > i
            conj_row = row * CONJ_SIGN[:, None]
            for a in range(4):
                for b in range(4):
                    c = int(np.nonzero(STRUCT[a, b])[0][0])
                    S[c, i + 1:, i + 1:] -= STRUCT[a, b, c] * np.outer(conj_row[a], row[b])
    return R


def triangular_factor(PV) -> np.ndarray:
    """Quaternion ``R_m`` of ``P V_m = Q_m R_m`` as a ``(4, m, m)`` array."""
    B = PV.dense() if isinstance(PV, QMatrix) else np.asarray(PV, dtype=float)
    return quaternion_cholesky(quaternion_gram(B))


def _real_lhs(M: np.ndarray) -> np.ndarray:
    return to_real_counterpart(QMatrix.from_dense(M))


def solve_reduced(Hbar: np.ndarray, beta: float, R: Optional[np.ndarray], lam: float,
                  g: Optional[np.ndarray] = None):
    """Stacked least squares ``[Hbar; sqrt(lam) R] y ~ [beta e1; -sqrt(lam) g]``.

    ``g`` (default zero) carries the penalty of a nonzero starting guess,
    ``g = Q^* P x0``.  Returns ``(y, residual)`` with ``y`` as ``(4, m)``
    parts and ``residual = ||beta e1 - Hbar y||``.
    """
    m1, m = Hbar.shape[1], Hbar.shape[2]
    blocks = [Hbar]
    rhs_parts = [np.zeros((4, m1))]
    rhs_parts[0][0, 0] = beta
    if lam > 0 and R is not None:
        blocks.append(math.sqrt(lam) * R)
        rhs_parts.append(np.zeros((4, m)) if g is None else -math.sqrt(lam) * g)
    M = np.concatenate(blocks, axis=1)
    A = _real_lhs(M)
    rhs = np.concatenate(rhs_parts, axis=1).reshape(-1)
    ys, *_ = np.linalg.lstsq(A, rhs, rcond=None)
    y = ys.reshape(4, m)
    res = float(np.linalg.norm(rhs_parts[0] - _hess_times(Hbar, y)))
    return y, res


def _penalty_shift(R: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Solve ``R^* g = c`` in least squares (``R`` may have zero rows)."""
    RR = _real_lhs(R)
    gs, *_ = np.linalg.lstsq(RR.T, c.reshape(-1), rcond=None)
    return gs.reshape(4, -1)


def _cross_gram(B: np.ndarray, weights2: np.ndarray, d: np.ndarray) -> np.ndarray:
    """``B^* diag(weights2) d`` for ``B`` of shape ``(4, K, m)`` and ``d`` of shape ``(4, K)``."""
    return quaternion_gram(np.concatenate([B, d[:, :, None]], axis=2), weights2)[:, :-1, -1]


def solve_reduced_direct(Hbar: np.ndarray, c: np.ndarray, PV: np.ndarray, lam: float) -> np.ndarray:
    """Minimize ``||Hbar y - c||^2 + lam ||P V y||^2`` without any factorization of ``P V``."""
    M = np.concatenate([Hbar, math.sqrt(lam) * PV], axis=1)
    A = _real_lhs(M)
    rhs_parts = np.zeros((4, M.shape[1]))
    rhs_parts[:, : c.shape[1]] = c
    ys, *_ = np.linalg.lstsq(A, rhs_parts.reshape(-1), rcond=None)
    return ys.reshape(4, Hbar.shape[2])


def tv_objective(A, x, b, lam: float, stack: DifferenceStack, eps_irn: float = 0.0) -> float:
    """``||A x - b||^2 + 2 lam TV(x)``, the functional whose stationary points IRN finds."""
    A = _operator(A)
    xp, bp = _vec(x), _vec(b)
    r = bp - A._apply(xp)
    tv = float(np.sum(np.sqrt(stack.grad_mag2(xp) + eps_irn ** 2)))
    return float(np.sum(r * r)) + 2.0 * lam * tv


def _setup(A, b, stack):
    A = _operator(A)
    n, ncol = A.shape
    if n != ncol:
        raise DimensionError(f"matrix must be square, got {A.shape}")
    b = _as_qvector(b)
    if b.n != n:
        raise DimensionError(f"right-hand side has length {b.n}, matrix is {n}x{n}")
    stack = stack or DifferenceStack.for_length(n)
    if stack.N != n:
        raise DimensionError("difference stack does not match the system size")
    return A, b, stack


def _empty_report(b, name, kind, cfg, t0):
    return SolveReport(QVector.zeros(b.n), [0.0], 0, time.perf_counter() - t0,
                       Termination.CONVERGED, kind, 0.0, 1.0, cfg.inner.tol, name)


def qtv_fqgmres(A, b, cfg: Optional[QTVConfig] = None, stack: Optional[DifferenceStack] = None,
                x0=None) -> SolveReport:
    """Flexible QGMRES preconditioned by the TV smoother of ``P_j = W_(j) D_hv``.

    With ``lam == 0`` this is plain flexible QGMRES whose basis vectors are
    smoothed by the current reweighted Laplacian pseudoinverse.  With
    ``lam > 0`` the projected problem additionally penalizes
    ``lam ||P_j Z_j y||^2`` (hybrid regularization).
    """
    cfg = cfg or QTVConfig()
    A, b, stack = _setup(A, b, stack)
    P = TVPreconditioner(stack, cfg.eps_irn, cfg.pinv_method)
    if cfg.lam == 0:
        rep = fqgmres(A, b, x0, P, cfg.inner)
        rep.solver = "qtv_fqgmres"
        return rep
    return _hybrid(A, b, cfg, stack, x0, flexible=True, name="qtv_fqgmres")


def qtv_fqgmres_improved(A, b, cfg: Optional[QTVConfig] = None, stack: Optional[DifferenceStack] = None,
                         x0=None) -> SolveReport:
    """Arnoldi-Tikhonov TV restoration on ``x0 + K_m(A, r0)``.

    Each step extends the plain quaternion Arnoldi decomposition, factors
    ``P V_m = Q_m R_m`` (only ``R_m`` is formed, from the Gram matrix) and
    solves ``[Hbar_m; sqrt(lam) R_m] y ~ [||r0|| e1; 0]``.  The weights are
    refreshed from ``x_m`` ``outer_max`` times per step.
    """
    cfg = cfg or QTVConfig()
    A, b, stack = _setup(A, b, stack)
    return _hybrid(A, b, cfg, stack, x0, flexible=False, name="qtv_fqgmres_improved")


def _hybrid(A, b, cfg: QTVConfig, stack: DifferenceStack, x0, flexible: bool, name: str) -> SolveReport:
    t0 = time.perf_counter()
    inner = cfg.inner
    n = b.n
    xs = np.zeros((4, n)) if x0 is None else np.array(_vec(x0), dtype=float)
    bp = np.array(b.parts)
    r0 = bp - A._apply(xs)
    beta = float(np.linalg.norm(r0))
    ref = float(np.linalg.norm(bp)) or 1.0
    if beta == 0.0:
        rep = _empty_report(b, name, "true", cfg, t0)
        rep.x = QVector._wrap(xs)
        return rep
    target = inner.tol * ref
    cap = inner.max_iter
    dec = ArnoldiDecomposition.allocate(n, cap, flexible=flexible)
    dec.beta = beta
    dec.V[:, :, 0] = r0 / beta
    precond = TVPreconditioner(stack, cfg.eps_irn, cfg.pinv_method) if flexible else None
    K = sum(op.shape[0] for op in stack.ops)
    DB = np.zeros((4, K, cap))
    w = np.ones(stack.Ntilde)
    has_x0 = bool(np.any(xs))
    Dx0 = stack.apply(xs) if has_x0 else None
    history = [beta]
    objective = []
    x = xs.copy()
    termination = Termination.MAX_ITER
    its = 0
    for j in range(cap):
        broke = arnoldi_step(A, dec, j, precond, "flexible" if flexible else "none", inner.breakdown_tol,
                             inner.reorthogonalize)
        its += 1
        basis = dec.Z if flexible else dec.V
        DB[:, :, j] = stack.apply(basis[:, :, j])
        Hbar = dec.H[:, : j + 2, : j + 1]
        x_prev = x
        for _ in range(cfg.outer_max):
            w2 = np.tile(w, len(stack.ops)) ** 2
            R = quaternion_cholesky(quaternion_gram(DB[:, :, : j + 1], w2))
            g = None
            if has_x0 and cfg.lam > 0:
                g = _penalty_shift(R, _cross_gram(DB[:, :, : j + 1], w2, Dx0))
            y, res = solve_reduced(Hbar, beta, R, cfg.lam, g)
            x = xs + _right_combine(basis[:, :, : j + 1], y)
            w = build_weights(QVector._wrap(x), stack, cfg.eps_irn).w
        if flexible:
            precond.update(QVector._wrap(x), None, j + 1)
        history.append(res)
        objective.append(res ** 2 + 2.0 * cfg.lam * float(np.sum(np.sqrt(stack.grad_mag2(x) + cfg.eps_irn ** 2))))
        if res <= target:
            termination = Termination.CONVERGED
            break
        if broke:
            termination = Termination.BREAKDOWN
            break
        if cfg.x_tol > 0:
            dx = np.linalg.norm(x - x_prev)
            if dx <= cfg.x_tol * max(np.linalg.norm(x), 1e-300):
                termination = Termination.STAGNATION
                break
    rep = SolveReport(
        x=QVector._wrap(x),
        residual_history=history,
        iterations=its,
        wall_time=time.perf_counter() - t0,
        termination=termination,
        residual_kind="true",
        true_residual=float(np.linalg.norm(bp - A._apply(x))),
        reference_norm=ref,
        tol=inner.tol,
        solver=name,
        decomposition=dec,
        objective_history=objective,
    )
    return rep
