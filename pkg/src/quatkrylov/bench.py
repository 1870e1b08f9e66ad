"""Benchmark suites comparing the solvers on generated problems.

Three suites are provided:

``precond-table``
    dense diagonally dominant quaternion systems, plain QGMRES against
    SGS left and right preconditioning;
``sparse-table``
    a sparse composite system (four real sparse parts with different
    structure) with an all-ones right-hand side, comparing real GMRES,
    QGMRES, the reweighted real baseline and FQGMRES with residual
    weights;
``signal-table``
    normal equations of a quaternion filter-identification problem with a
    piecewise-constant filter, comparing real GMRES, QGMRES, the reweighted
    real baseline and the flexible TV-preconditioned solver.

Every run returns plain dict rows so the CLI can print them as markdown or
CSV.  ``QUATKRYLOV_THREADS`` caps how many seeds run concurrently.
"""

from __future__ import annotations

import csv
import io
import math
import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp

from .errors import InvalidParameter
from .imaging import build_signal_system, synthetic_signal
from .krylov import SolverConfig, fqgmres, gmres_real, irfgmres_real, qgmres, qgmres_left, qgmres_right
from .preconditioners import jacobi_sqrt_residual, sgs_preconditioner
from .quaternion import QMatrix, QVector
from .tv import DifferenceStack, QTVConfig, qtv_fqgmres

__all__ = [
    "SUITES",
    "PUBLISHED_VALUES",
    "dominant_matrix",
    "sparse_surrogate",
    "signal_problem",
    "run_suite",
    "summarize",
    "format_table",
    "thread_count",
]

SUITES = ("precond-table", "sparse-table", "signal-table")

# published iteration counts, used by ``reproduce`` for side-by-side output
PUBLISHED_VALUES = {
    "precond-table": {"qgmres": 14, "qgmres-lp": 3, "qgmres-rp": 3},
    "sparse-table": {"gmres": 254, "qgmres": 233, "irfgmres": 249, "fqgmres": 226},
    "signal-table": {"gmres": 300, "qgmres": 105, "irfgmres": 297, "qtv-fqgmres": 104},
}


def thread_count() -> int:
    raw = os.environ.get("QUATKRYLOV_THREADS", "1")
    try:
        k = int(raw)
    except ValueError as exc:
        raise InvalidParameter(f"QUATKRYLOV_THREADS must be an integer, got {raw!r}") from exc
    return max(1, k)


def dominant_matrix(n: int, rng) -> QMatrix:
    """Dense random matrix whose real diagonal exceeds the off-diagonal row sum of moduli."""
    rng = np.random.default_rng(rng)
    P = rng.standard_normal((4, n, n))
    for k in range(4):
        np.fill_diagonal(P[k], 0.0)
    mods = np.sqrt((P ** 2).sum(axis=0)).sum(axis=1)
    P[0][np.diag_indices(n)] = (1.0 + rng.uniform(size=n)) * mods
    return QMatrix.from_dense(P)


def sparse_surrogate(n: int = 3000, seed=0, spread: float = 1.0, coupling: float = 0.25) -> QMatrix:
    """Sparse composite standing in for four Matrix Market parts.

    ``A0`` is a 2-D convection-diffusion-reaction stencil, ``A1`` a random
    walk transition matrix, ``A2`` the adjacency of a sparse random network
    and ``A3`` a random diagonal.  Rows are scaled by ``10**u`` with ``u``
    uniform in ``[-spread, spread]`` and the leading ``n x n`` block is kept.
    """
    rng = np.random.default_rng(seed)
    nx = int(math.ceil(math.sqrt(n)))
    ny = int(math.ceil(n / nx))
    N = nx * ny

    def lap(m):
        return sp.diags([-1.0, 2.0, -1.0], [-1, 0, 1], shape=(m, m))

    conv = sp.diags([-1.0, 1.0], [-1, 1], shape=(nx, nx))
    A0 = sp.kron(sp.eye(ny), lap(nx)) + sp.kron(lap(ny), sp.eye(nx)) + 0.3 * sp.kron(sp.eye(ny), conv)
    A0 = A0 + 0.1 * sp.eye(N)
    G = sp.random(N, N, density=3.0 / N, random_state=rng)
    G.data[:] = 1.0
    deg = np.asarray(G.sum(axis=1)).ravel()
    deg[deg == 0] = 1.0
    A1 = coupling * (sp.diags(1.0 / deg) @ G)
    S = sp.random(N, N, density=1.5 / N, random_state=rng)
    S.data[:] = 1.0
    A2 = coupling * ((S + S.T) > 0).astype(float)
    A3 = coupling * sp.diags(rng.uniform(-1.0, 1.0, N))
    D = sp.diags(10.0 ** rng.uniform(-spread, spread, N))
    parts = [sp.csc_matrix((D @ M)[:n, :n]) for M in (A0, A1, A2, A3)]
    return QMatrix(*parts, shape=(n, n))


def signal_problem(T: int = 600, L: int = 100, seed=0, segments: int = 4, noise: float = 0.005):
    """Normal equations for identifying a piecewise-constant ``L``-tap filter.

    Returns ``(A, b, w_true)``.
    """
    rng = np.random.default_rng(seed)
    cuts = np.sort(rng.choice(np.arange(1, L), segments - 1, replace=False))
    edges = [0, *cuts.tolist(), L]
    w = np.zeros((4, L))
    for a, e in zip(edges[:-1], edges[1:]):
        w[:, a:e] = rng.standard_normal((4, 1))
    w = QVector._wrap(w)
    sysm = build_signal_system(synthetic_signal(T, seed=seed, noise=noise), L)
    y = sysm.synthesize(w)
    return sysm.normal_matrix(), sysm.normal_rhs(y), w


def _row(suite, solver, seed, rep):
    return {
        "suite": suite,
        "solver": solver,
        "seed": seed,
        "iterations": int(rep.iterations),
        "time": float(rep.wall_time),
        "residual": float(rep.final_residual),
        "converged": bool(rep.converged),
        "termination": rep.termination.value,
    }


def _precond_runs(seed, n, tol, max_iter):
    rng = np.random.default_rng(seed)
    A = dominant_matrix(n, rng)
    b = QVector._wrap(rng.standard_normal((4, n)))
    cfg = SolverConfig(tol=tol, max_iter=max_iter)
    P = sgs_preconditioner(A)
    return [
        ("qgmres", qgmres(A, b, cfg=cfg)),
        ("qgmres-lp", qgmres_left(A, b, P=P, cfg=cfg)),
        ("qgmres-rp", qgmres_right(A, b, P=P, cfg=cfg)),
    ]


def _sparse_runs(seed, n, tol, max_iter, A=None):
    if A is None:
        A = sparse_surrogate(n, seed)
    b = QVector(np.ones((4, A.shape[0])))
    cfg = SolverConfig(tol=tol, max_iter=max_iter)
    return [
        ("gmres", gmres_real(A, b, cfg=cfg)),
        ("qgmres", qgmres(A, b, cfg=cfg)),
        ("irfgmres", irfgmres_real(A, b, cfg=cfg)),
        ("fqgmres", fqgmres(A, b, P_seq=jacobi_sqrt_residual(A, b), cfg=cfg)),
    ]


def _signal_runs(seed, n, tol, max_iter, T=None):
    L = n
    T = 6 * L if T is None else T
    A, b, _ = signal_problem(T, L, seed)
    cfg = SolverConfig(tol=tol, max_iter=max_iter or 4 * L)
    return [
        ("gmres", gmres_real(A, b, cfg=cfg)),
        ("qgmres", qgmres(A, b, cfg=cfg)),
        ("irfgmres", irfgmres_real(A, b, cfg=cfg)),
        ("qtv-fqgmres", qtv_fqgmres(A, b, QTVConfig(lam=0.0, inner=cfg), stack=DifferenceStack.signal(L))),
    ]


_DEFAULT_N = {"precond-table": 500, "sparse-table": 3000, "signal-table": 100}
_DEFAULT_MAX_ITER = {"precond-table": 1000, "sparse-table": 1000, "signal-table": 0}


def run_suite(suite: str, n: Optional[int] = None, seeds=(0,), tol: float = 1e-6,
              max_iter: Optional[int] = None, matrix: Optional[QMatrix] = None,
              progress: Optional[Callable[[dict], None]] = None) -> list:
    """Run one suite over ``seeds`` and return per-run rows.

    ``n`` is the matrix order (precond, sparse) or the filter length
    (signal, with ``T = 6 n`` samples).  ``matrix`` replaces the sparse
    surrogate, for example with the real Matrix Market composite.
    """
    if suite not in SUITES:
        raise InvalidParameter(f"unknown suite {suite!r}; choose from {SUITES}")
    n = _DEFAULT_N[suite] if n is None else int(n)
    if n < 1:
        raise InvalidParameter("problem size must be positive")
    max_iter = _DEFAULT_MAX_ITER[suite] if max_iter is None else int(max_iter)
    if suite == "precond-table":
        job = lambda s: _precond_runs(s, n, tol, max_iter)
    elif suite == "sparse-table":
        job = lambda s: _sparse_runs(s, n, tol, max_iter, matrix)
    else:
        job = lambda s: _signal_runs(s, n, tol, max_iter)

    def one(seed):
        rows = [_row(suite, name, seed, rep) for name, rep in job(seed)]
        if progress is not None:
            for r in rows:
                progress(r)
        return rows

    seeds = list(seeds)
    workers = min(thread_count(), len(seeds))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(one, seeds))
    else:
        chunks = [one(s) for s in seeds]
    return [r for chunk in chunks for r in chunk]


def summarize(rows: list) -> list:
    """Mean iterations, time and residual per solver, in first-seen order."""
    order = []
    groups = {}
    for r in rows:
        key = (r["suite"], r["solver"])
        if key not in groups:
            order.append(key)
            groups[key] = []
        groups[key].append(r)
    out = []
    for key in order:
        g = groups[key]
        out.append({
            "suite": key[0],
            "solver": key[1],
            "runs": len(g),
            "iterations": float(np.mean([r["iterations"] for r in g])),
            "time": float(np.mean([r["time"] for r in g])),
            "residual": float(np.mean([r["residual"] for r in g])),
            "converged": sum(r["converged"] for r in g),
        })
    return out


def format_table(summary: list, fmt: str = "markdown", published: bool = False) -> str:
    cols = ["solver", "runs", "iterations", "time", "residual", "converged"]
    if published:
        cols.insert(3, "published_iterations")
    rows = []
    for s in summary:
        r = dict(s)
        if published:
            r["published_iterations"] = PUBLISHED_VALUES.get(s["suite"], {}).get(s["solver"], "")
        rows.append(r)

    def cell(c, v):
        if c == "iterations":
            return f"{v:.1f}"
        if c == "time":
            return f"{v:.3f}"
        if c == "residual":
            return f"{v:.4e}"
        return str(v)

    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["suite"] + cols)
        for r in rows:
            w.writerow([r["suite"]] + [cell(c, r[c]) for c in cols])
        return buf.getvalue()
    if fmt != "markdown":
        raise InvalidParameter(f"unknown table format {fmt!r}")
    lines = ["| " + " | ".join(cols) + " |", "|" + "|".join("---" for _ in cols) + "|"]
    for r in rows:
        lines.append("| " + " | ".join(cell(c, r[c]) for c in cols) + " |")
    return "\n".join(lines) + "\n"

