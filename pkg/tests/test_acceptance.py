"""Acceptance suite.

Each ``test_criterion_<k>_...`` checks one acceptance criterion at its
stated tolerance; the terminal summary prints one PASS/FAIL line per
criterion.  Details are printed with ``-s``.
"""

import json
import time

import numpy as np
import pytest

from oracles import hprod, krylov_residuals
from quatkrylov import bench, cli
from quatkrylov.imaging import STOCK_IMAGES
from quatkrylov.io import read_runlog
from quatkrylov.krylov import (
    SolverConfig,
    fqgmres,
    gmres_real,
    irfgmres_real,
    qgmres,
    qgmres_left,
    qgmres_right,
)
from quatkrylov.preconditioners import jacobi_sqrt_residual, sgs_preconditioner
from quatkrylov.quaternion import QMatrix, Quaternion, QVector, random_qmatrix, random_qvector, to_real_counterpart
from quatkrylov.tv import (
    DifferenceStack,
    QTVConfig,
    build_weights,
    ctv_norm,
    gradient_tensor,
    qtv,
    qtv_fqgmres,
    qtv_fqgmres_improved,
    solve_reduced,
    solve_reduced_direct,
    triangular_factor,
)


def test_criterion_1_algebra_suite():
    t0 = time.perf_counter()
    units = [Quaternion(*e) for e in np.eye(4)]
    one, i, j, k = units
    table = {(i, i): -one, (j, j): -one, (k, k): -one, (i, j): k, (j, i): -k, (j, k): i,
             (k, j): -i, (k, i): j, (i, k): -j}
    for (a, b), want in table.items():
        assert np.array_equal((a * b).as_array(), want.as_array())
    assert np.array_equal((i * j * k).as_array(), (-one).as_array())
    for a in units:
        for b in units:
            want = hprod(a.as_array()[:, None], b.as_array()[:, None])[:, 0]
            assert np.array_equal((a * b).as_array(), want)
    rng = np.random.default_rng(1)
    worst = 0.0
    for _ in range(100):
        m, p, q = rng.integers(1, 13, 3)
        A = random_qmatrix(int(m), int(p), rng)
        B = random_qmatrix(int(p), int(q), rng)
        lhs = to_real_counterpart(A @ B)
        rhs = to_real_counterpart(A) @ to_real_counterpart(B)
        worst = max(worst, np.linalg.norm(lhs - rhs) / np.linalg.norm(rhs))
    elapsed = time.perf_counter() - t0
    print(f"\n[1] worst relative homomorphism error {worst:.2e}, {elapsed:.2f} s")
    assert worst <= 1e-12
    assert elapsed < 5


def test_criterion_2_oracle_equivalence():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2)
    worst = 0.0
    for _ in range(50):
        n = int(rng.integers(2, 21))
        A = random_qmatrix(n, n, rng)
        b = random_qvector(n, rng)
        m = n - 1
        rep = qgmres(A, b, cfg=SolverConfig(tol=1e-15, max_iter=m))
        want = krylov_residuals(A.dense(), b.parts, m)
        got = np.asarray(rep.residual_history)
        assert len(got) == len(want)
        worst = max(worst, float(np.max(np.abs(got - want) / want)))
    elapsed = time.perf_counter() - t0
    print(f"\n[2] worst per-step relative deviation {worst:.2e}, {elapsed:.2f} s")
    assert worst <= 1e-9
    assert elapsed < 30


def test_criterion_3_exact_termination():
    rng = np.random.default_rng(3)
    ok = 0
    worst = 0.0
    for _ in range(100):
        n = int(rng.integers(1, 11))
        A = random_qmatrix(n, n, rng)
        b = random_qvector(n, rng)
        rep = qgmres(A, b, cfg=SolverConfig(tol=1e-15, max_iter=n))
        rel = (b - A.matvec(rep.x)).norm() / b.norm()
        worst = max(worst, rel)
        ok += rel <= 1e-8
    print(f"\n[3] {ok}/100 trials at 1e-8, worst {worst:.2e}")
    assert ok == 100


@pytest.mark.slow
def test_criterion_4_sgs_preconditioning_pattern():
    t0 = time.perf_counter()
    good = 0
    counts = []
    for seed in range(20):
        runs = dict(bench._precond_runs(seed, 500, 1e-6, 1000))
        plain, lp, rp = runs["qgmres"], runs["qgmres-lp"], runs["qgmres-rp"]
        assert plain.converged and plain.final_residual < 1e-6
        counts.append((plain.iterations, lp.iterations, rp.iterations))
        good += (lp.converged and rp.converged and lp.final_residual < 1e-6 and rp.final_residual < 1e-6
                 and lp.iterations <= 5 and rp.iterations <= 5
                 and lp.iterations < plain.iterations and rp.iterations < plain.iterations)
    elapsed = time.perf_counter() - t0
    mean = np.mean(counts, axis=0)
    print(f"\n[4] mean iterations plain/lp/rp {mean[0]:.1f}/{mean[1]:.1f}/{mean[2]:.1f}, "
          f"{good}/20 seeds satisfy the pattern, {elapsed:.1f} s")
    assert good >= 19
    assert elapsed < 300


SPARSE_SEEDS = (0, 1, 2)


@pytest.mark.slow
def test_criterion_5_flexible_sparse_pattern():
    cfg = SolverConfig(tol=1e-6, max_iter=1000)
    plain_its, flex_its = [], []
    for seed in SPARSE_SEEDS:
        A = bench.sparse_surrogate(3000, seed)
        b = QVector(np.ones((4, 3000)))
        plain = qgmres(A, b, cfg=cfg)
        flex = fqgmres(A, b, P_seq=jacobi_sqrt_residual(A, b), cfg=cfg)
        print(f"\n[5] seed {seed}: qgmres {plain.iterations} ({plain.final_residual:.2e}), "
              f"fqgmres {flex.iterations} ({flex.final_residual:.2e})")
        assert plain.converged and flex.converged and flex.final_residual < 1e-6
        plain_its.append(plain.iterations)
        flex_its.append(flex.iterations)
    ratio = np.mean(flex_its) / np.mean(plain_its)
    print(f"[5] mean iterations qgmres {np.mean(plain_its):.1f}, fqgmres {np.mean(flex_its):.1f}, ratio {ratio:.4f}")
    assert ratio <= 1.05


def test_criterion_6_signal_pattern():
    t0 = time.perf_counter()
    L = 100
    for seed in range(3):
        A, b, _ = bench.signal_problem(6 * L, L, seed)
        cfg = SolverConfig(tol=1e-6, max_iter=4 * L)
        plain = qgmres(A, b, cfg=cfg)
        flex = qtv_fqgmres(A, b, QTVConfig(lam=0.0, inner=cfg), stack=DifferenceStack.signal(L))
        irf = irfgmres_real(A, b, cfg=cfg)
        print(f"\n[6] seed {seed}: qgmres {plain.iterations}, qtv-fqgmres {flex.iterations} "
              f"({flex.final_residual:.2e}), irfgmres {irf.iterations}")
        assert flex.converged and flex.final_residual < 1e-6
        assert flex.iterations <= plain.iterations
        assert irf.iterations >= 1.5 * flex.iterations
    assert time.perf_counter() - t0 < 120


def test_criterion_7_ctv_equals_qtv():
    rng = np.random.default_rng(7)
    worst = 0.0
    for t in range(200):
        n = (4, 8, 16)[t % 3]
        s = DifferenceStack.image(n)
        x = QVector(rng.standard_normal((4, n * n)))
        q = qtv(x, n)
        worst = max(worst, abs(ctv_norm(gradient_tensor(x, s), 2, 2, 1) - q) / q)
    print(f"\n[7] worst relative gap {worst:.2e}")
    assert worst <= 1e-10


def test_criterion_8_reweighting_identity():
    rng = np.random.default_rng(8)
    worst = 0.0
    tried = 0
    for n in (4, 8, 16):
        s = DifferenceStack.image(n)
        done = 0
        while done < 20:
            tried += 1
            x = QVector(rng.standard_normal((4, n * n)))
            if np.sqrt(s.grad_mag2(x.parts)).min() < 1e-3:
                continue
            W = build_weights(x, s, eps_irn=1e-8)
            q = qtv(x, n)
            worst = max(worst, abs(W.weighted_norm2(x) - q) / q)
            done += 1
    print(f"\n[8] worst relative gap {worst:.2e} over 60 vectors ({tried} drawn)")
    assert worst <= 1e-4


def _restore_metrics(tmp_path, name, solver):
    log = tmp_path / f"{name}-{solver}.json"
    code = cli.main(["restore-image", "--stock", name, "--solver", solver, "--log", str(log)])
    assert code in (0, 2)
    return read_runlog(log).metrics


@pytest.mark.slow
def test_criterion_9_image_restoration(tmp_path):
    t0 = time.perf_counter()
    wins = {"psnr+5": 0, "ssim+0.1": 0, "beats-fqgmres": 0, "all": 0}
    for name in STOCK_IMAGES:
        m = _restore_metrics(tmp_path, name, "qtv-fqgmres-improved")
        base = _restore_metrics(tmp_path, name, "fqgmres")
        obs, res, ref = m["observed"], m["restored"], base["restored"]
        c1 = res["psnr"] >= obs["psnr"] + 5
        c2 = res["ssim"] >= obs["ssim"] + 0.1
        c3 = all(res[k] > ref[k] for k in ("psnr", "snr", "ssim"))
        wins["psnr+5"] += c1
        wins["ssim+0.1"] += c2
        wins["beats-fqgmres"] += c3
        wins["all"] += c1 and c2 and c3
        print(f"\n[9] {name}: observed {obs['psnr']:.2f} dB / {obs['ssim']:.3f}, "
              f"qtv-improved {res['psnr']:.2f} dB / {res['snr']:.2f} dB / {res['ssim']:.3f}, "
              f"fqgmres {ref['psnr']:.2f} dB / {ref['snr']:.2f} dB / {ref['ssim']:.3f}")
    elapsed = time.perf_counter() - t0
    print(f"[9] images meeting each part: {json.dumps(wins)}, {elapsed:.0f} s")
    assert elapsed < 600
    assert wins["all"] >= 3


def test_criterion_10_reduced_problem_equivalence():
    rng = np.random.default_rng(10)
    worst = 0.0
    for _ in range(20):
        m = int(rng.integers(1, 11))
        n = 3 * m + 4
        A = random_qmatrix(n, n, rng)
        b = random_qvector(n, rng)
        dec = qgmres(A, b, cfg=SolverConfig(tol=1e-15, max_iter=m)).decomposition
        Hbar = dec.H[:, : m + 1, :m]
        V = dec.V[:, :, :m]
        Preal = rng.standard_normal((2 * n, n))
        PV = np.stack([Preal @ V[a] for a in range(4)])
        lam = float(10 ** rng.uniform(-3, 1))
        c = np.zeros((4, m + 1))
        c[0, 0] = dec.beta
        y1 = solve_reduced_direct(Hbar, c, PV, lam)
        y2, _ = solve_reduced(Hbar, dec.beta, triangular_factor(PV), lam)
        worst = max(worst, float(np.max(np.abs(y1 - y2))))
    print(f"\n[10] worst coefficient difference {worst:.2e}")
    assert worst <= 1e-9


def _cycles(rep):
    h = np.asarray(rep.residual_history)
    starts = list(rep.cycle_starts) + [len(h) - 1]
    return [h[a:b + 1] for a, b in zip(starts[:-1], starts[1:])]


def test_criterion_11_monotone_histories():
    rng = np.random.default_rng(11)
    checked = 0
    for trial in range(12):
        n = int(rng.integers(5, 40))
        A = bench.dominant_matrix(n, rng) if trial % 2 else random_qmatrix(n, n, rng) + QMatrix.identity(n) * 3.0
        b = random_qvector(n, rng)
        for restart in (None, 7):
            cfg = SolverConfig(tol=1e-10, max_iter=3 * n, restart=restart)
            P = sgs_preconditioner(A)
            reps = [
                qgmres(A, b, cfg=cfg),
                qgmres_left(A, b, P=P, cfg=cfg),
                qgmres_right(A, b, P=P, cfg=cfg),
                fqgmres(A, b, P_seq=jacobi_sqrt_residual(A, b), cfg=cfg),
                gmres_real(A, b, cfg=cfg),
                irfgmres_real(A, b, cfg=cfg),
                qtv_fqgmres(A, b, QTVConfig(lam=0.0, inner=cfg)),
                qtv_fqgmres_improved(A, b, QTVConfig(lam=0.0, inner=cfg)),
            ]
            for rep in reps:
                for seg in _cycles(rep):
                    assert np.all(np.diff(seg) <= 1e-12 * seg[0]), rep.solver
                checked += 1
    print(f"\n[11] {checked} runs with nonincreasing within-cycle histories")
