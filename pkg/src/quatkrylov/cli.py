"""Command-line front end.

Exit codes: 0 when the solver converged, 2 when it stopped for any other
reason (iteration cap, stagnation, breakdown above tolerance), 3 on bad
flags or unreadable input.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from typing import Optional

import numpy as np

from . import bench
from .errors import QuatKrylovError
from .imaging import (
    STOCK_IMAGES,
    BlurModel,
    add_gaussian_noise,
    build_blur_operator,
    build_signal_system,
    image_to_qvec,
    metrics,
    qvec_to_image,
    read_png,
    read_signal_csv,
    stock_image,
    write_png,
)
from .io import read_qmatrix, read_qvector, runlog_from_report, write_qvector, write_runlog
from .krylov import SolverConfig, fqgmres, gmres_real, irfgmres_real, qgmres, qgmres_left, qgmres_right
from .preconditioners import jacobi_sqrt_residual, sgs_preconditioner
from .quaternion import QVector
from .tv import DifferenceStack, QTVConfig, qtv_fqgmres, qtv_fqgmres_improved

EXIT_OK = 0
EXIT_NOT_CONVERGED = 2
EXIT_INPUT = 3

# default regularization for image restoration; tuned on the bundled images
IMAGE_LAMBDA = 2.5e-3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def _positive_float(text):
    v = float(text)
    if not (v > 0 and math.isfinite(v)):
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text}")
    return v


def _nonneg_float(text):
    v = float(text)
    if not (v >= 0 and math.isfinite(v)):
        raise argparse.ArgumentTypeError(f"expected a nonnegative number, got {text}")
    return v


def _lambda(text):
    if text == "auto":
        return text
    return _nonneg_float(text)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="quatkrylov", description="Quaternion Krylov solvers and TV-regularized restoration.")
    sub = p.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    s = sub.add_parser("solve", help="solve a quaternion linear system read from Matrix Market files",
                       description="Solve A x = b for a quaternion matrix given as one extended file "
                                   "or four Matrix Market parts.")
    s.add_argument("--matrix", nargs="+", required=True, metavar="PATH",
                   help="one extended file, or four part files A0 A1 A2 A3 (use '-' for a zero part)")
    s.add_argument("--rhs", metavar="PATH", help="right-hand side (1 or 4 columns); default all ones")
    s.add_argument("--order", type=_positive_int, help="keep the leading order x order block")
    s.add_argument("--solver", choices=["qgmres", "qgmres-lp", "qgmres-rp", "fqgmres"], default="qgmres")
    s.add_argument("--precond", choices=["none", "sgs", "jacobi-sqrt-res"], default="none")
    s.add_argument("--tol", type=_positive_float, default=1e-6, help="relative residual tolerance (default 1e-6)")
    s.add_argument("--max-iter", type=_positive_int, default=1000, help="iteration cap (default 1000)")
    s.add_argument("--restart", type=_positive_int, help="restart length (default: no restart)")
    s.add_argument("--log", metavar="PATH", help="write a JSON run log")
    s.add_argument("--out", metavar="PATH", help="write the solution (four columns)")
    s.set_defaults(func=cmd_solve)

    f = sub.add_parser("filter-signal", help="identify a quaternion filter from input/target signals",
                       description="Identify an L-tap quaternion filter y(t) = sum_s x(t-s) w(s) by "
                                   "solving the normal equations.")
    f.add_argument("--input", metavar="CSV", help="input signal with columns t,r,g,b (default: synthetic)")
    f.add_argument("--target", metavar="CSV", help="target signal with columns t,r,g,b (default: synthesized)")
    f.add_argument("--length", type=_positive_int, default=600, help="synthetic signal length (default 600)")
    f.add_argument("--order", type=_positive_int, default=100, help="number of filter taps (default 100)")
    f.add_argument("--solver", choices=["gmres", "qgmres", "irfgmres", "qtv-fqgmres"], default="qtv-fqgmres")
    f.add_argument("--lambda", dest="lam", type=_nonneg_float, default=0.0,
                   help="TV weight for qtv-fqgmres (default 0)")
    f.add_argument("--tol", type=_positive_float, default=1e-6)
    f.add_argument("--max-iter", type=_positive_int, help="iteration cap (default 4 x order)")
    f.add_argument("--seed", type=int, default=0, help="seed for synthetic data (default 0)")
    f.add_argument("--log", metavar="PATH", help="write a JSON run log")
    f.add_argument("--out", metavar="PATH", help="write the filter taps (four columns)")
    f.set_defaults(func=cmd_filter_signal)

    r = sub.add_parser("restore-image", help="deblur and denoise a color image",
                       description="Degrade a color image (or take a degraded one) and restore it.")
    src = r.add_mutually_exclusive_group(required=True)
    src.add_argument("--input", metavar="PNG", help="clean reference image")
    src.add_argument("--stock", choices=STOCK_IMAGES, help="bundled 100x100 reference image")
    r.add_argument("--observed", metavar="PNG", help="already degraded image (skips simulation)")
    r.add_argument("--blur", choices=["gaussian", "identity"], default="gaussian")
    r.add_argument("--blur-size", type=_positive_int, default=9, help="PSF side (default 9)")
    r.add_argument("--blur-sigma", type=_positive_float, default=2.0, help="PSF sigma (default 2)")
    r.add_argument("--boundary", choices=["periodic", "zero", "reflexive"], default="periodic")
    r.add_argument("--noise", type=_nonneg_float, default=5.0,
                   help="noise standard deviation on the 0-255 scale (default 5)")
    r.add_argument("--lambda", dest="lam", type=_lambda,
                   help=f"TV weight, or 'auto' for the discrepancy rule (default {IMAGE_LAMBDA:g})")
    r.add_argument("--solver", choices=["qtv-fqgmres", "qtv-fqgmres-improved", "fqgmres"],
                   default="qtv-fqgmres-improved")
    r.add_argument("--max-iter", type=_positive_int, default=60, help="iteration cap (default 60)")
    r.add_argument("--tol", type=_positive_float,
                   help="relative residual tolerance (default 1e-6; fqgmres stops at the noise level)")
    r.add_argument("--seed", type=int, default=1, help="noise seed (default 1)")
    r.add_argument("--out", metavar="PNG", help="write the restored image")
    r.add_argument("--log", metavar="PATH", help="write a JSON run log with metrics")
    r.set_defaults(func=cmd_restore_image)

    b = sub.add_parser("bench", help="run one comparison suite",
                       description="Run a comparison suite and print mean iterations, time and residual.")
    b.add_argument("--suite", choices=bench.SUITES, required=True)
    b.add_argument("--n", type=_positive_int, help="matrix order or filter length (suite default)")
    b.add_argument("--seeds", type=_positive_int, default=3, help="number of seeds 0..S-1 (default 3)")
    b.add_argument("--tol", type=_positive_float, default=1e-6)
    b.add_argument("--max-iter", type=_positive_int, help="iteration cap (suite default)")
    b.add_argument("--format", choices=["markdown", "csv"], default="markdown")
    b.add_argument("--out", metavar="PATH", help="write the table here instead of stdout")
    b.set_defaults(func=cmd_bench)

    q = sub.add_parser("reproduce", help="run all suites and print published vs observed values",
                       description="Run the three suites and print published iteration counts next to "
                                   "the observed means.")
    q.add_argument("--seeds", type=_positive_int, default=3, help="number of seeds (default 3)")
    q.add_argument("--quick", action="store_true", help="smaller problem sizes")
    q.add_argument("--out", metavar="PATH", help="write the report here instead of stdout")
    q.set_defaults(func=cmd_reproduce)
    return p


def _config(args) -> dict:
    out = {}
    for k, v in vars(args).items():
        if k == "func":
            continue
        out[k] = v
    return out


def _finish(rep, args, metrics_block=None, extra=None) -> int:
    if getattr(args, "log", None):
        log = runlog_from_report(rep, _config(args), metrics_block)
        if extra:
            log.extra.update(extra)
        write_runlog(log, args.log)
    print(rep.summary())
    if metrics_block:
        print(json.dumps(metrics_block))
    return EXIT_OK if rep.converged else EXIT_NOT_CONVERGED


def cmd_solve(args) -> int:
    if args.solver == "qgmres" and args.precond != "none":
        raise UsageError("qgmres takes no preconditioner; use qgmres-lp, qgmres-rp or fqgmres")
    if args.solver in ("qgmres-lp", "qgmres-rp") and args.precond == "jacobi-sqrt-res":
        raise UsageError("jacobi-sqrt-res changes every step and needs --solver fqgmres")
    if len(args.matrix) == 1:
        A = read_qmatrix(args.matrix[0], order=args.order)
    elif len(args.matrix) in (3, 4):
        A = read_qmatrix([None if m == "-" else m for m in args.matrix], order=args.order)
    else:
        raise UsageError("--matrix takes one extended file or three/four part files")
    n = A.shape[0]
    if A.shape[0] != A.shape[1]:
        raise UsageError(f"matrix must be square, got {A.shape}")
    if args.rhs:
        b = read_qvector(args.rhs)
        if b.n < n:
            raise UsageError(f"right-hand side has {b.n} entries, matrix order is {n}")
        b = QVector._wrap(b.parts[:, :n])
    else:
        b = QVector(np.ones((4, n)))
    cfg = SolverConfig(tol=args.tol, max_iter=args.max_iter, restart=args.restart)
    P = None
    if args.precond == "sgs":
        P = sgs_preconditioner(A)
    elif args.precond == "jacobi-sqrt-res":
        P = jacobi_sqrt_residual(A, b)
    if args.solver == "qgmres":
        rep = qgmres(A, b, cfg=cfg)
    elif args.solver == "qgmres-lp":
        rep = qgmres_left(A, b, P=P, cfg=cfg)
    elif args.solver == "qgmres-rp":
        rep = qgmres_right(A, b, P=P, cfg=cfg)
    else:
        rep = fqgmres(A, b, P_seq=P, cfg=cfg)
    if args.out:
        write_qvector(rep.x, args.out)
    return _finish(rep, args)


def cmd_filter_signal(args) -> int:
    if (args.input is None) != (args.target is None):
        raise UsageError("--input and --target must be given together")
    L = args.order
    w_true = None
    if args.input:
        _, x = read_signal_csv(args.input)
        _, y = read_signal_csv(args.target)
        sysm = build_signal_system(x, L, y)
    else:
        A, b, w_true = bench.signal_problem(args.length, L, args.seed)
        sysm = None
    if sysm is not None:
        A, b = sysm.normal_matrix(), sysm.normal_rhs()
    cfg = SolverConfig(tol=args.tol, max_iter=args.max_iter or 4 * L)
    if args.solver == "gmres":
        rep = gmres_real(A, b, cfg=cfg)
    elif args.solver == "qgmres":
        rep = qgmres(A, b, cfg=cfg)
    elif args.solver == "irfgmres":
        rep = irfgmres_real(A, b, cfg=cfg)
    else:
        rep = qtv_fqgmres(A, b, QTVConfig(lam=args.lam, inner=cfg), stack=DifferenceStack.signal(L))
    if args.out:
        write_qvector(rep.x, args.out)
    extra = None
    if w_true is not None:
        err = float((rep.x - w_true).norm() / w_true.norm())
        extra = {"filter_relative_error": err}
        print(f"relative filter error {err:.4e}")
    return _finish(rep, args, extra=extra)


def discrepancy_tol(b: QVector, sigma: float, tau: float = 1.01) -> float:
    """Relative tolerance at which the residual reaches the expected noise norm."""
    return min(1.0, tau * math.sqrt(3 * b.n) * sigma / b.norm())


def _restore(A, b, args, lam, sigma):
    tol = args.tol
    if tol is None:
        tol = discrepancy_tol(b, sigma) if args.solver == "fqgmres" and sigma > 0 else 1e-6
    cfg = SolverConfig(tol=tol, max_iter=args.max_iter, reorthogonalize=True)
    if args.solver == "fqgmres":
        return fqgmres(A, b, P_seq=jacobi_sqrt_residual(A, b), cfg=cfg)
    qcfg = QTVConfig(lam=lam, inner=cfg)
    if args.solver == "qtv-fqgmres":
        return qtv_fqgmres(A, b, qcfg)
    return qtv_fqgmres_improved(A, b, qcfg)


def _auto_lambda(A, b, args, sigma):
    """Discrepancy rule: the lambda whose residual is closest to sqrt(3 N) sigma."""
    target = math.sqrt(3 * A.shape[0]) * sigma
    best = None
    for lam in (3e-4, 1e-3, 2.5e-3, 1e-2, 3e-2):
        rep = _restore(A, b, args, lam, sigma)
        r = (b - A.matvec(rep.x)).norm()
        gap = abs(math.log(max(r, 1e-300) / target))
        if best is None or gap < best[0]:
            best = (gap, lam, rep)
    return best[1], best[2]


def cmd_restore_image(args) -> int:
    if args.solver == "fqgmres" and args.lam is not None:
        raise UsageError("--lambda has no effect with --solver fqgmres")
    ref = read_png(args.input) if args.input else stock_image(args.stock)
    m, n, _ = ref.shape
    model = BlurModel(kind=args.blur, size=args.blur_size, sigma=args.blur_sigma, boundary=args.boundary)
    A = build_blur_operator(model, m, n)
    sigma = args.noise / 255.0
    if args.observed:
        obs = read_png(args.observed)
        if obs.shape != ref.shape:
            raise UsageError(f"observed image {obs.shape} and reference {ref.shape} differ in size")
        b = image_to_qvec(obs)
    else:
        b = add_gaussian_noise(A.matvec(image_to_qvec(ref)), sigma, seed=args.seed)
        obs = qvec_to_image(b, m, n)
    lam = IMAGE_LAMBDA if args.lam is None else args.lam
    if args.solver == "fqgmres":
        lam = 0.0
    if lam == "auto":
        if sigma == 0:
            raise UsageError("--lambda auto needs a positive --noise level")
        lam, rep = _auto_lambda(A, b, args, sigma)
        print(f"selected lambda {lam:g}")
    else:
        rep = _restore(A, b, args, lam, sigma)
    restored = qvec_to_image(rep.x, m, n)
    if args.out:
        write_png(args.out, restored)
    block = {"observed": metrics(ref, obs), "restored": metrics(ref, restored), "lambda": lam}
    return _finish(rep, args, block)


def cmd_bench(args) -> int:
    rows = bench.run_suite(args.suite, n=args.n, seeds=range(args.seeds), tol=args.tol, max_iter=args.max_iter)
    text = bench.format_table(bench.summarize(rows), args.format)
    _emit(text, args.out)
    return EXIT_OK


def cmd_reproduce(args) -> int:
    sizes = {"precond-table": 200, "sparse-table": 1000, "signal-table": 50} if args.quick else {}
    out = []
    for suite in bench.SUITES:
        rows = bench.run_suite(suite, n=sizes.get(suite), seeds=range(args.seeds))
        kind = "pattern match (seed-dependent)" if suite != "sparse-table" else "pattern match (synthetic surrogate)"
        out.append(f"## {suite}: {kind}\n")
        out.append(bench.format_table(bench.summarize(rows), "markdown", published=True))
    out.append("Image restoration: run `quatkrylov restore-image --stock NAME`; published image values are not "
               "reproducible because blur, noise and lambda are unstated.\n")
    _emit("\n".join(out), args.out)
    return EXIT_OK


def _emit(text: str, path: Optional[str]):
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"quatkrylov: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (QuatKrylovError, OSError, ValueError) as exc:
        print(f"quatkrylov: error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
