"""Reading quaternion matrices and persisting run logs.

Two matrix sources are supported:

* a bundle of up to four standard Matrix Market files, one per part
  (``A0`` may be omitted and is then zero);
* a single extended file whose header line is
  ``%%QuaternionMatrixMarket matrix coordinate real general`` followed by
  optional ``%`` comments, a size line ``M N NNZ`` and ``NNZ`` entry lines
  ``row col a0 a1 a2 a3`` (1-based indices, ASCII, whitespace separated).

Run logs are JSON documents tagged with :data:`RUNLOG_VERSION`.
"""

from __future__ import annotations

import io as _io
import json
import os
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.io
import scipy.sparse as sp

from .errors import FormatError, VersionError
from .quaternion import QMatrix, QVector

__all__ = [
    "QMM_HEADER",
    "RUNLOG_VERSION",
    "RunLog",
    "read_qmatrix",
    "read_qmm",
    "write_qmm",
    "read_mm_part",
    "read_qvector",
    "write_qvector",
    "write_runlog",
    "read_runlog",
    "runlog_from_report",
]

QMM_HEADER = "%%QuaternionMatrixMarket matrix coordinate real general"
RUNLOG_VERSION = "quatkrylov-runlog/1"


def _open_text(src):
    if hasattr(src, "read"):
        return src, False
    try:
        return open(src, "r"), True
    except OSError as exc:
        raise FormatError(f"cannot open {src}: {exc}") from exc


def read_mm_part(src) -> sp.csc_matrix:
    """One real Matrix Market matrix (coordinate or array) as CSC."""
    fh, close = _open_text(src)
    try:
        text = fh.read()
    finally:
        if close:
            fh.close()
    head = text.lstrip().split("\n", 1)[0].lower()
    if not head.startswith("%%matrixmarket"):
        raise FormatError("missing %%MatrixMarket header")
    tokens = head.split()
    if len(tokens) < 5 or tokens[1] != "matrix":
        raise FormatError(f"malformed header: {head}")
    if tokens[3] not in ("real", "integer", "pattern"):
        raise FormatError(f"unsupported field {tokens[3]!r} (only real, integer and pattern parts)")
    if tokens[4] not in ("general", "symmetric", "skew-symmetric"):
        raise FormatError(f"unsupported symmetry {tokens[4]!r}")
    try:
        M = scipy.io.mmread(_io.BytesIO(text.encode()))
    except (ValueError, IndexError) as exc:
        raise FormatError(f"malformed Matrix Market data: {exc}") from exc
    return sp.csc_matrix(M, dtype=float)


def read_qmm(src) -> QMatrix:
    """Read the extended single-file quaternion format."""
    fh, close = _open_text(src)
    try:
        lines = fh.read().splitlines()
    finally:
        if close:
            fh.close()
    if not lines or lines[0].strip().split() != QMM_HEADER.split():
        raise FormatError(f"expected header {QMM_HEADER!r}")
    body = [ln for ln in lines[1:] if ln.strip() and not ln.lstrip().startswith("%")]
    if not body:
        raise FormatError("missing size line")
    try:
        m, n, nnz = (int(t) for t in body[0].split())
    except ValueError as exc:
        raise FormatError(f"bad size line {body[0]!r}") from exc
    entries = body[1:]
    if len(entries) != nnz:
        raise FormatError(f"size line promises {nnz} entries, found {len(entries)}")
    if nnz == 0:
        return QMatrix(*(sp.csc_matrix((m, n)) for _ in range(4)), shape=(m, n))
    try:
        data = np.array([ln.split() for ln in entries], dtype=float)
    except ValueError as exc:
        raise FormatError("entry lines must hold six numbers: row col a0 a1 a2 a3") from exc
    if data.ndim != 2 or data.shape[1] != 6:
        raise FormatError("entry lines must hold six numbers: row col a0 a1 a2 a3")
    rows = data[:, 0].astype(int) - 1
    cols = data[:, 1].astype(int) - 1
    if rows.min() < 0 or cols.min() < 0 or rows.max() >= m or cols.max() >= n:
        raise FormatError("entry index out of range")
    parts = [sp.csc_matrix((data[:, 2 + k], (rows, cols)), shape=(m, n)) for k in range(4)]
    return QMatrix(*parts, shape=(m, n))


def write_qmm(A: QMatrix, path) -> None:
    """Write ``A`` in the extended format with 17 significant digits."""
    S = A.to_sparse()
    pattern = None
    for k in range(4):
        p = S.part(k)
        mask = sp.csc_matrix(p != 0, dtype=float)
        pattern = mask if pattern is None else pattern + mask
    coo = sp.coo_matrix(pattern)
    order = np.lexsort((coo.row, coo.col))
    r, c = coo.row[order], coo.col[order]
    vals = [np.asarray(S.part(k).tocsr()[r, c]).ravel() for k in range(4)]
    m, n = A.shape
    with open(path, "w") as fh:
        fh.write(QMM_HEADER + "\n")
        fh.write(f"{m} {n} {len(r)}\n")
        for t in range(len(r)):
            fh.write(f"{r[t] + 1} {c[t] + 1} " + " ".join(f"{vals[k][t]:.17g}" for k in range(4)) + "\n")


def _is_qmm(path) -> bool:
    try:
        with open(path, "r") as fh:
            return fh.readline().startswith("%%QuaternionMatrixMarket")
    except OSError as exc:
        raise FormatError(f"cannot open {path}: {exc}") from exc


def read_qmatrix(bundle, order: Optional[int] = None) -> QMatrix:
    """Load a quaternion matrix.

    ``bundle`` is either a path to an extended file or a sequence / mapping
    of up to four Matrix Market paths for the parts ``A0..A3``; missing
    (``None``) parts are zero.  ``order`` keeps the leading
    ``order x order`` principal submatrix.
    """
    if isinstance(bundle, (str, os.PathLike)):
        if _is_qmm(bundle):
            A = read_qmm(bundle)
        else:
            A = QMatrix(read_mm_part(bundle))
    else:
        if isinstance(bundle, dict):
            seq = [bundle.get(k, bundle.get(f"A{k}")) for k in range(4)]
        else:
            seq = list(bundle)
            if len(seq) == 3:
                seq = [None] + seq
            if len(seq) != 4:
                raise FormatError("a bundle holds four parts (or three imaginary parts)")
        parts = [None if s is None else read_mm_part(s) for s in seq]
        shapes = {p.shape for p in parts if p is not None}
        if not shapes:
            raise FormatError("bundle has no parts")
        if len(shapes) > 1:
            raise FormatError(f"parts have different shapes: {sorted(shapes)}")
        shape = shapes.pop()
        parts = [sp.csc_matrix(shape) if p is None else p for p in parts]
        A = QMatrix(*parts, shape=shape)
    if order is not None:
        if order > min(A.shape):
            raise FormatError(f"order {order} exceeds matrix size {A.shape}")
        A = A.submatrix(order)
    return A


def read_qvector(path) -> QVector:
    """Right-hand side as text: one entry per line with 1 (real) or 4 columns."""
    try:
        data = np.loadtxt(path, ndmin=2, comments="%")
    except (OSError, ValueError) as exc:
        raise FormatError(f"cannot read vector {path}: {exc}") from exc
    if data.shape[1] == 1:
        return QVector.from_components(data[:, 0])
    if data.shape[1] == 4:
        return QVector(data.T.copy())
    raise FormatError(f"vector file must have 1 or 4 columns, got {data.shape[1]}")


def write_qvector(x: QVector, path) -> None:
    np.savetxt(path, x.parts.T, fmt="%.17g")


@dataclass
class RunLog:
    solver: str
    config: dict = field(default_factory=dict)
    residuals: list = field(default_factory=list)
    iterations: int = 0
    wall_time: float = 0.0
    termination: str = ""
    residual_kind: str = "true"
    true_residual: Optional[float] = None
    metrics: Optional[dict] = None
    timings: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)
    version: str = RUNLOG_VERSION


def runlog_from_report(rep, config: Optional[dict] = None, metrics: Optional[dict] = None) -> RunLog:
    return RunLog(
        solver=rep.solver,
        config=dict(config or {}),
        residuals=[float(v) for v in rep.relative_history],
        iterations=int(rep.iterations),
        wall_time=float(rep.wall_time),
        termination=rep.termination.value,
        residual_kind=rep.residual_kind,
        true_residual=float(rep.true_residual / rep.reference_norm),
        metrics=metrics,
        timings={"solve": float(rep.wall_time)},
    )


def _jsonable(v):
    if isinstance(v, float) and not np.isfinite(v):
        return {"float": repr(v)}
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.generic):
        return _jsonable(v.item())
    return v


def _unjson(v):
    if isinstance(v, dict):
        if set(v) == {"float"}:
            return float(v["float"])
        return {k: _unjson(x) for k, x in v.items()}
    if isinstance(v, list):
        return [_unjson(x) for x in v]
    return v


def write_runlog(log: RunLog, path) -> None:
    doc = _jsonable(asdict(log))
    # json writes floats with repr, which round-trips doubles exactly
    try:
        with open(path, "w") as fh:
            json.dump(doc, fh, indent=2, allow_nan=False)
            fh.write("\n")
    except OSError as exc:
        raise OSError(f"cannot write run log {path}: {exc}") from exc


def read_runlog(path) -> RunLog:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(f"run log {path} is not valid JSON: {exc}") from exc
    version = doc.get("version")
    if version != RUNLOG_VERSION:
        raise VersionError(f"unsupported run log version {version!r} (expected {RUNLOG_VERSION!r})")
    doc = _unjson(doc)
    known = set(RunLog.__dataclass_fields__)
    unknown = set(doc) - known
    if unknown:
        raise FormatError(f"unknown run log fields: {sorted(unknown)}")
    return RunLog(**doc)
