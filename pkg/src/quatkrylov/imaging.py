"""Forward models, channel packing and quality metrics.

Color images are float arrays of shape ``(m, n, 3)`` holding red, green
and blue in ``[0, 1]``.  They become pure quaternion vectors by stacking
columns (column-major order), with the channels in the ``i, j, k`` parts.
Values are only clamped when writing PNG files.
"""

from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass
from importlib import resources
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy import ndimage

from .errors import DimensionError, FormatError, InvalidParameter
from .quaternion import QMatrix, QVector

__all__ = [
    "BlurModel",
    "SignalFilterSystem",
    "image_to_qvec",
    "qvec_to_image",
    "gaussian_psf",
    "build_blur_operator",
    "add_gaussian_noise",
    "psnr",
    "snr",
    "ssim",
    "metrics",
    "build_signal_system",
    "synthetic_signal",
    "read_png",
    "write_png",
    "read_signal_csv",
    "stock_image",
    "STOCK_IMAGES",
]

STOCK_IMAGES = ("astronaut", "chelsea", "coffee", "rocket")


def image_to_qvec(img) -> QVector:
    img = np.asarray(img, dtype=float)
    if img.ndim != 3 or img.shape[2] != 3:
        raise DimensionError(f"expected an (m, n, 3) image, got shape {img.shape}")
    m, n, _ = img.shape
    parts = np.zeros((4, m * n))
    for c in range(3):
        parts[c + 1] = img[:, :, c].reshape(-1, order="F")
    return QVector._wrap(parts)


def qvec_to_image(x: QVector, m: int, n: int) -> np.ndarray:
    if x.n != m * n:
        raise DimensionError(f"vector of length {x.n} cannot hold an {m}x{n} image")
    img = np.empty((m, n, 3))
    for c in range(3):
        img[:, :, c] = x.parts[c + 1].reshape((m, n), order="F")
    return img


def gaussian_psf(size: int = 9, sigma: float = 2.0) -> np.ndarray:
    if size < 1 or sigma <= 0:
        raise InvalidParameter("PSF size must be positive and sigma > 0")
    ax = np.arange(size) - (size - 1) / 2
    g = np.exp(-0.5 * (ax / sigma) ** 2)
    psf = np.outer(g, g)
    return psf / psf.sum()


@dataclass(frozen=True)
class BlurModel:
    kind: str = "gaussian"
    size: int = 9
    sigma: float = 2.0
    boundary: str = "periodic"
    kernel: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.kind not in ("gaussian", "identity", "custom"):
            raise InvalidParameter(f"unknown blur kind {self.kind!r}")
        if self.boundary not in ("zero", "periodic", "reflexive"):
            raise InvalidParameter(f"unknown boundary {self.boundary!r}")
        if self.kind == "custom" and self.kernel is None:
            raise InvalidParameter("a custom blur needs a kernel")

    def psf(self) -> np.ndarray:
        if self.kind == "identity":
            return np.ones((1, 1))
        if self.kind == "custom":
            k = np.atleast_2d(np.asarray(self.kernel, dtype=float))
            return k / k.sum()
        return gaussian_psf(self.size, self.sigma)


def _boundary_index(idx: np.ndarray, size: int, boundary: str):
    if boundary == "periodic":
        return idx % size, np.ones(idx.shape, bool)
    if boundary == "reflexive":
        period = 2 * size
        j = idx % period
        j = np.where(j >= size, period - 1 - j, j)
        return j, np.ones(idx.shape, bool)
    ok = (idx >= 0) & (idx < size)
    return np.clip(idx, 0, size - 1), ok


def build_blur_operator(model: BlurModel, m: int, n: int) -> QMatrix:
    """Sparse real convolution operator on column-major ``m x n`` images.

    ``(A x)(r, c) = sum_{u,v} psf(u, v) x(r - u + cr, c - v + cc)`` with
    ``(cr, cc)`` the PSF center and out-of-range pixels resolved by the
    boundary rule.
    """
    psf = model.psf()
    pr, pc = psf.shape
    if pr > m or pc > n:
        raise DimensionError(f"PSF {psf.shape} does not fit a {m}x{n} image")
    cr, cc = (pr - 1) // 2, (pc - 1) // 2
    rr, cols = np.meshgrid(np.arange(m), np.arange(n), indexing="ij")
    out_idx = (rr + m * cols).ravel(order="F")
    rows_all, cols_all, vals_all = [], [], []
    for u in range(pr):
        for v in range(pc):
            val = psf[u, v]
            if val == 0:
                continue
            sr, okr = _boundary_index(rr - u + cr, m, model.boundary)
            sc, okc = _boundary_index(cols - v + cc, n, model.boundary)
            ok = (okr & okc).ravel(order="F")
            src = (sr + m * sc).ravel(order="F")
            rows_all.append(out_idx[ok])
            cols_all.append(src[ok])
            vals_all.append(np.full(int(ok.sum()), val))
    N = m * n
    A0 = sp.csr_matrix(
        (np.concatenate(vals_all), (np.concatenate(rows_all), np.concatenate(cols_all))), shape=(N, N)
    )
    A0.sum_duplicates()
    return QMatrix(A0.tocsc(), shape=(N, N))


def add_gaussian_noise(x: QVector, sigma: float, seed=None) -> QVector:
    """Add i.i.d. ``N(0, sigma^2)`` noise to the three imaginary parts."""
    if sigma < 0:
        raise InvalidParameter("noise sigma must be nonnegative")
    parts = np.array(x.parts)
    if sigma > 0:
        rng = np.random.default_rng(seed)
        parts[1:] += sigma * rng.standard_normal(parts[1:].shape)
    return QVector._wrap(parts)


def _pair(ref, test):
    ref = np.asarray(ref, dtype=float)
    test = np.asarray(test, dtype=float)
    if ref.shape != test.shape:
        raise DimensionError(f"image shapes differ: {ref.shape} vs {test.shape}")
    return ref, test


def psnr(ref, test, peak: float = 1.0) -> float:
    ref, test = _pair(ref, test)
    mse = float(np.mean((ref - test) ** 2))
    if mse == 0:
        return float("inf")
    return 10.0 * np.log10(peak ** 2 / mse)


def snr(ref, test) -> float:
    ref, test = _pair(ref, test)
    err = float(np.sum((ref - test) ** 2))
    if err == 0:
        return float("inf")
    return 10.0 * np.log10(float(np.sum((ref - ref.mean()) ** 2)) / err)


def ssim(ref, test, data_range: float = 1.0, sigma: float = 1.5, K1: float = 0.01, K2: float = 0.03) -> float:
    """Mean SSIM with an 11x11 Gaussian window, averaged over channels."""
    ref, test = _pair(ref, test)
    if ref.ndim == 2:
        ref, test = ref[:, :, None], test[:, :, None]
    C1 = (K1 * data_range) ** 2
    C2 = (K2 * data_range) ** 2
    pad = 5
    if min(ref.shape[:2]) <= 2 * pad:
        raise DimensionError("SSIM needs images larger than the 11x11 window")
    vals = []
    for c in range(ref.shape[2]):
        a, b = ref[:, :, c], test[:, :, c]
        f = lambda z: ndimage.gaussian_filter(z, sigma, mode="reflect", truncate=3.5)
        ma, mb = f(a), f(b)
        va = f(a * a) - ma * ma
        vb = f(b * b) - mb * mb
        cov = f(a * b) - ma * mb
        s = ((2 * ma * mb + C1) * (2 * cov + C2)) / ((ma ** 2 + mb ** 2 + C1) * (va + vb + C2))
        vals.append(s[pad:-pad, pad:-pad].mean())
    return float(np.mean(vals))


def metrics(ref, test) -> dict:
    return {"psnr": psnr(ref, test), "snr": snr(ref, test), "ssim": ssim(ref, test)}


@dataclass
class SignalFilterSystem:
    """Filter identification ``y(t) = sum_s x(t - s) w(s)``, ``s = 0..L-1``.

    ``X`` is the ``T x L`` quaternion convolution matrix with
    ``X[t, s] = x(t - s)`` (zero before the first sample), so ``y = X w``
    with the sample multiplying the filter tap from the left.  The square
    system handed to the solvers is the normal equations
    ``X^* X w = X^* y``.
    """

    T: int
    order: int
    X: QMatrix
    y: Optional[QVector] = None

    def synthesize(self, w: QVector) -> QVector:
        if w.n != self.order:
            raise DimensionError(f"filter has {w.n} taps, system expects {self.order}")
        return self.X.matvec(w)

    def normal_matrix(self) -> QMatrix:
        return self.X.H @ self.X

    def normal_rhs(self, y: Optional[QVector] = None) -> QVector:
        y = self.y if y is None else y
        if y is None:
            raise InvalidParameter("no target signal given")
        return self.X.H.matvec(y)


def build_signal_system(x_samples: QVector, filter_order: int, y: Optional[QVector] = None) -> SignalFilterSystem:
    T = x_samples.n
    if filter_order < 1:
        raise InvalidParameter("filter order must be positive")
    if T < filter_order:
        raise DimensionError(f"signal length {T} is shorter than the filter order {filter_order}")
    if y is not None and y.n != T:
        raise DimensionError("target signal length differs from input length")
    X = np.zeros((4, T, filter_order))
    for s in range(filter_order):
        X[:, s:, s] = x_samples.parts[:, : T - s]
    return SignalFilterSystem(T, filter_order, QMatrix.from_dense(X), y)


def synthetic_signal(T: int, seed=0, n_waves: int = 3, noise: float = 0.0) -> QVector:
    """Pure quaternion RGB waveform: per channel a sum of random sinusoids plus optional white noise."""
    rng = np.random.default_rng(seed)
    t = np.arange(T)
    parts = np.zeros((4, T))
    for c in range(1, 4):
        freq = rng.uniform(0.005, 0.2, n_waves)
        phase = rng.uniform(0, 2 * np.pi, n_waves)
        amp = rng.uniform(0.5, 1.5, n_waves)
        parts[c] = np.sum(amp[:, None] * np.sin(2 * np.pi * freq[:, None] * t + phase[:, None]), axis=0)
        if noise > 0:
            parts[c] += noise * rng.standard_normal(T)
    return QVector._wrap(parts)


def read_png(path) -> np.ndarray:
    from PIL import Image

    try:
        with Image.open(path) as im:
            arr = np.asarray(im.convert("RGB"), dtype=float) / 255.0
    except (OSError, ValueError) as exc:
        raise FormatError(f"cannot read image {path}: {exc}") from exc
    return arr


def write_png(path, img) -> None:
    from PIL import Image

    arr = np.clip(np.asarray(img, dtype=float), 0.0, 1.0)
    Image.fromarray(np.round(arr * 255.0).astype(np.uint8), mode="RGB").save(path)


def read_signal_csv(path):
    """Read ``t, r, g, b`` columns (optional header); returns ``(t, QVector)``."""
    rows = []
    with open(path, newline="") as fh:
        for rec in csv.reader(fh):
            if not rec or rec[0].lstrip().startswith("#"):
                continue
            try:
                vals = [float(v) for v in rec]
            except ValueError:
                if rows:
                    raise FormatError(f"non-numeric row in {path}: {rec}")
                continue
            if len(vals) != 4:
                raise FormatError(f"expected 4 columns (t, r, g, b), got {len(vals)}")
            rows.append(vals)
    if not rows:
        raise FormatError(f"no samples in {path}")
    data = np.array(rows)
    parts = np.zeros((4, len(data)))
    parts[1:] = data[:, 1:].T
    return data[:, 0], QVector._wrap(parts)


def stock_image(name: str) -> np.ndarray:
    """One of the bundled 100x100 test images."""
    if name not in STOCK_IMAGES:
        raise InvalidParameter(f"unknown stock image {name!r}; choose from {STOCK_IMAGES}")
    ref = resources.files("quatkrylov") / "data" / f"{name}.png"
    with resources.as_file(ref) as p:
        return read_png(p)


def qvec_digest(x: QVector) -> str:
    return hashlib.sha256(np.ascontiguousarray(x.parts).tobytes()).hexdigest()
