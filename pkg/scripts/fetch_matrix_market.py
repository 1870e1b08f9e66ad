"""Download the four Matrix Market matrices of the sparse comparison.

The parts A0..A3 of the composite quaternion matrix are the leading
order-3000 principal submatrices of bcspwr10, af23560, rw5151 and rdb5000.
The script stores the raw downloads and writes one extended quaternion
file ``composite.qmm``.  Point ``QUATKRYLOV_MM_DIR`` at the output
directory to enable the networked test.

    python3 scripts/fetch_matrix_market.py --out data/mm
"""

import argparse
import gzip
import shutil
import sys
import urllib.request
from pathlib import Path

from quatkrylov.io import read_qmatrix, write_qmm

BASE = "https://math.nist.gov/pub/MatrixMarket2"
PARTS = {
    "bcspwr10": f"{BASE}/Harwell-Boeing/bcspwr/bcspwr10.mtx.gz",
    "af23560": f"{BASE}/NEP/airfoil/af23560.mtx.gz",
    "rw5151": f"{BASE}/NEP/mvmrwk/rw5151.mtx.gz",
    "rdb5000": f"{BASE}/NEP/brussel/rdb5000.mtx.gz",
}


def fetch(name: str, url: str, out: Path) -> Path:
    target = out / f"{name}.mtx"
    if target.exists():
        return target
    gz = out / f"{name}.mtx.gz"
    print(f"downloading {url}")
    with urllib.request.urlopen(url, timeout=60) as resp, open(gz, "wb") as fh:
        shutil.copyfileobj(resp, fh)
    with gzip.open(gz, "rb") as src, open(target, "wb") as dst:
        shutil.copyfileobj(src, dst)
    gz.unlink()
    return target


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="mm", help="output directory (default ./mm)")
    ap.add_argument("--order", type=int, default=3000, help="principal submatrix order (default 3000)")
    args = ap.parse_args(argv)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        paths = [fetch(name, url, out) for name, url in PARTS.items()]
    except OSError as exc:
        print(f"download failed: {exc}", file=sys.stderr)
        return 1
    A = read_qmatrix([str(p) for p in paths], order=args.order)
    write_qmm(A, out / "composite.qmm")
    print(f"wrote {out / 'composite.qmm'} ({A.shape[0]} x {A.shape[1]})")
    return 0


if __name__ == "__main__":
    sys.exit(main())
