"""Regenerate the bundled 100x100 test images from scikit-image's sample data."""

from pathlib import Path

import numpy as np
from PIL import Image
from skimage import data

OUT = Path(__file__).resolve().parents[1] / "src" / "quatkrylov" / "data"
NAMES = ("astronaut", "chelsea", "coffee", "rocket")


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    for name in NAMES:
        img = Image.fromarray(getattr(data, name)())
        # central square crop, then downsample
        w, h = img.size
        s = min(w, h)
        img = img.crop(((w - s) // 2, (h - s) // 2, (w - s) // 2 + s, (h - s) // 2 + s))
        img = img.resize((100, 100), Image.LANCZOS)
        img.save(OUT / f"{name}.png")
        print(name, np.asarray(img).shape)


if __name__ == "__main__":
    main()
