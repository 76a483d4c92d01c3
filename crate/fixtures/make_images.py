"""Regenerates the synthetic fixture images (48x40 binary PPM).

Requires numpy and Pillow. Output is deterministic.
"""
from pathlib import Path

import numpy as np
from PIL import Image

W, H = 48, 40
yy, xx = np.mgrid[0:H, 0:W]


def gradient(r, g, b):
    return np.stack([r + 0 * xx, g + 0 * xx, b + 0 * xx], -1).astype(float)


def disc():
    a = gradient(60 + xx * 1.5, 80 + yy * 1.0, 120 - xx * 0.8)
    a[((xx - 30) ** 2 + (yy - 14) ** 2) < 81] = [230, 200, 40]
    return a


def square():
    a = gradient(40 + yy * 2, 90, 60 + xx)
    a[22:34, 8:20] = [200, 40, 50]
    return a


def stripes():
    a = gradient(120, 130, 140)
    m = (xx > 26) & (yy > 6) & (yy < 26)
    a[m & ((xx // 3) % 2 == 0)] = [20, 20, 20]
    a[m & ((xx // 3) % 2 == 1)] = [240, 240, 240]
    return a


def ring():
    r = np.sqrt((xx - 18) ** 2 + (yy - 22) ** 2)
    a = gradient(30 + xx, 60 + yy, 90)
    a[(r > 6) & (r < 10)] = [250, 120, 30]
    return a


def blobs():
    a = gradient(200 - yy * 2, 190 - xx, 170)
    a[((xx - 10) ** 2 + (yy - 10) ** 2) < 36] = [30, 60, 200]
    a[((xx - 38) ** 2 + (yy - 30) ** 2) < 25] = [40, 160, 60]
    return a


def checker():
    a = gradient(90, 90 + xx, 60 + yy)
    c = (xx < 20) & (yy > 20)
    a[c & (((xx // 4) + (yy // 4)) % 2 == 0)] = [255, 255, 255]
    return a


if __name__ == "__main__":
    out = Path(__file__).parent / "images"
    out.mkdir(exist_ok=True)
    for make in (disc, square, stripes, ring, blobs, checker):
        img = np.clip(make(), 0, 255).astype(np.uint8)
        Image.fromarray(img, "RGB").save(out / f"{make.__name__}.ppm")
