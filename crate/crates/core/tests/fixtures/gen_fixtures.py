#!/usr/bin/env python3
"""Regenerates the committed test fixtures.

The resampler here is written independently of the Rust crate: it builds the
full separable weight matrices and applies them as two dense matrix products.
SSIM reference values come from scikit-image.

    python3 gen_fixtures.py   # run from this directory
"""
import struct

import numpy as np
from PIL import Image, ImageDraw
from skimage.metrics import structural_similarity

A = -0.5


def cubic(x):
    x = np.abs(x)
    out = np.zeros_like(x)
    near = x <= 1
    far = (x > 1) & (x < 2)
    out[near] = (A + 2) * x[near] ** 3 - (A + 3) * x[near] ** 2 + 1
    out[far] = A * x[far] ** 3 - 5 * A * x[far] ** 2 + 8 * A * x[far] - 4 * A
    return out


def weight_matrix(src_len, dst_len, antialias):
    scale = src_len / dst_len
    stretch = scale if (antialias and scale > 1) else 1.0
    m = np.zeros((dst_len, src_len))
    for d in range(dst_len):
        center = (d + 0.5) * scale - 0.5
        lo = int(np.floor(center - 2 * stretch)) - 1
        hi = int(np.ceil(center + 2 * stretch)) + 1
        taps = np.arange(lo, hi + 1)
        w = cubic((taps - center) / stretch)
        w = w / w.sum()
        for t, wt in zip(taps, w):
            m[d, min(max(t, 0), src_len - 1)] += wt
    return m


def resize(img, dst_w, dst_h, antialias):
    """img is (h, w, c) float64."""
    h, w, c = img.shape
    wy = weight_matrix(h, dst_h, antialias)
    wx = weight_matrix(w, dst_w, antialias)
    out = np.stack([wy @ img[:, :, ch] @ wx.T for ch in range(c)], axis=2)
    return np.clip(out, 0.0, 1.0)


def write_planar_f32(path, img):
    h, w, c = img.shape
    with open(path, "wb") as f:
        f.write(struct.pack("<IIII", w, h, c, 0))
        for ch in range(c):
            f.write(img[:, :, ch].astype("<f4").tobytes())


def digit_glyph():
    # a hand-drawn "5" rendered at 8x and box-averaged down to 28x28
    big = Image.new("L", (224, 224), 0)
    d = ImageDraw.Draw(big)
    d.line([(150, 40), (80, 40)], fill=255, width=22)
    d.line([(80, 40), (72, 108)], fill=255, width=22)
    d.arc([(62, 88), (168, 190)], start=200, end=140, fill=255, width=22)
    return big.resize((28, 28), Image.BOX)


def natural_patch(seed=7):
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:128, 0:128] / 127.0
    chans = []
    for ch in range(3):
        base = 0.5 + 0.25 * np.sin(2 * np.pi * (xx * (1 + ch) * 0.6 + yy * 0.8) + ch)
        for _ in range(6):
            cx, cy, r = rng.uniform(0, 1, 3)
            amp = rng.uniform(-0.15, 0.15)
            base += amp * np.exp(-((xx - cx) ** 2 + (yy - cy) ** 2) / (0.02 + 0.08 * r))
        chans.append(base)
    arr = np.clip(np.stack(chans, axis=2), 0, 1)
    return Image.fromarray(np.round(arr * 255).astype(np.uint8), "RGB")


def ssim_ref(a, b):
    return structural_similarity(
        a, b, gaussian_weights=True, sigma=1.5, use_sample_covariance=False, data_range=1.0
    )


def main():
    digit = digit_glyph()
    digit.save("digit_28.png")
    arr = np.asarray(digit, dtype=np.float64)[:, :, None] / 255.0
    lr = resize(arr, 7, 7, antialias=True)
    write_planar_f32("digit_28_to_7_golden.f32", lr)

    natural_patch().save("natural_128.png")

    const_a = np.full((16, 16), 0.2)
    const_b = np.full((16, 16), 0.7)
    yy, xx = np.mgrid[0:24, 0:24]
    checker = np.where(((xx // 2) + (yy // 2)) % 2 == 0, 0.9, 0.1)
    inverted = 1.0 - checker
    print(f"ssim const 0.2 vs 0.7 = {ssim_ref(const_a, const_b)!r}")
    print(f"ssim checker vs inverted = {ssim_ref(checker, inverted)!r}")

    # the committed PNGs against mirrored copies, compared on luma
    def luma(path):
        a = np.asarray(Image.open(path), dtype=np.float64) / 255.0
        if a.ndim == 2:
            return a
        return 0.299 * a[..., 0] + 0.587 * a[..., 1] + 0.114 * a[..., 2]

    d = luma("digit_28.png")
    n = luma("natural_128.png")
    print(f"ssim digit vs left-right mirror = {ssim_ref(d, d[:, ::-1])!r}")
    print(f"ssim natural vs top-bottom mirror = {ssim_ref(n, n[::-1, :])!r}")


if __name__ == "__main__":
    main()
