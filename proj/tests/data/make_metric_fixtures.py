#!/usr/bin/env python3
"""Writes the PSNR/SSIM fixture pairs and their reference scores.

Reference scores come from scikit-image. Pixels are uint8 PNGs; both sides
convert them with a single-precision v / 255 before promoting to double, so
the C++ test sees bit-identical inputs.

SSIM is scored on BT.601 luma with an 11-tap Gaussian window (sigma 1.5),
population covariances and data range 1.
"""

import json
from pathlib import Path

import cv2
import numpy as np
from skimage.metrics import peak_signal_noise_ratio, structural_similarity

OUT = Path(__file__).resolve().parent / "metrics"
WORDS = ["alpha", "street", "exit", "cafe", "open24", "north", "hotel", "park", "bus", "stop"]


def base_image(rng, h, w, k):
    img = np.zeros((h, w, 3), np.float64)
    ramp = np.linspace(0, 1, w)[None, :, None]
    img += rng.uniform(0.2, 0.8, 3) * (1 - ramp) + rng.uniform(0.2, 0.8, 3) * ramp
    for _ in range(3):
        y0, x0 = rng.integers(0, h), rng.integers(0, w)
        img[y0 : y0 + h // 3, x0 : x0 + w // 4] = rng.uniform(0, 1, 3)
    img = np.clip(img * 255, 0, 255).astype(np.uint8)
    scale = h / 40.0
    cv2.putText(img, WORDS[k % len(WORDS)], (2, int(h * 0.75)), cv2.FONT_HERSHEY_SIMPLEX, scale,
                tuple(int(v) for v in rng.integers(0, 255, 3)), max(1, int(scale * 2)))
    return img


def degrade(rng, img, kind):
    f = img.astype(np.float64) / 255.0
    if kind == 0:
        f = f + rng.normal(0, rng.uniform(0.01, 0.1), f.shape)
    elif kind == 1:
        f = cv2.GaussianBlur(f, (0, 0), rng.uniform(0.5, 2.0))
    elif kind == 2:
        ok, buf = cv2.imencode(".jpg", img, [cv2.IMWRITE_JPEG_QUALITY, int(rng.integers(10, 60))])
        assert ok
        f = cv2.imdecode(buf, cv2.IMREAD_COLOR).astype(np.float64) / 255.0
    elif kind == 3:
        f = np.roll(f, 1, axis=1)
    else:
        f = f * rng.uniform(0.7, 1.3) + rng.uniform(-0.1, 0.1)
    return np.clip(np.round(f * 255), 0, 255).astype(np.uint8)


def to_unit(u8_bgr):
    rgb = u8_bgr[..., ::-1]
    return (rgb.astype(np.float32) / np.float32(255)).astype(np.float64)


def luma(x):
    return 0.299 * x[..., 0] + 0.587 * x[..., 1] + 0.114 * x[..., 2]


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(20240601)
    sizes = [(32, 128)] * 16 + [(64, 64)] * 2 + [(11, 40)] * 2
    cases = []
    for i, (h, w) in enumerate(sizes):
        a = base_image(rng, h, w, i)
        b = degrade(rng, a, i % 5)
        if np.array_equal(a, b):
            b[0, 0, 0] ^= 1
        name_a, name_b = f"pair{i:02d}_a.png", f"pair{i:02d}_b.png"
        cv2.imwrite(str(OUT / name_a), a)
        cv2.imwrite(str(OUT / name_b), b)
        # Re-read to score exactly what the test loads.
        ra = to_unit(cv2.imread(str(OUT / name_a), cv2.IMREAD_COLOR))
        rb = to_unit(cv2.imread(str(OUT / name_b), cv2.IMREAD_COLOR))
        psnr = peak_signal_noise_ratio(ra, rb, data_range=1.0)
        ssim = structural_similarity(luma(ra), luma(rb), data_range=1.0, gaussian_weights=True, sigma=1.5,
                                     use_sample_covariance=False)
        cases.append({"a": name_a, "b": name_b, "psnr": float(psnr), "ssim": float(ssim)})
    with open(OUT / "reference.json", "w") as f:
        json.dump({"generator": "scikit-image " + __import__("skimage").__version__, "cases": cases}, f, indent=2)
        f.write("\n")


if __name__ == "__main__":
    main()
