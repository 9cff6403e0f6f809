#!/usr/bin/env python3
"""Regenerates tests/fixtures/images and tests/fixtures/expected_hashes.json.

The expected hashes come from oracles that share no code with the C++ library:
  * PDQ: the `pdqhash` package (Python bindings over the ThreatExchange
    reference implementation).
  * pHash: the numpy/scipy implementation below.

Both oracles consume the same integer luminance plane the C++ decoder produces
(alpha composited over white, 0.299/0.587/0.114 weights, rounded half-up).

Usage: python3 tools/fixtures/make_fixtures.py [output_dir]
"""

import json
import pathlib
import sys

import numpy as np
import pdqhash
import scipy.fft
import skimage.data
from PIL import Image, ImageDraw, ImageFont

FONT = "/usr/share/fonts/truetype/dejavu/DejaVuSans-Bold.ttf"

SAMPLES = [
    "camera",
    "astronaut",
    "coffee",
    "chelsea",
    "rocket",
    "coins",
    "moon",
    "clock",
    "logo",
]


def luma_plane(img: Image.Image) -> np.ndarray:
    rgba = np.asarray(img.convert("RGBA"), dtype=np.float64)
    a = rgba[:, :, 3]
    comp = [(rgba[:, :, c] * a + 255.0 * (255.0 - a)) / 255.0 for c in range(3)]
    y = 0.299 * comp[0] + 0.587 * comp[1] + 0.114 * comp[2]
    return np.floor(y + 0.5).astype(np.uint8)


def box_matrix(src: int, dst: int) -> np.ndarray:
    """Row o averages the source interval [o*src/dst, (o+1)*src/dst)."""
    m = np.zeros((dst, src))
    scale = src / dst
    for o in range(dst):
        lo, hi = o * scale, (o + 1) * scale
        for i in range(int(np.floor(lo)), min(src, int(np.ceil(hi)))):
            m[o, i] = max(0.0, min(hi, i + 1) - max(lo, i))
        m[o] /= scale
    return m


def phash_oracle(plane: np.ndarray) -> str:
    h, w = plane.shape
    small = box_matrix(h, 32) @ plane.astype(np.float64) @ box_matrix(w, 32).T
    coeffs = scipy.fft.dctn(small, type=2, norm="ortho")[:8, :8].flatten()
    coeffs[0] = 0.0
    median = np.sort(coeffs[1:])[31]
    value = 0
    for k, c in enumerate(coeffs):
        if c > median:
            value |= 1 << k
    return f"{value:016x}"


def pdq_oracle(plane: np.ndarray):
    rgb = np.repeat(plane[:, :, None], 3, axis=2).astype(np.uint8)
    bits, quality = pdqhash.compute(rgb)
    # hash_to_vector() returns bit 255 first.
    value = 0
    for b in bits:
        value = (value << 1) | int(b)
    return f"{value:064x}", int(quality)


def fit(img: Image.Image, max_side: int = 256) -> Image.Image:
    w, h = img.size
    s = max_side / max(w, h)
    if s >= 1:
        return img
    return img.resize((max(16, round(w * s)), max(16, round(h * s))), Image.LANCZOS)


def flatten_white(img: Image.Image) -> Image.Image:
    if img.mode != "RGBA":
        return img.convert("RGB") if img.mode not in ("L", "RGB") else img
    bg = Image.new("RGBA", img.size, (255, 255, 255, 255))
    return Image.alpha_composite(bg, img).convert("RGB")


def election_map(text: str | None) -> Image.Image:
    """Blocky choropleth with an optional caption banner across the top."""
    rng = np.random.default_rng(2020)
    img = Image.new("RGB", (320, 200), (235, 235, 225))
    d = ImageDraw.Draw(img)
    for gy in range(6):
        for gx in range(10):
            red = rng.random() < 0.5
            shade = int(rng.integers(120, 230))
            color = (shade, 40, 50) if red else (40, 60, shade)
            x0, y0 = 10 + gx * 30, 45 + gy * 25
            d.rectangle([x0, y0, x0 + 27, y0 + 22], fill=color)
    if text:
        font = ImageFont.truetype(FONT, 14)
        d.rectangle([0, 0, 319, 38], fill=(20, 20, 20))
        d.text((8, 10), text, font=font, fill=(255, 255, 255))
    return img


def render_text(text: str, size: int = 48) -> Image.Image:
    font = ImageFont.truetype(FONT, size)
    img = Image.new("RGB", (520, 120), (255, 255, 255))
    ImageDraw.Draw(img).text((12, 30), text, font=font, fill=(0, 0, 0))
    return img


def main() -> None:
    out = pathlib.Path(sys.argv[1] if len(sys.argv) > 1 else "tests/fixtures")
    images = out / "images"
    images.mkdir(parents=True, exist_ok=True)

    expected = {}
    pngs = {}

    for name in SAMPLES:
        arr = getattr(skimage.data, name)()
        img = fit(Image.fromarray(arr))
        pngs[name] = img
        half = img.reduce(2)
        pngs[f"{name}_half"] = half
        flatten_white(img).save(images / f"{name}_q75.jpg", quality=75)

    fraud = "FRAUD. THE BIGGEST DISGRACE"
    pngs["fraud_map"] = election_map(fraud)
    pngs["fraud_map_twin"] = election_map("FOX NEWS PROJECTS BIDEN WIN")
    election_map(fraud).save(images / "fraud_map_q75.jpg", quality=75)
    (images / "fraud_map.png.ocr.txt").write_text(fraud, encoding="utf-8")
    (images / "fraud_map_q75.jpg.ocr.txt").write_text(fraud, encoding="utf-8")
    (images / "fraud_map_twin.png.ocr.txt").write_text(
        "FOX NEWS PROJECTS BIDEN WIN", encoding="utf-8"
    )

    pngs["stop_the_steal"] = render_text("STOP THE STEAL")
    pngs["blank"] = Image.new("RGB", (64, 64), (90, 140, 200))
    pngs["white_64"] = Image.new("RGB", (64, 64), (255, 255, 255))
    pngs["red_16"] = Image.new("RGB", (16, 16), (255, 0, 0))
    pngs["tiny_1x1"] = Image.new("RGB", (1, 1), (0, 0, 0))

    for name, img in pngs.items():
        img.save(images / f"{name}.png")
        plane = luma_plane(Image.open(images / f"{name}.png"))
        if min(plane.shape) < 16:
            continue
        pdq_hex, quality = pdq_oracle(plane)
        expected[name] = {
            "width": int(plane.shape[1]),
            "height": int(plane.shape[0]),
            "phash64": phash_oracle(plane),
            "pdq256": pdq_hex,
            "pdq_quality": quality,
        }

    (out / "expected_hashes.json").write_text(
        json.dumps(expected, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


if __name__ == "__main__":
    main()
