#!/usr/bin/env python3
"""Download the standard test images and write 256x256 8-bit PGMs to data/.

Sources (fetched through npm and pip, so any registry mirror works):
  cameraman.pgm  npm package `cameraman` 1.0.0, cameraman.tif (already 256x256)
  lena.pgm       npm package `lena` 1.0.0, 512x512 RGB -> luma -> 2x2 mean
  barbara.pgm    pip wheel `sporco` 0.2.2.post1, data/barbara.png (574x702 RGB)
                 -> luma -> central 512x512 crop -> 2x2 mean
  aero.pgm       pip wheel `PyWavelets` 1.8.0, data/aero.npz (512x512 aerial
                 photograph) -> 2x2 mean; used as the detail-rich remote-sensing
                 stand-in

The Barbara crop is an approximation of the classic 512x512 frame, not the
same pixels. Needs numpy and Pillow.

usage: scripts/fetch_test_images.py [--out data] [--cache build/image-cache]
"""

import argparse
import base64
import io
import re
import subprocess
import sys
import tarfile
import zipfile
from pathlib import Path

import numpy as np
from PIL import Image

LUMA = np.array([0.299, 0.587, 0.114])


def npm_pack(name, version, cache):
    tgz = cache / f"{name}-{version}.tgz"
    if not tgz.exists():
        subprocess.run(["npm", "pack", f"{name}@{version}"], cwd=cache, check=True,
                       stdout=subprocess.DEVNULL)
    return tarfile.open(tgz)


def pip_wheel(name, version, cache):
    found = list(cache.glob(f"{name.lower()}-{version}*.whl"))
    if not found:
        subprocess.run([sys.executable, "-m", "pip", "download", "--no-deps", "--timeout", "120",
                        "--only-binary", ":all:", "--python-version", "3.10",
                        "-d", str(cache), f"{name}=={version}"], check=True,
                       stdout=subprocess.DEVNULL)
        found = list(cache.glob(f"{name.lower()}-{version}*.whl"))
    return zipfile.ZipFile(found[0])


def half(x):
    """2x2 block mean."""
    return 0.25 * (x[0::2, 0::2] + x[1::2, 0::2] + x[0::2, 1::2] + x[1::2, 1::2])


def to_u8(x):
    # Round half to even.
    return np.clip(np.round(x), 0, 255).astype(np.uint8)


def write_pgm(path, img):
    h, w = img.shape
    path.write_bytes(f"P5\n{w} {h}\n255\n".encode() + img.tobytes())


def cameraman(cache):
    tar = npm_pack("cameraman", "1.0.0", cache)
    data = tar.extractfile("package/cameraman.tif").read()
    return np.asarray(Image.open(io.BytesIO(data)).convert("L"), dtype=np.uint8)


def lena(cache):
    tar = npm_pack("lena", "1.0.0", cache)
    js = tar.extractfile("package/lena.js").read().decode()
    payload = re.search(r"base64decode\(\s*'([^']+)'", js).group(1)
    # The module wraps the bytes as an ndarray with shape [512,512,3] and
    # strides [3,1536,1], indexed (x, y, channel); the buffer itself is laid
    # out column-major relative to the upright picture.
    rgb = np.frombuffer(base64.b64decode(payload), dtype=np.uint8).reshape(512, 512, 3)
    rgb = rgb.transpose(1, 0, 2)
    return to_u8(half(rgb.astype(float) @ LUMA))


def barbara(cache):
    whl = pip_wheel("sporco", "0.2.2.post1", cache)
    rgb = np.asarray(Image.open(io.BytesIO(whl.read("sporco/data/barbara.png"))).convert("RGB"),
                     dtype=float)
    gray = rgb @ LUMA
    return to_u8(half(gray[31:543, 95:607]))


def aero(cache):
    whl = pip_wheel("PyWavelets", "1.8.0", cache)
    with np.load(io.BytesIO(whl.read("pywt/data/aero.npz"))) as z:
        img = z[z.files[0]].astype(float)
    return to_u8(half(img))


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    root = Path(__file__).resolve().parent.parent
    ap.add_argument("--out", type=Path, default=root / "data")
    ap.add_argument("--cache", type=Path, default=root / "build" / "image-cache")
    args = ap.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)
    args.cache.mkdir(parents=True, exist_ok=True)
    for name, make in [("cameraman", cameraman), ("lena", lena), ("barbara", barbara), ("aero", aero)]:
        img = make(args.cache)
        assert img.shape == (256, 256), (name, img.shape)
        write_pgm(args.out / f"{name}.pgm", img)
        print(f"{name}.pgm  min {img.min()} max {img.max()} mean {img.mean():.2f}")


if __name__ == "__main__":
    main()
