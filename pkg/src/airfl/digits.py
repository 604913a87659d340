"""Bundled digit-recognition dataset, rendered procedurally.

A deterministic stand-in for handwritten-digit data with the classic
shape: 60000 training and 10000 test samples, 28x28 grayscale, ten
balanced classes. Digit glyphs are rasterized from a fixed set of
bundled fonts, and each sample applies a random affine warp (rotation,
scale, shear, translation), ink-intensity jitter, and additive pixel
noise. Generation is keyed by fixed internal seeds, independent of any
experiment seed, so every run sees the same dataset -- like a file on
disk, without shipping one.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np
from PIL import Image, ImageDraw, ImageFont
from scipy import ndimage

from .data import LabeledDataset

NUM_CLASSES = 10
IMAGE_SIDE = 28
TRAIN_PER_CLASS = 6000
TEST_PER_CLASS = 1000

_PROTO_SIDE = 56          # prototypes are rendered at 2x and warped down
_TRAIN_SEED = 0x5D1617A1
_TEST_SEED = 0x5D1617B2

_FONT_FILES = (
    "DejaVuSans.ttf",
    "DejaVuSans-Bold.ttf",
    "DejaVuSans-Oblique.ttf",
    "DejaVuSans-BoldOblique.ttf",
    "DejaVuSerif.ttf",
    "DejaVuSerif-Bold.ttf",
    "DejaVuSansMono.ttf",
    "DejaVuSansMono-Bold.ttf",
)


def _font_paths() -> list[str]:
    import matplotlib

    root = f"{matplotlib.get_data_path()}/fonts/ttf"
    return [f"{root}/{name}" for name in _FONT_FILES]


@lru_cache(maxsize=1)
def _prototypes() -> np.ndarray:
    """Render each (digit, font) pair once, centered on a 56x56 canvas.

    Glyphs are centered by ink mass and blurred to widen the strokes to
    handwriting-like thickness. Returns (10, num_fonts, 56, 56) in [0, 1].
    """
    paths = _font_paths()
    protos = np.zeros((NUM_CLASSES, len(paths), _PROTO_SIDE, _PROTO_SIDE))
    grid = np.arange(_PROTO_SIDE, dtype=np.float64)
    for f, path in enumerate(paths):
        font = ImageFont.truetype(path, size=48)
        for digit in range(NUM_CLASSES):
            img = Image.new("L", (_PROTO_SIDE, _PROTO_SIDE), color=0)
            draw = ImageDraw.Draw(img)
            left, top, right, bottom = draw.textbbox((0, 0), str(digit), font=font)
            x = (_PROTO_SIDE - (right - left)) / 2 - left
            y = (_PROTO_SIDE - (bottom - top)) / 2 - top
            draw.text((x, y), str(digit), fill=255, font=font)
            glyph = np.asarray(img, dtype=np.float64) / 255.0
            mass = glyph.sum()
            center = (_PROTO_SIDE - 1) / 2.0
            shift = (center - (glyph.sum(axis=1) @ grid) / mass,
                     center - (glyph.sum(axis=0) @ grid) / mass)
            glyph = ndimage.shift(glyph, shift, order=1)
            glyph = ndimage.gaussian_filter(glyph, sigma=1.8)
            glyph = np.clip(glyph * (1.6 / glyph.max()), 0.0, 1.0)   # saturated thick strokes
            protos[digit, f] = glyph
    return protos


def _warp(proto: np.ndarray, angle: float, scale: float, shear: float,
          tx: float, ty: float) -> np.ndarray:
    """Map a 56x56 prototype into a 28x28 sample through one affine transform."""
    c, s = np.cos(angle), np.sin(angle)
    rot = np.array([[c, -s], [s, c]])
    shr = np.array([[1.0, shear], [0.0, 1.0]])
    fwd = rot @ shr * (scale * 0.5)      # 0.5: downsample 56 -> 28
    inv = np.linalg.inv(fwd)
    c_in = (_PROTO_SIDE - 1) / 2.0
    c_out = (IMAGE_SIDE - 1) / 2.0
    shift = np.array([c_out + ty, c_out + tx])
    offset = np.full(2, c_in) - inv @ shift
    return ndimage.affine_transform(proto, inv, offset=offset,
                                    output_shape=(IMAGE_SIDE, IMAGE_SIDE), order=1)


def _generate(per_class: int, seed: int) -> LabeledDataset:
    protos = _prototypes()
    num_fonts = protos.shape[1]
    total = per_class * NUM_CLASSES
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))

    labels = rng.permutation(np.arange(total) % NUM_CLASSES).astype(np.int64)
    fonts = rng.integers(0, num_fonts, size=total)
    angles = rng.uniform(-0.06, 0.06, size=total)          # ~±3 degrees
    scales = np.exp(rng.uniform(np.log(0.97), np.log(1.03), size=total))
    shears = rng.uniform(-0.03, 0.03, size=total)
    tx = rng.uniform(-0.35, 0.35, size=total)
    ty = rng.uniform(-0.35, 0.35, size=total)
    # dim ink keeps per-round transmit energies in the same range as the budget
    amps = rng.uniform(0.9, 1.0, size=total) * 0.80

    features = np.empty((total, IMAGE_SIDE * IMAGE_SIDE))
    for i in range(total):
        img = _warp(protos[labels[i], fonts[i]], angles[i], scales[i],
                    shears[i], tx[i], ty[i])
        features[i] = (img * amps[i]).ravel()
    features += rng.normal(0.0, 0.01, size=features.shape)
    np.clip(features, 0.0, 1.0, out=features)
    return LabeledDataset(features=features, labels=labels, num_classes=NUM_CLASSES)


@lru_cache(maxsize=2)
def load_split(split: str) -> LabeledDataset:
    """The fixed train or test split ("train": 60000 samples, "test": 10000)."""
    if split == "train":
        return _generate(TRAIN_PER_CLASS, _TRAIN_SEED)
    if split == "test":
        return _generate(TEST_PER_CLASS, _TEST_SEED)
    raise ValueError(f"unknown split {split!r}")
