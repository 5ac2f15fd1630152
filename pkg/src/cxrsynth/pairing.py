"""Mask construction and artificial pairwise training samples.

A training pair is (x, y, m): the full target image y, a rectangular binary
mask m, and the masked input x = y * m whose pixels outside the mask are zero.
Disease pairs take m from an annotation box; healthy pairs draw a random
rectangle. Joint geometric augmentation transforms (y, m) together and
recomputes x so the product identity always holds exactly.
"""

from __future__ import annotations

import csv
import logging
import math
import random
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from PIL import Image
from scipy import ndimage

from .corpus import Annotation, BBox, GrayImage, save_png
from .validation import check_binary_mask, check_same_shape

logger = logging.getLogger(__name__)

AUGMENT_OPS = ("rotate", "reflect", "crop")

RANDOM_MASK_MIN_FRACTION = 0.15
RANDOM_MASK_MAX_FRACTION = 0.40
RANDOM_MASK_CENTRAL_FRACTION = 0.80
ROTATE_MAX_DEGREES = 10.0
CROP_MIN_SCALE = 0.9
CROP_ATTEMPTS = 10


@dataclass
class BinaryMask:
    """Rectangular 0/1 mask with the same height and width as its image."""

    pixels: np.ndarray

    def __post_init__(self) -> None:
        self.pixels = check_binary_mask(self.pixels)

    @classmethod
    def from_rect(
        cls, top: int, left: int, height: int, width: int, image_height: int, image_width: int
    ) -> "BinaryMask":
        pixels = np.zeros((image_height, image_width), dtype=np.uint8)
        pixels[top : top + height, left : left + width] = 1
        return cls(pixels)

    @property
    def area(self) -> int:
        return int(self.pixels.sum())

    def rect(self) -> tuple[int, int, int, int]:
        """(top, left, height, width) of the 1-region's bounding rectangle."""
        rows = np.flatnonzero(self.pixels.any(axis=1))
        cols = np.flatnonzero(self.pixels.any(axis=0))
        top, bottom = int(rows[0]), int(rows[-1]) + 1
        left, right = int(cols[0]), int(cols[-1]) + 1
        return top, left, bottom - top, right - left

    def is_rectangular(self) -> bool:
        top, left, height, width = self.rect()
        return self.area == height * width


@dataclass
class TrainingPair:
    """Masked input x, target y, mask m, and provenance."""

    x: GrayImage
    y: GrayImage
    m: BinaryMask
    source: str  # "disease" | "healthy"
    annotation: Annotation | None = None
    pair_id: str = ""
    seed: int = 0

    def __post_init__(self) -> None:
        if self.source not in ("disease", "healthy"):
            raise ValueError(f"unknown pair source {self.source!r}")
        if (self.annotation is not None) != (self.source == "disease"):
            raise ValueError("disease pairs carry an annotation; healthy pairs do not")
        check_same_shape(self.x.pixels, self.y.pixels, "pair images")
        check_same_shape(self.y.pixels, self.m.pixels, "image and mask")


def mask_from_bbox(box: BBox, height: int, width: int) -> BinaryMask:
    """Mask that is 1 inside the box (clipped to the image) and 0 elsewhere.

    Raises ValueError when the clipped box is degenerate.
    """
    top, bottom, left, right = box.pixel_region(height, width)
    return BinaryMask.from_rect(top, left, bottom - top, right - left, height, width)


def apply_mask(y: GrayImage, m: BinaryMask) -> GrayImage:
    """Elementwise product y * m; pixels outside the mask become exactly 0."""
    check_same_shape(y.pixels, m.pixels, "image and mask")
    return GrayImage(id=y.id, pixels=y.pixels * m.pixels)


def random_mask(height: int, width: int, seed: int) -> BinaryMask:
    """Seeded random rectangle covering 15-40% of each dimension, placed
    anywhere inside the central 80% of the image."""
    if height < 32 or width < 32:
        raise ValueError(f"image too small for a random mask: {height}x{width}")
    rng = np.random.default_rng(seed)
    rect_h = int(rng.integers(
        math.ceil(RANDOM_MASK_MIN_FRACTION * height),
        math.floor(RANDOM_MASK_MAX_FRACTION * height) + 1,
    ))
    rect_w = int(rng.integers(
        math.ceil(RANDOM_MASK_MIN_FRACTION * width),
        math.floor(RANDOM_MASK_MAX_FRACTION * width) + 1,
    ))
    margin = (1.0 - RANDOM_MASK_CENTRAL_FRACTION) / 2.0
    top_lo, top_hi = math.ceil(margin * height), math.floor((1.0 - margin) * height) - rect_h
    left_lo, left_hi = math.ceil(margin * width), math.floor((1.0 - margin) * width) - rect_w
    top = int(rng.integers(top_lo, top_hi + 1))
    left = int(rng.integers(left_lo, left_hi + 1))
    return BinaryMask.from_rect(top, left, rect_h, rect_w, height, width)


def make_pairs(
    annotations: Sequence[Annotation],
    images: Mapping[str, GrayImage],
    healthy: Sequence[GrayImage],
    seed: int,
) -> list[TrainingPair]:
    """Build one disease pair per annotation and one healthy pair per healthy
    image, then shuffle the combined list seed-deterministically."""
    pairs: list[TrainingPair] = []
    for i, ann in enumerate(annotations):
        image = images.get(ann.image_id)
        if image is None:
            raise FileNotFoundError(
                f"no image {ann.image_id!r} for annotation {i} ({ann.pathology})"
            )
        mask = mask_from_bbox(ann.box_at(image.width), image.height, image.width)
        pairs.append(
            TrainingPair(
                x=apply_mask(image, mask),
                y=image,
                m=mask,
                source="disease",
                annotation=ann,
                pair_id=f"disease_{ann.image_id}_{i}",
                seed=seed,
            )
        )
    for j, image in enumerate(healthy):
        mask_seed = (seed * 1_000_003 + j) & 0x7FFFFFFF
        mask = random_mask(image.height, image.width, mask_seed)
        pairs.append(
            TrainingPair(
                x=apply_mask(image, mask),
                y=image,
                m=mask,
                source="healthy",
                annotation=None,
                pair_id=f"healthy_{image.id}_{j}",
                seed=mask_seed,
            )
        )
    random.Random(seed).shuffle(pairs)
    return pairs


def _rotated_center(
    center_rc: tuple[float, float], image_shape: tuple[int, int], degrees: float
) -> tuple[float, float]:
    """Where a point lands after ndimage.rotate(, reshape=False) by `degrees`."""
    theta = math.radians(degrees)
    pivot_r = (image_shape[0] - 1) / 2.0
    pivot_c = (image_shape[1] - 1) / 2.0
    dr, dc = center_rc[0] - pivot_r, center_rc[1] - pivot_c
    # ndimage maps output coords o to input coords via R(theta); features move
    # by the inverse rotation.
    new_r = pivot_r + math.cos(theta) * dr - math.sin(theta) * dc
    new_c = pivot_c + math.sin(theta) * dr + math.cos(theta) * dc
    return new_r, new_c


def _clamp(value: int, lo: int, hi: int) -> int:
    return max(lo, min(hi, value))


def augment_pair(pair: TrainingPair, ops: set[str], seed: int) -> TrainingPair:
    """Apply the selected geometric ops jointly to (y, m) and recompute x.

    Rotation (uniform in +-10 degrees) moves the mask rectangle rigidly to the
    rotated center, keeping its size; horizontal reflection mirrors it; crop
    (scale 0.9-1.0, resized back) must retain the whole 1-region and is
    resampled up to 10 times before being skipped. Fixed order:
    rotate, reflect, crop.
    """
    unknown = set(ops) - set(AUGMENT_OPS)
    if unknown:
        raise ValueError(f"unknown augmentation ops {sorted(unknown)}")
    if not ops:
        return pair

    rng = np.random.default_rng(seed)
    y = pair.y.pixels
    height, width = y.shape
    top, left, rect_h, rect_w = pair.m.rect()

    if "rotate" in ops:
        degrees = float(rng.uniform(-ROTATE_MAX_DEGREES, ROTATE_MAX_DEGREES))
        y = ndimage.rotate(y, degrees, reshape=False, order=1, mode="constant", cval=0.0)
        y = np.clip(y, 0.0, 1.0)
        center = (top + rect_h / 2.0, left + rect_w / 2.0)
        new_r, new_c = _rotated_center(center, (height, width), degrees)
        top = _clamp(int(round(new_r - rect_h / 2.0)), 0, height - rect_h)
        left = _clamp(int(round(new_c - rect_w / 2.0)), 0, width - rect_w)

    if "reflect" in ops and bool(rng.integers(0, 2)):
        y = y[:, ::-1].copy()
        left = width - (left + rect_w)

    if "crop" in ops:
        for _ in range(CROP_ATTEMPTS):
            scale = float(rng.uniform(CROP_MIN_SCALE, 1.0))
            crop_h, crop_w = round(scale * height), round(scale * width)
            top0_lo, top0_hi = max(0, top + rect_h - crop_h), min(top, height - crop_h)
            left0_lo, left0_hi = max(0, left + rect_w - crop_w), min(left, width - crop_w)
            if top0_lo > top0_hi or left0_lo > left0_hi:
                continue  # window cannot contain the 1-region; resample
            top0 = int(rng.integers(top0_lo, top0_hi + 1))
            left0 = int(rng.integers(left0_lo, left0_hi + 1))
            window = y[top0 : top0 + crop_h, left0 : left0 + crop_w]
            resized = Image.fromarray(window.astype(np.float32), mode="F").resize(
                (width, height), Image.BILINEAR
            )
            y = np.clip(np.asarray(resized, dtype=np.float64), 0.0, 1.0)
            sy, sx = height / crop_h, width / crop_w
            new_top = _clamp(math.floor((top - top0) * sy), 0, height - 1)
            new_left = _clamp(math.floor((left - left0) * sx), 0, width - 1)
            bottom = _clamp(math.ceil((top + rect_h - top0) * sy), new_top + 1, height)
            right = _clamp(math.ceil((left + rect_w - left0) * sx), new_left + 1, width)
            top, left = new_top, new_left
            rect_h, rect_w = bottom - new_top, right - new_left
            break

    mask = BinaryMask.from_rect(top, left, rect_h, rect_w, height, width)
    target = GrayImage(id=pair.y.id, pixels=y)
    annotation = pair.annotation
    if annotation is not None:
        annotation = replace(
            annotation,
            box=BBox(float(left), float(top), float(rect_w), float(rect_h)),
            native_resolution=float(width),
        )
    return TrainingPair(
        x=apply_mask(target, mask),
        y=target,
        m=mask,
        source=pair.source,
        annotation=annotation,
        pair_id=pair.pair_id,
        seed=seed,
    )


def save_pairs(pairs: Sequence[TrainingPair], out_dir: str | Path) -> None:
    """Persist pairs as PNGs (x, y; m as 1-bit) plus a manifest CSV."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with (out / "pairs.csv").open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["pair_id", "source", "image_id", "label", "x", "y", "w", "h", "seed"])
        for pair in pairs:
            save_png(pair.x, out / f"{pair.pair_id}_x.png")
            save_png(pair.y, out / f"{pair.pair_id}_y.png")
            Image.fromarray(pair.m.pixels * 255, mode="L").convert("1").save(
                out / f"{pair.pair_id}_m.png", format="PNG"
            )
            label = pair.annotation.pathology if pair.annotation is not None else ""
            # The mask rectangle is the working-resolution truth for both
            # bbox-derived and random masks.
            top, left, rect_h, rect_w = pair.m.rect()
            writer.writerow(
                [pair.pair_id, pair.source, pair.y.id, label, left, top, rect_w, rect_h, pair.seed]
            )


def load_pairs(pair_dir: str | Path) -> list[TrainingPair]:
    """Reload a pair cache written by save_pairs. x is recomputed as y * m so
    the product identity holds exactly after 8-bit quantization."""
    directory = Path(pair_dir)
    pairs: list[TrainingPair] = []
    with (directory / "pairs.csv").open(newline="") as handle:
        for row in csv.DictReader(handle):
            with Image.open(directory / f"{row['pair_id']}_y.png") as img:
                y = GrayImage(id=row["image_id"], pixels=np.asarray(img, dtype=np.float64) / 255.0)
            with Image.open(directory / f"{row['pair_id']}_m.png") as img:
                mask = BinaryMask(np.asarray(img.convert("L"), dtype=np.uint8) // 255)
            annotation = None
            if row["source"] == "disease":
                annotation = Annotation(
                    row["image_id"],
                    row["label"],
                    BBox(float(row["x"]), float(row["y"]), float(row["w"]), float(row["h"])),
                    native_resolution=float(y.width),
                )
            pairs.append(
                TrainingPair(
                    x=apply_mask(y, mask),
                    y=y,
                    m=mask,
                    source=row["source"],
                    annotation=annotation,
                    pair_id=row["pair_id"],
                    seed=int(row["seed"]),
                )
            )
    return pairs
