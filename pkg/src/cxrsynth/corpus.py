"""Corpus handling: annotation CSV ingestion, deterministic splits, grayscale
image loading, and a procedural phantom corpus for desk-scale runs.

Annotation CSVs have a header line followed by rows of
``image_id,label,x,y,w,h`` with box coordinates at the annotation's native
resolution. Images are 8-bit or 16-bit grayscale PNGs.
"""

from __future__ import annotations

import csv
import logging
import math
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from PIL import Image
from scipy.ndimage import gaussian_filter

from .validation import check_fraction, check_unit_image

logger = logging.getLogger(__name__)

# The six box-annotated disease labels retained for training and evaluation.
PATHOLOGIES = (
    "Atelectasis",
    "Cardiomegaly",
    "Effusion",
    "Infiltration",
    "Pneumonia",
    "Pneumothorax",
)

ANNOTATION_FIELDS = ("image_id", "label", "x", "y", "w", "h")

DEFAULT_SIDE = 256


class AnnotationParseError(ValueError):
    """Raised for malformed annotation CSV rows; names the offending row."""


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box in pixel coordinates: (left, top, width, height)."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self) -> None:
        if not (self.w > 0 and self.h > 0):
            raise ValueError(f"box must have positive extent, got w={self.w}, h={self.h}")

    @property
    def x2(self) -> float:
        return self.x + self.w

    @property
    def y2(self) -> float:
        return self.y + self.h

    @property
    def area(self) -> float:
        return self.w * self.h

    def scaled(self, factor: float) -> "BBox":
        return BBox(self.x * factor, self.y * factor, self.w * factor, self.h * factor)

    def pixel_region(self, height: int, width: int) -> tuple[int, int, int, int]:
        """Integer (top, bottom, left, right) bounds, half-open, clipped to the
        image. Origins are floored and extents ceiled so no in-box pixel is lost.
        """
        left = max(0, math.floor(self.x))
        top = max(0, math.floor(self.y))
        right = min(width, math.ceil(self.x2))
        bottom = min(height, math.ceil(self.y2))
        if right <= left or bottom <= top:
            raise ValueError(
                f"box {self} has no area after clipping to {height}x{width}"
            )
        return top, bottom, left, right


@dataclass
class GrayImage:
    """Single-channel intensity image with values in [0, 1]."""

    id: str
    pixels: np.ndarray

    def __post_init__(self) -> None:
        self.pixels = check_unit_image(self.pixels, name=f"image {self.id!r}")

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    def quantized(self) -> np.ndarray:
        """Pixels as 8-bit values, the representation used for PNG export."""
        return np.round(self.pixels * 255.0).astype(np.uint8)


@dataclass(frozen=True)
class Annotation:
    """One pathology box on one image, at the image's native resolution."""

    image_id: str
    pathology: str
    box: BBox
    native_resolution: float = 1024.0

    def box_at(self, side: float) -> BBox:
        """Box rescaled to an image of the given square side length."""
        return self.box.scaled(side / self.native_resolution)


@dataclass
class CorpusSplit:
    train: list[Annotation]
    eval: list[Annotation]
    seed: int


def parse_annotations(
    csv_path: str | Path,
    *,
    native_resolution: float = 1024.0,
    class_set: Sequence[str] = PATHOLOGIES,
) -> list[Annotation]:
    """Read an annotation CSV, skipping rows whose label is outside class_set.

    Rows are numbered from 1 including the header line; a malformed row raises
    AnnotationParseError naming that line. The number of skipped rows is logged.
    """
    path = Path(csv_path)
    allowed = set(class_set)
    annotations: list[Annotation] = []
    skipped = 0
    with path.open(newline="") as handle:
        reader = csv.reader(handle)
        for row_number, row in enumerate(reader, start=1):
            if row_number == 1:
                continue  # header
            if not row or all(not field.strip() for field in row):
                continue
            if len(row) < 6:
                raise AnnotationParseError(
                    f"{path}: row {row_number}: expected 6 fields, got {len(row)}"
                )
            image_id, label = row[0].strip(), row[1].strip()
            try:
                x, y, w, h = (float(value) for value in row[2:6])
            except ValueError as exc:
                raise AnnotationParseError(
                    f"{path}: row {row_number}: non-numeric box coordinate ({exc})"
                ) from None
            if label not in allowed:
                skipped += 1
                continue
            try:
                box = BBox(x, y, w, h)
            except ValueError as exc:
                raise AnnotationParseError(f"{path}: row {row_number}: {exc}") from None
            annotations.append(
                Annotation(image_id, label, box, native_resolution=native_resolution)
            )
    if skipped:
        logger.info("%s: skipped %d rows with labels outside %s", path, skipped, sorted(allowed))
    return annotations


def write_annotations(
    csv_path: str | Path,
    annotations: Iterable[Annotation],
    *,
    extra_columns: dict[str, list[str]] | None = None,
) -> None:
    """Write annotations in the standard CSV format, optionally with extra columns."""
    extra = extra_columns or {}
    with Path(csv_path).open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(list(ANNOTATION_FIELDS) + list(extra))
        for i, ann in enumerate(annotations):
            row = [ann.image_id, ann.pathology, ann.box.x, ann.box.y, ann.box.w, ann.box.h]
            writer.writerow(row + [extra[name][i] for name in extra])


def split_train_eval(
    annotations: Sequence[Annotation], train_fraction: float, seed: int
) -> CorpusSplit:
    """Deterministically shuffle and partition annotations.

    The eval side takes the ceiling of ``(1 - train_fraction) * N`` as evaluated
    in floating point, which reproduces the published 573/247 partition of 820
    annotations at fraction 0.7.
    """
    check_fraction(train_fraction, "train_fraction")
    if not annotations:
        raise ValueError("cannot split an empty annotation list")
    n_eval = math.ceil((1.0 - train_fraction) * len(annotations))
    order = list(annotations)
    random.Random(seed).shuffle(order)
    return CorpusSplit(train=order[n_eval:], eval=order[:n_eval], seed=seed)


def load_and_resize(path: str | Path, target: int = DEFAULT_SIDE) -> GrayImage:
    """Load a grayscale PNG, rescale intensities to [0, 1] by declared bit
    depth, and bilinearly resize to target x target.

    Box coordinates referencing the source must be rescaled by the caller
    (``Annotation.box_at``). Non-square sources are rejected.
    """
    path = Path(path)
    with Image.open(path) as img:
        if img.width != img.height:
            raise ValueError(f"{path}: expected a square image, got {img.width}x{img.height}")
        mode = img.mode
        if mode in ("I;16", "I;16B", "I;16L", "I"):
            arr = np.asarray(img, dtype=np.float64) / 65535.0
        elif mode == "L":
            arr = np.asarray(img, dtype=np.float64) / 255.0
        else:
            arr = np.asarray(img.convert("L"), dtype=np.float64) / 255.0
    arr = np.clip(arr, 0.0, 1.0)
    if arr.shape[0] != target:
        resampled = Image.fromarray(arr.astype(np.float32), mode="F").resize(
            (target, target), Image.BILINEAR
        )
        arr = np.clip(np.asarray(resampled, dtype=np.float64), 0.0, 1.0)
    return GrayImage(id=path.name, pixels=arr)


def save_png(image: GrayImage, path: str | Path) -> None:
    Image.fromarray(image.quantized(), mode="L").save(Path(path), format="PNG")


def _soft_ellipse(
    grid_y: np.ndarray, grid_x: np.ndarray, center: tuple[float, float],
    axes: tuple[float, float], steepness: float = 14.0,
) -> np.ndarray:
    """Smooth [0, 1] membership field of an axis-aligned ellipse."""
    cy, cx = center
    ay, ax = axes
    r2 = ((grid_y - cy) / (ay / 2.0)) ** 2 + ((grid_x - cx) / (ax / 2.0)) ** 2
    return 1.0 / (1.0 + np.exp(np.clip(steepness * (r2 - 1.0), -60.0, 60.0)))


def _render_phantom(
    rng: np.random.Generator, side: int, with_lesion: bool
) -> tuple[np.ndarray, BBox | None]:
    """Draw one chest phantom: bright body, two dark lung ellipses, and for
    diseased phantoms a bright lesion ellipse inside one lung."""
    gy, gx = np.mgrid[0:side, 0:side].astype(np.float64)
    base = 0.74 + 0.05 * (gy / side - 0.5)
    texture = gaussian_filter(rng.standard_normal((side, side)), sigma=6.0)
    base = base + 0.05 * texture / max(1e-9, np.abs(texture).max())

    lungs = []
    for direction in (-1.0, 1.0):
        center = (
            (0.46 + rng.uniform(-0.02, 0.02)) * side,
            (0.5 + direction * (0.17 + rng.uniform(-0.02, 0.02))) * side,
        )
        axes = (rng.uniform(0.25, 0.35) * side, rng.uniform(0.15, 0.25) * side)
        lungs.append((center, axes))
        weight = _soft_ellipse(gy, gx, center, axes)
        lung_value = 0.40 + rng.uniform(-0.02, 0.02)
        base = base * (1.0 - weight) + lung_value * weight

    box: BBox | None = None
    if with_lesion:
        (lcy, lcx), (lay, lax) = lungs[int(rng.integers(0, 2))]
        axes = (rng.uniform(0.04, 0.10) * side, rng.uniform(0.04, 0.10) * side)
        # Offset the lesion center at most ~40% into the lung so the lesion
        # ellipse stays over lung tissue.
        angle = rng.uniform(0.0, 2.0 * math.pi)
        radial = rng.uniform(0.0, 0.4)
        center = (lcy + radial * (lay / 2.0) * math.sin(angle),
                  lcx + radial * (lax / 2.0) * math.cos(angle))
        weight = _soft_ellipse(gy, gx, center, axes, steepness=60.0)
        base = base * (1.0 - weight) + 1.0 * weight
        box = BBox(center[1] - axes[1] / 2.0, center[0] - axes[0] / 2.0, axes[1], axes[0])

    quantized = np.round(np.clip(base, 0.0, 1.0) * 255.0).astype(np.uint8)
    return quantized, box


def generate_phantom_corpus(
    n_diseased: int,
    n_healthy: int,
    seed: int,
    out_dir: str | Path,
    *,
    side: int = DEFAULT_SIDE,
) -> tuple[list[Annotation], list[GrayImage]]:
    """Generate a seed-deterministic phantom corpus under out_dir.

    Diseased phantoms carry one bright elliptical lesion inside a lung field;
    its tight bounding box becomes an Annotation with pathology labels assigned
    round-robin over the six classes. PNGs plus an ``annotations.csv`` manifest
    are written; the returned images hold the quantized (on-disk) pixel values.
    """
    if n_diseased < 0 or n_healthy < 0:
        raise ValueError("phantom counts must be non-negative")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)

    annotations: list[Annotation] = []
    images: list[GrayImage] = []
    for i in range(n_diseased):
        pixels, box = _render_phantom(rng, side, with_lesion=True)
        image = GrayImage(id=f"phantom_d{i:03d}.png", pixels=pixels / 255.0)
        save_png(image, out / image.id)
        assert box is not None
        annotations.append(
            Annotation(image.id, PATHOLOGIES[i % len(PATHOLOGIES)], box, native_resolution=side)
        )
        images.append(image)
    for i in range(n_healthy):
        pixels, _ = _render_phantom(rng, side, with_lesion=False)
        image = GrayImage(id=f"phantom_h{i:03d}.png", pixels=pixels / 255.0)
        save_png(image, out / image.id)
        images.append(image)

    write_annotations(out / "annotations.csv", annotations)
    return annotations, images


def load_image_dir(
    directory: str | Path, target: int = DEFAULT_SIDE
) -> dict[str, GrayImage]:
    """Load every PNG in a directory as a working-resolution image, keyed by file name."""
    images = {}
    for path in sorted(Path(directory).glob("*.png")):
        images[path.name] = load_and_resize(path, target=target)
    return images
