"""Composite synthetic images from a trained generator, with the annotated
pathology region copied from the source so it survives bit-exactly.

Each record starts from one annotated image: a seeded geometric transform is
applied to (target, mask), the masked input runs through the generator, the
output fills the outside-mask region, and the inside-mask region is restored
by direct copy before 8-bit export.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import torch

from . import networks, pairing
from .corpus import Annotation, BBox, GrayImage, save_png, write_annotations
from .networks import UNetGenerator
from .pairing import AUGMENT_OPS, TrainingPair, apply_mask, mask_from_bbox
from .validation import check_same_shape

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.csv"


@dataclass
class SyntheticRecord:
    """A composite image plus the annotation it inherits."""

    image: GrayImage
    parent_annotation: Annotation
    model_tag: str
    variant_seed: int

    @property
    def box(self) -> BBox:
        return self.parent_annotation.box

    def training_annotation(self) -> Annotation:
        """The inherited annotation re-keyed to the synthetic image id."""
        return Annotation(
            image_id=self.image.id,
            pathology=self.parent_annotation.pathology,
            box=self.parent_annotation.box,
            native_resolution=self.parent_annotation.native_resolution,
        )


def composite(x: np.ndarray, g_out: np.ndarray, m: np.ndarray) -> np.ndarray:
    """x + g_out * (1 - m) elementwise: inside the mask the result is x,
    outside it is g_out. x must be zero outside the mask (pixel space)."""
    x = np.asarray(x, dtype=np.float64)
    g_out = np.asarray(g_out, dtype=np.float64)
    m = np.asarray(m, dtype=np.float64)
    check_same_shape(x, g_out, "input and generator output")
    check_same_shape(x, m, "input and mask")
    return x + g_out * (1.0 - m)


def _transformed_source(
    annotation: Annotation, image: GrayImage, variant_seed: int
) -> TrainingPair:
    """The seeded (target, mask) transform a record is built from; shared by
    synthesis and by preservation verification."""
    mask = mask_from_bbox(annotation.box_at(image.width), image.height, image.width)
    pair = TrainingPair(
        x=apply_mask(image, mask),
        y=image,
        m=mask,
        source="disease",
        annotation=annotation,
        pair_id=f"synth_{annotation.image_id}",
    )
    return pairing.augment_pair(pair, set(AUGMENT_OPS), variant_seed)


def transformed_parent(
    record: SyntheticRecord, images: Mapping[str, GrayImage], source_annotation: Annotation
) -> TrainingPair:
    """Recompute the transformed (target, mask) pair underlying a record."""
    image = images[source_annotation.image_id]
    return _transformed_source(source_annotation, image, record.variant_seed)


def generate_record(
    generator: UNetGenerator,
    annotation: Annotation,
    image: GrayImage,
    variant_seed: int,
    model_tag: str,
) -> SyntheticRecord:
    pair = _transformed_source(annotation, image, variant_seed)
    x_net = torch.from_numpy(networks.to_network(pair.x.pixels)[None, None]).to(torch.float32)
    g_net = networks.generator_forward(generator, x_net)[0, 0].numpy()
    g_pix = networks.to_pixel(g_net.astype(np.float64))
    mask = pair.m.pixels.astype(np.float64)
    out = composite(pair.x.pixels, g_pix, mask)
    # Hard copy of the masked-in region: the composite already equals the
    # source there, but the copy makes the guarantee independent of any
    # floating-point round trip.
    inside = pair.m.pixels == 1
    out[inside] = pair.y.pixels[inside]
    name = f"{model_tag}_{Path(annotation.image_id).stem}_{variant_seed}.png"
    quantized = np.round(np.clip(out, 0.0, 1.0) * 255.0).astype(np.uint8)
    assert pair.annotation is not None
    return SyntheticRecord(
        image=GrayImage(id=name, pixels=quantized / 255.0),
        parent_annotation=pair.annotation,
        model_tag=model_tag,
        variant_seed=variant_seed,
    )


def generate_records(
    generator: UNetGenerator,
    annotations: Sequence[Annotation],
    images: Mapping[str, GrayImage],
    count: int,
    seed: int,
    model_tag: str,
) -> list[SyntheticRecord]:
    """Cycle over annotations producing `count` records; annotation i of
    record k is annotations[k mod N], so usage counts differ by at most one."""
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    if not annotations:
        raise ValueError("no annotations to synthesize from")
    missing = sorted({a.image_id for a in annotations} - set(images))
    if missing:
        raise FileNotFoundError(f"missing source images: {missing[:5]}")
    records = []
    for k in range(count):
        ann = annotations[k % len(annotations)]
        records.append(
            generate_record(generator, ann, images[ann.image_id], seed + k, model_tag)
        )
    return records


def write_records(records: Sequence[SyntheticRecord], out_dir: str | Path) -> Path:
    """Write record PNGs plus a manifest CSV in the annotation format with an
    extra model_tag column. Manifest rows reference the synthetic image ids."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for record in records:
        save_png(record.image, out / record.image.id)
    write_annotations(
        out / MANIFEST_NAME,
        [record.training_annotation() for record in records],
        extra_columns={"model_tag": [record.model_tag for record in records]},
    )
    return out


def synthesize_dataset(
    checkpoint: str | Path,
    annotations: Sequence[Annotation],
    images: Mapping[str, GrayImage],
    count: int,
    seed: int,
    out_dir: str | Path,
    model_tag: str = "pix2pix",
) -> list[SyntheticRecord]:
    """Generate `count` synthetic records from a checkpointed generator and
    write them (PNGs + manifest) under out_dir."""
    generator = networks.load_generator(checkpoint)
    records = generate_records(generator, list(annotations), images, count, seed, model_tag)
    write_records(records, out_dir)
    return records
