"""Blinded reader study: session planning, judgment persistence, and tallies.

A study samples an equal number of images per (pathology, source) cell from
two or more sources (for example the real corpus plus per-model synthetic
sets), hides source identity behind keyed-hash item ids, and fixes one
shuffled presentation order per reviewer. Judgments are an append-only JSONL
record; tallies count, per reviewer, how many items from each source were
judged real.
"""

from __future__ import annotations

import csv
import hashlib
import hmac
import json
import threading
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from PIL import Image

from .corpus import PATHOLOGIES

ITEM_ID_BYTES = 8
PLAN_FILE = "plan.json"
ITEMS_DIR = "items"
VERDICTS = ("real", "fake")


class StudyBuildError(ValueError):
    """Raised when a study cannot be assembled from the configured sources."""


class DuplicateJudgmentError(ValueError):
    """A reviewer already judged this item."""


@dataclass(frozen=True)
class StudyConfig:
    """Sources are (tag, directory) pairs; each directory must hold a CSV
    manifest (``image_id,label,...``) plus the referenced PNGs."""

    sources: tuple[tuple[str, str], ...]
    per_pathology_count: int
    seed: int
    reviewers: tuple[str, ...]
    pathologies: tuple[str, ...] = PATHOLOGIES
    crop_fraction: float = 0.875
    display_size: int = 224

    def __post_init__(self) -> None:
        if len(self.sources) < 2:
            raise ValueError("a study needs at least two sources")
        tags = [tag for tag, _ in self.sources]
        if len(set(tags)) != len(tags):
            raise ValueError(f"duplicate source tags: {tags}")
        if self.per_pathology_count < 1:
            raise ValueError("per_pathology_count must be >= 1")
        if not self.reviewers:
            raise ValueError("reviewer roster is empty")


@dataclass(frozen=True)
class StudyItem:
    item_id: str
    source_tag: str
    pathology: str
    source_image: str


@dataclass
class StudyPlan:
    items: dict[str, StudyItem]
    orders: dict[str, list[str]]
    source_tags: list[str]
    pathologies: list[str]
    seed: int

    @property
    def total(self) -> int:
        return len(self.items)

    def save(self, directory: str | Path) -> None:
        payload = {
            "seed": self.seed,
            "source_tags": self.source_tags,
            "pathologies": self.pathologies,
            "items": {
                i.item_id: [i.source_tag, i.pathology, i.source_image]
                for i in self.items.values()
            },
            "orders": self.orders,
        }
        (Path(directory) / PLAN_FILE).write_text(json.dumps(payload, indent=1))

    @classmethod
    def load(cls, directory: str | Path) -> "StudyPlan":
        payload = json.loads((Path(directory) / PLAN_FILE).read_text())
        items = {
            item_id: StudyItem(item_id, tag, pathology, source_image)
            for item_id, (tag, pathology, source_image) in payload["items"].items()
        }
        return cls(
            items=items,
            orders={r: list(order) for r, order in payload["orders"].items()},
            source_tags=list(payload["source_tags"]),
            pathologies=list(payload["pathologies"]),
            seed=int(payload["seed"]),
        )


def _opaque_item_id(seed: int, tag: str, pathology: str, image_id: str) -> str:
    key = f"study-items-{seed}".encode()
    message = f"{tag}|{pathology}|{image_id}".encode()
    return hmac.new(key, message, hashlib.sha256).hexdigest()[: 2 * ITEM_ID_BYTES]


def _manifest_images_by_label(directory: Path) -> dict[str, list[str]]:
    candidates = [directory / "manifest.csv", directory / "annotations.csv"]
    manifest = next((p for p in candidates if p.exists()), None)
    if manifest is None:
        found = sorted(directory.glob("*.csv"))
        if len(found) != 1:
            raise StudyBuildError(f"{directory}: expected one manifest CSV, found {found}")
        manifest = found[0]
    by_label: dict[str, list[str]] = {}
    with manifest.open(newline="") as handle:
        for row in csv.DictReader(handle):
            images = by_label.setdefault(row["label"], [])
            if row["image_id"] not in images:
                images.append(row["image_id"])
    return by_label


def _prepare_display_image(source: Path, destination: Path, cfg: StudyConfig) -> None:
    """Center crop to crop_fraction of the side, then resize for display."""
    with Image.open(source) as img:
        gray = img.convert("L")
        w, h = gray.size
        cw, ch = round(w * cfg.crop_fraction), round(h * cfg.crop_fraction)
        left, top = (w - cw) // 2, (h - ch) // 2
        cropped = gray.crop((left, top, left + cw, top + ch))
        cropped.resize((cfg.display_size, cfg.display_size), Image.BILINEAR).save(
            destination, format="PNG"
        )


def _derived_rng(seed: int, *labels: str) -> np.random.Generator:
    digest = hashlib.sha256("|".join((str(seed),) + labels).encode()).digest()
    return np.random.default_rng(int.from_bytes(digest[:8], "big"))


def build_study(cfg: StudyConfig, out_dir: str | Path) -> StudyPlan:
    """Sample the study items, write blinded display images, and fix one
    shuffled order per reviewer. Raises StudyBuildError naming any deficit."""
    out = Path(out_dir)
    (out / ITEMS_DIR).mkdir(parents=True, exist_ok=True)
    items: dict[str, StudyItem] = {}
    for tag, directory in cfg.sources:
        source_dir = Path(directory)
        by_label = _manifest_images_by_label(source_dir)
        for pathology in cfg.pathologies:
            available = sorted(by_label.get(pathology, []))
            if len(available) < cfg.per_pathology_count:
                raise StudyBuildError(
                    f"source {tag!r} has {len(available)} {pathology} images, "
                    f"needs {cfg.per_pathology_count}"
                )
            rng = _derived_rng(cfg.seed, "sample", tag, pathology)
            chosen = [available[i] for i in rng.permutation(len(available))[: cfg.per_pathology_count]]
            for image_id in chosen:
                item_id = _opaque_item_id(cfg.seed, tag, pathology, image_id)
                _prepare_display_image(
                    source_dir / image_id, out / ITEMS_DIR / f"{item_id}.png", cfg
                )
                items[item_id] = StudyItem(item_id, tag, pathology, image_id)

    canonical = sorted(items)
    orders = {}
    for reviewer in cfg.reviewers:
        rng = _derived_rng(cfg.seed, "order", reviewer)
        orders[reviewer] = [canonical[i] for i in rng.permutation(len(canonical))]
    plan = StudyPlan(
        items=items,
        orders=orders,
        source_tags=[tag for tag, _ in cfg.sources],
        pathologies=list(cfg.pathologies),
        seed=cfg.seed,
    )
    plan.save(out)
    return plan


@dataclass(frozen=True)
class JudgmentRecord:
    reviewer_id: str
    item_id: str
    verdict: str
    timestamp: str

    def __post_init__(self) -> None:
        if self.verdict not in VERDICTS:
            raise ValueError(f"verdict must be one of {VERDICTS}, got {self.verdict!r}")


class JudgmentStore:
    """Append-only JSONL store with at most one verdict per (reviewer, item).

    Appends are serialized by a lock; recorded verdicts are never mutated.
    """

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.Lock()
        self._records: list[JudgmentRecord] = []
        self._seen: set[tuple[str, str]] = set()
        if self.path.exists():
            for line in self.path.read_text().splitlines():
                if line.strip():
                    data = json.loads(line)
                    self._append_in_memory(JudgmentRecord(**data))

    def _append_in_memory(self, record: JudgmentRecord) -> None:
        key = (record.reviewer_id, record.item_id)
        if key in self._seen:
            raise DuplicateJudgmentError(f"{record.reviewer_id} already judged {record.item_id}")
        self._records.append(record)
        self._seen.add(key)

    def record(self, reviewer_id: str, item_id: str, verdict: str) -> JudgmentRecord:
        rec = JudgmentRecord(
            reviewer_id=reviewer_id,
            item_id=item_id,
            verdict=verdict,
            timestamp=datetime.now(timezone.utc).isoformat(),
        )
        with self._lock:
            self._append_in_memory(rec)
            with self.path.open("a") as handle:
                handle.write(json.dumps(rec.__dict__) + "\n")
        return rec

    def has(self, reviewer_id: str, item_id: str) -> bool:
        return (reviewer_id, item_id) in self._seen

    def judged_items(self, reviewer_id: str) -> set[str]:
        return {item for (reviewer, item) in self._seen if reviewer == reviewer_id}

    def records(self) -> list[JudgmentRecord]:
        return list(self._records)


@dataclass
class TallyTable:
    """Counts of items judged real, per (pathology row, source column)."""

    reviewer_id: str
    counts: dict[str, dict[str, int]]  # pathology -> source_tag -> judged-real
    shown: dict[str, dict[str, int]]  # pathology -> source_tag -> items shown

    def column_total(self, source_tag: str) -> int:
        return sum(row[source_tag] for row in self.counts.values())


def tally(judgments: Iterable[JudgmentRecord], plan: StudyPlan) -> dict[str, TallyTable]:
    """Aggregate judged-real counts per reviewer, per (pathology, source) cell."""
    shown = {
        p: {tag: 0 for tag in plan.source_tags} for p in plan.pathologies
    }
    for item in plan.items.values():
        shown[item.pathology][item.source_tag] += 1

    def zero_table(reviewer_id: str) -> TallyTable:
        return TallyTable(
            reviewer_id=reviewer_id,
            counts={p: {t: 0 for t in plan.source_tags} for p in plan.pathologies},
            shown=shown,
        )

    tables = {reviewer: zero_table(reviewer) for reviewer in plan.orders}
    for rec in judgments:
        item = plan.items.get(rec.item_id)
        if item is None:
            raise ValueError(f"judgment references unknown item {rec.item_id!r}")
        if rec.reviewer_id not in tables:
            tables[rec.reviewer_id] = zero_table(rec.reviewer_id)
        if rec.verdict == "real":
            tables[rec.reviewer_id].counts[item.pathology][item.source_tag] += 1
    return tables


def write_tally_csv(
    tables: dict[str, TallyTable],
    plan: StudyPlan,
    path: str | Path,
    reviewers: Sequence[str] | None = None,
) -> None:
    """One row per pathology plus Total; one column per source; each cell
    holds the per-reviewer judged-real counts joined by '|'."""
    roster = list(reviewers) if reviewers is not None else sorted(tables)
    with Path(path).open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["pathology"] + list(plan.source_tags))
        for pathology in plan.pathologies:
            row = [pathology]
            for tag in plan.source_tags:
                values = [
                    str(tables[r].counts[pathology][tag]) if r in tables else "0"
                    for r in roster
                ]
                row.append("|".join(values))
            writer.writerow(row)
        total_row = ["Total"]
        for tag in plan.source_tags:
            values = [
                str(tables[r].column_total(tag)) if r in tables else "0" for r in roster
            ]
            total_row.append("|".join(values))
        writer.writerow(total_row)
