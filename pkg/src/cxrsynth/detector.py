"""Pluggable detector interface and a lightweight grid detector.

The evaluation harness only needs three methods: ``train_step(batch)`` taking
a list of (image, annotations) samples, ``detect(image)`` returning scored
boxes, and ``snapshot()``/``restore()`` for evaluating a frozen copy. The
default implementation is a small anchor-free conv net that predicts, per
coarse grid cell, an objectness score, class probabilities, and a box; it is
sized for the phantom corpus, not for clinical data.
"""

from __future__ import annotations

import copy
import hashlib
import math
from dataclasses import asdict, dataclass
from typing import Protocol, Sequence

import torch
from torch import nn

from .corpus import Annotation, BBox, GrayImage, PATHOLOGIES


@dataclass(frozen=True)
class Detection:
    """One scored, class-labelled box on one image."""

    image_id: str
    pathology: str
    box: BBox
    score: float

    def __post_init__(self) -> None:
        if not (0.0 <= self.score <= 1.0):
            raise ValueError(f"score must lie in [0, 1], got {self.score}")


DetectorBatch = Sequence[tuple[GrayImage, Sequence[Annotation]]]


class Detector(Protocol):
    """Contract consumed by the localization evaluation harness."""

    def train_step(self, batch: DetectorBatch) -> float: ...

    def detect(self, image: GrayImage) -> list[Detection]: ...

    def snapshot(self) -> object: ...

    def restore(self, state: object) -> None: ...

    def config_digest(self) -> str: ...


@dataclass(frozen=True)
class GridDetectorConfig:
    learning_rate: float = 3e-4
    batch_size: int = 2
    input_size: int = 256
    base_width: int = 16
    cell_stride: int = 16
    classes: tuple[str, ...] = PATHOLOGIES
    score_threshold: float = 0.2
    seed: int = 0


class _GridNet(nn.Module):
    def __init__(self, cfg: GridDetectorConfig):
        super().__init__()
        width = cfg.base_width
        stages = int(math.log2(cfg.cell_stride))
        layers: list[nn.Module] = []
        previous = 1
        for i in range(stages):
            out = min(width * 2**i, width * 4)
            layers += [nn.Conv2d(previous, out, 3, stride=2, padding=1),
                       nn.BatchNorm2d(out), nn.ReLU()]
            previous = out
        self.backbone = nn.Sequential(*layers)
        self.head = nn.Conv2d(previous, 1 + len(cfg.classes) + 4, 1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.head(self.backbone(x))


class GridDetector:
    """Anchor-free single-stage detector over a coarse cell grid."""

    def __init__(self, config: GridDetectorConfig | None = None):
        self.config = config or GridDetectorConfig()
        if self.config.input_size % self.config.cell_stride:
            raise ValueError("input_size must be divisible by cell_stride")
        torch.manual_seed(self.config.seed)
        self.net = _GridNet(self.config)
        self.opt = torch.optim.Adam(self.net.parameters(), lr=self.config.learning_rate)
        self.class_index = {name: i for i, name in enumerate(self.config.classes)}
        self.steps_taken = 0

    # -- training -----------------------------------------------------------

    def _input_tensor(self, image: GrayImage) -> torch.Tensor:
        if image.height != self.config.input_size or image.width != self.config.input_size:
            raise ValueError(
                f"detector expects {self.config.input_size}-pixel square inputs, "
                f"got {image.height}x{image.width} for {image.id!r}"
            )
        return torch.from_numpy(image.pixels[None]).to(torch.float32)

    def train_step(self, batch: DetectorBatch) -> float:
        if not batch:
            raise ValueError("batch must be non-empty")
        stride = self.config.cell_stride
        grid = self.config.input_size // stride
        inputs = torch.stack([self._input_tensor(img) for img, _ in batch])
        obj_target = torch.zeros(len(batch), grid, grid)
        cls_target = torch.full((len(batch), grid, grid), -1, dtype=torch.long)
        box_target = torch.zeros(len(batch), 4, grid, grid)
        for b, (image, annotations) in enumerate(batch):
            for ann in annotations:
                box = ann.box_at(self.config.input_size)
                cx, cy = box.x + box.w / 2.0, box.y + box.h / 2.0
                col = min(grid - 1, max(0, int(cx / stride)))
                row = min(grid - 1, max(0, int(cy / stride)))
                obj_target[b, row, col] = 1.0
                cls_target[b, row, col] = self.class_index[ann.pathology]
                box_target[b, 0, row, col] = cx / stride - col
                box_target[b, 1, row, col] = cy / stride - row
                box_target[b, 2, row, col] = math.log(max(box.w, 1.0) / stride)
                box_target[b, 3, row, col] = math.log(max(box.h, 1.0) / stride)

        self.net.train()
        out = self.net(inputs)
        obj_logits = out[:, 0]
        cls_logits = out[:, 1 : 1 + len(self.config.classes)]
        box_pred = out[:, 1 + len(self.config.classes) :]
        positive = obj_target > 0
        n_pos = int(positive.sum())
        pos_weight = torch.tensor(float(grid * grid) / max(1, n_pos))
        loss = nn.functional.binary_cross_entropy_with_logits(
            obj_logits, obj_target, pos_weight=pos_weight
        )
        if n_pos:
            loss = loss + nn.functional.cross_entropy(
                cls_logits.permute(0, 2, 3, 1)[positive], cls_target[positive]
            )
            loss = loss + nn.functional.smooth_l1_loss(
                box_pred.permute(0, 2, 3, 1)[positive],
                box_target.permute(0, 2, 3, 1)[positive],
            )
        self.opt.zero_grad(set_to_none=True)
        loss.backward()
        self.opt.step()
        self.steps_taken += 1
        return float(loss.detach())

    # -- inference ----------------------------------------------------------

    def detect(self, image: GrayImage) -> list[Detection]:
        stride = self.config.cell_stride
        self.net.eval()
        with torch.no_grad():
            out = self.net(self._input_tensor(image)[None])[0]
        obj = torch.sigmoid(out[0])
        cls_prob = torch.softmax(out[1 : 1 + len(self.config.classes)], dim=0)
        box_pred = out[1 + len(self.config.classes) :]
        detections: list[Detection] = []
        score_map = obj[None] * cls_prob
        for c, name in enumerate(self.config.classes):
            flat = int(torch.argmax(score_map[c]).item())
            row, col = divmod(flat, score_map.shape[-1])
            score = float(score_map[c, row, col])
            if score < self.config.score_threshold:
                continue
            dx, dy = float(box_pred[0, row, col]), float(box_pred[1, row, col])
            pw, ph = float(box_pred[2, row, col]), float(box_pred[3, row, col])
            cx, cy = (col + dx) * stride, (row + dy) * stride
            w = min(float(self.config.input_size), math.exp(min(pw, 8.0)) * stride)
            h = min(float(self.config.input_size), math.exp(min(ph, 8.0)) * stride)
            left = min(max(cx - w / 2.0, 0.0), self.config.input_size - 1.0)
            top = min(max(cy - h / 2.0, 0.0), self.config.input_size - 1.0)
            w = min(w, self.config.input_size - left)
            h = min(h, self.config.input_size - top)
            if w < 1.0 or h < 1.0:
                continue
            detections.append(
                Detection(image.id, name, BBox(left, top, w, h), min(score, 1.0))
            )
        return detections

    # -- state --------------------------------------------------------------

    def snapshot(self) -> dict:
        return {
            "net": copy.deepcopy(self.net.state_dict()),
            "opt": copy.deepcopy(self.opt.state_dict()),
            "steps_taken": self.steps_taken,
        }

    def restore(self, state: dict) -> None:
        self.net.load_state_dict(state["net"])
        self.opt.load_state_dict(state["opt"])
        self.steps_taken = state["steps_taken"]

    def config_digest(self) -> str:
        payload = repr(sorted(asdict(self.config).items())).encode()
        return hashlib.sha256(payload).hexdigest()
