"""Scikit-learn style wrappers so the pipeline composes with the wider
ecosystem: a fit/transform inpainting augmenter and a fit/predict detector.

The wrappers hold hyperparameters verbatim (``get_params``/``set_params``
compatible) and delegate to the functional modules.
"""

from __future__ import annotations

from typing import Mapping, Sequence

import numpy as np
import torch
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

from . import networks, synthesis, training
from .corpus import Annotation, GrayImage
from .detector import Detection, GridDetector, GridDetectorConfig
from .networks import DiscriminatorConfig, GeneratorConfig
from .pairing import TrainingPair
from .training import TrainingConfig


class InpaintingAugmenter(BaseEstimator, TransformerMixin):
    """Conditional inpainting model with a fit/transform surface.

    ``fit`` runs the adversarial training loop on a list of TrainingPair;
    ``transform`` inpaints the masked-out region of each pair, returning
    composite images whose masked-in pixels equal the input exactly.
    """

    def __init__(
        self,
        levels: int = 8,
        base_width: int = 64,
        lambda_l1: float = 100.0,
        learning_rate: float = 2e-4,
        batch_size: int = 1,
        total_steps: int = 2000,
        random_state: int = 0,
    ):
        self.levels = levels
        self.base_width = base_width
        self.lambda_l1 = lambda_l1
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.total_steps = total_steps
        self.random_state = random_state

    def _config(self) -> TrainingConfig:
        return TrainingConfig(
            lambda_l1=self.lambda_l1,
            learning_rate_g=self.learning_rate,
            learning_rate_d=self.learning_rate,
            batch_size=self.batch_size,
            total_steps=self.total_steps,
            seed=self.random_state,
        )

    def fit(self, X: Sequence[TrainingPair], y=None) -> "InpaintingAugmenter":
        disc_width = min(self.base_width, 64)
        self.state_ = training.train(
            list(X),
            self._config(),
            out_dir=None,
            generator_config=GeneratorConfig(levels=self.levels, base_width=self.base_width),
            discriminator_config=DiscriminatorConfig(base_width=disc_width),
        )
        return self

    def _check_fitted(self) -> None:
        if not hasattr(self, "state_"):
            raise NotFittedError("call fit before using this augmenter")

    def transform(self, X: Sequence[TrainingPair]) -> list[GrayImage]:
        """Inpaint the masked-out region of each pair; masked-in pixels are
        preserved by direct copy."""
        self._check_fitted()
        out = []
        for pair in X:
            x_net = torch.from_numpy(
                networks.to_network(pair.x.pixels)[None, None]
            ).to(torch.float32)
            g_net = networks.generator_forward(self.state_.generator, x_net)[0, 0].numpy()
            g_pix = networks.to_pixel(g_net.astype(np.float64))
            result = synthesis.composite(
                pair.x.pixels, g_pix, pair.m.pixels.astype(np.float64)
            )
            inside = pair.m.pixels == 1
            result[inside] = pair.y.pixels[inside]
            out.append(GrayImage(id=pair.y.id, pixels=np.clip(result, 0.0, 1.0)))
        return out

    def sample(
        self,
        annotations: Sequence[Annotation],
        images: Mapping[str, GrayImage],
        count: int,
        seed: int | None = None,
        model_tag: str = "augmenter",
    ) -> list[synthesis.SyntheticRecord]:
        """Generate synthetic records without touching the filesystem."""
        self._check_fitted()
        return synthesis.generate_records(
            self.state_.generator,
            list(annotations),
            images,
            count,
            self.random_state if seed is None else seed,
            model_tag,
        )


class LesionDetector(BaseEstimator):
    """fit/predict wrapper around the grid detector."""

    def __init__(
        self,
        steps: int = 500,
        learning_rate: float = 3e-4,
        batch_size: int = 2,
        input_size: int = 256,
        base_width: int = 16,
        random_state: int = 0,
    ):
        self.steps = steps
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.input_size = input_size
        self.base_width = base_width
        self.random_state = random_state

    def fit(
        self, X: Sequence[GrayImage], y: Sequence[Sequence[Annotation]]
    ) -> "LesionDetector":
        if len(X) != len(y):
            raise ValueError(f"got {len(X)} images but {len(y)} annotation lists")
        self.detector_ = GridDetector(
            GridDetectorConfig(
                learning_rate=self.learning_rate,
                batch_size=self.batch_size,
                input_size=self.input_size,
                base_width=self.base_width,
                seed=self.random_state,
            )
        )
        samples = list(zip(X, [list(a) for a in y]))
        rng = np.random.default_rng(self.random_state)
        for _ in range(self.steps):
            picks = rng.integers(0, len(samples), size=min(self.batch_size, len(samples)))
            self.detector_.train_step([samples[i] for i in picks])
        return self

    def predict(self, X: Sequence[GrayImage]) -> list[list[Detection]]:
        if not hasattr(self, "detector_"):
            raise NotFittedError("call fit before predict")
        return [self.detector_.detect(image) for image in X]
