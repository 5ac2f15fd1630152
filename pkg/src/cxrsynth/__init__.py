"""Pathology-preserving chest X-ray synthesis and augmentation-value evaluation.

The pipeline builds artificial pairwise samples from box-annotated images,
trains a conditional inpainting model that re-synthesizes the lung around an
untouched pathology region, exports synthetic datasets with inherited
annotations, and measures their value through a localisation protocol and a
blinded reader study service.
"""

from .corpus import (
    Annotation,
    BBox,
    CorpusSplit,
    GrayImage,
    PATHOLOGIES,
    generate_phantom_corpus,
    load_and_resize,
    parse_annotations,
    split_train_eval,
)
from .detector import Detection, GridDetector, GridDetectorConfig
from .estimators import InpaintingAugmenter, LesionDetector
from .localization import (
    CLReport,
    LabeledSet,
    PROTOCOLS,
    best_in_window,
    cl_accuracy,
    iou,
    run_protocol,
)
from .networks import (
    DiscriminatorConfig,
    GeneratorConfig,
    PatchDiscriminator,
    UNetGenerator,
    init_discriminator,
    init_generator,
)
from .pairing import (
    BinaryMask,
    TrainingPair,
    apply_mask,
    augment_pair,
    make_pairs,
    mask_from_bbox,
    random_mask,
)
from .synthesis import SyntheticRecord, composite, synthesize_dataset
from .training import (
    TrainingConfig,
    TrainState,
    adversarial_loss,
    generator_objective,
    l1_loss,
    train,
    train_step,
)

__version__ = "0.1.0"

__all__ = [
    "Annotation",
    "BBox",
    "BinaryMask",
    "CLReport",
    "CorpusSplit",
    "Detection",
    "DiscriminatorConfig",
    "GeneratorConfig",
    "GrayImage",
    "GridDetector",
    "GridDetectorConfig",
    "InpaintingAugmenter",
    "LabeledSet",
    "LesionDetector",
    "PATHOLOGIES",
    "PROTOCOLS",
    "PatchDiscriminator",
    "SyntheticRecord",
    "TrainState",
    "TrainingConfig",
    "TrainingPair",
    "UNetGenerator",
    "adversarial_loss",
    "apply_mask",
    "augment_pair",
    "best_in_window",
    "cl_accuracy",
    "composite",
    "generate_phantom_corpus",
    "generator_objective",
    "init_discriminator",
    "init_generator",
    "iou",
    "l1_loss",
    "load_and_resize",
    "make_pairs",
    "mask_from_bbox",
    "parse_annotations",
    "random_mask",
    "run_protocol",
    "split_train_eval",
    "synthesize_dataset",
    "train",
    "train_step",
]
