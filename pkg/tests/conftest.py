import numpy as np
import pytest

from cxrsynth import corpus, networks, pairing, training


@pytest.fixture(scope="session")
def phantom_corpus(tmp_path_factory):
    """Small shared phantom corpus: 12 diseased (2 per pathology) + 6 healthy."""
    out = tmp_path_factory.mktemp("phantoms")
    annotations, images = corpus.generate_phantom_corpus(12, 6, seed=20, out_dir=out)
    return {
        "dir": out,
        "annotations": annotations,
        "images": {img.id: img for img in images},
        "healthy": [img for img in images if img.id.startswith("phantom_h")],
    }


def make_image(rng: np.random.Generator, height: int = 64, width: int = 64, name: str = "img.png"):
    return corpus.GrayImage(id=name, pixels=rng.random((height, width)))


def make_pair(rng: np.random.Generator, height: int = 64, width: int = 64, name: str = "img.png"):
    image = make_image(rng, height, width, name)
    mask = pairing.random_mask(height, width, seed=int(rng.integers(0, 2**31)))
    return pairing.TrainingPair(
        x=pairing.apply_mask(image, mask),
        y=image,
        m=mask,
        source="healthy",
        pair_id=f"pair_{name}",
    )


@pytest.fixture
def tiny_pairs():
    rng = np.random.default_rng(7)
    return [make_pair(rng, 64, 64, f"t{i}.png") for i in range(4)]


@pytest.fixture
def tiny_configs():
    return (
        networks.GeneratorConfig(levels=4, base_width=8),
        networks.DiscriminatorConfig(base_width=8),
    )


@pytest.fixture
def tiny_state(tiny_configs):
    gen_cfg, disc_cfg = tiny_configs
    cfg = training.TrainingConfig(total_steps=4, seed=3)
    return training.init_train_state(cfg, gen_cfg, disc_cfg), cfg
