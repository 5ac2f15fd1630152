"""Generator and discriminator architectures, seeded initialization, and the
directory checkpoint format.

The generator is a U-shaped encoder-decoder with skip connections; the
discriminator scores overlapping patches of a (condition, candidate) channel
stack and emits a grid of real/fake logits. Images travel through the networks
in [-1, 1]; pixel intensities in [0, 1] map via v -> 2v - 1.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np
import torch
from torch import nn

CHECKPOINT_VERSION = 1
WEIGHT_INIT_STD = 0.02


def to_network(pixels: np.ndarray) -> np.ndarray:
    """Map [0, 1] pixel intensities to network range [-1, 1]."""
    return pixels * 2.0 - 1.0


def to_pixel(values: np.ndarray) -> np.ndarray:
    """Map network range [-1, 1] back to [0, 1] pixel intensities."""
    return np.clip((values + 1.0) / 2.0, 0.0, 1.0)


@dataclass(frozen=True)
class GeneratorConfig:
    """Architecture descriptor; fully determines every weight shape."""

    levels: int = 8
    base_width: int = 64
    in_channels: int = 1
    out_channels: int = 1
    width_cap: int = 8  # channel growth saturates at base_width * width_cap
    dropout: float = 0.0

    def __post_init__(self) -> None:
        if self.levels < 1:
            raise ValueError(f"levels must be >= 1, got {self.levels}")
        if self.base_width < 1:
            raise ValueError(f"base_width must be >= 1, got {self.base_width}")

    def encoder_widths(self) -> list[int]:
        return [min(self.base_width * 2**i, self.base_width * self.width_cap)
                for i in range(self.levels)]


@dataclass(frozen=True)
class DiscriminatorConfig:
    """Receptive-field descriptor. The default stack (3 strided + 2 unstrided
    4x4 convs) scores 70-pixel patches and yields a 30x30 map on 256 inputs."""

    base_width: int = 64
    in_channels: int = 2
    strided_layers: int = 3
    width_cap: int = 8

    def __post_init__(self) -> None:
        if self.strided_layers < 1:
            raise ValueError(f"strided_layers must be >= 1, got {self.strided_layers}")

    def receptive_field(self) -> int:
        rf, stride = 4, 2
        for _ in range(self.strided_layers - 1):
            rf += 3 * stride
            stride *= 2
        return rf + 3 * stride + 3 * stride  # two final unstrided 4x4 layers


class UNetGenerator(nn.Module):
    """Encoder-decoder with skip connections mapping [-1, 1] images to [-1, 1]."""

    def __init__(self, config: GeneratorConfig):
        super().__init__()
        self.config = config
        widths = config.encoder_widths()
        self.downs = nn.ModuleList()
        previous = config.in_channels
        for i, width in enumerate(widths):
            block: list[nn.Module] = [nn.Conv2d(previous, width, 4, stride=2, padding=1)]
            if 0 < i < config.levels - 1:
                block.append(nn.BatchNorm2d(width))
            self.downs.append(nn.Sequential(*block))
            previous = width
        self.ups = nn.ModuleList()
        for i in reversed(range(1, config.levels)):
            in_width = widths[i] if i == config.levels - 1 else widths[i] * 2
            block = [nn.ConvTranspose2d(in_width, widths[i - 1], 4, stride=2, padding=1),
                     nn.BatchNorm2d(widths[i - 1])]
            if config.dropout > 0 and i >= config.levels - 3:
                block.append(nn.Dropout2d(config.dropout))
            self.ups.append(nn.Sequential(*block))
        final_in = widths[0] * 2 if config.levels > 1 else widths[0]
        self.final = nn.ConvTranspose2d(final_in, config.out_channels, 4, stride=2, padding=1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.ndim != 4 or x.shape[1] != self.config.in_channels:
            raise ValueError(f"expected (B, {self.config.in_channels}, H, W) input, got {tuple(x.shape)}")
        side = 2**self.config.levels
        if x.shape[-2] % side or x.shape[-1] % side or min(x.shape[-2:]) < side:
            raise ValueError(
                f"input {tuple(x.shape[-2:])} not divisible by 2^levels = {side}; "
                "reduce levels or resize the input"
            )
        skips = []
        for i, down in enumerate(self.downs):
            x = down(x if i == 0 else nn.functional.leaky_relu(x, 0.2))
            skips.append(x)
        x = skips[-1]
        for i, up in enumerate(self.ups):
            x = up(nn.functional.relu(x))
            x = torch.cat([x, skips[len(skips) - 2 - i]], dim=1)
        return torch.tanh(self.final(nn.functional.relu(x)))


class PatchDiscriminator(nn.Module):
    """Conditional patch scorer over a channel-stacked (condition, candidate) pair."""

    def __init__(self, config: DiscriminatorConfig):
        super().__init__()
        self.config = config
        layers: list[nn.Module] = []
        previous = config.in_channels
        width = config.base_width
        for i in range(config.strided_layers):
            layers.append(nn.Conv2d(previous, width, 4, stride=2, padding=1))
            if i > 0:
                layers.append(nn.BatchNorm2d(width))
            layers.append(nn.LeakyReLU(0.2))
            previous = width
            width = min(width * 2, config.base_width * config.width_cap)
        layers += [
            nn.Conv2d(previous, width, 4, stride=1, padding=1),
            nn.BatchNorm2d(width),
            nn.LeakyReLU(0.2),
            nn.Conv2d(width, 1, 4, stride=1, padding=1),
        ]
        self.net = nn.Sequential(*layers)

    def forward(self, condition: torch.Tensor, candidate: torch.Tensor) -> torch.Tensor:
        if condition.shape != candidate.shape:
            raise ValueError(
                f"condition {tuple(condition.shape)} and candidate {tuple(candidate.shape)} differ"
            )
        return self.net(torch.cat([condition, candidate], dim=1))


def _seeded_normal_init(module: nn.Module, seed: int) -> None:
    generator = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for m in module.modules():
            if isinstance(m, (nn.Conv2d, nn.ConvTranspose2d)):
                m.weight.normal_(0.0, WEIGHT_INIT_STD, generator=generator)
                if m.bias is not None:
                    m.bias.zero_()
            elif isinstance(m, nn.BatchNorm2d):
                m.weight.normal_(1.0, WEIGHT_INIT_STD, generator=generator)
                m.bias.zero_()


def init_generator(
    seed: int, levels: int = 8, base_width: int = 64, **kwargs
) -> UNetGenerator:
    """Build a generator with seed-deterministic N(0, 0.02) weight draws."""
    model = UNetGenerator(GeneratorConfig(levels=levels, base_width=base_width, **kwargs))
    _seeded_normal_init(model, seed)
    return model


def init_discriminator(seed: int, base_width: int = 64, **kwargs) -> PatchDiscriminator:
    model = PatchDiscriminator(DiscriminatorConfig(base_width=base_width, **kwargs))
    _seeded_normal_init(model, seed)
    return model


def generator_forward(generator: UNetGenerator, x: torch.Tensor) -> torch.Tensor:
    """Deterministic inference pass; output shape equals input shape."""
    was_training = generator.training
    generator.eval()
    try:
        with torch.no_grad():
            out = generator(x)
    finally:
        generator.train(was_training)
    return out


def discriminator_forward(
    discriminator: PatchDiscriminator, condition: torch.Tensor, candidate: torch.Tensor
) -> torch.Tensor:
    """Inference pass returning per-patch probabilities in (0, 1)."""
    was_training = discriminator.training
    discriminator.eval()
    try:
        with torch.no_grad():
            out = torch.sigmoid(discriminator(condition, candidate))
    finally:
        discriminator.train(was_training)
    return out


# --- checkpoint format: descriptor.txt + one .npy file per named array ---


def _write_descriptor(path: Path, sections: dict[str, dict]) -> None:
    lines = [f"version={CHECKPOINT_VERSION}"]
    for prefix, mapping in sections.items():
        for key, value in mapping.items():
            lines.append(f"{prefix}.{key}={value}")
    path.write_text("\n".join(lines) + "\n")


def _read_descriptor(path: Path) -> dict[str, str]:
    entries = {}
    for line in path.read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, _, value = line.partition("=")
        entries[key.strip()] = value.strip()
    return entries


def _coerce(dataclass_type, raw: dict[str, str]):
    kwargs = {}
    for field in fields(dataclass_type):
        if field.name not in raw:
            continue
        value = raw[field.name]
        if field.type in ("int", int):
            kwargs[field.name] = int(value)
        elif field.type in ("float", float):
            kwargs[field.name] = float(value)
        else:
            kwargs[field.name] = value
    return dataclass_type(**kwargs)


def save_checkpoint(
    directory: str | Path,
    generator: UNetGenerator | None = None,
    discriminator: PatchDiscriminator | None = None,
    step: int | None = None,
    extra_arrays: dict[str, np.ndarray] | None = None,
    extra_meta: dict[str, str] | None = None,
) -> Path:
    """Write a checkpoint directory: descriptor.txt plus one .npy per array."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    sections: dict[str, dict] = {}
    arrays: dict[str, np.ndarray] = {}
    if generator is not None:
        sections["generator"] = asdict(generator.config)
        for name, tensor in generator.state_dict().items():
            arrays[f"generator.{name}"] = tensor.detach().cpu().numpy()
    if discriminator is not None:
        sections["discriminator"] = asdict(discriminator.config)
        for name, tensor in discriminator.state_dict().items():
            arrays[f"discriminator.{name}"] = tensor.detach().cpu().numpy()
    meta = dict(extra_meta or {})
    if step is not None:
        meta["step"] = str(step)
    if meta:
        sections["meta"] = meta
    for name, array in (extra_arrays or {}).items():
        arrays[name] = np.asarray(array)
    _write_descriptor(out / "descriptor.txt", sections)
    for name, array in arrays.items():
        np.save(out / f"{name}.npy", array)
    return out


def _section(entries: dict[str, str], prefix: str) -> dict[str, str]:
    plen = len(prefix) + 1
    return {k[plen:]: v for k, v in entries.items() if k.startswith(prefix + ".")}


def load_arrays(directory: str | Path, prefix: str) -> dict[str, np.ndarray]:
    out = {}
    plen = len(prefix) + 1
    for path in sorted(Path(directory).glob(f"{prefix}.*.npy")):
        out[path.name[plen:-4]] = np.load(path)
    return out


def checkpoint_meta(directory: str | Path) -> dict[str, str]:
    entries = _read_descriptor(Path(directory) / "descriptor.txt")
    meta = _section(entries, "meta")
    meta["version"] = entries.get("version", "")
    return meta


def load_generator(directory: str | Path) -> UNetGenerator:
    directory = Path(directory)
    entries = _read_descriptor(directory / "descriptor.txt")
    section = _section(entries, "generator")
    if not section:
        raise ValueError(f"{directory} holds no generator weights")
    model = UNetGenerator(_coerce(GeneratorConfig, section))
    state = {name: torch.from_numpy(arr) for name, arr in load_arrays(directory, "generator").items()}
    model.load_state_dict(state)
    return model


def load_discriminator(directory: str | Path) -> PatchDiscriminator:
    directory = Path(directory)
    entries = _read_descriptor(directory / "descriptor.txt")
    section = _section(entries, "discriminator")
    if not section:
        raise ValueError(f"{directory} holds no discriminator weights")
    model = PatchDiscriminator(_coerce(DiscriminatorConfig, section))
    state = {name: torch.from_numpy(arr) for name, arr in load_arrays(directory, "discriminator").items()}
    model.load_state_dict(state)
    return model
