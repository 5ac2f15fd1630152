"""Losses and the alternating generator/discriminator update loop.

Each step builds the composite prediction by keeping the masked-in region of
the input and taking the generator's output elsewhere, then updates the
discriminator on (input, target) as real vs (input, composite) as fake, and
the generator on the adversarial term plus a weighted L1 to the target. The
masked-in region of the composite is the input bit-for-bit, so the pathology
area is never altered by training arithmetic.
"""

from __future__ import annotations

import csv
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import torch

from . import networks
from .networks import (
    DiscriminatorConfig,
    GeneratorConfig,
    PatchDiscriminator,
    UNetGenerator,
)
from .pairing import TrainingPair

LOSS_CSV_FIELDS = ("step", "loss_gan_d", "loss_gan_g", "loss_l1")


class TrainingDivergedError(RuntimeError):
    """Raised when a step produces a non-finite loss; carries a diagnostic snapshot."""

    def __init__(self, step: int, batch_ids: Sequence[str], losses: dict[str, float]):
        self.step = step
        self.batch_ids = list(batch_ids)
        self.losses = losses
        super().__init__(
            f"non-finite loss at step {step} on batch {self.batch_ids}: {losses}"
        )


@dataclass
class TrainingConfig:
    """Optimization settings. The L1 weight, learning rates, batch size and
    momentum terms follow common conditional-translation practice; none of
    them are prescribed values."""

    lambda_l1: float = 100.0
    learning_rate_g: float = 2e-4
    learning_rate_d: float = 2e-4
    batch_size: int = 1
    total_steps: int = 2000
    checkpoint_interval: int = 500
    seed: int = 0
    log_eps: float = 1e-7
    adam_beta1: float = 0.5
    adam_beta2: float = 0.999
    # True trains the generator on the literal log(1 - D) term; the default
    # -log(D) form does not stall early.
    saturating_g: bool = False

    def __post_init__(self) -> None:
        if self.lambda_l1 < 0:
            raise ValueError(f"lambda_l1 must be >= 0, got {self.lambda_l1}")
        if self.learning_rate_g <= 0 or self.learning_rate_d <= 0:
            raise ValueError("learning rates must be positive")
        if self.checkpoint_interval <= 0:
            raise ValueError("checkpoint_interval must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.total_steps < 0:
            raise ValueError("total_steps must be >= 0")
        if self.log_eps <= 0:
            raise ValueError("log_eps must be positive")


@dataclass
class LossRecord:
    step: int
    loss_gan_d: float
    loss_gan_g: float
    loss_l1: float


@dataclass
class TrainState:
    generator: UNetGenerator
    discriminator: PatchDiscriminator
    opt_g: torch.optim.Adam
    opt_d: torch.optim.Adam
    step: int = 0
    loss_history: list[LossRecord] = field(default_factory=list)


def _clamped_log(scores: torch.Tensor, eps: float) -> torch.Tensor:
    return torch.log(torch.clamp(scores, min=eps, max=1.0))


def adversarial_loss(
    d_real: torch.Tensor, d_fake: torch.Tensor, eps: float = 1e-7
) -> torch.Tensor:
    """Mean log-likelihood the discriminator assigns to (real as real, fake as
    fake): mean log(d_real) + mean log(1 - d_fake), clamped to stay finite.

    The discriminator maximizes this; its supremum is ~0 and its infimum
    2*log(eps).
    """
    d_real = torch.as_tensor(d_real, dtype=torch.get_default_dtype() if not torch.is_tensor(d_real) else None)
    d_fake = torch.as_tensor(d_fake, dtype=torch.get_default_dtype() if not torch.is_tensor(d_fake) else None)
    if d_real.shape != d_fake.shape:
        raise ValueError(f"score maps differ in shape: {tuple(d_real.shape)} vs {tuple(d_fake.shape)}")
    if eps <= 0:
        raise ValueError("eps must be positive")
    return _clamped_log(d_real, eps).mean() + _clamped_log(1.0 - d_fake, eps).mean()


def l1_loss(y: torch.Tensor, x_tilde: torch.Tensor) -> torch.Tensor:
    """Mean absolute elementwise difference."""
    y = torch.as_tensor(y)
    x_tilde = torch.as_tensor(x_tilde)
    if y.shape != x_tilde.shape:
        raise ValueError(f"shape mismatch: {tuple(y.shape)} vs {tuple(x_tilde.shape)}")
    return (y - x_tilde).abs().mean()


def generator_objective(
    d_fake: torch.Tensor,
    y: torch.Tensor,
    x_tilde: torch.Tensor,
    cfg: TrainingConfig,
) -> torch.Tensor:
    """The generator-relevant objective: adversarial term plus lambda * L1.

    With ``cfg.saturating_g`` the adversarial term is the literal
    mean log(1 - d_fake); otherwise the non-saturating -mean log(d_fake).
    """
    d_fake = torch.as_tensor(d_fake, dtype=torch.get_default_dtype() if not torch.is_tensor(d_fake) else None)
    if cfg.saturating_g:
        adv = _clamped_log(1.0 - d_fake, cfg.log_eps).mean()
    else:
        adv = -_clamped_log(d_fake, cfg.log_eps).mean()
    return adv + cfg.lambda_l1 * l1_loss(y, x_tilde)


def prepare_batch(
    batch: Sequence[TrainingPair], dtype: torch.dtype = torch.float32
) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """Stack pairs into network-space tensors (x, y, m) of shape (B, 1, H, W)."""
    if not batch:
        raise ValueError("batch must be non-empty")
    shape = batch[0].y.pixels.shape
    for pair in batch:
        if pair.y.pixels.shape != shape:
            raise ValueError("all pairs in a batch must share dimensions")
    def as_tensor(arr: np.ndarray) -> torch.Tensor:
        return torch.from_numpy(np.ascontiguousarray(arr)).to(dtype)

    x = np.stack([networks.to_network(pair.x.pixels) for pair in batch])[:, None]
    y = np.stack([networks.to_network(pair.y.pixels) for pair in batch])[:, None]
    m = np.stack([pair.m.pixels.astype(np.float64) for pair in batch])[:, None]
    return as_tensor(x), as_tensor(y), as_tensor(m)


def compose(x: torch.Tensor, g_out: torch.Tensor, m: torch.Tensor) -> torch.Tensor:
    """Composite prediction in network space: input inside the mask, generator
    output outside. Equivalent to pixel-space x + g*(1-m) mapped to [-1, 1]."""
    return m * x + (1.0 - m) * g_out


def _discriminator_update(
    state: TrainState,
    x: torch.Tensor,
    y: torch.Tensor,
    x_tilde: torch.Tensor,
    cfg: TrainingConfig,
) -> float:
    """One ascent step on the adversarial objective with G frozen."""
    d_real = torch.sigmoid(state.discriminator(x, y))
    d_fake = torch.sigmoid(state.discriminator(x, x_tilde.detach()))
    loss = -adversarial_loss(d_real, d_fake, cfg.log_eps)
    state.opt_d.zero_grad(set_to_none=True)
    loss.backward()
    state.opt_d.step()
    return float(loss.detach())


def _generator_update(
    state: TrainState,
    x: torch.Tensor,
    y: torch.Tensor,
    x_tilde: torch.Tensor,
    cfg: TrainingConfig,
) -> tuple[float, float]:
    """One descent step on the generator objective with D frozen."""
    d_fake = torch.sigmoid(state.discriminator(x, x_tilde))
    l1 = l1_loss(y, x_tilde)
    if cfg.saturating_g:
        adv = _clamped_log(1.0 - d_fake, cfg.log_eps).mean()
    else:
        adv = -_clamped_log(d_fake, cfg.log_eps).mean()
    loss = adv + cfg.lambda_l1 * l1
    state.opt_g.zero_grad(set_to_none=True)
    loss.backward()
    state.opt_g.step()
    # The generator pass backpropagates through D; drop those gradients so the
    # next D update starts clean.
    state.opt_d.zero_grad(set_to_none=True)
    return float(adv.detach()), float(l1.detach())


def train_step(
    state: TrainState, batch: Sequence[TrainingPair], cfg: TrainingConfig
) -> TrainState:
    """One alternating update: D on (real, composite-fake), then G."""
    x, y, m = prepare_batch(batch)
    x_prime = state.generator(x)
    x_tilde = compose(x, x_prime, m)
    loss_d = _discriminator_update(state, x, y, x_tilde, cfg)
    loss_g_adv, loss_l1_value = _generator_update(state, x, y, x_tilde, cfg)
    state.step += 1
    record = LossRecord(state.step, loss_d, loss_g_adv, loss_l1_value)
    if not all(np.isfinite(v) for v in (loss_d, loss_g_adv, loss_l1_value)):
        raise TrainingDivergedError(
            state.step,
            [pair.pair_id for pair in batch],
            {"loss_gan_d": loss_d, "loss_gan_g": loss_g_adv, "loss_l1": loss_l1_value},
        )
    state.loss_history.append(record)
    return state


def init_train_state(
    cfg: TrainingConfig,
    generator_config: GeneratorConfig | None = None,
    discriminator_config: DiscriminatorConfig | None = None,
) -> TrainState:
    gen_cfg = generator_config or GeneratorConfig()
    disc_cfg = discriminator_config or DiscriminatorConfig()
    generator = UNetGenerator(gen_cfg)
    networks._seeded_normal_init(generator, cfg.seed)
    discriminator = PatchDiscriminator(disc_cfg)
    networks._seeded_normal_init(discriminator, cfg.seed + 1)
    return TrainState(
        generator=generator,
        discriminator=discriminator,
        opt_g=torch.optim.Adam(generator.parameters(), lr=cfg.learning_rate_g,
                               betas=(cfg.adam_beta1, cfg.adam_beta2)),
        opt_d=torch.optim.Adam(discriminator.parameters(), lr=cfg.learning_rate_d,
                               betas=(cfg.adam_beta1, cfg.adam_beta2)),
    )


def _optimizer_arrays(opt: torch.optim.Adam, prefix: str) -> dict[str, np.ndarray]:
    arrays = {}
    for idx, param_state in opt.state_dict()["state"].items():
        for key, value in param_state.items():
            tensor = value if torch.is_tensor(value) else torch.tensor(value)
            arrays[f"{prefix}.{idx}.{key}"] = tensor.detach().cpu().numpy()
    return arrays


def _load_optimizer_arrays(opt: torch.optim.Adam, arrays: dict[str, np.ndarray]) -> None:
    state_dict = opt.state_dict()
    per_param: dict[int, dict] = {}
    for name, array in arrays.items():
        idx_text, _, key = name.partition(".")
        entry = per_param.setdefault(int(idx_text), {})
        entry[key] = torch.from_numpy(np.asarray(array))
    if per_param:
        state_dict["state"] = per_param
        opt.load_state_dict(state_dict)


def save_train_state(directory: str | Path, state: TrainState) -> Path:
    extra = {}
    extra.update(_optimizer_arrays(state.opt_g, "opt_g"))
    extra.update(_optimizer_arrays(state.opt_d, "opt_d"))
    out = networks.save_checkpoint(
        directory,
        generator=state.generator,
        discriminator=state.discriminator,
        step=state.step,
        extra_arrays=extra,
    )
    write_loss_csv(out / "loss_history.csv", state.loss_history)
    return out


def load_train_state(directory: str | Path, cfg: TrainingConfig) -> TrainState:
    directory = Path(directory)
    generator = networks.load_generator(directory)
    discriminator = networks.load_discriminator(directory)
    state = TrainState(
        generator=generator,
        discriminator=discriminator,
        opt_g=torch.optim.Adam(generator.parameters(), lr=cfg.learning_rate_g,
                               betas=(cfg.adam_beta1, cfg.adam_beta2)),
        opt_d=torch.optim.Adam(discriminator.parameters(), lr=cfg.learning_rate_d,
                               betas=(cfg.adam_beta1, cfg.adam_beta2)),
        step=int(networks.checkpoint_meta(directory).get("step", "0")),
    )
    _load_optimizer_arrays(state.opt_g, networks.load_arrays(directory, "opt_g"))
    _load_optimizer_arrays(state.opt_d, networks.load_arrays(directory, "opt_d"))
    history_path = directory / "loss_history.csv"
    if history_path.exists():
        state.loss_history = read_loss_csv(history_path)
    return state


def write_loss_csv(path: str | Path, history: Sequence[LossRecord]) -> None:
    with Path(path).open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(LOSS_CSV_FIELDS)
        for rec in history:
            writer.writerow([rec.step, rec.loss_gan_d, rec.loss_gan_g, rec.loss_l1])


def read_loss_csv(path: str | Path) -> list[LossRecord]:
    with Path(path).open(newline="") as handle:
        return [
            LossRecord(int(r["step"]), float(r["loss_gan_d"]),
                       float(r["loss_gan_g"]), float(r["loss_l1"]))
            for r in csv.DictReader(handle)
        ]


def train(
    pairs: Sequence[TrainingPair],
    cfg: TrainingConfig,
    out_dir: str | Path | None = None,
    *,
    generator_config: GeneratorConfig | None = None,
    discriminator_config: DiscriminatorConfig | None = None,
    resume_from: str | Path | None = None,
) -> TrainState:
    """Run epochs over a seed-shuffled pair list until cfg.total_steps.

    Checkpoints (``ckpt_step{N}``) are written every checkpoint_interval steps
    and at the end; a ``losses.csv`` log is emitted alongside.
    """
    if not pairs:
        raise ValueError("cannot train on an empty pair list")
    if resume_from is not None:
        state = load_train_state(resume_from, cfg)
    else:
        state = init_train_state(cfg, generator_config, discriminator_config)

    out = None
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)

    def checkpoint() -> None:
        if out is not None:
            save_train_state(out / f"ckpt_step{state.step}", state)
            write_loss_csv(out / "losses.csv", state.loss_history)

    target = state.step + cfg.total_steps if resume_from is not None else cfg.total_steps
    if state.step >= target:
        checkpoint()
        return state

    epoch = 0
    order = list(pairs)
    while state.step < target:
        random.Random(f"{cfg.seed}:{epoch}").shuffle(order)
        for start in range(0, len(order), cfg.batch_size):
            if state.step >= target:
                break
            train_step(state, order[start : start + cfg.batch_size], cfg)
            if state.step % cfg.checkpoint_interval == 0:
                checkpoint()
        epoch += 1
    if state.step % cfg.checkpoint_interval != 0:
        checkpoint()
    return state
