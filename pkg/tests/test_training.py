import math

import numpy as np
import pytest
import torch

from cxrsynth import training
from cxrsynth.training import (
    TrainingConfig,
    TrainingDivergedError,
    adversarial_loss,
    generator_objective,
    l1_loss,
    prepare_batch,
    train,
    train_step,
)


def const_map(value, shape=(1, 1, 4, 4)):
    return torch.full(shape, float(value), dtype=torch.float64)


class TestAdversarialLoss:
    def test_half_half(self):
        value = float(adversarial_loss(const_map(0.5), const_map(0.5)))
        assert abs(value - (-1.3862943611198906)) < 1e-6

    def test_perfect_discriminator_near_zero(self):
        eps = 1e-7
        value = float(adversarial_loss(const_map(1 - eps), const_map(eps), eps))
        assert abs(value) <= 2 * eps + 1e-12

    def test_single_patch_hand_arithmetic(self):
        value = float(adversarial_loss(const_map(0.9, (1, 1, 1, 1)),
                                       const_map(0.2, (1, 1, 1, 1))))
        assert abs(value - (math.log(0.9) + math.log(0.8))) < 1e-9

    def test_bounds(self):
        rng = np.random.default_rng(0)
        eps = 1e-7
        for _ in range(50):
            d_real = torch.from_numpy(rng.uniform(0, 1, (1, 1, 5, 5)))
            d_fake = torch.from_numpy(rng.uniform(0, 1, (1, 1, 5, 5)))
            value = float(adversarial_loss(d_real, d_fake, eps))
            assert 2 * math.log(eps) - 1e-9 <= value <= 1e-12

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError, match="shape"):
            adversarial_loss(const_map(0.5), const_map(0.5, (1, 1, 3, 3)))

    def test_clamping_keeps_finite(self):
        value = float(adversarial_loss(const_map(0.0), const_map(1.0)))
        assert math.isfinite(value)


class TestL1Loss:
    def test_identical_is_zero(self):
        x = const_map(0.3)
        assert float(l1_loss(x, x)) == 0.0

    def test_constant_offset(self):
        y = const_map(0.5)
        assert abs(float(l1_loss(y, y + 0.1)) - 0.1) < 1e-12

    def test_hand_mean(self):
        y = torch.tensor([[0.0, 1.0], [1.0, 0.0]], dtype=torch.float64)
        x = torch.full((2, 2), 0.5, dtype=torch.float64)
        assert float(l1_loss(y, x)) == 0.5

    def test_symmetry_and_nonnegativity(self):
        rng = np.random.default_rng(1)
        a = torch.from_numpy(rng.normal(size=(3, 3)))
        b = torch.from_numpy(rng.normal(size=(3, 3)))
        assert float(l1_loss(a, b)) == float(l1_loss(b, a))
        assert float(l1_loss(a, b)) >= 0

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError):
            l1_loss(torch.zeros(2, 2), torch.zeros(3, 3))


class TestGeneratorObjective:
    def test_literal_composite_value(self):
        cfg = TrainingConfig(lambda_l1=100.0, saturating_g=True)
        y = const_map(0.0)
        x_tilde = y + 0.2  # L1 = 0.2
        value = float(generator_objective(const_map(0.5), y, x_tilde, cfg))
        assert abs(value - 19.306852819440055) < 1e-6

    def test_lambda_zero_reduces_to_adversarial_term(self):
        cfg = TrainingConfig(lambda_l1=0.0, saturating_g=True)
        value = float(generator_objective(const_map(0.5), const_map(0.0), const_map(0.7), cfg))
        assert abs(value - math.log(0.5)) < 1e-9

    def test_monotone_in_l1(self):
        cfg = TrainingConfig(lambda_l1=10.0, saturating_g=True)
        y = const_map(0.0)
        small = float(generator_objective(const_map(0.5), y, y + 0.1, cfg))
        large = float(generator_objective(const_map(0.5), y, y + 0.3, cfg))
        assert small < large

    def test_non_saturating_variant(self):
        cfg = TrainingConfig(lambda_l1=0.0, saturating_g=False)
        value = float(generator_objective(const_map(0.5), const_map(0.0), const_map(0.0), cfg))
        assert abs(value - (-math.log(0.5))) < 1e-9


class TestTrainStep:
    def test_freeze_contract(self, tiny_state, tiny_pairs):
        state, cfg = tiny_state
        x, y, m = prepare_batch(tiny_pairs[:2])
        x_tilde = training.compose(x, state.generator(x), m)

        g_before = [p.detach().clone() for p in state.generator.parameters()]
        d_before = [p.detach().clone() for p in state.discriminator.parameters()]
        training._discriminator_update(state, x, y, x_tilde, cfg)
        assert all(torch.equal(a, b) for a, b in
                   zip(g_before, state.generator.parameters()))
        assert not all(torch.equal(a, b) for a, b in
                       zip(d_before, state.discriminator.parameters()))

        d_mid = [p.detach().clone() for p in state.discriminator.parameters()]
        training._generator_update(state, x, y, x_tilde, cfg)
        assert all(torch.equal(a, b) for a, b in
                   zip(d_mid, state.discriminator.parameters()))
        assert not all(torch.equal(a, b) for a, b in
                       zip(g_before, state.generator.parameters()))

    def test_step_counter_and_history(self, tiny_state, tiny_pairs):
        state, cfg = tiny_state
        for k in range(3):
            train_step(state, tiny_pairs[:1], cfg)
        assert state.step == 3
        assert [r.step for r in state.loss_history] == [1, 2, 3]
        assert all(math.isfinite(r.loss_l1) for r in state.loss_history)

    def test_composite_preserves_masked_region_bitwise(self, tiny_state, tiny_pairs):
        state, _ = tiny_state
        x, y, m = prepare_batch(tiny_pairs)
        x_tilde = training.compose(x, state.generator(x), m)
        assert torch.equal(x_tilde * m, x * m)

    def test_empty_batch_rejected(self, tiny_state):
        state, cfg = tiny_state
        with pytest.raises(ValueError):
            train_step(state, [], cfg)

    def test_divergence_aborts_with_diagnostics(self, tiny_state, tiny_pairs):
        state, cfg = tiny_state
        with torch.no_grad():
            state.generator.downs[0][0].weight[0, 0, 0, 0] = float("nan")
        with pytest.raises(TrainingDivergedError) as excinfo:
            train_step(state, tiny_pairs[:1], cfg)
        assert excinfo.value.step == 1
        assert excinfo.value.batch_ids == [tiny_pairs[0].pair_id]


class TestTrainLoop:
    def test_zero_steps_writes_initial_checkpoint_only(self, tmp_path, tiny_pairs, tiny_configs):
        gen_cfg, disc_cfg = tiny_configs
        cfg = TrainingConfig(total_steps=0, checkpoint_interval=5, seed=0)
        state = train(tiny_pairs, cfg, tmp_path, generator_config=gen_cfg,
                      discriminator_config=disc_cfg)
        assert state.step == 0
        ckpts = sorted(p.name for p in tmp_path.glob("ckpt_step*"))
        assert ckpts == ["ckpt_step0"]

    def test_checkpoint_interval_arithmetic(self, tmp_path, tiny_pairs, tiny_configs):
        gen_cfg, disc_cfg = tiny_configs
        cfg = TrainingConfig(total_steps=6, checkpoint_interval=2, seed=0)
        train(tiny_pairs, cfg, tmp_path, generator_config=gen_cfg,
              discriminator_config=disc_cfg)
        names = sorted(p.name for p in tmp_path.glob("ckpt_step*"))
        assert names == ["ckpt_step2", "ckpt_step4", "ckpt_step6"]
        assert (tmp_path / "losses.csv").exists()

    def test_resume_grows_history(self, tmp_path, tiny_pairs, tiny_configs):
        gen_cfg, disc_cfg = tiny_configs
        cfg = TrainingConfig(total_steps=4, checkpoint_interval=2, seed=0)
        state = train(tiny_pairs, cfg, tmp_path, generator_config=gen_cfg,
                      discriminator_config=disc_cfg)
        assert len(state.loss_history) == 4
        resume_cfg = TrainingConfig(total_steps=3, checkpoint_interval=2, seed=0)
        resumed = train(tiny_pairs, resume_cfg, tmp_path,
                        resume_from=tmp_path / "ckpt_step4")
        assert resumed.step == 7
        assert len(resumed.loss_history) == 7

    def test_loss_history_is_seed_deterministic(self, tiny_pairs, tiny_configs):
        gen_cfg, disc_cfg = tiny_configs
        cfg = TrainingConfig(total_steps=5, checkpoint_interval=10, seed=11)
        a = train(tiny_pairs, cfg, None, generator_config=gen_cfg,
                  discriminator_config=disc_cfg)
        b = train(tiny_pairs, cfg, None, generator_config=gen_cfg,
                  discriminator_config=disc_cfg)
        assert [(r.step, r.loss_gan_d, r.loss_gan_g, r.loss_l1) for r in a.loss_history] == \
               [(r.step, r.loss_gan_d, r.loss_gan_g, r.loss_l1) for r in b.loss_history]

    def test_empty_pairs_rejected(self, tiny_configs):
        cfg = TrainingConfig(total_steps=1)
        with pytest.raises(ValueError):
            train([], cfg, None)

    def test_loss_csv_round_trip(self, tmp_path):
        history = [training.LossRecord(1, -1.0, 0.5, 0.25)]
        training.write_loss_csv(tmp_path / "l.csv", history)
        assert training.read_loss_csv(tmp_path / "l.csv") == history


class TestConfigValidation:
    @pytest.mark.parametrize(
        "kwargs",
        [
            {"lambda_l1": -1.0},
            {"learning_rate_g": 0.0},
            {"checkpoint_interval": 0},
            {"batch_size": 0},
            {"log_eps": 0.0},
        ],
    )
    def test_invalid_config_rejected(self, kwargs):
        with pytest.raises(ValueError):
            TrainingConfig(**kwargs)

    def test_defaults_are_valid(self):
        cfg = TrainingConfig()
        assert cfg.lambda_l1 == 100.0
        assert cfg.batch_size == 1
        assert not cfg.saturating_g
