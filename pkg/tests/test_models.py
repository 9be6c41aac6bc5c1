import numpy as np
import numpy.testing as npt
import pytest

import voxgan.tensor as T
from voxgan import Rng, Tensor, grad
from voxgan.layers import BatchNorm, Dense, contains_batchnorm
from voxgan.models import (
    CompletionModel,
    ModelSpec,
    build_discriminator,
    build_encoder,
    build_generator,
    decode_latents,
    interpolate_latents,
    reparameterize,
)
from voxgan.rng import sample_normal
from voxgan.voxel import VoxelGrid


class TestModelSpec:
    def test_defaults_match_resolution(self):
        g32 = ModelSpec("generator", 32)
        assert g32.channels == (256, 128, 64, 32, 1)
        assert g32.base_extent == 2
        d8 = ModelSpec("discriminator", 8)
        assert d8.channels == (16, 32)

    def test_encoder_output_dim(self):
        assert ModelSpec("voxel-encoder", 8, latent_dim=200).encoder_output_dim == 400

    def test_dense_width_at_paper_scale(self):
        spec = ModelSpec("generator", 32)
        assert spec.channels[0] * spec.base_extent**3 == 2048

    def test_rejects_bad_base_and_resolution(self):
        with pytest.raises(ValueError):
            ModelSpec("critic", 8)
        with pytest.raises(ValueError):
            ModelSpec("generator", 12)
        with pytest.raises(ValueError):
            # 20 needs a 5-cube base; three stride-2 doublings cannot reach it
            ModelSpec("generator", 20, channels=(8, 4, 2, 1))

    def test_rejects_chain_not_ending_in_one(self):
        with pytest.raises(ValueError):
            ModelSpec("generator", 8, channels=(8, 4))

    def test_config_roundtrip(self):
        spec = ModelSpec("generator", 20, latent_dim=64)
        again = ModelSpec.from_config(spec.to_config())
        assert again == spec


class TestGenerator:
    @pytest.mark.parametrize("res", [32, 20])
    def test_output_shape(self, res):
        rng = Rng(0)
        spec = ModelSpec("generator", res, latent_dim=16)
        gen = build_generator(spec, rng)
        z = sample_normal(rng, (2, 16))
        out = gen(z, train=True)
        assert out.shape == (2, 1, res, res, res)

    def test_outputs_strictly_inside_unit_interval(self):
        rng = Rng(1)
        gen = build_generator(ModelSpec("generator", 8, latent_dim=8), rng)
        out = gen(sample_normal(rng, (4, 8)), train=True)
        assert out.data.min() > -1.0
        assert out.data.max() < 1.0

    def test_batchnorm_between_deconvs_but_not_after_last(self):
        gen = build_generator(ModelSpec("generator", 32, latent_dim=8), Rng(0))
        names = [n for n, _ in gen.layers]
        assert "bn1" in names and "bn2" in names and "bn3" in names
        assert "bn4" not in names
        assert names[-1] == "tanh"


class TestDiscriminator:
    def test_scalar_per_sample(self):
        rng = Rng(0)
        disc = build_discriminator(ModelSpec("discriminator", 32, latent_dim=8), rng)
        x = sample_normal(rng, (3, 1, 32, 32, 32))
        assert disc(x).shape == (3, 1)

    def test_contains_no_batchnorm(self):
        disc = build_discriminator(ModelSpec("discriminator", 8), Rng(0))
        assert not contains_batchnorm(disc)
        assert not any(isinstance(m, BatchNorm) for m in disc.modules())

    def test_final_layer_affine_scaling(self):
        rng = Rng(2)
        disc = build_discriminator(ModelSpec("discriminator", 8), rng)
        assert isinstance(disc.layers[-1][1], Dense)
        x = sample_normal(rng, (4, 1, 8, 8, 8))
        base = disc(x).data.copy()
        head = disc.layers[-1][1]
        head.W.assign_(head.W.data * 2.0)
        head.b.assign_(head.b.data * 2.0)
        npt.assert_allclose(disc(x).data, 2.0 * base, rtol=1e-12)


class TestEncoders:
    def test_voxel_encoder_emits_latent_code(self):
        rng = Rng(0)
        spec = ModelSpec("voxel-encoder", 32, latent_dim=200)
        enc = build_encoder(spec, rng)
        code = enc.encode(sample_normal(rng, (2, 1, 32, 32, 32)), rng)
        assert code.mu.shape == (2, 200)
        assert code.log_var.shape == (2, 200)
        assert code.sample.shape == (2, 200)

    def test_image_encoder_shapes(self):
        rng = Rng(0)
        spec = ModelSpec("image-encoder", 8, latent_dim=16)
        enc = build_encoder(spec, rng)
        code = enc.encode(sample_normal(rng, (2, 1, 8, 8)), rng)
        assert code.mu.shape == (2, 16)

    def test_zero_variance_limit_sample_equals_mu(self):
        rng = Rng(3)
        head = np.concatenate([rng.normal((2, 4)), np.full((2, 4), -80.0)], axis=1)
        code = reparameterize(Tensor(head), rng)
        npt.assert_allclose(code.sample.data, code.mu.data, atol=1e-12)

    def test_reparameterization_gradient_wrt_mu_is_identity(self):
        rng = Rng(4)
        head = Tensor(rng.normal((1, 8)), requires_grad=True)
        code = reparameterize(head, rng)
        g = grad(code.sample.sum(), [head])[head].data
        npt.assert_array_equal(g[0, :4], np.ones(4))  # d sample / d mu = I

    def test_encoder_base_validation(self):
        with pytest.raises(ValueError):
            build_encoder(ModelSpec("discriminator", 8), Rng(0))


class TestInterpolation:
    def test_two_steps_returns_endpoints(self):
        za, zb = np.zeros(4), np.ones(4)
        out = interpolate_latents(za, zb, 2)
        npt.assert_array_equal(out[0], za)
        npt.assert_array_equal(out[1], zb)

    def test_three_steps_midpoint(self):
        za, zb = np.zeros(4), np.ones(4)
        out = interpolate_latents(za, zb, 3)
        npt.assert_allclose(out[1], 0.5 * np.ones(4))

    def test_points_lie_on_segment(self):
        rng = Rng(0)
        za, zb = rng.normal((6,)), rng.normal((6,))
        direction = zb - za
        for z in interpolate_latents(za, zb, 7):
            t = np.dot(z - za, direction) / np.dot(direction, direction)
            npt.assert_allclose(z, za + t * direction, atol=1e-12)
            assert -1e-12 <= t <= 1 + 1e-12

    def test_steps_below_two_rejected(self):
        with pytest.raises(ValueError):
            interpolate_latents(np.zeros(2), np.ones(2), 1)


def test_decode_latents_deterministic():
    rng = Rng(0)
    gen = build_generator(ModelSpec("generator", 8, latent_dim=8), rng)
    zs = [Rng(5).normal((8,)), Rng(6).normal((8,))]
    a = decode_latents(gen, zs)
    b = decode_latents(gen, zs)
    for ga, gb in zip(a, b):
        npt.assert_array_equal(ga.occupancy, gb.occupancy)
        assert ga.extent == 8


def test_completion_model_runs_and_is_deterministic():
    rng = Rng(0)
    gen = build_generator(ModelSpec("generator", 8, latent_dim=8), rng)
    enc = build_encoder(ModelSpec("voxel-encoder", 8, latent_dim=8), rng)
    model = CompletionModel(enc, gen)
    occ = np.zeros((8, 8, 8), dtype=np.uint8)
    occ[2:5, 2:5, 2:5] = 1
    cond = VoxelGrid(occ)
    a = model(cond)
    b = model(cond)
    npt.assert_array_equal(a.occupancy, b.occupancy)
    assert not a.is_binary
