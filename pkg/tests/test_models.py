import zlib

import pytest
import torch

from stf.errors import ResolutionMismatch, TokenLimitExceeded, UnknownModel
from stf.models import (
    LATENT_CHANNELS,
    LATENT_FACTOR,
    TEXT_DIM,
    TEXT_WINDOW,
    ResidualStack,
    build_toy_bundle,
    load_models,
    save_models,
)


def state_dicts_equal(a, b):
    sa, sb = a.state_dict(), b.state_dict()
    if sa.keys() != sb.keys():
        return False
    return all(torch.equal(sa[k], sb[k]) for k in sa)


class TestBundleConstruction:
    def test_same_seed_bit_identical(self):
        a = build_toy_bundle(7)
        b = build_toy_bundle(7)
        for ma, mb in zip(a.modules(), b.modules()):
            assert state_dicts_equal(ma, mb)

    def test_different_seeds_differ(self):
        a = build_toy_bundle(1)
        b = build_toy_bundle(2)
        assert not state_dicts_equal(a.denoiser, b.denoiser)

    def test_weights_are_frozen_and_eval(self):
        bundle = build_toy_bundle(0)
        for module in bundle.modules():
            assert not module.training
            for p in module.parameters():
                assert not p.requires_grad

    def test_latent_shape(self):
        bundle = build_toy_bundle(0)
        assert bundle.latent_shape((64, 64)) == (LATENT_CHANNELS, 8, 8)
        assert bundle.latent_shape((128, 96)) == (LATENT_CHANNELS, 16, 12)

    def test_identifier(self):
        assert build_toy_bundle(7).identifier == "toy:7"


class TestTextEncoder:
    def test_tokenizer_is_stable_hash(self):
        enc = build_toy_bundle(0).text_encoder
        ids = enc.tokenize("a man walking a dog")
        assert ids[0] == ids[3]  # both "a"
        assert ids[0] == 1 + zlib.crc32(b"a") % 511
        assert all(1 <= i <= 511 for i in ids)

    def test_encode_shape_and_determinism(self):
        enc = build_toy_bundle(0).text_encoder
        out = enc.encode("hello world")
        assert out.shape == (TEXT_WINDOW, TEXT_DIM)
        assert torch.equal(out, enc.encode("hello world"))

    def test_distinct_prompts_distinct_embeddings(self):
        enc = build_toy_bundle(0).text_encoder
        assert not torch.equal(enc.encode("a cat"), enc.encode("a dog"))

    def test_truncation_warns_and_pads_to_window(self, caplog):
        enc = build_toy_bundle(0).text_encoder
        long_prompt = " ".join(f"w{i}" for i in range(100))
        with caplog.at_level("WARNING"):
            out = enc.encode(long_prompt)
        assert out.shape == (TEXT_WINDOW, TEXT_DIM)
        assert any("truncated" in r.getMessage() for r in caplog.records)

    def test_strict_mode_raises_on_overflow(self):
        enc = build_toy_bundle(0).text_encoder
        with pytest.raises(TokenLimitExceeded):
            enc.encode(" ".join(["x"] * 78), strict=True)

    def test_strict_mode_survives_pathological_prompt(self):
        enc = build_toy_bundle(0).text_encoder
        pathological = "spam " * 2000  # ~10,000 characters
        with pytest.raises(TokenLimitExceeded):
            enc.encode(pathological, strict=True)
        out = enc.encode(pathological)  # lenient path truncates
        assert out.shape == (TEXT_WINDOW, TEXT_DIM)

    def test_truncation_matches_prefix_encoding(self):
        enc = build_toy_bundle(0).text_encoder
        words = [f"t{i}" for i in range(90)]
        assert torch.equal(enc.encode(" ".join(words)), enc.encode(" ".join(words[:77])))


class TestDenoiser:
    def _setup(self, n=2, hw=8):
        bundle = build_toy_bundle(3)
        x = torch.randn(n, LATENT_CHANNELS, hw, hw, generator=torch.Generator().manual_seed(0))
        text = bundle.text_encoder.encode("a boat")
        return bundle, x, text

    def test_output_shape_matches_input(self):
        bundle, x, text = self._setup()
        assert bundle.denoiser(x, 999, text).shape == x.shape

    def test_zero_residuals_are_identity(self):
        bundle, x, text = self._setup()
        plain = bundle.denoiser(x, 500, text)
        zeros = ResidualStack(
            down=tuple(torch.zeros(2, c, s, s) for c, s in [(8, 8), (8, 8), (12, 4), (12, 4), (16, 2), (16, 2)]),
            mid=torch.zeros(2, 16, 2, 2),
        )
        with_zeros = bundle.denoiser(x, 500, text, residuals=zeros)
        assert torch.equal(plain, with_zeros)

    def test_residual_count_mismatch(self):
        bundle, x, text = self._setup()
        bad = ResidualStack(down=(torch.zeros(2, 8, 8, 8),), mid=torch.zeros(2, 16, 2, 2))
        with pytest.raises(ResolutionMismatch):
            bundle.denoiser(x, 500, text, residuals=bad)

    def test_timestep_changes_output(self):
        bundle, x, text = self._setup()
        assert not torch.equal(bundle.denoiser(x, 999, text), bundle.denoiser(x, 1, text))


class TestControlBranch:
    def _setup(self, n=2, hw=8):
        bundle = build_toy_bundle(4)
        gen = torch.Generator().manual_seed(1)
        x = torch.randn(n, LATENT_CHANNELS, hw, hw, generator=gen)
        cond = torch.rand(n, 1, hw * LATENT_FACTOR, hw * LATENT_FACTOR, generator=gen)
        text = bundle.text_encoder.encode("a boat")
        return bundle, x, cond, text

    def test_residual_spatial_pyramid(self):
        bundle, x, cond, text = self._setup(hw=8)
        stack = bundle.control_branch(x, 500, text, cond)
        shapes = [tuple(t.shape[-2:]) for t in stack.down]
        assert shapes == [(8, 8), (8, 8), (4, 4), (4, 4), (2, 2), (2, 2)]
        assert tuple(stack.mid.shape[-2:]) == (2, 2)
        assert all(t.shape[0] == 2 for t in stack.down)

    def test_residuals_feed_denoiser(self):
        bundle, x, cond, text = self._setup()
        stack = bundle.control_branch(x, 500, text, cond)
        out = bundle.denoiser(x, 500, text, residuals=stack)
        assert out.shape == x.shape
        assert not torch.equal(out, bundle.denoiser(x, 500, text))

    def test_cond_resolution_must_be_eight_times_latent(self):
        bundle, x, _, text = self._setup(hw=8)
        wrong = torch.rand(2, 1, 32, 32)
        with pytest.raises(ResolutionMismatch):
            bundle.control_branch(x, 500, text, wrong)

    def test_zeroed_projections_give_exact_zero_residuals(self):
        bundle, x, cond, text = self._setup()
        bundle.control_branch.zero_output_projections()
        stack = bundle.control_branch(x, 500, text, cond)
        for t in stack.down:
            assert torch.count_nonzero(t) == 0
        assert torch.count_nonzero(stack.mid) == 0

    def test_fresh_projections_are_nonzero(self):
        bundle, x, cond, text = self._setup()
        stack = bundle.control_branch(x, 500, text, cond)
        assert any(torch.count_nonzero(t) > 0 for t in stack.down)

    def test_cond_content_changes_residuals(self):
        bundle, x, cond, text = self._setup()
        a = bundle.control_branch(x, 500, text, cond)
        b = bundle.control_branch(x, 500, text, torch.zeros_like(cond))
        assert not torch.equal(a.down[0], b.down[0])


class TestResidualStack:
    def test_scaled(self):
        stack = ResidualStack(down=(torch.ones(1, 2, 3, 3),), mid=torch.full((1, 2, 2, 2), 2.0))
        s = stack.scaled(0.5)
        assert torch.equal(s.down[0], torch.full((1, 2, 3, 3), 0.5))
        assert torch.equal(s.mid, torch.ones(1, 2, 2, 2))

    def test_stack_and_frame_round_trip(self):
        gen = torch.Generator().manual_seed(5)
        singles = [
            ResidualStack(
                down=(torch.randn(1, 2, 4, 4, generator=gen),),
                mid=torch.randn(1, 2, 2, 2, generator=gen),
            )
            for _ in range(3)
        ]
        batched = ResidualStack.stack(singles)
        assert batched.down[0].shape[0] == 3
        for k in range(3):
            assert torch.equal(batched.frame(k).down[0], singles[k].down[0])
            assert torch.equal(batched.frame(k).mid, singles[k].mid)


class TestDecoder:
    def test_shape_and_range(self):
        bundle = build_toy_bundle(6)
        gen = torch.Generator().manual_seed(2)
        z = torch.randn(3, LATENT_CHANNELS, 8, 8, generator=gen)
        out = bundle.decoder(z)
        assert out.shape == (3, 3, 64, 64)
        assert out.min() >= 0.0 and out.max() <= 1.0

    def test_deterministic(self):
        bundle = build_toy_bundle(6)
        z = torch.randn(1, LATENT_CHANNELS, 4, 4, generator=torch.Generator().manual_seed(3))
        assert torch.equal(bundle.decoder(z), bundle.decoder(z))


class TestLoadModels:
    def test_toy_identifier(self):
        bundle = load_models("toy:7")
        assert bundle.identifier == "toy:7"
        assert state_dicts_equal(bundle.denoiser, build_toy_bundle(7).denoiser)

    def test_bad_toy_seed(self):
        with pytest.raises(UnknownModel):
            load_models("toy:abc")

    def test_unknown_without_model_dir(self, monkeypatch):
        monkeypatch.delenv("STF_MODEL_DIR", raising=False)
        with pytest.raises(UnknownModel):
            load_models("mystery")

    def test_checkpoint_round_trip(self, tmp_path, monkeypatch):
        bundle = build_toy_bundle(11)
        save_models(bundle, tmp_path / "custom.pt")
        monkeypatch.setenv("STF_MODEL_DIR", str(tmp_path))
        loaded = load_models("custom")
        assert loaded.identifier == "custom"
        for ma, mb in zip(bundle.modules(), loaded.modules()):
            assert state_dicts_equal(ma, mb)

    def test_missing_checkpoint_in_model_dir(self, tmp_path, monkeypatch):
        monkeypatch.setenv("STF_MODEL_DIR", str(tmp_path))
        with pytest.raises(UnknownModel):
            load_models("absent")
