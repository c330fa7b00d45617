import math

import numpy as np
import pytest
import torch

from speechmelody.errors import (
    CorruptCheckpoint,
    NonFiniteGradient,
    SequenceTooLong,
    SpecMismatch,
)
from speechmelody.model import (
    ModelSpec,
    MelodyTransformer,
    Trainer,
    build_model,
    collate,
    compute_loss,
    load_checkpoint,
    preset,
    relative_position_logits,
    save_checkpoint,
    scale_count,
    train_model,
    unscale_count,
    warmup_lr,
)
from speechmelody.symbolic import TokenSeq
from speechmelody.taskgen import GapMask, Task, apply_gap_mask, apply_noise

from modelcheck import finite_difference_check, logits_rows_are_distributions, reference_forward


def desk(variant=Task.DENOISE):
    return preset("desk", variant)


def small_batch(variant, seed=0, n=3, content_len=160):
    rng = np.random.default_rng(seed)
    pairs = []
    for _ in range(n):
        seq = TokenSeq.from_content(rng.integers(0, 89, content_len).tolist())
        if variant is Task.GAPFILL:
            from speechmelody.taskgen import sample_gap_mask

            pairs.append(apply_gap_mask(seq, sample_gap_mask(content_len, rng)))
        else:
            pairs.append(apply_noise(seq, rng))
    return collate(pairs)


class TestSpec:
    def test_paper_presets(self):
        g = preset("paper", Task.GAPFILL)
        assert (g.d_model, g.n_layers, g.n_heads, g.d_ff) == (512, 6, 8, 1024)
        d = preset("paper", Task.DENOISE)
        assert (d.d_model, d.n_layers, d.n_heads, d.d_ff) == (128, 2, 2, 1024)

    def test_heads_must_divide(self):
        with pytest.raises(ValueError):
            ModelSpec(Task.DENOISE, d_model=65, n_heads=2)

    def test_count_scaling_round_trip(self):
        for c in (1, 25, 150, 499, 500):
            assert unscale_count(scale_count(c)) == c
        assert scale_count(500) == 1.0
        assert scale_count(1) == 0.0


class TestForward:
    def test_output_rows_are_distributions(self):
        torch.manual_seed(0)
        model = MelodyTransformer(desk(Task.GAPFILL))
        model.eval()
        batch = small_batch(Task.GAPFILL)
        logits, counts = model(batch["enc"], batch["dec_in"],
                               batch["enc_pad"], batch["dec_pad"])
        assert logits_rows_are_distributions(logits)
        assert counts is not None
        assert torch.all((counts > 0) & (counts < 1))

    def test_batch_permutation_independence(self):
        torch.manual_seed(1)
        model = MelodyTransformer(desk())
        model.eval()
        batch = small_batch(Task.DENOISE, n=4)
        with torch.no_grad():
            out1, _ = model(batch["enc"], batch["dec_in"], batch["enc_pad"], batch["dec_pad"])
            perm = torch.tensor([2, 0, 3, 1])
            out2, _ = model(batch["enc"][perm], batch["dec_in"][perm],
                            batch["enc_pad"][perm], batch["dec_pad"][perm])
        assert torch.allclose(out1[perm], out2, atol=1e-5)

    def test_causality(self):
        torch.manual_seed(2)
        model = MelodyTransformer(desk())
        model.eval()
        enc = torch.randint(0, 89, (1, 30))
        dec_a = torch.randint(0, 89, (1, 20))
        dec_b = dec_a.clone()
        t = 12
        dec_b[0, t] = (dec_b[0, t] + 1) % 89
        with torch.no_grad():
            out_a, _ = model(enc, dec_a)
            out_b, _ = model(enc, dec_b)
        assert torch.allclose(out_a[0, :t], out_b[0, :t], atol=1e-6)
        assert not torch.allclose(out_a[0, t:], out_b[0, t:], atol=1e-6)

    def test_sequence_too_long(self):
        model = MelodyTransformer(desk())
        with pytest.raises(SequenceTooLong):
            model(torch.zeros(1, 503, dtype=torch.long), torch.zeros(1, 5, dtype=torch.long))

    def test_zeroed_relative_embeddings_match_reference(self):
        for variant in (Task.GAPFILL, Task.DENOISE):
            torch.manual_seed(3)
            model = MelodyTransformer(desk(variant))
            model.eval()
            with torch.no_grad():
                for layer in list(model.enc_layers) + list(model.dec_layers):
                    attn = layer.attn if hasattr(layer, "attn") else layer.self_attn
                    attn.rel_emb.zero_()
            batch = small_batch(variant, seed=4)
            with torch.no_grad():
                got_logits, got_counts = model(batch["enc"], batch["dec_in"],
                                               batch["enc_pad"], batch["dec_pad"])
            ref_logits, ref_counts = reference_forward(
                model, batch["enc"], batch["dec_in"], batch["enc_pad"], batch["dec_pad"]
            )
            assert torch.allclose(got_logits, ref_logits, atol=1e-5)
            if variant is Task.GAPFILL:
                assert torch.allclose(got_counts, ref_counts, atol=1e-6)


class TestRelativeWindow:
    def test_distances_beyond_window_share_boundary_embedding(self):
        torch.manual_seed(4)
        window = 3
        q = torch.randn(2, 2, 12, 8)
        rel_emb = torch.randn(2, 2 * window + 1, 8)
        logits = relative_position_logits(q, rel_emb, window)
        # all keys at distance >= window to the right produce equal logits
        assert torch.allclose(logits[..., 0, 3], logits[..., 0, 5])
        assert torch.allclose(logits[..., 0, 3], logits[..., 0, 11])
        # and symmetrically to the left
        assert torch.allclose(logits[..., 11, 8], logits[..., 11, 0])
        # inside the window they differ for generic embeddings
        assert not torch.allclose(logits[..., 0, 1], logits[..., 0, 2])


class TestLoss:
    def test_uniform_logits_nll_is_log_89(self):
        batch = small_batch(Task.DENOISE, n=2)
        logits = torch.zeros(*batch["pitch_target"].shape, 89, dtype=torch.float64)
        loss, parts = compute_loss(Task.DENOISE, logits, None, batch)
        assert float(loss) == pytest.approx(math.log(89), abs=1e-6)

    def test_perfect_predictions_give_zero_loss(self):
        batch = small_batch(Task.GAPFILL, n=2)
        logits = torch.full((*batch["pitch_target"].shape, 89), -1e4)
        logits.scatter_(-1, batch["pitch_target"].unsqueeze(-1), 1e4)
        counts = batch["count_target"].clone()
        loss, parts = compute_loss(Task.GAPFILL, logits, counts, batch)
        assert parts["pitch_nll"] == pytest.approx(0.0, abs=1e-6)
        assert parts["count_mse"] == pytest.approx(0.0, abs=1e-12)

    def test_count_endpoint_scaling(self):
        seq = TokenSeq.from_content([49] * 500)
        pair = apply_gap_mask(seq, GapMask(((0, 150),)))
        batch = collate([pair])
        assert batch["count_target"][0, 0] == pytest.approx(149 / 499)


class TestSchedule:
    def test_peak_at_warmup(self):
        d_model, warmup = 64, 400
        assert warmup_lr(warmup, d_model, warmup) == pytest.approx(
            d_model ** -0.5 * warmup ** -0.5
        )

    def test_shape_of_schedule(self):
        values = [warmup_lr(s, 64, 400) for s in (1, 200, 400, 800, 10_000)]
        assert values[0] < values[1] < values[2]
        assert values[2] > values[3] > values[4]


class TestTraining:
    def test_two_runs_same_seed_identical(self):
        corpus = [TokenSeq.from_content([40 + i] * 160) for i in range(4)]
        t1, _ = train_model(corpus, Task.DENOISE, steps=5, seed=9, batch_size=2)
        t2, _ = train_model(corpus, Task.DENOISE, steps=5, seed=9, batch_size=2)
        for p1, p2 in zip(t1.model.parameters(), t2.model.parameters()):
            assert torch.equal(p1, p2)

    def test_parameters_stay_finite(self):
        corpus = [TokenSeq.from_content([40] * 160)]
        trainer, _ = train_model(corpus, Task.GAPFILL, steps=5, seed=0, batch_size=1)
        for p in trainer.model.parameters():
            assert torch.isfinite(p).all()

    def test_non_finite_gradient_detected(self):
        trainer = Trainer(desk(), warmup=400, seed=0)
        with torch.no_grad():
            trainer.model.pitch_head.weight.fill_(float("inf"))
        rng = np.random.default_rng(0)
        pair = apply_noise(TokenSeq.from_content([40] * 30), rng)
        with pytest.raises(NonFiniteGradient):
            trainer.train_step([pair])


class TestGradients:
    def test_finite_difference_check_desk_model(self):
        torch.manual_seed(7)
        model = MelodyTransformer(desk(Task.GAPFILL)).double()
        batch = small_batch(Task.GAPFILL, seed=1, n=2, content_len=150)
        worst = finite_difference_check(model, batch, entries_per_tensor=4)
        assert worst <= 1e-4


class TestCheckpoint:
    def test_round_trip_preserves_forward(self, tmp_path):
        torch.manual_seed(5)
        trainer = Trainer(desk(), warmup=400, seed=5)
        path = tmp_path / "model.ckpt"
        save_checkpoint(path, trainer.model, trainer.optimizer, step_count=3)
        ckpt = load_checkpoint(path)
        assert ckpt.step_count == 3
        rebuilt = build_model(ckpt)
        batch = small_batch(Task.DENOISE, seed=6)
        trainer.model.eval()
        with torch.no_grad():
            a, _ = trainer.model(batch["enc"], batch["dec_in"], batch["enc_pad"], batch["dec_pad"])
            b, _ = rebuilt(batch["enc"], batch["dec_in"], batch["enc_pad"], batch["dec_pad"])
        assert torch.equal(a, b)

    def test_wrong_spec_rejected(self, tmp_path):
        trainer = Trainer(desk(), warmup=400, seed=0)
        path = tmp_path / "model.ckpt"
        save_checkpoint(path, trainer.model)
        other = ModelSpec(Task.DENOISE, d_model=32, n_layers=2, n_heads=2, d_ff=64)
        with pytest.raises(SpecMismatch):
            load_checkpoint(path, expected_spec=other)

    def test_truncated_file_rejected(self, tmp_path):
        trainer = Trainer(desk(), warmup=400, seed=0)
        path = tmp_path / "model.ckpt"
        save_checkpoint(path, trainer.model)
        (tmp_path / "broken.ckpt").write_bytes(path.read_bytes()[:200])
        with pytest.raises(CorruptCheckpoint):
            load_checkpoint(tmp_path / "broken.ckpt")

    def test_non_checkpoint_file_rejected(self, tmp_path):
        path = tmp_path / "junk.ckpt"
        path.write_bytes(b"not a checkpoint")
        with pytest.raises(CorruptCheckpoint):
            load_checkpoint(path)
