import math

import numpy as np
import pytest
import torch

from trafficworld.model import ModelConfig, WorldModel
from trafficworld.synthworld import generate_map, script_scenario
from trafficworld.training import (AugmentConfig, LossWeights, OptimConfig,
                                   augment_scenario, build_train_item,
                                   compute_losses, forward_batch,
                                   scaling_report, train_model,
                                   _collate_items)

torch.set_num_threads(1)


@pytest.fixture(scope="module")
def small_corpus():
    logs = []
    for s in range(3):
        m = generate_map(100 + s)
        logs.append(script_scenario(m, 6, 2, 10, seed=s))
    return logs


@pytest.fixture(scope="module")
def micro_setup(small_corpus):
    torch.manual_seed(1)
    cfg = ModelConfig.micro()
    model = WorldModel(cfg)
    item = build_train_item(small_corpus[0], 3, cfg, model.vocab,
                            condition_length=2)
    return cfg, model, item


class TestAugment:
    def test_identity(self, small_corpus):
        log = small_corpus[0]
        out = augment_scenario(log, AugmentConfig.identity(), seed=0)
        for fa, fb in zip(log.frames, out.frames):
            assert [vars(a) for a in fa.agents] == [vars(a) for a in fb.agents]

    def test_rigid_distances_preserved(self, small_corpus):
        log = small_corpus[0]
        cfg = AugmentConfig(dropout_p=0.0)
        out = augment_scenario(log, cfg, seed=3)
        fr_in, fr_out = log.frames[4], out.frames[4]
        ids = [a.agent_id for a in fr_in.valid_agents()]
        for i in range(len(ids) - 1):
            a1, b1 = fr_in.agent_by_id(ids[i]), fr_in.agent_by_id(ids[i + 1])
            a2, b2 = fr_out.agent_by_id(ids[i]), fr_out.agent_by_id(ids[i + 1])
            d1 = math.hypot(a1.x - b1.x, a1.y - b1.y)
            d2 = math.hypot(a2.x - b2.x, a2.y - b2.y)
            assert abs(d1 - d2) < 1e-9

    def test_full_dropout(self, small_corpus):
        cfg = AugmentConfig(dropout_p=1.0, rotation_range=(0.0, 0.0), translation_m=0.0)
        out = augment_scenario(small_corpus[0], cfg, seed=1)
        for fi, fr in enumerate(out.frames):
            for a in fr.agents:
                if fi == 0 and a.agent_id == 0:
                    assert a.valid
                else:
                    assert not a.valid

    def test_deterministic(self, small_corpus):
        a = augment_scenario(small_corpus[0], AugmentConfig(), seed=9)
        b = augment_scenario(small_corpus[0], AugmentConfig(), seed=9)
        assert [vars(x) for f in a.frames for x in f.agents] == \
               [vars(x) for f in b.frames for x in f.agents]


class TestTargets:
    def test_item_shapes(self, micro_setup):
        cfg, model, item = micro_setup
        H = cfg.chunk_horizon
        assert item.tracked.teacher.shape[1] == 4 + 3 * H
        assert item.gen.teacher.shape[1] == 6 + 3 * H
        assert item.light.teacher.shape[1] == 4
        assert item.traj_target.shape[1:] == (H, 3)
        assert item.n_value_slots > 0

    def test_augment_label_consistency(self, small_corpus):
        # tokenized targets of an augmented log equal the tokenization of the
        # transformed states
        cfg = ModelConfig.micro()
        vocab = cfg.vocabulary()
        aug = augment_scenario(small_corpus[0],
                               AugmentConfig(dropout_p=0.0), seed=5)
        item_direct = build_train_item(aug, 3, cfg, vocab, condition_length=2)
        item_again = build_train_item(aug, 3, cfg, vocab, condition_length=2)
        assert np.array_equal(item_direct.tracked.teacher, item_again.tracked.teacher)
        assert np.array_equal(item_direct.seq["attr_tokens"], item_again.seq["attr_tokens"])

    def test_terminator_target_per_frame(self, micro_setup):
        cfg, model, item = micro_setup
        fe = model.vocab.special("FRAME_END")
        term_rows = [r for r in range(item.gen.teacher.shape[0])
                     if item.gen.teacher[r, 0] == fe and item.gen.mask[r, 0] > 0]
        assert len(term_rows) == 2  # one per window frame (condition_length=2)


class TestLosses:
    def _batch(self, model, corpus, cfg):
        items = [build_train_item(corpus[i % len(corpus)], 3, cfg, model.vocab,
                                  condition_length=2) for i in range(2)]
        return _collate_items(items, model, torch.float32)

    def test_perfect_logits_zero_ce(self, small_corpus):
        torch.manual_seed(0)
        cfg = ModelConfig.micro()
        model = WorldModel(cfg)
        batch = self._batch(model, small_corpus, cfg)
        outputs, targets, _ = forward_batch(model, batch, full_logits=True)
        # overwrite logits with one-hot-correct values
        for logits, teacher in ((outputs.tracked_logits, targets.tracked_teacher),
                                (outputs.gen_logits, targets.gen_teacher),
                                (outputs.light_logits, targets.light_teacher)):
            logits.data.fill_(-1e9)
            idx = teacher[..., None]
            logits.data.scatter_(2, idx, 1e9 * torch.ones_like(idx, dtype=logits.dtype))
        outputs.raster_recon = outputs.raster_input.clone()
        total, comps = compute_losses(outputs, targets, model, LossWeights())
        assert comps["ce"] == pytest.approx(0.0, abs=1e-6)
        assert comps["rec"] == 0.0

    def test_uniform_logits_entropy(self, small_corpus):
        torch.manual_seed(0)
        cfg = ModelConfig.micro()
        model = WorldModel(cfg)
        batch = self._batch(model, small_corpus, cfg)
        outputs, targets, _ = forward_batch(model, batch, full_logits=True)
        for logits in (outputs.tracked_logits, outputs.gen_logits, outputs.light_logits):
            logits.data.zero_()
        total, comps = compute_losses(outputs, targets, model, LossWeights())
        # value slots: every attr slot's support is its bin count
        from trafficworld.model.decoder import PLAN_TRACKED, ROLE_ATTR
        q = model.vocab.quant
        plan = model.plans[PLAN_TRACKED]
        mask = targets.tracked_mask
        expected, count = 0.0, 0.0
        for t, slot in enumerate(plan):
            n = float(mask[:, t].sum())
            expected += n * math.log(q.attr(slot.attr).count)
            count += n
        # include gen value slots and light slots in the same way
        from trafficworld.model.decoder import PLAN_GENERATIVE, PLAN_LIGHT
        for t, slot in enumerate(model.plans[PLAN_GENERATIVE]):
            if slot.role != ROLE_ATTR:
                continue
            n = float(targets.gen_mask[:, t].sum())
            expected += n * math.log(q.attr(slot.attr).count)
            count += n
        for t, slot in enumerate(model.plans[PLAN_LIGHT]):
            n = float(targets.light_mask[:, t].sum())
            expected += n * math.log(q.attr(slot.attr).count if slot.role == ROLE_ATTR
                                     else 5)
            count += n
        assert comps["ce_value"] == pytest.approx(expected / count, rel=1e-6)

    def test_masked_targets_no_effect(self, small_corpus):
        torch.manual_seed(0)
        cfg = ModelConfig.micro()
        model = WorldModel(cfg)
        batch = self._batch(model, small_corpus, cfg)
        outputs, targets, _ = forward_batch(model, batch)
        total1, _ = compute_losses(outputs, targets, model, LossWeights())
        masked = (targets.tracked_mask == 0)
        if masked.any():
            targets.tracked_teacher[masked] = (targets.tracked_teacher[masked] + 3) % 100 \
                + model.vocab.attr_offsets["x"]
        outputs2, _, _ = forward_batch(model, batch)
        # teacher inputs changed for masked slots feed the GRU; rebuild targets
        # only (logits kept as-is) to isolate the loss computation
        total2, _ = compute_losses(outputs, targets, model, LossWeights())
        assert float(total1) == float(total2)


class TestGradientCheck:
    def test_micro_model_gradients_match_finite_differences(self, small_corpus):
        torch.manual_seed(7)
        cfg = ModelConfig.micro()
        model = WorldModel(cfg).double()
        with torch.no_grad():
            for p in model.parameters():
                p.uniform_(-0.5, 0.5)
        n_params = model.n_parameters()
        assert n_params <= 5000
        items = [build_train_item(small_corpus[0], 3, cfg, model.vocab,
                                  condition_length=2)]
        batch = _collate_items(items, model, torch.float64)
        weights = LossWeights()

        def loss_value():
            outputs, targets, _ = forward_batch(model, batch)
            total, _ = compute_losses(outputs, targets, model, weights)
            return total

        total = loss_value()
        model.zero_grad()
        total.backward()
        grads = {n: p.grad.detach().clone() for n, p in model.named_parameters()}

        h = 1e-5
        max_rel = 0.0
        for name, p in model.named_parameters():
            flat = p.data.view(-1)
            gflat = grads[name].view(-1)
            for i in range(flat.numel()):
                orig = float(flat[i])
                flat[i] = orig + h
                lp = float(loss_value())
                flat[i] = orig - h
                lm = float(loss_value())
                flat[i] = orig
                fd = (lp - lm) / (2 * h)
                g = float(gflat[i])
                denom = max(abs(g), abs(fd), 1e-6)
                rel = abs(g - fd) / denom
                if abs(g - fd) > 1e-7:
                    max_rel = max(max_rel, rel)
        assert max_rel <= 1e-3, f"max relative gradient error {max_rel}"


class TestTraining:
    def test_deterministic_same_seed(self, small_corpus):
        cfg = ModelConfig.micro()
        ocfg = OptimConfig(batch_size=2, max_steps=6, deterministic=True,
                           data_workers=1)
        _, r1 = train_model(small_corpus, cfg, LossWeights(), ocfg, seed=5)
        _, r2 = train_model(small_corpus, cfg, LossWeights(), ocfg, seed=5)
        assert r1.ce == r2.ce

    def test_milestone_lr_decay(self, small_corpus):
        cfg = ModelConfig.micro()
        ocfg = OptimConfig(batch_size=2, max_steps=10, epochs=10,
                           milestones=(6, 8), deterministic=True, data_workers=1)
        _, rep = train_model(small_corpus, cfg, LossWeights(), ocfg, seed=1,
                             log_every=1)
        lr = dict(zip(rep.steps, rep.lr))
        assert lr[5] == pytest.approx(2e-4)
        assert lr[6] == pytest.approx(2e-5)
        assert lr[8] == pytest.approx(2e-6)

    def test_tokens_nondecreasing(self, small_corpus):
        cfg = ModelConfig.micro()
        ocfg = OptimConfig(batch_size=2, max_steps=5, deterministic=True,
                           data_workers=1)
        _, rep = train_model(small_corpus, cfg, LossWeights(), ocfg, seed=2,
                             log_every=1)
        assert all(a <= b for a, b in zip(rep.tokens, rep.tokens[1:]))

    def test_empty_corpus_rejected(self):
        with pytest.raises(ValueError):
            train_model([], ModelConfig.micro(), LossWeights(), OptimConfig(), 0)


class TestScaling:
    def test_report_monotone_and_table(self, small_corpus):
        cfgs = {"micro_a": ModelConfig.micro(),
                "micro_b": ModelConfig(d_model=16, n_layers=1, n_heads=1,
                                       cross_period=1, chunk_horizon=2,
                                       raster_grid=4, raster_patch=2,
                                       gru_hidden=16, n_traj_modes=2,
                                       block_size=96, n_agent_ids=8,
                                       n_prompt_tags=4,
                                       quant=ModelConfig.micro().quant)}
        ocfg = OptimConfig(batch_size=2, max_steps=8, deterministic=True,
                           data_workers=1)
        rep = scaling_report(cfgs, small_corpus[:1], token_budget=300,
                             optim_cfg=ocfg, seed=0)
        assert len(rep.rows) == 2
        for row in rep.rows:
            assert all(a < b for a, b in zip(row.tokens, row.tokens[1:]))
        table = rep.comparison_table()
        assert "micro_a" in table and "micro_b" in table
