import json

import numpy as np
import pytest

from graphdive.config import ConfigError, TrainConfig, load_config, parse_int_list
from graphdive.graph import Dataset, LabelSet
from graphdive.model import GraphDive
from graphdive.synth import SynthSpec, synth_generate
from graphdive.training import (
    SweepCell,
    SweepResult,
    TrainingError,
    epoch_order,
    evaluate,
    expert_usage,
    read_split_file,
    split_dataset,
    sweep,
    train,
)

from conftest import random_dataset

SMALL = dict(d=8, K=2, epochs=3, batch_size=8)


@pytest.fixture(scope="module")
def synth_ds():
    return synth_generate(SynthSpec(n=120, pos_ratio=0.2, seed=3, noise=0.3))


class TestConfig:
    def test_defaults_and_aliases(self):
        cfg = TrainConfig.from_dict({"lambda": "0.5", "gamma": "1", "cosine_gate": "yes", "grid_m": "2..4"})
        assert cfg.lam == 0.5 and cfg.focal_gamma == 1.0 and cfg.cosine_gate
        assert cfg.grid_m == (2, 3, 4)

    def test_round_trip(self, tmp_path):
        cfg = TrainConfig(variant="post", M=4, lam=0.25, seeds=(1, 2), grid_lambda=(0.01, 1.0))
        path = tmp_path / "c.cfg"
        path.write_text(cfg.dumps())
        assert load_config(path) == cfg

    @pytest.mark.parametrize("bad", [{"variant": "x"}, {"M": "0"}, {"tau": "0"}, {"lam": "-1"}, {"nope": "1"}])
    def test_rejects(self, bad):
        with pytest.raises(ConfigError):
            TrainConfig.from_dict(bad)

    def test_baselines_use_one_expert(self):
        assert TrainConfig(variant="baseline_focal", M=5).experts == 1
        assert TrainConfig(variant="pri", M=5).experts == 5

    def test_int_ranges(self):
        assert parse_int_list("1, 3..5,9") == (1, 3, 4, 5, 9)

    def test_comment_and_syntax_errors(self, tmp_path):
        p = tmp_path / "c.cfg"
        p.write_text("M = 2  # experts\n\nvariant = post\n")
        assert load_config(p).M == 2
        p.write_text("M 2\n")
        with pytest.raises(ConfigError):
            load_config(p)


class TestSplits:
    def test_stratified_keeps_ratio_and_sizes(self):
        rng = np.random.default_rng(0)
        ds = random_dataset(rng, n=200, split=False)
        labels = np.zeros((200, 1))
        labels[:20] = 1
        ds = Dataset(ds.graphs, LabelSet.full(labels))
        split = split_dataset(ds, "random_stratified", (0.8, 0.1, 0.1), seed=1)
        split = np.array(split)
        assert [int(np.sum(split == s)) for s in ("train", "valid", "test")] == [160, 20, 20]
        for s, n_pos in (("train", 16), ("valid", 2), ("test", 2)):
            assert int(labels[split == s].sum()) == n_pos
        assert tuple(split) == split_dataset(ds, "random_stratified", (0.8, 0.1, 0.1), seed=1)

    def test_split_file(self, tmp_path):
        p = tmp_path / "s.json"
        p.write_text(json.dumps({"train": [0, 2], "valid": [1], "test": [3]}))
        assert read_split_file(p, 4) == ("train", "valid", "train", "test")
        p.write_text(json.dumps({"train": [0, 1], "valid": [1], "test": [2, 3]}))
        with pytest.raises(ValueError):
            read_split_file(p, 4)
        p.write_text(json.dumps({"train": [0], "test": [1]}))
        with pytest.raises(ValueError):
            read_split_file(p, 3)

    def test_bad_ratios(self, rng):
        with pytest.raises(ValueError):
            split_dataset(random_dataset(rng), ratios=(0.5, 0.5, 0.5))


def test_epoch_order_depends_only_on_seed_and_epoch():
    idx = np.arange(50)
    a = epoch_order(idx, 3, 7)
    assert np.array_equal(a, epoch_order(idx, 3, 7))
    assert not np.array_equal(a, epoch_order(idx, 3, 8))
    assert sorted(a.tolist()) == idx.tolist()


@pytest.mark.parametrize("variant", ["pri", "post", "mean_mix", "baseline_bce", "baseline_focal", "baseline_reweight"])
def test_every_variant_trains(variant, synth_ds):
    cfg = TrainConfig(variant=variant, M=3, **SMALL)
    seen = []
    ckpt, hist = train(cfg, synth_ds, on_epoch=lambda e, l, a: seen.append(e))
    assert seen == [0, 1, 2]
    assert len(hist) == 3 and all(np.isfinite(hist.train_loss))
    assert 0 <= hist.best_epoch < 3
    rep = evaluate(ckpt, synth_ds, "test")
    assert 0.0 <= rep.mean_auc <= 1.0


def test_training_reduces_loss(synth_ds):
    cfg = TrainConfig(variant="post", M=2, d=8, K=2, epochs=15, batch_size=16, lr=0.01)
    _, hist = train(cfg, synth_ds)
    assert hist.train_loss[-1] < hist.train_loss[0]


def test_deterministic(synth_ds):
    cfg = TrainConfig(variant="post", **SMALL)
    a, ha = train(cfg, synth_ds)
    b, hb = train(cfg, synth_ds)
    assert ha.same_trajectory(hb)
    assert all(np.array_equal(a.params[k], b.params[k]) for k in a.params)


def test_resume_is_exact(synth_ds):
    cfg = TrainConfig(variant="post", M=2, d=8, K=2, epochs=4, batch_size=8)
    full, hf = train(cfg, synth_ds)
    part, _ = train(cfg, synth_ds, stop_after=2)
    assert part.epoch == 2
    done, hd = train(cfg, synth_ds, resume=part)
    assert hf.same_trajectory(hd)
    for k in full.params:
        assert np.array_equal(full.params[k], done.params[k])
        assert np.array_equal(full.best_params[k], done.best_params[k])
        assert np.array_equal(full.adam.m[k], done.adam.m[k])


def test_resume_dims_mismatch(synth_ds, rng):
    cfg = TrainConfig(**SMALL)
    ckpt, _ = train(cfg, synth_ds, stop_after=1)
    other = random_dataset(rng, n=20, T=2, f_v=4)
    with pytest.raises(TrainingError):
        train(cfg, other, resume=ckpt)


def test_single_expert_variants_share_trajectory(synth_ds):
    base = dict(M=1, d=8, K=2, epochs=3, batch_size=16)
    ref = train(TrainConfig(variant="baseline_bce", **base), synth_ds)[1].train_loss
    for variant, extra in (("pri", {}), ("post", {"lam": 0.7}), ("mean_mix", {})):
        got = train(TrainConfig(variant=variant, **base, **extra), synth_ds)[1].train_loss
        assert np.max(np.abs(np.array(got) - np.array(ref))) < 1e-12


def test_multitask_with_missing_labels(rng):
    ds = random_dataset(rng, n=40, T=3, missing=0.3, split=False)
    for mode in ("shared", "individual"):
        cfg = TrainConfig(variant="post", gate_mode=mode, **SMALL)
        ckpt, hist = train(cfg, ds)
        assert np.all(np.isfinite(hist.train_loss))
        usage = expert_usage(ds, ckpt, "all")
        assert len(usage.weights) == 3


def test_reweight_needs_both_classes(rng):
    ds = random_dataset(rng, n=20, split=False)
    ds = Dataset(ds.graphs, LabelSet.full(np.zeros((20, 1))))
    with pytest.raises(TrainingError):
        train(TrainConfig(variant="baseline_reweight", **SMALL), ds)


def test_model_init_order_is_layout_independent():
    a = GraphDive.init(TrainConfig(M=1, gate_mode="shared", d=4, K=1), 9, 3, 2, seed=0)
    b = GraphDive.init(TrainConfig(M=1, gate_mode="individual", d=4, K=1), 9, 3, 2, seed=0)
    for k in a.store.names():
        if not k.startswith("gate."):
            assert np.array_equal(a.store[k], b.store[k])


def test_sweep_selection_and_tables(synth_ds):
    cfg = TrainConfig(variant="post", d=8, K=1, epochs=2, batch_size=16, grid_m=(2, 3), grid_lambda=(0.1, 1.0), seeds=(0, 1))
    res = sweep(cfg, synth_ds)
    assert len(res.cells) == 4 and all(len(c.valid) == 2 for c in res.cells)
    assert res.to_tsv().count("\n") == 6
    assert res.curve_tsv().count("\n") == 3


def test_sweep_tie_break_prefers_small_models():
    cells = [SweepCell(3, 0.1, [0.8], [0.7]), SweepCell(2, 1.0, [0.8], [0.6]), SweepCell(2, 0.1, [0.8], [0.5])]
    best = SweepResult(cells).best
    assert (best.M, best.lam) == (2, 0.1)
