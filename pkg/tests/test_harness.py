import csv

import numpy as np
import pytest

from glyphfuse.config import TrainConfig
from glyphfuse.errors import ConfigurationError, TrainingError
from glyphfuse.harness import (
    baseline_report,
    corpus_for,
    evaluate,
    load_checkpoint,
    pretrain_codec,
    rmse,
    run_ablation,
    run_train,
    ssim,
)
from glyphfuse.harness.ablation import _codec_key
from glyphfuse.harness import train as train_mod
from glyphfuse.numerics import Tensor

TINY = TrainConfig.toy(
    image_size=32, num_styles=4, num_contents=12, enc_channels=(4, 8), embed_dim=8,
    codebook_size=6, heads_component=2, heads_relation=2, disc_channels=(4, 4, 4, 4), k=2,
    batch_size=4, pretrain_iters=10, pretrain_batch=4, main_iters=6, checkpoint_every=3, sample_every=3,
)


@pytest.fixture(scope="module")
def corpus():
    return corpus_for(TINY)


@pytest.fixture(scope="module")
def codec(corpus):
    return pretrain_codec(TINY, corpus)


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_metric_examples():
    zero, one = np.zeros((32, 32)), np.ones((32, 32))
    c1 = 0.01**2
    assert rmse(zero, one) == 1.0
    assert ssim(zero, one) == pytest.approx(c1 / (1 + c1), rel=1e-9)
    img = np.random.default_rng(0).random((32, 32))
    assert ssim(img, img) == pytest.approx(1.0, abs=1e-12) and rmse(img, img) == 0.0
    assert -1.0 <= ssim(img, 1 - img) <= 1.0


def test_baseline_scores_every_pair(corpus):
    report = baseline_report(corpus, "ufuc")
    assert len(report.rows) == len(corpus.split("ufuc"))
    assert all(np.isfinite(v) for row in report.rows for v in row[2:])
    with pytest.raises(ConfigurationError):
        baseline_report(corpus, "nonsense")


def test_evaluate_row_count_and_split_order(corpus, codec, monkeypatch):
    state = run_train(TINY.with_(main_iters=0), codec=codec, corpus=corpus)
    report = evaluate(state.generator, corpus, "sfuc", k=2)
    assert len(report.rows) == len(corpus.split("sfuc"))
    shuffled = corpus.split("sfuc")[::-1]
    monkeypatch.setattr(type(corpus), "split", lambda self, name: shuffled)
    again = evaluate(state.generator, corpus, "sfuc", k=2)
    assert again.summary == report.summary


def test_empty_split_is_a_configuration_error(corpus, codec, monkeypatch):
    state = run_train(TINY.with_(main_iters=0), codec=codec, corpus=corpus)
    monkeypatch.setattr(type(corpus), "split", lambda self, name: [])
    with pytest.raises(ConfigurationError):
        evaluate(state.generator, corpus, "ufuc")


def test_seeded_runs_write_identical_csvs(tmp_path, corpus, codec):
    for name in ("a", "b"):
        run_train(TINY, tmp_path / name, codec=codec, corpus=corpus, log_every=0)
    a, b = read_rows(tmp_path / "a" / "losses.csv"), read_rows(tmp_path / "b" / "losses.csv")
    assert a == b and len(a) == TINY.main_iters + 1
    assert a[0][:3] == ["iteration", "L_D", "L_adv"]
    assert (tmp_path / "a" / "samples" / "iter_000003.png").exists()
    assert (tmp_path / "a" / "checkpoints" / "iter_000006" / "state.json").exists()


def test_checkpoint_round_trip_reproduces_report(tmp_path, corpus, codec):
    state = run_train(TINY, tmp_path, codec=codec, corpus=corpus, log_every=0)
    loaded = load_checkpoint(tmp_path / "checkpoints" / "final")
    assert loaded.iteration == TINY.main_iters
    for name, p in state.generator.named_parameters():
        assert np.array_equal(p.data, dict(loaded.generator.named_parameters())[name].data)
    before = evaluate(state.generator, corpus, "ufuc", k=2)
    after = evaluate(loaded.generator, loaded.corpus, "ufuc", k=2)
    assert before.rows == after.rows
    with pytest.raises(ConfigurationError):
        load_checkpoint(tmp_path)


def test_non_finite_loss_names_the_term(corpus, codec, monkeypatch):
    monkeypatch.setattr(train_mod, "elastic_loss",
                        lambda t, o: Tensor(np.array(np.nan, dtype=o.dtype)))
    with pytest.raises(TrainingError) as info:
        run_train(TINY, codec=codec, corpus=corpus, log_every=0)
    assert info.value.term == "L_ela" and info.value.iteration == 0
    assert "L_ela" in str(info.value)


def test_disabling_relation_block_changes_the_model(corpus, codec):
    full = run_train(TINY.with_(main_iters=3), codec=codec, corpus=corpus, log_every=0)
    lite = run_train(TINY.with_(main_iters=3, enable_relation_block=False), codec=codec,
                     corpus=corpus, log_every=0)
    assert full.generator.num_parameters() != lite.generator.num_parameters()
    assert full.history != lite.history


def test_two_cell_ablation(tmp_path, corpus, codec):
    grid = [{"name": "full"}, {"name": "base", "enable_component_block": False,
                               "enable_relation_block": False}]
    cache = {_codec_key(TINY): codec}
    rows = run_ablation(TINY.with_(main_iters=2), grid, tmp_path, corpus=corpus, codec_cache=cache)
    assert [r.name for r in rows] == ["full", "base"]
    assert all((r.checkpoint / "state.json").exists() for r in rows)
    table = read_rows(tmp_path / "ablation.csv")
    assert len(table) == 3 and table[1][0] == "full"
