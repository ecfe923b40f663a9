import numpy as np
import pytest

from socialldg.encoder import EncoderConfig, MaskedAutoencoder, STEncoder
from socialldg.engine import CheckpointError, save_checkpoint
from socialldg.pipeline import (
    ScalabilitySetting,
    default_tokens,
    load_autoencoder,
    load_model,
    make_benchmark,
    prepare,
    run_scalability,
    save_autoencoder,
    save_model,
    train_variant,
    transition_trial,
)
from socialldg.pose.data import TASKS, stack_frames
from socialldg.training import MODES, TrainConfig, build_model, evaluate, fit, predict, prepare_inputs, trainable_parameters

TINY = EncoderConfig(spatial_layers=1, spatial_heads=2, spatial_width=8, temporal_layers=1, temporal_heads=2, temporal_width=16)


@pytest.fixture(scope="module")
def bench():
    return make_benchmark(20, seed=1, augment=1)


@pytest.fixture(scope="module")
def encoder():
    return STEncoder(TINY, seed=0)


@pytest.fixture(scope="module")
def prep_head(encoder, bench):
    return prepare(encoder, bench, "head")


def test_benchmark_split_is_scenario_disjoint(bench):
    parts = [{s.scenario for s in p} for p in (bench.train, bench.val, bench.test)]
    assert [len(p) for p in parts] == [12, 4, 4]
    assert not (parts[0] & parts[1] or parts[0] & parts[2] or parts[1] & parts[2])
    assert len(bench.train_aug) == len(bench.train)


def test_prepared_input_shapes(encoder, bench):
    frames = stack_frames(bench.test)
    assert prepare_inputs(encoder, frames, "full").shape == frames.shape
    assert prepare_inputs(encoder, frames, "temporal").shape == (len(frames), 10, TINY.spatial_width)
    assert prepare_inputs(encoder, frames, "head").shape == (len(frames), TINY.temporal_width)


def test_trainable_parameters_follow_mode(encoder, bench):
    frames = stack_frames(bench.test[:2])
    names = {}
    for mode in MODES:
        model = build_model("socialldg", encoder, TASKS, bench.num_classes, default_tokens(TASKS), 0)
        names[mode] = set(trainable_parameters(model, mode, prepare_inputs(encoder, frames, mode)))
    assert any(n.startswith("encoder.spatial_layers.") for n in names["full"])
    assert not any(n.startswith("encoder.spatial_layers.") for n in names["temporal"])
    assert any(n.startswith("encoder.temporal_layers.") for n in names["temporal"])
    assert all(n.startswith(("encoder.to_z.", "head.")) for n in names["head"])
    assert "head.tokens.intent" in names["head"]


def test_mode_outputs_agree(encoder, bench):
    model = build_model("socialldg", encoder, TASKS, bench.num_classes, default_tokens(TASKS), 0)
    frames = stack_frames(bench.test[:4])
    preds = [predict(model, prepare_inputs(encoder, frames, m), m) for m in MODES]
    for t in TASKS:
        assert np.array_equal(preds[0][t], preds[1][t]) and np.array_equal(preds[0][t], preds[2][t])


def test_fit_is_deterministic_and_learns(prep_head, encoder):
    cfg = TrainConfig(epochs=6, warmup=1, mode="head", lr=3e-3, seed=2)
    reports = []
    for _ in range(2):
        model, res, rep = train_variant("socialldg", encoder, prep_head, cfg)
        reports.append(rep)
    assert reports[0] == reports[1]
    assert res.history[-1]["train_loss"] < res.history[0]["train_loss"]
    assert all(0 <= r["macro_f1"] <= 1 for r in reports[0]["tasks"].values())


def test_training_set_scores_at_least_test_set_after_overfitting(prep_head, encoder):
    cfg = TrainConfig(epochs=40, warmup=0, mode="head", lr=1e-2, weight_decay=0.0, stop_patience=100, seed=0)
    model, _, test_rep = train_variant("socialldg", encoder, prep_head, cfg)
    train_rep = evaluate(model, prep_head.x_train, prep_head.y_train, "head", prep_head.num_classes)
    assert train_rep["avg_f1"] >= test_rep["avg_f1"]


def test_early_stopping_on_a_plateau(prep_head, encoder):
    cfg = TrainConfig(epochs=40, warmup=0, mode="head", lr=0.0, stop_patience=3, seed=0)
    model = build_model("parallel", encoder, TASKS, prep_head.num_classes, seed=0)
    res = fit(model, prep_head.x_train, prep_head.y_train, prep_head.x_val, prep_head.y_val, cfg, prep_head.num_classes)
    assert res.stopped_early
    assert len(res.history) <= res.best_epoch + cfg.stop_patience + 1


def test_fit_restores_the_best_epoch(prep_head, encoder):
    cfg = TrainConfig(epochs=8, warmup=1, mode="head", lr=3e-3, seed=1)
    model = build_model("socialldg", encoder, TASKS, prep_head.num_classes, default_tokens(TASKS), 1)
    res = fit(model, prep_head.x_train, prep_head.y_train, prep_head.x_val, prep_head.y_val, cfg, prep_head.num_classes)
    val = evaluate(model, prep_head.x_val, prep_head.y_val, "head", prep_head.num_classes)
    assert val["avg_f1"] == pytest.approx(res.best_metric, abs=1e-12)


def test_model_checkpoint_round_trip(tmp_path, prep_head, encoder):
    for kind in ("socialldg", "parallel"):
        model = build_model(kind, encoder, TASKS, prep_head.num_classes, default_tokens(TASKS), 3)
        path = save_model(tmp_path / f"{kind}.ckpt", model, {"profile": "jpl"})
        back, meta = load_model(path)
        assert meta["kind"] == kind and meta["profile"] == "jpl"
        a = predict(model, prep_head.x_test, "head")
        b = predict(back, prep_head.x_test, "head")
        assert all(np.array_equal(a[t], b[t]) for t in TASKS)


def test_autoencoder_checkpoint_round_trip(tmp_path):
    mae = MaskedAutoencoder(TINY, seed=4)
    path = save_autoencoder(tmp_path / "ae.ckpt", mae, [{"epoch": 1, "train_loss": 0.5, "val_loss": None}])
    back, meta = load_autoencoder(path)
    assert meta["curve"][0]["train_loss"] == 0.5
    for (n, p), (m, q) in zip(mae.named_parameters(), back.named_parameters()):
        assert n == m and np.array_equal(p.data, q.data)
    with pytest.raises(CheckpointError):
        load_model(path)
    other = save_checkpoint(tmp_path / "x.ckpt", {"w": np.zeros(2)}, {"kind": "something"})
    with pytest.raises(CheckpointError):
        load_autoencoder(other)


def test_scalability_settings():
    a = ScalabilitySetting.named("A")
    assert a.additional == ("con_fut", "act_fut")
    assert set(a.initial) | set(a.additional) == set(TASKS) and not set(a.initial) & set(a.additional)
    assert ScalabilitySetting.named("B").additional == ("intent", "attitude")
    assert ScalabilitySetting.named("C").additional == ("act_cur", "act_fut")
    with pytest.raises(ValueError):
        ScalabilitySetting("X", ("intent", "intent"))
    with pytest.raises(ValueError):
        ScalabilitySetting.named("D")


def test_run_scalability_reports_both_methods(prep_head, encoder):
    cfg = TrainConfig(epochs=3, warmup=0, mode="head", lr=3e-3, seed=0)
    rep = run_scalability(ScalabilitySetting.named("B"), encoder, prep_head, cfg)
    for label in ("socialldg_ft", "independent_ft"):
        r = rep[label]
        assert set(r["after"]["tasks"]) == set(TASKS)
        assert set(r["before"]["tasks"]) == set(ScalabilitySetting.named("B").initial)
        assert r["retention_drop"] == pytest.approx(r["initial_before"] - r["initial_after"])
    assert 0 <= rep["majority_additional"] <= 1


def test_transition_trial_shape(encoder, bench):
    model = build_model("socialldg", encoder, TASKS, bench.num_classes, default_tokens(TASKS), 0)
    out = transition_trial(model, seed=5, change_window=4)
    assert out["change_window"] == 4 and len(out["curve"]) == 9
    assert all(1 <= w <= 9 for w in out["boundary_windows"])
    assert isinstance(out["hit_any"], bool)
