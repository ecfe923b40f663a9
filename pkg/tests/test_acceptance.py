"""Acceptance suite: ten criteria, one summary line each.

The directional criteria share one pretrained encoder and one set of
classifier runs on a 400-scenario synthetic benchmark.  The classifiers
fine-tune in ``head`` mode: the pretrained encoder body stays frozen and its
pooled frame tokens are computed once, so every variant sees identical
features.  Run with ``pytest -v -s tests/test_acceptance.py``.
"""

import time
from dataclasses import replace

import numpy as np
import pytest

from socialldg.cli import main as cli_main
from socialldg.encoder import EncoderConfig, STEncoder, masked_mae, mean_oracle_mae, weighted_mse
from socialldg.engine import Tensor, grad_check, no_grad
from socialldg.model import multitask_loss
from socialldg.pipeline import (
    ScalabilitySetting,
    default_tokens,
    make_benchmark,
    prepare,
    pretrain_encoder,
    run_scalability,
    token_cosine,
    train_variant,
    transition_trial,
)
from socialldg.pose.data import TASKS, stack_frames
from socialldg.tokens import build_token, load_default_fixture, random_fixture, similarity_matrix
from socialldg.training import TrainConfig, build_model

from oracles import NUM, head_loop, jitter, make_head, perturbation_delta, token_loop, weighted_mse_loop

pytestmark = pytest.mark.slow

VARIANTS = ("socialldg", "parallel", "no_edge_bias", "no_prompt_injection")
SEEDS = range(5)
FINETUNE = TrainConfig(epochs=80, warmup=2, mode="head", lr=3e-3, batch_size=128, weight_decay=0.01, stop_patience=10)


def _detail(record_property, text):
    record_property("detail", text)


# -- shared fixtures --------------------------------------------------------------------------


@pytest.fixture(scope="module")
def pretrain_bench():
    return make_benchmark(200, seed=0, augment=0)


@pytest.fixture(scope="module")
def pretrained(pretrain_bench):
    """Encoder pretrained with the confidence-weighted reconstruction loss."""
    return pretrain_encoder(pretrain_bench, seed=0, epochs=10)


@pytest.fixture(scope="module")
def classifier_data(pretrained):
    t0 = time.time()
    bench = make_benchmark(400, seed=0, augment=8)
    prep = prepare(pretrained.model.encoder, bench, "head")
    return prep, time.time() - t0


@pytest.fixture(scope="module")
def classifier_runs(pretrained, classifier_data):
    prep, t_prep = classifier_data
    t0 = time.time() - t_prep
    encoder = pretrained.model.encoder
    tokens = default_tokens(TASKS)
    scores = {v: [] for v in VARIANTS}
    graphs = []
    for seed in SEEDS:
        for v in VARIANTS:
            model, _, report = train_variant(v, encoder, prep, replace(FINETUNE, seed=seed), tokens)
            scores[v].append(report["avg_f1"])
            if v == "socialldg":
                graphs.append(model)
    return {"scores": scores, "graphs": graphs, "tokens": tokens, "seconds": time.time() - t0}


# -- 1: gradients -----------------------------------------------------------------------------


@pytest.mark.criterion(1, "full-model gradients match central differences")
def test_gradient_fidelity(record_property):
    cfg = EncoderConfig(
        spatial_layers=1, spatial_heads=2, spatial_width=8, temporal_layers=1, temporal_heads=2, temporal_width=8,
        repr_dim=8, window=4, num_nodes=12,
    )  # fmt: skip
    fx = random_fixture(TASKS, 8, 0)
    model = build_model("socialldg", STEncoder(cfg, seed=0), TASKS, NUM, {t: fx.token(t) for t in TASKS}, 0, hidden_dim=8, heads=2, token_hidden=8)
    rng = np.random.default_rng(0)
    frames = rng.uniform(-0.5, 0.5, size=(2, 4, 12, 3))
    frames[..., 2] = rng.uniform(0.1, 1.0, size=(2, 4, 12))
    labels = {t: rng.integers(NUM[t], size=2) for t in TASKS}
    params = [p for _, p in model.named_parameters()]
    t0 = time.time()
    # at h=1e-5 on a loss of about 3, double rounding leaves ~1e-10 of noise in
    # each difference, so gradients below 1e-5 are compared on that scale
    err = grad_check(lambda: multitask_loss(model(frames).logits, labels, NUM, TASKS), params, h=1e-5, eps=1e-5)
    seconds = time.time() - t0
    _detail(record_property, f"max rel err {err:.2e} over {sum(p.size for p in params)} params, {seconds:.0f}s")
    assert err < 1e-4
    assert seconds < 60


# -- 2: formula oracles -----------------------------------------------------------------------


@pytest.mark.criterion(2, "reconstruction loss, token pooling, modulated queries, edge bias, affinity match scalar loops")
def test_formula_oracles(record_property):
    rng = np.random.default_rng(2024)
    worst = {}
    for trial in range(100):
        T, N = rng.integers(1, 6), rng.integers(1, 9)
        x, xh = rng.normal(size=(T, N, 2)), rng.normal(size=(T, N, 2))
        a = rng.uniform(0, 1, size=(T, N))
        worst["loss"] = max(worst.get("loss", 0.0), abs(weighted_mse(x, Tensor(xh), a).item() - weighted_mse_loop(x, xh, a)))

        dim = int(rng.integers(2, 20))
        sents = [rng.normal(size=(int(rng.integers(1, 7)), dim)) for _ in range(3)]
        worst["token"] = max(worst.get("token", 0.0), float(np.abs(build_token(sents) - token_loop(sents)).max()))

        head = make_head(seed=trial)
        jitter(head, rng, 0.3)
        z = rng.normal(size=32)
        q_mod, B, A = head_loop(head, z)
        with no_grad():
            zt = Tensor(z[None])
            q = head.modulated_queries(zt)
            got_b = head.edge_bias(q, head.key_from_token(head.token_matrix())).data[0]
            got_a = head(zt).affinity_heads.data[0]
        worst["queries"] = max(worst.get("queries", 0.0), float(np.abs(q.data[0] - q_mod).max()))
        worst["bias"] = max(worst.get("bias", 0.0), float(np.abs(got_b - B).max()))
        worst["affinity"] = max(worst.get("affinity", 0.0), float(np.abs(got_a - A).max()))
    _detail(record_property, ", ".join(f"{k} {v:.1e}" for k, v in worst.items()))
    assert all(v <= 1e-12 for v in worst.values())


# -- 3: causality -----------------------------------------------------------------------------


@pytest.mark.criterion(3, "future-task nodes never reach current-task features; unmasking opens the path")
def test_causality(record_property):
    masked = [perturbation_delta(True, s) for s in range(50)]
    open_ = [perturbation_delta(False, s) for s in range(50)]
    _detail(record_property, f"masked max change {float(max(masked))!r}, unmasked min change {min(open_):.2e}")
    assert all(d == 0.0 for d in masked)
    assert all(d > 0.0 for d in open_)


# -- 4: bounded edges -------------------------------------------------------------------------


@pytest.mark.criterion(4, "edges in (0, 1), masked edges exactly 0, rows not normalized")
def test_bounded_edges(record_property):
    rng = np.random.default_rng(4)
    lo, hi, masked_max, off_rows = 1.0, 0.0, 0.0, 0
    for seed in range(20):
        head = make_head(seed)
        with no_grad():
            A = head(Tensor(rng.normal(0, 2.0, size=(8, 32)))).affinity_heads.data
        m = head.mask()
        free = A[..., ~m]
        lo, hi = min(lo, free.min()), max(hi, free.max())
        masked_max = max(masked_max, np.abs(A[..., m]).max())
        rows = A.sum(-1)
        off_rows += int(np.sum((rows < 0.99) | (rows > 1.01)))
    _detail(record_property, f"free edges in [{lo:.3g}, {hi:.3g}], masked max {masked_max}, {off_rows} rows off 1")
    assert 0.0 < lo and hi < 1.0
    assert masked_max == 0.0
    assert off_rows > 0


# -- 5: multi-task benefit --------------------------------------------------------------------


@pytest.mark.criterion(5, "graph >= parallel; each ablation <= graph (mean avg F1, 5 seeds)")
def test_multitask_benefit(record_property, classifier_runs):
    mean = {v: float(np.mean(s)) for v, s in classifier_runs["scores"].items()}
    seconds = classifier_runs["seconds"]
    _detail(record_property, ", ".join(f"{v} {m:.4f}" for v, m in mean.items()) + f", {seconds / 60:.1f} min")
    assert mean["socialldg"] >= mean["parallel"]
    assert mean["no_edge_bias"] <= mean["socialldg"]
    assert mean["no_prompt_injection"] <= mean["socialldg"]
    assert seconds < 30 * 60


# -- 6: scalability ---------------------------------------------------------------------------


@pytest.mark.criterion(6, "adding tasks: graph-FT >= independent-FT, initial-task drop <= 2 points (A, B, C; 5-seed means)")
def test_scalability(record_property, pretrained, classifier_data):
    prep, _ = classifier_data
    results = {}
    for name in "ABC":
        runs = [
            run_scalability(ScalabilitySetting.named(name), pretrained.model.encoder, prep, replace(FINETUNE, seed=seed))
            for seed in SEEDS
        ]
        results[name] = {
            "graph": float(np.mean([r["socialldg_ft"]["avg_f1"] for r in runs])),
            "indep": float(np.mean([r["independent_ft"]["avg_f1"] for r in runs])),
            "drop": float(np.mean([100 * r["socialldg_ft"]["retention_drop"] for r in runs])),
        }
    _detail(record_property, "; ".join(f"{n} graph {r['graph']:.4f} indep {r['indep']:.4f} drop {r['drop']:.2f}" for n, r in results.items()))
    for r in results.values():
        assert r["graph"] >= r["indep"]
        assert r["drop"] <= 2.0


# -- 7: affinity dynamics ---------------------------------------------------------------------


@pytest.mark.criterion(7, "a cosine-curve minimum within one window of a scripted stage change in >= 80% of runs")
def test_affinity_dynamics(record_property, classifier_runs):
    model = classifier_runs["graphs"][0]
    trials = [transition_trial(model, seed) for seed in range(20)]
    rate = float(np.mean([t["hit_any"] for t in trials]))
    deepest = float(np.mean([t["hit_deepest"] for t in trials]))
    _detail(record_property, f"hit rate {rate:.2f} over {len(trials)} scenarios (deepest minimum {deepest:.2f})")
    assert len(trials) >= 20
    assert rate >= 0.8


# -- 8: masked autoencoding -------------------------------------------------------------------


@pytest.mark.criterion(8, "masked MAE >= 20% below the per-keypoint mean; weighted loss <= unweighted")
def test_masked_autoencoding(record_property, pretrain_bench, pretrained):
    test = [s for s in pretrain_bench.test if s.clean is not None]
    frames = stack_frames(test)
    clean = np.stack([s.clean for s in test])
    ratio = pretrained.model.encoder.cfg.mask_ratio
    weighted = masked_mae(pretrained.model, frames, clean, ratio, seed=7)
    oracle = mean_oracle_mae(stack_frames(pretrain_bench.train)[..., :2], frames, clean, ratio, seed=7)
    plain = pretrain_encoder(pretrain_bench, seed=0, epochs=10, loss="mse")
    unweighted = masked_mae(plain.model, frames, clean, ratio, seed=7)
    gain = 1.0 - weighted / oracle
    _detail(record_property, f"weighted {weighted:.4f}, unweighted {unweighted:.4f}, oracle {oracle:.4f}, gain {100 * gain:.1f}%")
    assert gain >= 0.20
    assert weighted <= unweighted


# -- 9: token pipeline ------------------------------------------------------------------------


@pytest.mark.criterion(9, "unit tokens, symmetric similarity, intent-attitude cosine rises in >= 4 of 5 seeds")
def test_token_pipeline(record_property, classifier_runs):
    fx = load_default_fixture()
    norms = [abs(np.linalg.norm(build_token(fx.tasks[t])) - 1.0) for t in TASKS]
    S = similarity_matrix(fx.tokens(TASKS))
    tokens = classifier_runs["tokens"]
    start = float(tokens["intent"] @ tokens["attitude"] / (np.linalg.norm(tokens["intent"]) * np.linalg.norm(tokens["attitude"])))
    after = [token_cosine(m, "intent", "attitude") for m in classifier_runs["graphs"]]
    rises = sum(a > start for a in after)
    _detail(record_property, f"cosine {start:.4f} -> " + ", ".join(f"{a:.4f}" for a in after) + f"; {rises}/5 rise")
    assert max(norms) <= 1e-12
    assert np.array_equal(S, S.T) and np.all(np.diag(S) == 1.0)
    assert rises >= 4


# -- 10: determinism --------------------------------------------------------------------------


@pytest.mark.criterion(10, "identical config and seed give bit-identical reports")
def test_determinism(record_property, tmp_path):
    flags = [
        "--scenarios", "16", "--augment", "2", "--spatial-layers", "1", "--spatial-width", "16", "--temporal-layers", "1",
        "--temporal-width", "32", "--pretrain-epochs", "2", "--epochs", "4", "--warmup", "1", "--mode", "temporal",
        "--seed", "3", "--out", str(tmp_path / "run"),
    ]  # fmt: skip
    runs = []
    for _ in range(2):
        assert cli_main(["pretrain", *flags]) == 0
        assert cli_main(["train", "--checkpoint", str(tmp_path / "run" / "pretrain.ckpt"), *flags]) == 0
        runs.append({n: (tmp_path / "run" / n).read_bytes() for n in ("pretrain_report.json", "train_report.json", "train_report.csv")})
    same = [n for n in runs[0] if runs[0][n] == runs[1][n]]
    _detail(record_property, f"{len(same)}/{len(runs[0])} report files identical")
    assert runs[0] == runs[1]


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v", "-s"]))
