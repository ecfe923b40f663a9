import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from socialldg.pose.data import (
    FUTURE_OF,
    TASKS,
    DatasetError,
    DegenerateInputError,
    SchemaError,
    TaskSchema,
    WindowSample,
    augment,
    crop,
    denormalize,
    flip_horizontal,
    keypoint_bboxes,
    load_dataset,
    normalize,
    save_dataset,
    sliding_windows,
    split_by_scenario,
    stack_labels,
)
from socialldg.pose.layout import FLIP_INDEX, KEYPOINT_NAMES, NUM_KEYPOINTS, SKELETON_EDGES, part_of
from socialldg.pose.synthetic import (
    CONTACT_DISTANCE,
    LABEL_RULES,
    ScenarioScript,
    Stage,
    generate_benchmark,
    generate_scenario,
    random_script,
    transition_script,
    window_labels,
)


def _sample(rng, name="s0", window=0, T=10, profile="jpl"):
    frames = rng.uniform(-0.5, 0.5, size=(T, NUM_KEYPOINTS, 3))
    frames[..., 2] = rng.uniform(0, 1, size=(T, NUM_KEYPOINTS))
    schema = TaskSchema.for_profile(profile)
    labels = {t: int(rng.integers(n)) for t, n in schema.num_classes.items()}
    return WindowSample(frames, labels, name, window, clean=frames[..., :2].copy())


# -- layout ---------------------------------------------------------------------------------


def test_layout_sizes_and_names():
    assert NUM_KEYPOINTS == 133
    assert len(KEYPOINT_NAMES) == 133 and len(set(KEYPOINT_NAMES)) == 133
    assert [part_of(i) for i in (0, 22, 23, 90, 91, 132)] == ["body", "body", "face", "face", "hand", "hand"]


def test_flip_index_is_an_involution_that_swaps_sides():
    assert np.array_equal(FLIP_INDEX[FLIP_INDEX], np.arange(NUM_KEYPOINTS))
    assert FLIP_INDEX[0] == 0
    assert FLIP_INDEX[5] == 6 and FLIP_INDEX[9] == 10
    assert np.array_equal(FLIP_INDEX[91:112], np.arange(112, 133))


def test_skeleton_edges_are_valid_and_flip_closed():
    es = {tuple(sorted(e)) for e in SKELETON_EDGES}
    assert len(es) == len(SKELETON_EDGES)
    assert all(0 <= a < NUM_KEYPOINTS and 0 <= b < NUM_KEYPOINTS and a != b for a, b in es)
    flipped = {tuple(sorted((int(FLIP_INDEX[a]), int(FLIP_INDEX[b])))) for a, b in es}
    assert flipped == es


# -- schema ---------------------------------------------------------------------------------


def test_schema_profiles():
    jpl, harper = TaskSchema.for_profile("jpl"), TaskSchema.for_profile("harper")
    assert jpl.names == TASKS
    assert jpl.num_classes == {"con_cur": 2, "con_fut": 2, "intent": 3, "attitude": 2, "act_cur": 11, "act_fut": 11}
    assert harper.num_classes["act_cur"] == 7
    with pytest.raises(ValueError):
        TaskSchema.for_profile("other")
    assert TaskSchema.from_json(json.loads(json.dumps(jpl.to_json()))) == jpl


def test_schema_validate_rejects_bad_labels():
    schema = TaskSchema.for_profile("jpl")
    good = {t: 0 for t in TASKS}
    schema.validate(good)
    with pytest.raises(SchemaError, match="intent"):
        schema.validate({**good, "intent": 3})
    with pytest.raises(SchemaError, match="missing"):
        schema.validate({t: 0 for t in TASKS[:-1]})


# -- normalization ------------------------------------------------------------------------------


def test_normalize_maps_box_to_unit_square():
    bb = np.array([[100.0, 50.0, 200.0, 400.0]])
    pts = np.array([[[100.0, 50.0, 0.7], [300.0, 450.0, 0.2], [200.0, 250.0, 1.0]]])
    out = normalize(pts, bb)
    assert np.allclose(out[0, :, :2], [[-0.5, -0.5], [0.5, 0.5], [0.0, 0.0]], atol=1e-15)
    assert np.array_equal(out[..., 2], pts[..., 2])


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_normalize_round_trip(seed):
    rng = np.random.default_rng(seed)
    seq = rng.uniform(0, 640, size=(4, 133, 3))
    bb = keypoint_bboxes(seq)
    back = denormalize(normalize(seq, bb), bb)
    assert np.allclose(back, seq, rtol=0, atol=1e-9)
    n = normalize(seq, bb)
    assert n[..., :2].min() >= -0.5 - 1e-12 and n[..., :2].max() <= 0.5 + 1e-12


def test_normalize_rejects_degenerate_box():
    with pytest.raises(DegenerateInputError):
        normalize(np.zeros((1, 3, 3)), np.array([[0.0, 0.0, 0.0, 10.0]]))


# -- windows --------------------------------------------------------------------------------


def test_sliding_windows_counts_and_starts():
    stream = np.arange(35)[:, None]
    ws = sliding_windows(stream, 10, 10)
    assert len(ws) == 3 and [w[0, 0] for w in ws] == [0, 10, 20]
    assert len(sliding_windows(stream, 10, 5)) == 6


def test_short_stream_warns_and_yields_nothing():
    with pytest.warns(UserWarning, match="shorter"):
        assert sliding_windows(np.zeros((7, 2)), 10, 10) == []


# -- augmentation ---------------------------------------------------------------------------------


def test_flip_twice_is_identity_and_mirrors_x():
    rng = np.random.default_rng(0)
    f = rng.uniform(-0.5, 0.5, size=(3, 133, 3))
    assert np.array_equal(flip_horizontal(flip_horizontal(f)), f)
    g = flip_horizontal(f)
    assert np.array_equal(g[:, 5, 0], -f[:, 6, 0])
    assert np.array_equal(g[:, 5, 1], f[:, 6, 1])


def test_crop_full_scale_is_identity():
    rng = np.random.default_rng(1)
    f = rng.uniform(-0.5, 0.5, size=(2, 133, 3))
    assert np.allclose(crop(f, 1.0), f)
    c = crop(f, 0.5, (0.1, -0.1))
    assert c[..., :2].min() >= -0.5 and c[..., :2].max() <= 0.5
    assert np.array_equal(c[..., 2], f[..., 2])


def test_augment_count_labels_and_confidences():
    rng = np.random.default_rng(2)
    s = _sample(rng)
    out = augment(s, 20, seed=3)
    assert len(out) == 20
    for a in out:
        assert a.labels == s.labels and a.scenario == s.scenario
        assert a.frames.shape == s.frames.shape and a.clean.shape == s.clean.shape
        assert np.abs(a.frames[..., :2]).max() <= 0.5
        # confidences are carried along unchanged (up to the left/right swap on flip)
        assert np.array_equal(np.sort(a.frames[..., 2], axis=1), np.sort(s.frames[..., 2], axis=1))
    again = augment(s, 20, seed=3)
    assert all(np.array_equal(a.frames, b.frames) for a, b in zip(out, again))


# -- splits ---------------------------------------------------------------------------------


def test_split_is_scenario_level_and_622():
    rng = np.random.default_rng(4)
    samples = [_sample(rng, f"sc{i:02d}", w) for i in range(50) for w in range(3)]
    tr, va, te = split_by_scenario(samples, (6, 2, 2), seed=0)
    names = [{s.scenario for s in part} for part in (tr, va, te)]
    assert [len(n) for n in names] == [30, 10, 10]
    assert not (names[0] & names[1] or names[0] & names[2] or names[1] & names[2])
    assert len(tr) + len(va) + len(te) == len(samples)
    assert split_by_scenario(samples, (6, 2, 2), seed=0)[0] == tr


# -- dataset files --------------------------------------------------------------------------------


def test_dataset_round_trip(tmp_path):
    rng = np.random.default_rng(5)
    samples = [_sample(rng, "a", 0), _sample(rng, "a", 1)]
    path = save_dataset(tmp_path / "d.jsonl", samples, TaskSchema.for_profile("jpl"), 10)
    ds = load_dataset(path)
    assert ds.schema.profile == "jpl" and ds.window == 10 and len(ds) == 2
    for a, b in zip(samples, ds):
        assert np.array_equal(a.frames, b.frames)
        assert a.labels == b.labels and a.window == b.window


def test_empty_dataset_file_is_valid(tmp_path):
    p = tmp_path / "e.jsonl"
    p.write_text("")
    assert len(load_dataset(p)) == 0


def test_malformed_record_reports_line(tmp_path):
    rng = np.random.default_rng(6)
    path = save_dataset(tmp_path / "d.jsonl", [_sample(rng)])
    with open(path, "a") as fh:
        fh.write("{not json\n")
    with pytest.raises(DatasetError, match=":3:"):
        load_dataset(path)


def test_wrong_keypoint_count_is_schema_error(tmp_path):
    rng = np.random.default_rng(7)
    path = save_dataset(tmp_path / "d.jsonl", [_sample(rng)])
    lines = path.read_text().splitlines()
    rec = json.loads(lines[1])
    rec["frames"] = np.zeros((10, 17, 3)).tolist()
    path.write_text(lines[0] + "\n" + json.dumps(rec) + "\n")
    with pytest.raises(SchemaError, match="133"):
        load_dataset(path)


def test_out_of_range_label_is_schema_error(tmp_path):
    rng = np.random.default_rng(8)
    path = save_dataset(tmp_path / "d.jsonl", [_sample(rng)])
    lines = path.read_text().splitlines()
    rec = json.loads(lines[1])
    rec["labels"]["act_cur"] = 11
    path.write_text(lines[0] + "\n" + json.dumps(rec) + "\n")
    with pytest.raises(SchemaError, match="act_cur"):
        load_dataset(path)


# -- synthetic generator -----------------------------------------------------------------------------


def test_label_rules_cover_both_profiles():
    for profile in ("jpl", "harper"):
        for action in TaskSchema.for_profile(profile)["act_cur"].classes:
            assert action in LABEL_RULES
    assert {a for a, r in LABEL_RULES.items() if r.negative} == {"punch", "throw", "kick"}
    assert LABEL_RULES["approach"].intent == "interested"


def _labels_for(action, distance, stages=None):
    schema = TaskSchema.for_profile("jpl")
    idx = np.zeros(20, dtype=int)
    d = np.full(20, distance)
    return window_labels(idx, d, stages or (Stage(action, 20),), schema, 10)


def test_contact_needs_touching_action_and_proximity():
    near, far = CONTACT_DISTANCE * 0.5, CONTACT_DISTANCE * 2
    assert _labels_for("hug", near)[0]["con_cur"] == 1
    assert _labels_for("hug", far)[0]["con_cur"] == 0
    assert _labels_for("wave", near)[0]["con_cur"] == 0


def test_future_labels_come_from_the_next_window():
    schema = TaskSchema.for_profile("jpl")
    stages = (Stage("approach", 10), Stage("hug", 10), Stage("leave", 10))
    idx = np.repeat([0, 1, 2], 10)
    labels = window_labels(idx, np.full(30, 0.5), stages, schema, 10)
    acts = schema["act_cur"].classes
    assert [acts[l["act_cur"]] for l in labels] == ["approach", "hug", "leave"]
    for w in range(3):
        nxt = labels[min(w + 1, 2)]
        for fut, cur in FUTURE_OF.items():
            assert labels[w][fut] == nxt[cur]


def test_generator_is_deterministic_and_well_formed():
    script = ScenarioScript("x", (Stage("approach", 20), Stage("handshake", 20)), "jpl")
    a = generate_scenario(script, 11)
    b = generate_scenario(script, 11)
    c = generate_scenario(script, 12)
    assert np.array_equal(a.frames, b.frames)
    assert not np.array_equal(a.frames, c.frames)
    assert a.frames.shape == (40, 133, 3) and a.clean.shape == (40, 133, 2)
    assert np.abs(a.frames[..., :2]).max() <= 0.5
    assert a.frames[..., 2].min() >= 0 and a.frames[..., 2].max() <= 1
    ws = a.windows()
    assert len(ws) == 4 and [w.window for w in ws] == [0, 1, 2, 3]
    for w in ws:
        TaskSchema.for_profile("jpl").validate(w.labels)


def test_script_validation():
    with pytest.raises(ValueError, match="profile"):
        ScenarioScript("x", (Stage("kick", 20),), "jpl").validate()
    with pytest.raises(ValueError, match="fewer"):
        ScenarioScript("x", (Stage("wave", 5),), "jpl").validate()


def test_random_and_transition_scripts():
    rng = np.random.default_rng(0)
    for profile in ("jpl", "harper"):
        s = random_script(rng, "r", profile)
        s.validate()
    t = transition_script(np.random.default_rng(1), "t", change_window=4)
    assert t.length == 100 and t.stages[0].frames == 40


def test_benchmark_has_both_attitudes_and_contacts():
    samples = generate_benchmark(30, seed=0)
    y = stack_labels(samples, TASKS)
    assert set(np.unique(y["attitude"])) == {0, 1}
    assert set(np.unique(y["con_cur"])) == {0, 1}
    assert len({s.scenario for s in samples}) == 30
