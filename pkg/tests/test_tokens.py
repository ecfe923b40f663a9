import numpy as np
import pytest

from socialldg.pose.data import TASKS
from socialldg.tokens import (
    DegenerateTokenError,
    EmbeddingFixture,
    PromptSet,
    build_token,
    lexical_fixture,
    load_default_fixture,
    load_prompts,
    pseudo_embedding,
    random_fixture,
    save_similarity_csv,
    similarity_matrix,
    tokenize,
    word_vector,
)

from oracles import token_loop


def test_build_token_hand_value():
    sents = [np.array([[1.0, 0.0]]), np.array([[0.0, 1.0]]), np.array([[1.0, 1.0]])]
    assert np.allclose(build_token(sents), [np.sqrt(2) / 2, np.sqrt(2) / 2], atol=1e-15)


def test_build_token_matches_loop_and_is_unit_norm():
    rng = np.random.default_rng(0)
    for _ in range(100):
        dim = int(rng.integers(2, 20))
        sents = [rng.normal(size=(int(rng.integers(1, 7)), dim)) for _ in range(3)]
        tok = build_token(sents)
        assert np.max(np.abs(tok - token_loop(sents))) <= 1e-12
        assert abs(np.linalg.norm(tok) - 1.0) <= 1e-12


def test_zero_pooled_embedding_is_degenerate():
    v = np.array([[1.0, 2.0]])
    with pytest.raises(DegenerateTokenError):
        build_token([v, -v, np.zeros((1, 2))])


def test_prompt_sets_need_three_non_empty_sentences():
    with pytest.raises(ValueError, match="exactly 3"):
        PromptSet("x", ("a", "b"))
    with pytest.raises(ValueError, match="empty"):
        PromptSet("x", ("a", "b", "!!"))
    assert tokenize("Is the Robot's arm up?") == ["is", "the", "robot's", "arm", "up"]


def test_shipped_prompts_and_fixture_cover_all_tasks():
    prompts = load_prompts()
    assert set(prompts) == set(TASKS)
    fx = load_default_fixture()
    assert fx.dim == 64 and set(fx.tasks) == set(TASKS)
    # the shipped file is exactly what the hashed-lexicon provider produces
    regen = lexical_fixture(prompts, 64, 0)
    for t in TASKS:
        assert np.array_equal(fx.token(t), regen.token(t))


def test_pseudo_embeddings_are_seeded():
    a = pseudo_embedding("intent", 16, seed=1)
    b = pseudo_embedding("intent", 16, seed=1)
    c = pseudo_embedding("intent", 16, seed=2)
    assert np.array_equal(a.token("intent"), b.token("intent"))
    assert not np.array_equal(a.token("intent"), c.token("intent"))
    assert np.array_equal(word_vector("robot", 8), word_vector("robot", 8))


def test_shared_words_correlate_tokens():
    prompts = {
        "a": PromptSet("a", ("robot touch now", "robot touch soon", "robot touch later")),
        "b": PromptSet("b", ("robot touch again", "robot touch here", "robot touch there")),
        "c": PromptSet("c", ("blue sky", "green grass", "red brick")),
    }
    fx = lexical_fixture(prompts, 256, 0)
    S = similarity_matrix(fx.tokens(["a", "b", "c"]))
    assert S[0, 1] > S[0, 2] and S[0, 1] > 0.5


def test_fixture_round_trip_and_validation(tmp_path):
    fx = random_fixture(TASKS, 8, seed=3)
    path = fx.save(tmp_path / "f.json")
    back = EmbeddingFixture.load(path)
    assert np.array_equal(back.tokens(TASKS), fx.tokens(TASKS))
    with pytest.raises(ValueError):
        EmbeddingFixture("x", 4, {"t": [np.zeros((1, 4))] * 2})
    with pytest.raises(ValueError):
        EmbeddingFixture("x", 4, {"t": [np.zeros((1, 3))] * 3})


def test_similarity_matrix_properties(tmp_path):
    E = random_fixture(TASKS, 32, seed=4).tokens(TASKS) * np.arange(1, 7)[:, None]
    S = similarity_matrix(E)
    assert np.array_equal(S, S.T)
    assert np.all(np.diag(S) == 1.0)
    assert np.all(np.abs(S) <= 1 + 1e-12)
    for i in range(6):
        for j in range(6):
            if i != j:
                expect = E[i] @ E[j] / np.linalg.norm(E[i]) / np.linalg.norm(E[j])
                assert abs(S[i, j] - expect) < 1e-12
    p = save_similarity_csv(tmp_path / "s.csv", list(TASKS), S)
    rows = p.read_text().splitlines()
    assert rows[0].split(",")[1:] == list(TASKS) and len(rows) == 7
