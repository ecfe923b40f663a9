"""Lexical task tokens built from per-task prompt sentences.

A token is the L2-normalized average, over a task's three sentences, of the
mean word vector of each sentence.  Word vectors come from an embedding
fixture: a JSON file of precomputed per-word vectors
``{"provider": str, "dim": int, "tasks": {task: {"sentences": [[vec, ...], x3]}}}``.
Two providers are built in: seeded pseudo-random vectors per (task, word
position), and a hashed lexicon where equal words map to equal vectors.
"""

from __future__ import annotations

import csv
import hashlib
import json
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np


class DegenerateTokenError(ValueError):
    pass


@dataclass(frozen=True)
class PromptSet:
    task: str
    sentences: tuple[str, ...]

    def __post_init__(self):
        if len(self.sentences) != 3:
            raise ValueError(f"task {self.task!r} needs exactly 3 sentences, got {len(self.sentences)}")
        if any(not tokenize(s) for s in self.sentences):
            raise ValueError(f"task {self.task!r} has an empty sentence")


_WORD = re.compile(r"[a-z0-9']+")


def tokenize(sentence: str) -> list[str]:
    return _WORD.findall(sentence.lower())


def load_prompts(path=None) -> dict[str, PromptSet]:
    if path is None:
        text = resources.files("socialldg.data").joinpath("prompts.json").read_text()
    else:
        text = Path(path).read_text()
    raw = json.loads(text)["tasks"]
    return {task: PromptSet(task, tuple(s)) for task, s in raw.items()}


@dataclass
class EmbeddingFixture:
    provider: str
    dim: int
    tasks: dict[str, list[np.ndarray]]  # task -> three (words, dim) matrices

    def __post_init__(self):
        if self.dim <= 0:
            raise ValueError("embedding dim must be positive")
        for task, sents in self.tasks.items():
            if len(sents) != 3:
                raise ValueError(f"task {task!r}: expected 3 sentences, got {len(sents)}")
            for s in sents:
                if s.ndim != 2 or s.shape[0] < 1 or s.shape[1] != self.dim:
                    raise ValueError(f"task {task!r}: sentence matrix of shape {s.shape}, expected (words>=1, {self.dim})")

    def token(self, task: str) -> np.ndarray:
        return build_token(self.tasks[task])

    def tokens(self, tasks: Sequence[str]) -> np.ndarray:
        return np.stack([self.token(t) for t in tasks])

    def merged(self, other: "EmbeddingFixture") -> "EmbeddingFixture":
        if other.dim != self.dim:
            raise ValueError("cannot merge fixtures of different dims")
        return EmbeddingFixture(self.provider, self.dim, {**self.tasks, **other.tasks})

    def save(self, path) -> Path:
        path = Path(path)
        obj = {
            "provider": self.provider,
            "dim": self.dim,
            "tasks": {t: {"sentences": [m.tolist() for m in s]} for t, s in self.tasks.items()},
        }
        path.write_text(json.dumps(obj))
        return path

    @classmethod
    def load(cls, path) -> "EmbeddingFixture":
        obj = json.loads(Path(path).read_text())
        return cls._from_obj(obj)

    @classmethod
    def _from_obj(cls, obj: dict) -> "EmbeddingFixture":
        tasks = {t: [np.asarray(m, dtype=np.float64) for m in v["sentences"]] for t, v in obj["tasks"].items()}
        return cls(obj["provider"], int(obj["dim"]), tasks)


def build_token(sentences: Sequence[np.ndarray]) -> np.ndarray:
    """Average the per-sentence mean word vectors and normalize to unit length."""
    pooled = np.mean([np.asarray(s, dtype=np.float64).mean(axis=0) for s in sentences], axis=0)
    norm = np.linalg.norm(pooled)
    if not np.isfinite(norm) or norm < 1e-12:
        raise DegenerateTokenError("pooled prompt embedding is zero; cannot normalize")
    return pooled / norm


def _hashed_rng(*parts) -> np.random.Generator:
    digest = hashlib.sha256("\x1f".join(str(p) for p in parts).encode("utf-8")).digest()
    return np.random.default_rng(int.from_bytes(digest[:8], "little"))


def pseudo_embedding(task: str, dim: int, seed: int = 0, words: Sequence[int] = (8, 8, 8)) -> EmbeddingFixture:
    """Seeded standard-normal word vectors keyed by (task, sentence, word position)."""
    if dim <= 0:
        raise ValueError("embedding dim must be positive")
    sents = [
        np.stack([_hashed_rng("pseudo", seed, task, m, i).standard_normal(dim) for i in range(n)])
        for m, n in enumerate(words)
    ]
    return EmbeddingFixture("pseudo", dim, {task: sents})


def word_vector(word: str, dim: int, seed: int = 0) -> np.ndarray:
    return _hashed_rng("lexicon", seed, word).standard_normal(dim)


def lexical_fixture(prompts: Mapping[str, PromptSet], dim: int = 64, seed: int = 0) -> EmbeddingFixture:
    """Hashed-lexicon provider: tasks whose prompts share words get correlated tokens."""
    if dim <= 0:
        raise ValueError("embedding dim must be positive")
    tasks = {
        t: [np.stack([word_vector(w, dim, seed) for w in tokenize(s)]) for s in p.sentences]
        for t, p in prompts.items()
    }
    return EmbeddingFixture("hashed-lexicon", dim, tasks)


def random_fixture(tasks: Sequence[str], dim: int, seed: int = 0) -> EmbeddingFixture:
    out = EmbeddingFixture("pseudo", dim, {})
    for t in tasks:
        out = out.merged(pseudo_embedding(t, dim, seed))
    return out


def load_default_fixture() -> EmbeddingFixture:
    """The shipped dim-64 hashed-lexicon fixture for the six default prompt triples."""
    text = resources.files("socialldg.data").joinpath("fixture_lexical64.json").read_text()
    return EmbeddingFixture._from_obj(json.loads(text))


def similarity_matrix(tokens) -> np.ndarray:
    """Pairwise cosine similarity of the rows of ``tokens``."""
    E = np.atleast_2d(np.asarray(tokens, dtype=np.float64))
    if E.shape[0] < 1:
        raise ValueError("need at least one token")
    U = E / np.linalg.norm(E, axis=1, keepdims=True)
    M = U @ U.T
    M = (M + M.T) / 2
    np.fill_diagonal(M, 1.0)
    return M


def save_similarity_csv(path, names: Sequence[str], matrix: np.ndarray) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["task", *names])
        for n, row in zip(names, matrix):
            w.writerow([n, *(repr(float(v)) for v in row)])
    return path
