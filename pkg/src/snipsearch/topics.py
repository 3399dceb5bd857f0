"""Latent Dirichlet allocation by collapsed Gibbs sampling.

All randomness comes from a seeded numpy Generator: uniforms are drawn per
sweep and handed to the compiled sampling kernel, so results depend only on
the seed and not on the kernel's implementation.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from numba import njit

from snipsearch.errors import ArtifactMismatchError, InvalidInputError
from snipsearch.text import TermBag

LDA_MAGIC = "snipsearch-lda"
LDA_FORMAT_VERSION = 1
DEFAULT_BETA = 0.01
FOLD_IN_SWEEPS = 20
FOLD_IN_AVERAGE = 5


def default_alpha(n_topics: int) -> float:
    return 50.0 / n_topics


@njit(cache=True)
def _draw(weights, u):
    total = 0.0
    for k in range(weights.shape[0]):
        total += weights[k]
    target = u * total
    acc = 0.0
    for k in range(weights.shape[0]):
        acc += weights[k]
        if target < acc:
            return k
    return weights.shape[0] - 1


@njit(cache=True)
def _sweep(words, doc_of, z, n_dk, n_kw, n_k, alpha, beta, vbeta, uniforms):
    n_topics = n_k.shape[0]
    weights = np.empty(n_topics)
    for i in range(words.shape[0]):
        w = words[i]
        d = doc_of[i]
        k = z[i]
        n_dk[d, k] -= 1
        n_kw[k, w] -= 1
        n_k[k] -= 1
        for t in range(n_topics):
            weights[t] = (n_dk[d, t] + alpha) * (n_kw[t, w] + beta) / (n_k[t] + vbeta)
        k = _draw(weights, uniforms[i])
        z[i] = k
        n_dk[d, k] += 1
        n_kw[k, w] += 1
        n_k[k] += 1


@njit(cache=True)
def _fold_in_sweep(words, z, n_dk, n_kw, n_k, alpha, beta, vbeta, uniforms):
    n_topics = n_k.shape[0]
    weights = np.empty(n_topics)
    for i in range(words.shape[0]):
        w = words[i]
        n_dk[z[i]] -= 1
        for t in range(n_topics):
            weights[t] = (n_dk[t] + alpha) * (n_kw[t, w] + beta) / (n_k[t] + vbeta)
        k = _draw(weights, uniforms[i])
        z[i] = k
        n_dk[k] += 1


@dataclass
class GibbsState:
    """Sampler state after a sweep, handed to ``on_sweep`` callbacks."""

    sweep: int
    z: np.ndarray
    doc_of: np.ndarray
    words: np.ndarray
    n_dk: np.ndarray
    n_kw: np.ndarray
    n_k: np.ndarray


@dataclass
class TopicModel:
    """A trained LDA model.

    Attributes:
        n_topics: Number of topics K.
        alpha, beta: Dirichlet hyperparameters.
        vocab: Term list; a term's position is its column in ``topic_term``.
        topic_term: K x V integer counts from the final assignment.
        theta: K x D topic-by-document matrix; column j is document j's
            topic distribution.
        doc_ids: Identifier of each theta column.
    """

    n_topics: int
    alpha: float
    beta: float
    vocab: list[str]
    topic_term: np.ndarray
    theta: np.ndarray
    doc_ids: list[str]
    iterations: int = 0
    seed: int = 0
    corpus_hash: str = ""
    _term_pos: dict[str, int] = field(default_factory=dict, repr=False)
    _doc_pos: dict[str, int] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self._term_pos = {t: i for i, t in enumerate(self.vocab)}
        self._doc_pos = {d: i for i, d in enumerate(self.doc_ids)}

    @property
    def topic_totals(self) -> np.ndarray:
        return self.topic_term.sum(axis=1)

    def topic_term_dist(self) -> np.ndarray:
        """Smoothed K x V topic-term probabilities."""
        v = len(self.vocab)
        counts = self.topic_term.astype(float) + self.beta
        return counts / (self.topic_totals[:, None] + v * self.beta)

    def doc_theta(self, doc_id: str) -> np.ndarray:
        try:
            return self.theta[:, self._doc_pos[doc_id]]
        except KeyError:
            raise InvalidInputError(f"snippet not in topic model: {doc_id}") from None

    def term_ids(self, doc: TermBag) -> np.ndarray:
        return np.array([self._term_pos[t] for t in doc if t in self._term_pos], dtype=np.int64)

    def to_json(self) -> str:
        payload = {
            "magic": LDA_MAGIC,
            "format_version": LDA_FORMAT_VERSION,
            "n_topics": self.n_topics,
            "alpha": self.alpha,
            "beta": self.beta,
            "iterations": self.iterations,
            "seed": self.seed,
            "corpus_hash": self.corpus_hash,
            "vocab": self.vocab,
            "doc_ids": self.doc_ids,
            "topic_term": self.topic_term.tolist(),
            "theta": self.theta.tolist(),
        }
        return json.dumps(payload, sort_keys=True, separators=(",", ":"), ensure_ascii=False)

    @classmethod
    def from_json(cls, text: str) -> TopicModel:
        try:
            p = json.loads(text)
        except json.JSONDecodeError as exc:
            raise InvalidInputError(f"topic model file is not valid JSON: {exc}") from exc
        if p.get("magic") != LDA_MAGIC:
            raise ArtifactMismatchError("not a snipsearch topic model file")
        if p.get("format_version") != LDA_FORMAT_VERSION:
            raise ArtifactMismatchError(f"unsupported topic model format version {p.get('format_version')}")
        k, v, d = p["n_topics"], len(p["vocab"]), len(p["doc_ids"])
        return cls(
            n_topics=k,
            alpha=p["alpha"],
            beta=p["beta"],
            vocab=p["vocab"],
            topic_term=np.array(p["topic_term"], dtype=np.int64).reshape(k, v),
            theta=np.array(p["theta"], dtype=float).reshape(k, d),
            doc_ids=p["doc_ids"],
            iterations=p["iterations"],
            seed=p["seed"],
            corpus_hash=p["corpus_hash"],
        )


def train_lda(
    docs: Sequence[TermBag],
    n_topics: int = 100,
    iterations: int = 100,
    alpha: float | None = None,
    beta: float = DEFAULT_BETA,
    seed: int = 0,
    doc_ids: Sequence[str] | None = None,
    on_sweep: Callable[[GibbsState], None] | None = None,
) -> TopicModel:
    """Fit LDA with collapsed Gibbs sampling.

    Args:
        docs: One term bag per document.
        n_topics: Topic count K.
        iterations: Number of full sweeps over all tokens.
        alpha: Document-topic prior; defaults to ``50 / K``.
        beta: Topic-term prior.
        seed: Seed for initial assignment and every sweep.
        doc_ids: Column labels for theta; defaults to ``"0", "1", ...``.
        on_sweep: Called with the sampler state after initialization
            (sweep 0) and after every sweep.

    Raises:
        InvalidInputError: On bad K/iterations or an all-empty corpus.
    """
    if n_topics < 1:
        raise InvalidInputError(f"topic count must be >= 1, got {n_topics}")
    if iterations < 1:
        raise InvalidInputError(f"iterations must be >= 1, got {iterations}")
    if not any(docs):
        raise InvalidInputError("cannot train a topic model on an empty corpus")
    alpha = default_alpha(n_topics) if alpha is None else float(alpha)
    if doc_ids is None:
        doc_ids = [str(i) for i in range(len(docs))]
    if len(doc_ids) != len(docs):
        raise InvalidInputError("doc_ids and docs differ in length")

    vocab = sorted({t for doc in docs for t in doc})
    term_pos = {t: i for i, t in enumerate(vocab)}
    words = np.array([term_pos[t] for doc in docs for t in doc], dtype=np.int64)
    doc_of = np.array([d for d, doc in enumerate(docs) for _ in doc], dtype=np.int64)
    n_docs, n_vocab = len(docs), len(vocab)

    rng = np.random.default_rng(seed)
    z = rng.integers(0, n_topics, size=words.shape[0]).astype(np.int64)
    n_dk = np.zeros((n_docs, n_topics), dtype=np.int64)
    n_kw = np.zeros((n_topics, n_vocab), dtype=np.int64)
    np.add.at(n_dk, (doc_of, z), 1)
    np.add.at(n_kw, (z, words), 1)
    n_k = n_kw.sum(axis=1)

    if on_sweep is not None:
        on_sweep(GibbsState(0, z, doc_of, words, n_dk, n_kw, n_k))
    vbeta = n_vocab * beta
    for sweep in range(1, iterations + 1):
        uniforms = rng.random(words.shape[0])
        _sweep(words, doc_of, z, n_dk, n_kw, n_k, alpha, beta, vbeta, uniforms)
        if on_sweep is not None:
            on_sweep(GibbsState(sweep, z, doc_of, words, n_dk, n_kw, n_k))

    theta = (n_dk + alpha) / (n_dk.sum(axis=1, keepdims=True) + n_topics * alpha)
    theta /= theta.sum(axis=1, keepdims=True)
    return TopicModel(
        n_topics=n_topics,
        alpha=alpha,
        beta=beta,
        vocab=vocab,
        topic_term=n_kw,
        theta=theta.T.copy(),
        doc_ids=list(doc_ids),
        iterations=iterations,
        seed=seed,
    )


def infer_theta(
    model: TopicModel,
    doc: TermBag,
    iterations: int = FOLD_IN_SWEEPS,
    seed: int = 0,
    average_last: int = FOLD_IN_AVERAGE,
) -> np.ndarray:
    """Topic distribution of an unseen document by Gibbs fold-in.

    Topic-term counts stay frozen; only the new document's assignments are
    resampled. The returned distribution averages the smoothed estimate over
    the last ``average_last`` sweeps. Out-of-vocabulary terms are ignored and
    a document with no known terms gets the uniform distribution.
    """
    k = model.n_topics
    words = model.term_ids(doc)
    if words.shape[0] == 0 or k == 1:
        return np.full(k, 1.0 / k)
    iterations = max(1, iterations)
    keep = max(1, min(average_last, iterations))

    rng = np.random.default_rng(seed)
    z = rng.integers(0, k, size=words.shape[0]).astype(np.int64)
    n_dk = np.bincount(z, minlength=k).astype(np.int64)
    n_kw = model.topic_term
    n_k = model.topic_totals
    vbeta = len(model.vocab) * model.beta
    acc = np.zeros(k)
    for sweep in range(iterations):
        _fold_in_sweep(words, z, n_dk, n_kw, n_k, model.alpha, model.beta, vbeta, rng.random(words.shape[0]))
        if sweep >= iterations - keep:
            acc += (n_dk + model.alpha) / (words.shape[0] + k * model.alpha)
    return acc / acc.sum()


def topic_similarity(theta_q: Sequence[float], theta_d: Sequence[float]) -> float:
    """Cosine similarity of two topic distributions (0 if either is all zeros)."""
    a = np.asarray(theta_q, dtype=float)
    b = np.asarray(theta_d, dtype=float)
    if a.shape != b.shape:
        raise InvalidInputError(f"distribution lengths differ: {a.shape[0]} vs {b.shape[0]}")
    na, nb = math.sqrt(float(a @ a)), math.sqrt(float(b @ b))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return min(1.0, max(0.0, float(a @ b) / (na * nb)))
