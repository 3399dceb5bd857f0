"""Multinomial logistic regression over relevance scores 1..4 and the
bucket-wise Top-K re-ranking built on its predictions."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from numba import njit

from snipsearch.errors import ArtifactMismatchError, InvalidInputError
from snipsearch.features import LABELS, Instance, LabeledSet

MLR_MAGIC = "snipsearch-mlr"
MLR_FORMAT_VERSION = 1
N_CLASSES = len(LABELS)

DEFAULT_LR = 0.1
DEFAULT_EPOCHS = 200
DEFAULT_L2 = 1e-4


@dataclass
class MlrModel:
    """Weights ``(n_classes, n_features + 1)``; the last column is the bias.

    Row ``i`` belongs to relevance score ``LABELS[i]``.
    """

    weights: np.ndarray
    lr: float = DEFAULT_LR
    epochs: int = DEFAULT_EPOCHS
    l2: float = DEFAULT_L2
    seed: int = 0
    normalized: bool = True
    dropped: tuple[int, ...] = ()
    corpus_hash: str = ""
    loss_history: list[float] = field(default_factory=list)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        if self.weights.ndim != 2 or self.weights.shape[0] != N_CLASSES:
            raise InvalidInputError(f"weights must have shape (4, d), got {self.weights.shape}")
        if not np.all(np.isfinite(self.weights)):
            raise InvalidInputError("model weights must be finite")

    @property
    def n_features(self) -> int:
        return self.weights.shape[1] - 1

    @classmethod
    def zeros(cls, n_features: int = 9, **kwargs) -> MlrModel:
        return cls(np.zeros((N_CLASSES, n_features + 1)), **kwargs)

    def project(self, features: Sequence[float]) -> np.ndarray:
        """Drop the feature columns this model was trained without."""
        if not self.dropped:
            return np.asarray(features, dtype=float)
        return np.array([v for j, v in enumerate(features) if j not in self.dropped], dtype=float)

    def to_json(self) -> str:
        payload = {
            "magic": MLR_MAGIC,
            "format_version": MLR_FORMAT_VERSION,
            "labels": list(LABELS),
            "n_features": self.n_features,
            "weights": {str(label): row.tolist() for label, row in zip(LABELS, self.weights)},
            "bias": True,
            "normalized": self.normalized,
            "dropped": list(self.dropped),
            "hyperparameters": {"lr": self.lr, "epochs": self.epochs, "l2": self.l2, "seed": self.seed},
            "corpus_hash": self.corpus_hash,
            "loss_history": self.loss_history,
        }
        return json.dumps(payload, sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str) -> MlrModel:
        try:
            p = json.loads(text)
        except json.JSONDecodeError as exc:
            raise InvalidInputError(f"model file is not valid JSON: {exc}") from exc
        if p.get("magic") != MLR_MAGIC:
            raise ArtifactMismatchError("not a snipsearch model file")
        if p.get("format_version") != MLR_FORMAT_VERSION:
            raise ArtifactMismatchError(f"unsupported model format version {p.get('format_version')}")
        hp = p["hyperparameters"]
        return cls(
            weights=np.array([p["weights"][str(label)] for label in LABELS], dtype=float),
            lr=hp["lr"],
            epochs=hp["epochs"],
            l2=hp["l2"],
            seed=hp["seed"],
            normalized=p["normalized"],
            dropped=tuple(p.get("dropped", ())),
            corpus_hash=p.get("corpus_hash", ""),
            loss_history=p.get("loss_history", []),
        )


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _augment(x: np.ndarray) -> np.ndarray:
    return np.concatenate([x, np.ones(x.shape[:-1] + (1,))], axis=-1)


def predict_probs(model: MlrModel, features: Sequence[float]) -> np.ndarray:
    """Probability of each relevance score 1..4 for one feature vector."""
    x = np.asarray(features, dtype=float)
    if x.shape != (model.n_features,):
        raise InvalidInputError(f"expected {model.n_features} features, got {x.shape}")
    if not np.all(np.isfinite(x)):
        raise InvalidInputError("features must be finite")
    return _softmax(model.weights @ _augment(x))


@njit(cache=True)
def _sgd_epoch(w, xa, idx, order, lr, l2, present):
    n_classes, dim = w.shape
    p = np.empty(n_classes)
    for i in order:
        top = -np.inf
        for c in range(n_classes):
            s = 0.0
            for j in range(dim):
                s += w[c, j] * xa[i, j]
            p[c] = s
            if s > top:
                top = s
        total = 0.0
        for c in range(n_classes):
            p[c] = np.exp(p[c] - top)
            total += p[c]
        for c in range(n_classes):
            p[c] /= total
        p[idx[i]] -= 1.0
        for c in range(n_classes):
            if not present[c]:
                continue
            for j in range(dim):
                g = p[c] * xa[i, j]
                if j < dim - 1:
                    g += l2 * w[c, j]
                w[c, j] -= lr * g


def loss_and_grad(weights: np.ndarray, x: np.ndarray, y: np.ndarray, l2: float) -> tuple[float, np.ndarray]:
    """Mean cross-entropy plus ``l2/2 * ||W||^2`` (bias column excluded), and its gradient.

    Args:
        weights: ``(n_classes, d + 1)``.
        x: ``(n, d)`` features without the bias column.
        y: ``(n,)`` labels in 1..4.
    """
    xa = _augment(np.atleast_2d(x))
    idx = np.asarray(y) - 1
    probs = _softmax(xa @ weights.T)
    n = xa.shape[0]
    nll = -np.log(np.clip(probs[np.arange(n), idx], 1e-300, None)).mean()
    wreg = weights[:, :-1]
    loss = nll + 0.5 * l2 * float((wreg**2).sum())
    resid = probs.copy()
    resid[np.arange(n), idx] -= 1.0
    grad = resid.T @ xa / n
    grad[:, :-1] += l2 * wreg
    return float(loss), grad


def train_mlr(
    train: LabeledSet | tuple[np.ndarray, np.ndarray],
    lr: float = DEFAULT_LR,
    epochs: int = DEFAULT_EPOCHS,
    l2: float = DEFAULT_L2,
    seed: int = 0,
    drop: Sequence[int] = (),
) -> MlrModel:
    """Fit the model by per-instance SGD from zero weights.

    Each epoch visits the instances in a fresh seeded permutation. Classes
    that never occur in ``train`` keep their initial zero weights. The
    full regularized training loss after each epoch is kept in
    ``loss_history``. With features in [0, 1] that loss is non-increasing
    epoch over epoch for ``lr <= 0.01``; the default 0.1 converges faster
    but lets it jitter slightly.

    Args:
        train: Labeled instances, or an ``(x, y)`` pair of arrays.
        lr: Step size, > 0.
        epochs: Passes over the data, >= 1.
        l2: Squared-norm penalty on the non-bias weights.
        seed: Shuffle seed.
        drop: Feature columns to leave out (ablation).
    """
    if not lr > 0:
        raise InvalidInputError(f"learning rate must be > 0, got {lr}")
    if epochs < 1:
        raise InvalidInputError(f"epochs must be >= 1, got {epochs}")
    if isinstance(train, LabeledSet):
        x, y = train.matrix(drop)
        corpus = train.instances[0].corpus_hash if train.instances else ""
    else:
        x, y = (np.asarray(a) for a in train)
        corpus = ""
    if x.shape[0] == 0:
        raise InvalidInputError("training set is empty")
    if not np.all(np.isin(y, LABELS)):
        raise InvalidInputError("training labels must lie in 1..4")

    n, d = x.shape
    xa = _augment(x.astype(float))
    idx = y.astype(np.int64) - 1
    present = np.zeros(N_CLASSES, dtype=bool)
    present[np.unique(idx)] = True
    w = np.zeros((N_CLASSES, d + 1))

    rng = np.random.default_rng(seed)
    history = []
    for _ in range(epochs):
        _sgd_epoch(w, xa, idx, rng.permutation(n), float(lr), float(l2), present)
        history.append(loss_and_grad(w, x, y, l2)[0])

    return MlrModel(
        weights=w,
        lr=lr,
        epochs=epochs,
        l2=l2,
        seed=seed,
        dropped=tuple(sorted(drop)),
        corpus_hash=corpus,
        loss_history=history,
    )


def accuracy(model: MlrModel, x: np.ndarray, y: np.ndarray) -> float:
    probs = _softmax(_augment(np.asarray(x, dtype=float)) @ model.weights.T)
    return float(np.mean(np.array([predicted_score(p) for p in probs]) == np.asarray(y)))


def predicted_score(probs: Sequence[float]) -> int:
    """Relevance score with the highest probability; ties go to the higher score."""
    best = len(probs) - 1
    for i in range(len(probs) - 1, -1, -1):
        if probs[i] > probs[best]:
            best = i
    return LABELS[best]


@dataclass(frozen=True)
class RankedEntry:
    snippet_id: str
    predicted_score: int
    probability: float


@dataclass
class RankedList:
    query_id: str
    entries: list[RankedEntry]

    @property
    def ids(self) -> list[str]:
        return [e.snippet_id for e in self.entries]

    def to_records(self) -> list[dict]:
        return [
            {
                "query_id": self.query_id,
                "rank": r,
                "snippet_id": e.snippet_id,
                "predicted_score": e.predicted_score,
                "probability": e.probability,
            }
            for r, e in enumerate(self.entries, 1)
        ]


def rank_by_buckets(
    rows: Iterable[tuple[str, Sequence[float], float]], k: int, query_id: str = ""
) -> RankedList:
    """Order candidates by predicted score bucket, then by that score's probability.

    Args:
        rows: ``(snippet_id, probabilities for scores 1..4, stage-1 bm25)``.
        k: Number of results to keep.

    Buckets are emitted 4, 3, 2, 1. Within a bucket, ties in probability fall
    back to higher bm25, then ascending snippet id.
    """
    if k < 1:
        raise InvalidInputError(f"K must be >= 1, got {k}")
    scored = []
    for sid, probs, bm25 in rows:
        score = predicted_score(probs)
        scored.append((score, float(probs[score - 1]), float(bm25), sid))
    scored.sort(key=lambda r: (-r[0], -r[1], -r[2], r[3]))
    return RankedList(query_id, [RankedEntry(sid, s, p) for s, p, _, sid in scored[:k]])


def rerank(model: MlrModel, candidates: Sequence[Instance], k: int) -> RankedList:
    """Predict each candidate's relevance and keep the best ``k`` by bucket order."""
    rows = [(c.snippet_id, predict_probs(model, model.project(c.features)), c.bm25) for c in candidates]
    qid = candidates[0].query_id if candidates else ""
    return rank_by_buckets(rows, k, qid)
