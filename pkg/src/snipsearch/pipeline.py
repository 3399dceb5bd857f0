"""Two-stage recommendation: BM25 candidates, then MLR re-ranking."""

from __future__ import annotations

import dataclasses
import os
import tempfile
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from snipsearch.errors import ArtifactMismatchError, EmptyQueryError, InvalidInputError
from snipsearch.features import (
    Instance,
    LabeledSet,
    QueryRepr,
    attach_labels,
    build_instance,
    normalize_features,
    read_label_file,
)
from snipsearch.index import Bm25Params, SearchIndex, candidate_set, corpus_hash
from snipsearch.segment import Snippet
from snipsearch.rerank import DEFAULT_EPOCHS, DEFAULT_L2, DEFAULT_LR, MlrModel, RankedEntry, RankedList, rerank
from snipsearch.text import preprocess
from snipsearch.topics import DEFAULT_BETA, FOLD_IN_SWEEPS, TopicModel, infer_theta, train_lda

CONFIG_ENV = "SNIPSEARCH_CONFIG"


@dataclass
class PipelineConfig:
    n_cand: int = 70
    k: int = 10
    k1: float = 1.2
    b: float = 0.75
    topics: int = 100
    lda_iterations: int = 100
    alpha: float | None = None
    beta: float = DEFAULT_BETA
    fold_in_iterations: int = FOLD_IN_SWEEPS
    lr: float = DEFAULT_LR
    epochs: int = DEFAULT_EPOCHS
    l2: float = DEFAULT_L2
    normalize: bool = True
    seed: int = 0

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if not 1 <= self.k <= self.n_cand:
            raise InvalidInputError(f"need 1 <= k <= n_cand, got k={self.k}, n_cand={self.n_cand}")
        if self.topics < 1 or self.lda_iterations < 1 or self.fold_in_iterations < 1:
            raise InvalidInputError("topic count and iteration counts must be >= 1")
        if not self.lr > 0 or self.epochs < 1:
            raise InvalidInputError("lr must be > 0 and epochs >= 1")
        Bm25Params(self.k1, self.b)

    @property
    def bm25(self) -> Bm25Params:
        return Bm25Params(self.k1, self.b)

    def updated(self, **overrides) -> PipelineConfig:
        values = {k: v for k, v in overrides.items() if v is not None}
        return dataclasses.replace(self, **values)


def _coerce(name: str, raw: str):
    ftype = {f.name: f.type for f in dataclasses.fields(PipelineConfig)}[name]
    raw = raw.strip()
    try:
        if ftype == "bool":
            if raw.lower() in ("1", "true", "yes", "on"):
                return True
            if raw.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if ftype == "int":
            return int(raw)
        if raw.lower() in ("", "none") and "None" in ftype:
            return None
        return float(raw)
    except ValueError:
        raise InvalidInputError(f"config key {name!r}: cannot parse {raw!r} as {ftype}") from None


def parse_config(text: str, source: str = "<config>") -> dict:
    """Parse flat ``key = value`` lines into PipelineConfig overrides."""
    known = {f.name for f in dataclasses.fields(PipelineConfig)}
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidInputError(f"{source}:{lineno}: expected 'key = value'")
        key, raw = (part.strip() for part in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in known:
            raise InvalidInputError(f"{source}:{lineno}: unknown config key {key!r}")
        values[key] = _coerce(key, raw)
    return values


def load_config(path: str | Path | None = None, **overrides) -> PipelineConfig:
    """Defaults, then the config file (explicit path or ``$SNIPSEARCH_CONFIG``), then overrides."""
    values: dict = {}
    path = path or os.environ.get(CONFIG_ENV)
    if path:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise InvalidInputError(f"cannot read config {path}: {exc}") from exc
        values.update(parse_config(text, str(path)))
    values.update({k: v for k, v in overrides.items() if v is not None})
    return PipelineConfig(**values)


def atomic_write(path: str | Path, data: str) -> None:
    """Write ``data`` to a temp file beside ``path`` and rename it into place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def train_topic_model(snippets: Sequence[Snippet], config: PipelineConfig) -> TopicModel:
    """LDA over the preprocessed content field of every snippet, tagged with the corpus hash."""
    model = train_lda(
        [preprocess(s.content) for s in snippets],
        n_topics=config.topics,
        iterations=config.lda_iterations,
        alpha=config.alpha,
        beta=config.beta,
        seed=config.seed,
        doc_ids=[s.id for s in snippets],
    )
    model.corpus_hash = corpus_hash(snippets)
    return model


def query_seed(seed: int, query_id: str) -> int:
    """Per-query fold-in seed, independent of the order queries are processed in."""
    return (seed * 1_000_003 + zlib.crc32(query_id.encode("utf-8"))) % (2**32)


def represent_query(query_id: str, text: str, model: TopicModel, config: PipelineConfig) -> QueryRepr:
    terms = preprocess(text)
    if not terms:
        raise EmptyQueryError(f"query {query_id!r} has no terms after preprocessing: {text!r}")
    theta = infer_theta(model, terms, iterations=config.fold_in_iterations, seed=query_seed(config.seed, query_id))
    return QueryRepr(query_id, terms, theta)


def check_artifacts(index: SearchIndex, model: TopicModel, mlr: MlrModel | None = None) -> None:
    if index.corpus_hash != model.corpus_hash:
        raise ArtifactMismatchError("index and topic model were built from different corpora")
    if mlr is not None and mlr.corpus_hash and mlr.corpus_hash != index.corpus_hash:
        raise ArtifactMismatchError("ranking model was trained on features from a different corpus")


def query_instances(
    query_id: str, text: str, index: SearchIndex, model: TopicModel, config: PipelineConfig
) -> list[Instance]:
    """Candidate set for one query turned into (optionally normalized) instances."""
    check_artifacts(index, model)
    query = represent_query(query_id, text, model, config)
    cands = candidate_set(index, query.terms, config.n_cand, query_id)
    instances = [build_instance(query, sid, index, model) for sid in cands.ids]
    if instances and config.normalize:
        instances = normalize_features(instances)
    return instances


def recommend(
    query_text: str,
    index: SearchIndex,
    topic_model: TopicModel,
    mlr_model: MlrModel,
    config: PipelineConfig | None = None,
    query_id: str = "q",
) -> RankedList:
    """Top-K snippets for a free-form query.

    Raises:
        ArtifactMismatchError: If the artifacts disagree on the corpus.
        EmptyQueryError: If nothing is left of the query after preprocessing.
    """
    config = config or PipelineConfig()
    check_artifacts(index, topic_model, mlr_model)
    # features must be scaled the way the model saw them in training
    config = dataclasses.replace(config, normalize=mlr_model.normalized)
    instances = query_instances(query_id, query_text, index, topic_model, config)
    if not instances:
        return RankedList(query_id, [])
    return rerank(mlr_model, instances, config.k)


def bm25_baseline(instances: Sequence[Instance], k: int) -> RankedList:
    """Top-K of the candidate set in stage-1 order (no re-ranking)."""
    ordered = sorted(instances, key=lambda i: (-i.bm25, i.snippet_id))[:k]
    qid = instances[0].query_id if instances else ""
    return RankedList(qid, [RankedEntry(i.snippet_id, 0, 0.0) for i in ordered])


def read_queries(path: str | Path) -> list[tuple[str, str]]:
    """One query per line, optionally ``id<TAB>text``; bare lines get ids ``q1, q2, ...``."""
    out = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        if "\t" in line:
            qid, text = line.split("\t", 1)
            out.append((qid.strip(), text.strip()))
        else:
            out.append((f"q{lineno}", line.strip()))
    ids = [q for q, _ in out]
    if len(set(ids)) != len(ids):
        raise InvalidInputError(f"{path}: duplicate query ids")
    return out


def build_instances(
    queries: Iterable[tuple[str, str]], index: SearchIndex, model: TopicModel, config: PipelineConfig
) -> list[Instance]:
    out: list[Instance] = []
    for qid, text in queries:
        out.extend(query_instances(qid, text, index, model, config))
    return out


def build_training_set(
    training_queries: Iterable[tuple[str, str]],
    labels_path: str | Path,
    index: SearchIndex,
    topic_model: TopicModel,
    config: PipelineConfig | None = None,
) -> LabeledSet:
    """Candidate instances of every training query joined with their labels.

    Raises:
        LabelError: If any (query, candidate) pair has no label row.
    """
    config = config or PipelineConfig()
    instances = build_instances(training_queries, index, topic_model, config)
    return attach_labels(instances, read_label_file(labels_path), provenance=f"labels={labels_path}")
