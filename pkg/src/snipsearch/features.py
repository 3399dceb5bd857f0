"""Nine-feature instance vectors for (query, candidate snippet) pairs."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from snipsearch.errors import InvalidInputError, LabelError
from snipsearch.index import SearchIndex, bm25_score
from snipsearch.text import TermBag
from snipsearch.topics import TopicModel, topic_similarity

FEATURE_NAMES = ("f1", "f2", "f3", "f4", "f5", "f6", "f7", "f8", "f9")
FEATURE_FIELDS = (
    "content",
    "full_title",
    "simple_title",
    "sibling_names",
    "imports_android",
    "imports_java",
    "imports_other",
)
LABELS = (1, 2, 3, 4)
INSTANCE_FORMAT_VERSION = 1


@dataclass
class Instance:
    """One candidate snippet for one query.

    ``raw`` holds f1..f9 as computed; ``features`` is what the model sees
    (the normalized copy, or ``raw`` itself when normalization is off).
    ``bm25`` is the stage-1 content score, kept for tie-breaking.
    """

    query_id: str
    snippet_id: str
    raw: tuple[float, ...]
    features: tuple[float, ...] = ()
    label: int | None = None
    bm25: float = 0.0
    corpus_hash: str = ""

    def __post_init__(self):
        if not self.features:
            self.features = tuple(self.raw)

    @property
    def key(self) -> tuple[str, str]:
        return self.query_id, self.snippet_id

    def to_dict(self) -> dict:
        return {
            "query_id": self.query_id,
            "snippet_id": self.snippet_id,
            "raw": list(self.raw),
            "features": list(self.features),
            "label": self.label,
            "bm25": self.bm25,
            "corpus_hash": self.corpus_hash,
            "format_version": INSTANCE_FORMAT_VERSION,
        }

    @classmethod
    def from_dict(cls, d: dict) -> Instance:
        if d.get("format_version", INSTANCE_FORMAT_VERSION) != INSTANCE_FORMAT_VERSION:
            raise InvalidInputError(f"unsupported instance format version {d.get('format_version')}")
        try:
            return cls(
                query_id=str(d["query_id"]),
                snippet_id=str(d["snippet_id"]),
                raw=tuple(float(x) for x in d["raw"]),
                features=tuple(float(x) for x in d.get("features") or d["raw"]),
                label=None if d.get("label") is None else int(d["label"]),
                bm25=float(d.get("bm25", d["raw"][0])),
                corpus_hash=str(d.get("corpus_hash", "")),
            )
        except (KeyError, TypeError, ValueError, IndexError) as exc:
            raise InvalidInputError(f"bad instance record: {exc}") from exc


@dataclass
class LabeledSet:
    instances: list[Instance]
    provenance: str = ""

    def __len__(self) -> int:
        return len(self.instances)

    def matrix(self, drop: Sequence[int] = ()) -> tuple[np.ndarray, np.ndarray]:
        """Feature matrix and label vector, optionally without some feature columns."""
        keep = [j for j in range(len(FEATURE_NAMES)) if j not in set(drop)]
        x = np.array([[inst.features[j] for j in keep] for inst in self.instances], dtype=float)
        y = np.array([inst.label for inst in self.instances], dtype=np.int64)
        return x.reshape(len(self.instances), len(keep)), y


@dataclass
class QueryRepr:
    """A preprocessed query plus its inferred topic distribution."""

    query_id: str
    terms: TermBag
    theta: np.ndarray = field(repr=False)


def build_instance(query: QueryRepr, snippet_id: str, index: SearchIndex, model: TopicModel) -> Instance:
    """Compute f1..f9 for one candidate; the label is left empty."""
    pos = index.position(snippet_id)
    values = [bm25_score(index, name, query.terms, snippet_id) for name in FEATURE_FIELDS]
    values.append(topic_similarity(query.theta, model.doc_theta(snippet_id)))
    values.append(float(index.docs[pos].line_count))
    return Instance(
        query_id=query.query_id,
        snippet_id=snippet_id,
        raw=tuple(values),
        bm25=values[0],
        corpus_hash=index.corpus_hash,
    )


def normalize_features(instances: Sequence[Instance]) -> list[Instance]:
    """Min-max rescale every feature to [0, 1] within each query's group.

    A feature that is constant within a group maps to 0. Input order is kept.
    """
    if not instances:
        raise InvalidInputError("cannot normalize an empty instance group")
    groups: dict[str, list[int]] = {}
    for i, inst in enumerate(instances):
        groups.setdefault(inst.query_id, []).append(i)
    raw = np.array([inst.raw for inst in instances], dtype=float)
    out = np.zeros_like(raw)
    for rows in groups.values():
        block = raw[rows]
        lo, hi = block.min(axis=0), block.max(axis=0)
        span = hi - lo
        scaled = np.where(span > 0, (block - lo) / np.where(span > 0, span, 1.0), 0.0)
        out[rows] = np.clip(scaled, 0.0, 1.0)
    return [replace(inst, features=tuple(float(v) for v in out[i])) for i, inst in enumerate(instances)]


def read_label_file(path: str | Path) -> dict[tuple[str, str], int]:
    """Parse a ``query_id<TAB>snippet_id<TAB>score`` file with a header row."""
    labels: dict[tuple[str, str], int] = {}
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh, delimiter="\t")
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:3]] != ["query_id", "snippet_id", "score"]:
            raise LabelError(f"{path}: expected header 'query_id\\tsnippet_id\\tscore'")
        for lineno, row in enumerate(reader, 2):
            if not row or not "".join(row).strip():
                continue
            if len(row) < 3:
                raise LabelError(f"{path}:{lineno}: expected 3 columns, got {len(row)}")
            qid, sid, raw_score = row[0].strip(), row[1].strip(), row[2].strip()
            try:
                score = int(raw_score)
            except ValueError:
                raise LabelError(f"{path}:{lineno}: score {raw_score!r} is not an integer") from None
            if score not in LABELS:
                raise LabelError(f"{path}:{lineno}: score {score} outside 1..4 for ({qid}, {sid})")
            if (qid, sid) in labels:
                raise LabelError(f"{path}:{lineno}: duplicate label for ({qid}, {sid})")
            labels[(qid, sid)] = score
    return labels


def attach_labels(instances: Iterable[Instance], labels: dict[tuple[str, str], int], provenance: str = "") -> LabeledSet:
    out, missing, seen = [], [], set()
    for inst in instances:
        if inst.key in seen:
            raise LabelError(f"duplicate instance ({inst.query_id}, {inst.snippet_id})")
        seen.add(inst.key)
        if inst.key not in labels:
            missing.append(inst.key)
            continue
        out.append(replace(inst, label=labels[inst.key]))
    if missing:
        shown = ", ".join(f"({q}, {s})" for q, s in missing[:20])
        more = f" and {len(missing) - 20} more" if len(missing) > 20 else ""
        raise LabelError(f"{len(missing)} instance(s) without a label: {shown}{more}")
    return LabeledSet(out, provenance)


def load_labels(path: str | Path, instances: Iterable[Instance]) -> LabeledSet:
    """Join relevance labels from ``path`` onto ``instances``.

    Raises:
        LabelError: For a score outside 1..4, a duplicate row, or any
            instance the file does not cover (all such ids are listed).
    """
    return attach_labels(instances, read_label_file(path), provenance=f"labels={path}")


def write_instances(instances: Iterable[Instance], fh) -> None:
    for inst in instances:
        fh.write(json.dumps(inst.to_dict(), sort_keys=True) + "\n")


def read_instances(path: str | Path) -> list[Instance]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                out.append(Instance.from_dict(json.loads(line)))
            except json.JSONDecodeError as exc:
                raise InvalidInputError(f"{path}:{lineno}: {exc}") from exc
    for inst in out:
        if not all(math.isfinite(v) for v in inst.features):
            raise InvalidInputError(f"{path}: non-finite feature in ({inst.query_id}, {inst.snippet_id})")
    return out
