"""Multi-field inverted index with BM25 scoring and candidate-set generation."""

from __future__ import annotations

import hashlib
import json
import math
from collections import Counter
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

from snipsearch.errors import ArtifactMismatchError, InvalidInputError
from snipsearch.segment import Snippet
from snipsearch.text import TermBag, preprocess

INDEX_MAGIC = "snipsearch-index"
INDEX_FORMAT_VERSION = 1

FIELDS = (
    "content",
    "full_title",
    "simple_title",
    "sibling_names",
    "imports_android",
    "imports_java",
    "imports_other",
)
MIN_CANDIDATE_LINES = 5
PREVIEW_LINES = 3


@dataclass(frozen=True)
class Bm25Params:
    k1: float = 1.2
    b: float = 0.75

    def __post_init__(self):
        if not self.k1 >= 0:
            raise InvalidInputError(f"k1 must be >= 0, got {self.k1}")
        if not 0 <= self.b <= 1:
            raise InvalidInputError(f"b must be in [0, 1], got {self.b}")


def field_text(snippet: Snippet, name: str) -> str:
    """Raw text of one indexable field of a snippet."""
    value = getattr(snippet, name)
    if isinstance(value, str):
        return value
    return " ".join(value)


def corpus_hash(snippets: Iterable[Snippet]) -> str:
    """SHA-256 over the canonical JSON of every snippet, in corpus order."""
    h = hashlib.sha256()
    for s in snippets:
        h.update(json.dumps(s.to_dict(), sort_keys=True, ensure_ascii=False).encode("utf-8"))
        h.update(b"\n")
    return h.hexdigest()


@dataclass
class FieldIndex:
    postings: dict[str, list[tuple[int, int]]] = field(default_factory=dict)
    lengths: list[int] = field(default_factory=list)

    @cached_property
    def avgdl(self) -> float:
        return sum(self.lengths) / len(self.lengths) if self.lengths else 0.0


@dataclass
class DocInfo:
    id: str
    simple_title: str
    line_count: int
    preview: str = ""


@dataclass
class SearchIndex:
    """Per-field postings plus the document statistics BM25 needs.

    Documents are addressed internally by their position in corpus order;
    ``docs[pos]`` carries the snippet id and the metadata the filters use.
    """

    fields: tuple[str, ...]
    params: Bm25Params
    docs: list[DocInfo]
    field_index: dict[str, FieldIndex]
    corpus_hash: str = ""
    _pos: dict[str, int] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self._pos = {d.id: i for i, d in enumerate(self.docs)}

    @property
    def n_docs(self) -> int:
        return len(self.docs)

    def position(self, doc_id: str) -> int:
        try:
            return self._pos[doc_id]
        except KeyError:
            raise InvalidInputError(f"unknown snippet id: {doc_id}") from None

    def get_field(self, name: str) -> FieldIndex:
        try:
            return self.field_index[name]
        except KeyError:
            raise InvalidInputError(f"unknown field: {name!r}") from None

    def doc_freq(self, name: str, term: str) -> int:
        return len(self.get_field(name).postings.get(term, ()))

    # -- serialization -------------------------------------------------

    def to_json(self) -> str:
        payload = {
            "magic": INDEX_MAGIC,
            "format_version": INDEX_FORMAT_VERSION,
            "params": {"k1": self.params.k1, "b": self.params.b},
            "fields": list(self.fields),
            "corpus_hash": self.corpus_hash,
            "docs": [[d.id, d.simple_title, d.line_count, d.preview] for d in self.docs],
            "field_index": {
                name: {
                    "lengths": fi.lengths,
                    "postings": {t: [list(p) for p in ps] for t, ps in sorted(fi.postings.items())},
                }
                for name, fi in self.field_index.items()
            },
        }
        return json.dumps(payload, sort_keys=True, separators=(",", ":"), ensure_ascii=False)

    @classmethod
    def from_json(cls, text: str) -> SearchIndex:
        try:
            payload = json.loads(text)
        except json.JSONDecodeError as exc:
            raise InvalidInputError(f"index file is not valid JSON: {exc}") from exc
        if payload.get("magic") != INDEX_MAGIC:
            raise ArtifactMismatchError("not a snipsearch index file")
        if payload.get("format_version") != INDEX_FORMAT_VERSION:
            raise ArtifactMismatchError(f"unsupported index format version {payload.get('format_version')}")
        field_index = {
            name: FieldIndex(
                postings={t: [(int(d), int(tf)) for d, tf in ps] for t, ps in fi["postings"].items()},
                lengths=[int(x) for x in fi["lengths"]],
            )
            for name, fi in payload["field_index"].items()
        }
        return cls(
            fields=tuple(payload["fields"]),
            params=Bm25Params(**payload["params"]),
            docs=[DocInfo(*row) for row in payload["docs"]],
            field_index=field_index,
            corpus_hash=payload["corpus_hash"],
        )


def build_index(
    corpus: Iterable[Snippet],
    fields: Sequence[str] = FIELDS,
    params: Bm25Params | None = None,
    stopwords=None,
) -> SearchIndex:
    """Index every field of every snippet from its preprocessed term bag.

    Raises:
        InvalidInputError: On a duplicate snippet id or an unknown field name.
    """
    snippets = list(corpus)
    for name in fields:
        if name not in FIELDS:
            raise InvalidInputError(f"unknown field: {name!r}")
    seen: set[str] = set()
    docs = []
    for s in snippets:
        if s.id in seen:
            raise InvalidInputError(f"duplicate snippet id: {s.id}")
        seen.add(s.id)
        preview = "\n".join(s.content.split("\n")[:PREVIEW_LINES])
        docs.append(DocInfo(s.id, s.simple_title, s.line_count, preview))

    field_index = {}
    for name in fields:
        fi = FieldIndex()
        for pos, s in enumerate(snippets):
            terms = preprocess(field_text(s, name), stopwords)
            fi.lengths.append(len(terms))
            for term, tf in Counter(terms).items():
                fi.postings.setdefault(term, []).append((pos, tf))
        field_index[name] = fi

    return SearchIndex(
        fields=tuple(fields),
        params=params or Bm25Params(),
        docs=docs,
        field_index=field_index,
        corpus_hash=corpus_hash(snippets),
    )


def idf(index: SearchIndex, field_name: str, term: str) -> float:
    """Smoothed inverse document frequency, ``ln(1 + (N - n + 0.5) / (n + 0.5))``."""
    n = index.doc_freq(field_name, term)
    return idf_value(index.n_docs, n)


def idf_value(n_docs: int, doc_freq: int) -> float:
    return math.log(1.0 + (n_docs - doc_freq + 0.5) / (doc_freq + 0.5))


def _tf_weight(tf: int, dl: int, avgdl: float, params: Bm25Params) -> float:
    norm = 1.0 - params.b + params.b * (dl / avgdl)
    return tf * (params.k1 + 1.0) / (tf + params.k1 * norm)


def score_all(index: SearchIndex, field_name: str, query: TermBag) -> dict[int, float]:
    """BM25 score of every document sharing at least one term with ``query``.

    Keys are document positions. Each distinct query term contributes once.
    """
    fi = index.get_field(field_name)
    avgdl = fi.avgdl
    scores: dict[int, float] = {}
    for term in sorted(set(query)):
        plist = fi.postings.get(term)
        if not plist:
            continue
        w = idf_value(index.n_docs, len(plist))
        for pos, tf in plist:
            scores[pos] = scores.get(pos, 0.0) + w * _tf_weight(tf, fi.lengths[pos], avgdl, index.params)
    return scores


def bm25_score(index: SearchIndex, field_name: str, query: TermBag, doc_id: str) -> float:
    """BM25 similarity between ``query`` and one document's field."""
    fi = index.get_field(field_name)
    pos = index.position(doc_id)
    avgdl = fi.avgdl
    total = 0.0
    for term in sorted(set(query)):
        plist = fi.postings.get(term)
        if not plist:
            continue
        tf = _lookup_tf(plist, pos)
        if tf:
            total += idf_value(index.n_docs, len(plist)) * _tf_weight(tf, fi.lengths[pos], avgdl, index.params)
    return total


def _lookup_tf(plist: list[tuple[int, int]], pos: int) -> int:
    # postings are sorted by position
    lo, hi = 0, len(plist)
    while lo < hi:
        mid = (lo + hi) // 2
        if plist[mid][0] < pos:
            lo = mid + 1
        else:
            hi = mid
    if lo < len(plist) and plist[lo][0] == pos:
        return plist[lo][1]
    return 0


@dataclass
class CandidateSet:
    query_id: str
    entries: list[tuple[str, float]]

    @property
    def ids(self) -> list[str]:
        return [doc_id for doc_id, _ in self.entries]


def rank_eligible(index: SearchIndex, scores: dict[int, float], n_cand: int) -> list[tuple[str, float]]:
    """Apply the line-count and duplicate filters to raw scores and cut the top ``n_cand``."""
    ranked = sorted(scores.items(), key=lambda kv: (-kv[1], index.docs[kv[0]].id))
    out: list[tuple[str, float]] = []
    seen: set[tuple[str, float]] = set()
    for pos, score in ranked:
        doc = index.docs[pos]
        if doc.line_count < MIN_CANDIDATE_LINES:
            continue
        key = (doc.simple_title, round(score, 10))
        if key in seen:
            continue
        seen.add(key)
        out.append((doc.id, score))
        if len(out) == n_cand:
            break
    return out


def candidate_set(index: SearchIndex, query: TermBag, n_cand: int, query_id: str = "") -> CandidateSet:
    """Top-``n_cand`` snippets by content-field BM25, after both filters.

    Snippets shorter than five lines are dropped, and of several snippets
    with the same method name and the same score only the first is kept.
    Ties are broken by ascending snippet id.
    """
    if n_cand < 1:
        raise InvalidInputError(f"n_cand must be >= 1, got {n_cand}")
    scores = score_all(index, "content", query)
    return CandidateSet(query_id, rank_eligible(index, scores, n_cand))
