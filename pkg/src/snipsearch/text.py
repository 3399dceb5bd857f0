"""Turn code text and queries into bags of stemmed terms."""

from __future__ import annotations

import re
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Iterable

from nltk.stem.porter import PorterStemmer

TermBag = list[str]

_TOKEN_RE = re.compile(r"[A-Za-z0-9]+")
# order matters: an acronym run yields its last capital to the next word
_PART_RE = re.compile(r"[A-Z]+(?=[A-Z][a-z])|[A-Z]?[a-z]+|[A-Z]+|[0-9]+")

_stemmer = PorterStemmer(mode=PorterStemmer.ORIGINAL_ALGORITHM)


def split_identifier(token: str) -> list[str]:
    """Split a camel-case / alphanumeric identifier into lowercase parts.

    >>> split_identifier("HTTPServer")
    ['http', 'server']
    >>> split_identifier("base64Encode")
    ['base', '64', 'encode']
    """
    return [p.lower() for p in _PART_RE.findall(token)]


def load_stopwords(path: str | Path | None = None) -> frozenset[str]:
    """Read a stopword file (one word per line, ``#`` comments skipped).

    Without ``path`` the bundled English + Java keyword list is used.
    """
    if path is None:
        text = resources.files("snipsearch").joinpath("data/stopwords.txt").read_text(encoding="utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    words = (w.strip().lower() for w in text.splitlines())
    return frozenset(w for w in words if w and not w.startswith("#"))


@lru_cache(maxsize=1)
def default_stopwords() -> frozenset[str]:
    return load_stopwords()


@lru_cache(maxsize=65536)
def stem(word: str) -> str:
    """Porter stem, repeated until the word stops changing."""
    prev = word
    while True:
        cur = _stemmer.stem(prev)
        if cur == prev:
            return cur
        prev = cur


def preprocess(text: str, stopwords: Iterable[str] | None = None) -> TermBag:
    """Tokenize, camel-case split, drop stopwords and 1-char parts, then stem.

    The stopword and length checks run again on the stem so that no output
    term is itself a stopword and re-processing the output is a no-op.
    """
    stops = default_stopwords() if stopwords is None else stopwords
    terms: TermBag = []
    for token in _TOKEN_RE.findall(text):
        for part in split_identifier(token):
            if len(part) < 2 or part in stops:
                continue
            s = stem(part)
            if len(s) < 2 or s in stops:
                continue
            terms.append(s)
    return terms
