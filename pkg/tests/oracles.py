"""Independent reference computations used as test oracles.

Nothing here imports the package's scoring, ranking or metric code.
"""

from __future__ import annotations

import math
import random


def naive_bm25(docs: list[list[str]], query: list[str], k1: float = 1.2, b: float = 0.75) -> list[float]:
    """Score every document by scanning the raw term lists; no index."""
    n = len(docs)
    avgdl = sum(len(d) for d in docs) / n if n else 0.0
    scores = []
    for doc in docs:
        s = 0.0
        for t in set(query):
            tf = doc.count(t)
            if tf == 0:
                continue
            nt = sum(1 for d in docs if t in d)
            idf = math.log(1 + (n - nt + 0.5) / (nt + 0.5))
            s += idf * (tf * (k1 + 1)) / (tf + k1 * (1 - b + b * len(doc) / avgdl))
        scores.append(s)
    return scores


def naive_ranking(ids, titles, lines, scores, n_cand):
    """Full-corpus ranking with the length and duplicate filters, by brute force."""
    order = sorted(range(len(ids)), key=lambda i: (-scores[i], ids[i]))
    out = []
    kept: list[tuple[str, float]] = []
    for i in order:
        if scores[i] <= 0 or lines[i] < 5:
            continue
        if any(t == titles[i] and abs(s - scores[i]) < 1e-12 for t, s in kept):
            continue
        kept.append((titles[i], scores[i]))
        out.append((ids[i], scores[i]))
    return out[:n_cand]


def average_ranks(values):
    """1-based ranks, ties sharing the mean of the positions they span."""
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        r = (i + j) / 2 + 1
        for m in range(i, j + 1):
            ranks[order[m]] = r
        i = j + 1
    return ranks


def pearson(x, y):
    mx, my = sum(x) / len(x), sum(y) / len(y)
    sxy = sum((a - mx) * (b - my) for a, b in zip(x, y))
    sxx = sum((a - mx) ** 2 for a in x)
    syy = sum((b - my) ** 2 for b in y)
    return sxy / math.sqrt(sxx * syy)


# short nonsense words that survive tokenizing, stemming and stopword removal unchanged
STABLE_WORDS = [
    w for w in (c + v + e for c in "bdfgklmnprstvz" for v in "aiou" for e in "bdgkmnpt") if w not in {"but", "did", "not"}
]


def random_corpus(rng: random.Random, n_docs: int, vocab_size: int = 30, max_len: int = 25):
    vocab = STABLE_WORDS[:vocab_size]
    # zipf-ish skew so some terms are common and some rare
    weights = [1.0 / (i + 1) for i in range(vocab_size)]
    return [rng.choices(vocab, weights, k=rng.randint(0, max_len)) for _ in range(n_docs)], vocab


def synthetic_topics(seed: int = 0, n_topics: int = 3, words_per_topic: int = 20, n_docs: int = 50, doc_len: int = 100):
    """Documents drawn from topics with disjoint vocabularies.

    Returns (docs, generating topic-term distributions as K x V rows, vocab).
    Each document mixes topics with a sparse Dirichlet so most tokens come
    from one topic.
    """
    import numpy as np

    rng = np.random.default_rng(seed)
    vocab = STABLE_WORDS[: n_topics * words_per_topic]
    phi = np.zeros((n_topics, len(vocab)))
    for k in range(n_topics):
        block = rng.dirichlet(np.ones(words_per_topic))
        phi[k, k * words_per_topic:(k + 1) * words_per_topic] = block
    docs = []
    for _ in range(n_docs):
        mix = rng.dirichlet(np.full(n_topics, 0.1))
        topics = rng.choice(n_topics, size=doc_len, p=mix)
        docs.append([vocab[rng.choice(len(vocab), p=phi[k])] for k in topics])
    return docs, phi, vocab


def greedy_topic_match(recovered, generating):
    """Pair rows greedily by descending cosine; returns {generating: (recovered, cosine)}."""
    import numpy as np

    r = recovered / np.linalg.norm(recovered, axis=1, keepdims=True)
    g = generating / np.linalg.norm(generating, axis=1, keepdims=True)
    sims = g @ r.T
    pairs = sorted(((sims[i, j], i, j) for i in range(sims.shape[0]) for j in range(sims.shape[1])), reverse=True)
    out, used_g, used_r = {}, set(), set()
    for s, i, j in pairs:
        if i not in used_g and j not in used_r:
            out[i] = (j, float(s))
            used_g.add(i)
            used_r.add(j)
    return out


def separable_set(seed: int = 0, n: int = 400, d: int = 9, margin: float = 0.1):
    """Features in [0,1]^d labeled by the argmax of 4 fixed linear functions.

    Points are rejection-sampled so each class gets ``n // 4`` of them and the
    winning function leads the runner-up by at least ``margin``.
    """
    import numpy as np

    rng = np.random.default_rng(seed)
    w = rng.normal(size=(4, d))
    xs, ys, counts = [], [], [0, 0, 0, 0]
    while len(xs) < n:
        x = rng.random(d)
        scores = w @ x - w.sum(axis=1) / 2
        top, second = np.sort(scores)[-2:][::-1]
        c = int(np.argmax(scores))
        if top - second >= margin and counts[c] < n // 4:
            counts[c] += 1
            xs.append(x)
            ys.append(c + 1)
    return np.array(xs), np.array(ys)


def synthetic_ranking_set(seed: int, n_queries: int, per_query: int = 30, coef=(4.0,), cols=(0,), noise: float = 0.0, zero_cols=()):
    """Per-query instance rows whose label is a (noisy) linear function of some columns.

    The latent relevance is ``sum(coef[i] * x[cols[i]]) + N(0, noise)``, cut at
    its quartiles within the whole set into labels 1..4. Returns a list of
    ``(query_id, snippet_id, features, label)``.
    """
    import numpy as np

    rng = np.random.default_rng(seed)
    x = rng.random((n_queries * per_query, 9))
    for c in zero_cols:
        x[:, c] = 0.0
    latent = sum(w * x[:, c] for w, c in zip(coef, cols))
    if noise:
        latent = latent + rng.normal(scale=noise, size=x.shape[0])
    cuts = np.quantile(latent, [0.25, 0.5, 0.75])
    labels = 1 + np.searchsorted(cuts, latent, side="right")
    rows = []
    for i in range(x.shape[0]):
        q = i // per_query
        rows.append((f"q{q:03d}", f"s{i:05d}", tuple(float(v) for v in x[i]), int(labels[i])))
    return rows
