"""Ranking metrics, feature correlation and leave-one-feature-out ablation."""

from __future__ import annotations

import json
import math
import statistics
from dataclasses import asdict, dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy.stats import rankdata

from snipsearch.errors import InvalidInputError
from snipsearch.features import FEATURE_NAMES, Instance, LabeledSet
from snipsearch.rerank import DEFAULT_EPOCHS, DEFAULT_L2, DEFAULT_LR, rerank, train_mlr

RELEVANT_MIN = 3


def precision_at_k(ranked_labels: Sequence[int], k: int) -> float:
    """Fraction of the first ``k`` results scored 3 or 4; the denominator is always ``k``."""
    if k < 1:
        raise InvalidInputError(f"K must be >= 1, got {k}")
    return sum(1 for label in ranked_labels[:k] if label >= RELEVANT_MIN) / k


def _gain(label: int) -> int:
    return label if label >= RELEVANT_MIN else 0


def _dcg(gains: Sequence[float]) -> float:
    # rank 1 undiscounted, rank i >= 2 divided by log2(i)
    total = 0.0
    for i, g in enumerate(gains, 1):
        total += g if i == 1 else g / math.log2(i)
    return total


def ndcg_at_k(ranked_labels: Sequence[int], k: int) -> float:
    """NDCG@k with scores 1 and 2 counted as zero gain.

    The ideal ordering is the returned list's own gains sorted descending;
    a list with no relevant result scores 0.
    """
    if k < 1:
        raise InvalidInputError(f"K must be >= 1, got {k}")
    gains = [_gain(label) for label in ranked_labels[:k]]
    ideal = _dcg(sorted(gains, reverse=True))
    if ideal == 0:
        return 0.0
    return _dcg(gains) / ideal


def spearman_rho(x: Sequence[float], y: Sequence[float]) -> float:
    """Spearman's rank correlation with average ranks for ties.

    Returns 0 when either input is constant (no rank variation to correlate).
    """
    if len(x) != len(y):
        raise InvalidInputError(f"length mismatch: {len(x)} vs {len(y)}")
    if len(x) < 2:
        raise InvalidInputError("need at least 2 observations")
    rx = rankdata(x, method="average")
    ry = rankdata(y, method="average")
    rx -= rx.mean()
    ry -= ry.mean()
    denom = math.sqrt(float(rx @ rx) * float(ry @ ry))
    if denom == 0:
        return 0.0
    return max(-1.0, min(1.0, float(rx @ ry) / denom))


def spearman_matrix(instances: Sequence[Instance], raw: bool = True) -> np.ndarray:
    """Pairwise Spearman's rho between the nine features, unit diagonal."""
    data = np.array([inst.raw if raw else inst.features for inst in instances], dtype=float)
    d = data.shape[1]
    out = np.eye(d)
    for i in range(d):
        for j in range(i + 1, d):
            out[i, j] = out[j, i] = spearman_rho(data[:, i], data[:, j])
    return out


def summarize(values: Sequence[float]) -> dict[str, float]:
    """Min, max, median, mean and sample standard deviation."""
    vals = list(values)
    if not vals:
        return {"min": 0.0, "max": 0.0, "median": 0.0, "mean": 0.0, "stddev": 0.0}
    return {
        "min": min(vals),
        "max": max(vals),
        "median": statistics.median(vals),
        "mean": statistics.fmean(vals),
        "stddev": statistics.stdev(vals) if len(vals) > 1 else 0.0,
    }


@dataclass
class QueryMetrics:
    query_id: str
    method: str
    precision: float
    ndcg: float
    returned: int


@dataclass
class EvalReport:
    k: int
    rows: list[QueryMetrics] = field(default_factory=list)
    spearman: list[list[float]] | None = None
    ablation: AblationTable | None = None

    def methods(self) -> list[str]:
        return sorted({r.method for r in self.rows})

    def mean(self, method: str, metric: str) -> float:
        vals = [getattr(r, metric) for r in self.rows if r.method == method]
        return statistics.fmean(vals) if vals else 0.0

    def summary(self) -> dict:
        return {
            m: {
                "precision": summarize([r.precision for r in self.rows if r.method == m]),
                "ndcg": summarize([r.ndcg for r in self.rows if r.method == m]),
            }
            for m in self.methods()
        }

    def to_json(self) -> str:
        payload = {
            "k": self.k,
            "per_query": [asdict(r) for r in self.rows],
            "summary": self.summary(),
            "spearman": {"features": list(FEATURE_NAMES), "matrix": self.spearman} if self.spearman else None,
            "ablation": self.ablation.to_dict() if self.ablation else None,
        }
        return json.dumps(payload, sort_keys=True, indent=2)

    def to_tsv(self) -> str:
        lines = [f"query_id\tmethod\tprecision@{self.k}\tndcg@{self.k}\treturned"]
        for r in self.rows:
            lines.append(f"{r.query_id}\t{r.method}\t{r.precision:.6f}\t{r.ndcg:.6f}\t{r.returned}")
        return "\n".join(lines) + "\n"

    def to_table(self) -> str:
        out = [f"{'method':<10} {'P@' + str(self.k):>8} {'NDCG@' + str(self.k):>10}  queries"]
        for m in self.methods():
            n = sum(1 for r in self.rows if r.method == m)
            out.append(f"{m:<10} {self.mean(m, 'precision'):>8.4f} {self.mean(m, 'ndcg'):>10.4f}  {n}")
        if self.spearman:
            out.append("")
            out.append("spearman " + " ".join(f"{n:>6}" for n in FEATURE_NAMES))
            for name, row in zip(FEATURE_NAMES, self.spearman):
                out.append(f"{name:<8} " + " ".join(f"{v:>6.3f}" for v in row))
        if self.ablation:
            out.append("")
            out.append(self.ablation.to_table())
        return "\n".join(out) + "\n"


def score_ranking(ids: Sequence[str], labels: Mapping[str, int], query_id: str, k: int, method: str) -> QueryMetrics:
    missing = [sid for sid in ids[:k] if sid not in labels]
    if missing:
        raise InvalidInputError(f"query {query_id}: no label for returned snippet(s) {', '.join(missing)}")
    ranked = [labels[sid] for sid in ids[:k]]
    return QueryMetrics(query_id, method, precision_at_k(ranked, k), ndcg_at_k(ranked, k), len(ranked))


def group_by_query(instances: Sequence[Instance]) -> dict[str, list[Instance]]:
    groups: dict[str, list[Instance]] = {}
    for inst in instances:
        groups.setdefault(inst.query_id, []).append(inst)
    return groups


def evaluate_model(model, test: LabeledSet, k: int) -> tuple[float, float]:
    """Mean Precision@k and NDCG@k of ``model`` re-ranking each test query's candidates."""
    precisions, ndcgs = [], []
    for qid, group in group_by_query(test.instances).items():
        labels = {inst.snippet_id: inst.label for inst in group}
        m = score_ranking(rerank(model, group, k).ids, labels, qid, k, "model")
        precisions.append(m.precision)
        ndcgs.append(m.ndcg)
    return statistics.fmean(precisions), statistics.fmean(ndcgs)


def _pct(delta: float, base: float) -> float:
    return 100.0 * delta / base if base else 0.0


@dataclass
class AblationTable:
    """Full-model metrics plus one row per removed feature."""

    k: int
    precision: float
    ndcg: float
    rows: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"k": self.k, "baseline": {"precision": self.precision, "ndcg": self.ndcg}, "rows": self.rows}

    def to_table(self) -> str:
        out = [f"{'removed':<8} {'P@' + str(self.k):>8} {'impact':>9} {'NDCG@' + str(self.k):>9} {'impact':>9}"]
        out.append(f"{'none':<8} {self.precision:>8.4f} {'-':>9} {self.ndcg:>9.4f} {'-':>9}")
        for r in self.rows:
            out.append(
                f"{r['removed']:<8} {r['precision']:>8.4f} {r['precision_impact_pct']:>+8.2f}%"
                f" {r['ndcg']:>9.4f} {r['ndcg_impact_pct']:>+8.2f}%"
            )
        return "\n".join(out)


def ablate(
    train: LabeledSet,
    test: LabeledSet,
    k: int = 10,
    seed: int = 0,
    lr: float = DEFAULT_LR,
    epochs: int = DEFAULT_EPOCHS,
    l2: float = DEFAULT_L2,
    progress: Callable[[str], None] | None = None,
) -> AblationTable:
    """Retrain once per feature with that feature removed and compare to the full model.

    Each row carries mean Precision@k / NDCG@k without that feature and the
    absolute and percentage change from the full model.
    """
    if not test.instances:
        raise InvalidInputError("ablation needs a non-empty test set")
    full = train_mlr(train, lr=lr, epochs=epochs, l2=l2, seed=seed)
    base_p, base_n = evaluate_model(full, test, k)
    table = AblationTable(k, base_p, base_n)
    for j, name in enumerate(FEATURE_NAMES):
        if progress:
            progress(name)
        model = train_mlr(train, lr=lr, epochs=epochs, l2=l2, seed=seed, drop=(j,))
        p, n = evaluate_model(model, test, k)
        table.rows.append(
            {
                "removed": name,
                "precision": p,
                "precision_delta": p - base_p,
                "precision_impact_pct": _pct(p - base_p, base_p),
                "ndcg": n,
                "ndcg_delta": n - base_n,
                "ndcg_impact_pct": _pct(n - base_n, base_n),
            }
        )
    return table
