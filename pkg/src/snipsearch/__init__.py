"""Two-stage code snippet recommendation: BM25 candidate retrieval followed by
multinomial logistic regression re-ranking over nine snippet features."""

__version__ = "0.1.0"
