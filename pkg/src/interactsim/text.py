"""Tokenization, stop words, term-frequency cosine and TF-IDF keywords."""

from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from typing import Iterable, Sequence, Union

_TOKEN_RE = re.compile(r"[a-z0-9]+(?:'[a-z]+)*")


@lru_cache(maxsize=1)
def stop_words() -> frozenset[str]:
    text = resources.files("interactsim").joinpath("data/stopwords.txt").read_text("utf-8")
    return frozenset(w.strip() for w in text.splitlines() if w.strip())


def tokenize(text: str | None, drop_stop_words: bool = True) -> list[str]:
    if not text:
        return []
    tokens = _TOKEN_RE.findall(text.lower())
    if drop_stop_words:
        stops = stop_words()
        tokens = [t for t in tokens if t not in stops]
    return tokens


def whitespace_token_count(text: str | None) -> int:
    return len(text.split()) if text else 0


def tf_cosine(a: str, b: str) -> float:
    """Cosine similarity of term-frequency vectors; 0.0 if either side is empty."""
    ca, cb = Counter(tokenize(a)), Counter(tokenize(b))
    if not ca or not cb:
        return 0.0
    dot = sum(v * cb[t] for t, v in ca.items() if t in cb)
    if dot == 0:
        return 0.0
    na = math.sqrt(sum(v * v for v in ca.values()))
    nb = math.sqrt(sum(v * v for v in cb.values()))
    return min(1.0, dot / (na * nb))


@dataclass(frozen=True)
class CorpusStats:
    """Document frequencies for smoothed IDF."""

    n_docs: int
    doc_freq: dict

    @classmethod
    def from_documents(cls, documents: Iterable[str]) -> "CorpusStats":
        df: Counter = Counter()
        n = 0
        for doc in documents:
            n += 1
            df.update(set(tokenize(doc)))
        return cls(n, dict(df))

    def idf(self, token: str) -> float:
        return math.log((1 + self.n_docs) / (1 + self.doc_freq.get(token, 0))) + 1.0


def compute_tfidf_keywords(
    user_reviews: Sequence[str],
    corpus: Union[Sequence[str], CorpusStats],
    n: int,
) -> list[tuple[str, float]]:
    """Top-``n`` (token, tf*idf) pairs of the user's concatenated reviews.

    Ties are broken by lexicographic token order so the output does not depend
    on corpus document order.
    """
    stats = corpus if isinstance(corpus, CorpusStats) else CorpusStats.from_documents(corpus)
    if stats.n_docs == 0:
        raise ValueError("corpus must be non-empty")
    if n <= 0:
        return []
    tf: Counter = Counter()
    for review in user_reviews:
        tf.update(tokenize(review))
    if not tf:
        return []
    scored = [(tok, count * stats.idf(tok)) for tok, count in tf.items()]
    scored.sort(key=lambda kv: (-kv[1], kv[0]))
    return scored[:n]
