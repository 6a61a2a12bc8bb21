"""Lexicon-based compound sentiment score.

Only the valence sum, a three-token negation window and the
``x / sqrt(x^2 + 15)`` normalization are implemented; capitalization and
punctuation amplification are intentionally absent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from typing import Mapping

NORMALIZATION_ALPHA = 15.0
NEGATION_WINDOW = 3

NEGATORS = frozenset(
    """
    aint arent cannot cant couldnt darent didnt doesnt ain't aren't can't couldn't daren't didn't doesn't
    dont hadnt hasnt havent isnt mightnt mustnt neither don't hadn't hasn't haven't isn't mightn't mustn't
    neednt needn't never none nope nor not nothing nowhere oughtnt shant shouldnt uhuh wasnt werent
    oughtn't shan't shouldn't uh-uh wasn't weren't without wont wouldnt won't wouldn't rarely seldom despite
    """.split()
)

_STRIP = "\"'.,!?;:()[]{}<>*~`"
_APOSTROPHES = str.maketrans({"’": "'", "‘": "'"})


@dataclass(frozen=True)
class SentimentLexicon:
    valences: Mapping[str, float]
    alpha_norm: float = NORMALIZATION_ALPHA

    def __post_init__(self):
        for tok, v in self.valences.items():
            if not math.isfinite(v):
                raise ValueError(f"non-finite valence for {tok!r}")

    def __len__(self):
        return len(self.valences)


@lru_cache(maxsize=1)
def bundled_lexicon() -> SentimentLexicon:
    text = resources.files("interactsim").joinpath("data/sentiment_lexicon.tsv").read_text("utf-8")
    table = {}
    for line in text.splitlines():
        if not line or line.startswith("#"):
            continue
        tok, val = line.split("\t")[:2]
        table[tok] = float(val)
    return SentimentLexicon(table)


def sentiment_tokens(text: str) -> list[str]:
    out = []
    for raw in text.translate(_APOSTROPHES).lower().split():
        tok = raw.strip(_STRIP)
        if tok:
            out.append(tok)
    return out


def valence_sum(text: str, lexicon: SentimentLexicon) -> float:
    tokens = sentiment_tokens(text or "")
    total = 0.0
    for i, tok in enumerate(tokens):
        v = lexicon.valences.get(tok)
        if v is None:
            continue
        window = tokens[max(0, i - NEGATION_WINDOW) : i]
        if any(w in NEGATORS or w.endswith("n't") for w in window):
            v = -v
        total += v
    return total


def sentiment_compound(text: str, lexicon: SentimentLexicon | None = None) -> float:
    lexicon = lexicon or bundled_lexicon()
    x = valence_sum(text, lexicon)
    if x == 0.0:
        return 0.0
    return x / math.sqrt(x * x + lexicon.alpha_norm)


def is_negative_review(text: str, rating=None, threshold: float = -0.05) -> bool:
    """Rating <= 2 or compound below ``threshold``."""
    if rating is not None and rating <= 2:
        return True
    return sentiment_compound(text or "") < threshold
