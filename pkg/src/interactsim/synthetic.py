"""Seeded synthetic restaurant-review data for offline runs and tests.

Item popularity is Zipf-like (``i000`` is the most visited item), users lean
towards two favourite cuisines and rate those higher.
"""

from __future__ import annotations

import numpy as np

from .domain import HistoricalInteraction, ItemRecord
from .ingestion import Dataset, RawRecord

CUISINES = ("Mexican", "Italian", "Chinese", "Japanese", "American", "Thai", "Indian", "Mediterranean")
_ADJ = ("Golden", "Happy", "Little", "Blue", "Sunny", "Old Town", "Corner", "Royal", "Lucky", "Green")
_NOUN = ("Kitchen", "Grill", "House", "Bistro", "Cafe", "Diner", "Table", "Garden", "Express", "Cantina")
_GOOD = (
    "Great {c} food and friendly staff.",
    "Really tasty dishes, good value, will come back.",
    "Loved the flavors here, excellent service.",
    "Fresh and delicious, a nice place for dinner.",
)
_MID = ("Decent {c} spot, nothing special.", "Okay food, service was slow but fine.")
_BAD = (
    "Bland food and rude service, disappointed.",
    "Terrible experience, cold food and dirty tables.",
    "Not good. Overpriced and the wait was awful.",
)


def synthetic_catalog(n_items: int, rng: np.random.Generator) -> dict[str, ItemRecord]:
    catalog = {}
    for n in range(n_items):
        item_id = f"i{n:03d}"
        primary = CUISINES[n % len(CUISINES)]
        cats = ["Restaurants", primary]
        if rng.random() < 0.3:
            cats.append(CUISINES[int(rng.integers(len(CUISINES)))])
        name = f"{_ADJ[n % len(_ADJ)]} {_NOUN[(n // len(_ADJ)) % len(_NOUN)]}"
        if n >= len(_ADJ) * len(_NOUN):
            name += f" {n}"
        catalog[item_id] = ItemRecord(
            item_id=item_id,
            name=name,
            categories=sorted(set(cats), key=cats.index),
            description=f"A {primary.lower()} restaurant.",
            brand=None,
            region="CA",
        )
    return catalog


def _review(rating: int, cuisine: str, rng: np.random.Generator) -> str:
    pool = _GOOD if rating >= 4 else _BAD if rating <= 2 else _MID
    return pool[int(rng.integers(len(pool)))].format(c=cuisine)


def generate_synthetic_dataset(
    n_users: int = 100,
    n_items: int = 40,
    mean_history: int = 12,
    seed: int = 0,
    review_rate: float = 0.6,
) -> Dataset:
    if n_users < 1 or n_items < 2:
        raise ValueError("need at least one user and two items")
    rng = np.random.default_rng([seed, 0x5D7])
    catalog = synthetic_catalog(n_items, rng)
    items = sorted(catalog)
    weights = 1.0 / np.arange(1, n_items + 1) ** 0.9
    users = {}
    for u in range(n_users):
        favourites = set(rng.choice(len(CUISINES), size=2, replace=False).tolist())
        fav_names = {CUISINES[f] for f in favourites}
        w = weights * np.array([3.0 if fav_names & set(catalog[i].categories) else 1.0 for i in items])
        size = int(np.clip(rng.poisson(mean_history), 2, n_items))
        picks = rng.choice(n_items, size=size, replace=False, p=w / w.sum())
        hist = []
        for k, j in enumerate(sorted(picks.tolist())):
            rec = catalog[items[j]]
            liked = bool(fav_names & set(rec.categories))
            rating = int(np.clip(round(rng.normal(4.3 if liked else 3.0, 0.9)), 1, 5))
            text = _review(rating, rec.categories[1], rng) if rng.random() < review_rate else None
            hist.append(HistoricalInteraction(rec.item_id, rating, text, float(1_600_000_000 + 86_400 * (k * n_users + u))))
        users[f"u{u:03d}"] = hist
    return Dataset(users, catalog)


def synthetic_raw_records(dataset: Dataset) -> list[RawRecord]:
    """Flatten a dataset into raw log rows (one per interaction)."""
    rows = []
    for uid in sorted(dataset.users):
        for h in dataset.users[uid]:
            rec = dataset.catalog[h.item_id]
            rows.append(RawRecord(uid, h.item_id, h.rating, rec.name, tuple(rec.categories), h.review_text, rec.region, h.timestamp))
    return rows
