"""Raw interaction logs -> filtered users, items and histories."""

from __future__ import annotations

import hashlib
import json
import logging
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Optional, Sequence, TextIO, Union

import numpy as np

from .domain import HistoricalInteraction, ItemRecord
from .errors import CorpusFormatError, GatewayError
from .prompting import load_prompt

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RawRecord:
    user_id: str
    item_id: str
    rating: int
    item_name: str
    categories: tuple[str, ...] = ()
    review_text: Optional[str] = None
    region: Optional[str] = None
    timestamp: Optional[float] = None

    def to_json(self) -> dict:
        return {
            "user_id": self.user_id,
            "item_id": self.item_id,
            "rating": self.rating,
            "review": self.review_text,
            "item_name": self.item_name,
            "categories": list(self.categories),
            "region": self.region,
            "ts": self.timestamp,
        }

    @classmethod
    def from_json(cls, row: dict) -> "RawRecord":
        user_id = str(row.get("user_id") or "").strip()
        item_id = str(row.get("item_id") or "").strip()
        if not user_id or not item_id:
            raise ValueError("user_id and item_id must be non-empty")
        rating = row.get("rating")
        if isinstance(rating, bool) or rating is None:
            raise ValueError("rating missing")
        rating_f = float(rating)
        if rating_f != int(rating_f) or not 1 <= rating_f <= 5:
            raise ValueError(f"rating {rating!r} not an integer in 1..5")
        cats = row.get("categories") or []
        if isinstance(cats, str):
            cats = [cats]
        ts = row.get("ts")
        return cls(
            user_id=user_id,
            item_id=item_id,
            rating=int(rating_f),
            item_name=str(row.get("item_name") or item_id),
            categories=tuple(str(c) for c in cats),
            review_text=row.get("review") or None,
            region=row.get("region"),
            timestamp=None if ts is None else float(ts),
        )


@dataclass
class ParseReport:
    records: list[RawRecord]
    malformed: int = 0
    malformed_lines: list[int] = field(default_factory=list)


def parse_interaction_log(stream: Union[TextIO, Iterable[str]], max_malformed_fraction: float = 0.5) -> ParseReport:
    """Parse JSONL interaction records, counting (not raising on) bad lines.

    Raises :class:`CorpusFormatError` when more than ``max_malformed_fraction``
    of the non-blank lines are malformed.
    """
    records: list[RawRecord] = []
    bad: list[int] = []
    total = 0
    for lineno, line in enumerate(stream, start=1):
        if not line.strip():
            continue
        total += 1
        try:
            row = json.loads(line)
            if not isinstance(row, dict):
                raise ValueError("not an object")
            records.append(RawRecord.from_json(row))
        except (ValueError, TypeError) as exc:
            logger.debug("line %d malformed: %s", lineno, exc)
            bad.append(lineno)
    if total and len(bad) / total > max_malformed_fraction:
        raise CorpusFormatError(f"{len(bad)} of {total} lines malformed; is this the interaction JSONL format?")
    if bad:
        logger.warning("skipped %d malformed line(s)", len(bad))
    return ParseReport(records, len(bad), bad)


def write_interaction_log(records: Iterable[RawRecord], fh: TextIO) -> None:
    for r in records:
        fh.write(json.dumps(r.to_json(), ensure_ascii=False) + "\n")


@dataclass
class Dataset:
    users: dict[str, list[HistoricalInteraction]]
    catalog: dict[str, ItemRecord]

    def __post_init__(self):
        for uid, hist in self.users.items():
            for h in hist:
                if h.item_id not in self.catalog:
                    raise ValueError(f"user {uid} references unknown item {h.item_id}")

    def interactions(self) -> list[tuple[str, str, int]]:
        return [(u, h.item_id, h.rating) for u in sorted(self.users) for h in self.users[u]]

    def item_interaction_counts(self) -> Counter:
        return Counter(h.item_id for hist in self.users.values() for h in hist)

    def to_dict(self) -> dict:
        return {
            "users": {u: [h.to_dict() for h in hist] for u, hist in sorted(self.users.items())},
            "catalog": {i: rec.to_dict() for i, rec in sorted(self.catalog.items())},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Dataset":
        return cls(
            users={u: [HistoricalInteraction.from_dict(h) for h in hist] for u, hist in d["users"].items()},
            catalog={i: ItemRecord.from_dict(rec) for i, rec in d["catalog"].items()},
        )

    def save(self, path: Union[str, Path]) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), sort_keys=True, ensure_ascii=False, indent=1), "utf-8")

    @classmethod
    def load(cls, path: Union[str, Path]) -> "Dataset":
        return cls.from_dict(json.loads(Path(path).read_text("utf-8")))


def restaurant_predicate(categories: Sequence[str]) -> bool:
    return any("restaurant" in c.lower() for c in categories)


def california_predicate(region: Optional[str]) -> bool:
    return region is not None and region.strip().lower() in {"ca", "california"}


def filter_dataset(
    records: Sequence[RawRecord],
    min_user_interactions: int = 300,
    min_item_interactions: int = 10,
    category_predicate: Optional[Callable[[Sequence[str]], bool]] = restaurant_predicate,
    region_predicate: Optional[Callable[[Optional[str]], bool]] = california_predicate,
) -> Dataset:
    """Apply the predicates, then strict count thresholds iterated to a fixed point.

    Users keep only those with more than ``min_user_interactions`` records and
    items more than ``min_item_interactions``; removing one side can push the
    other under its threshold, so both filters repeat until nothing changes.
    Duplicate (user, item) records are counted, not collapsed.
    """
    if min_user_interactions < 0 or min_item_interactions < 0:
        raise ValueError("thresholds must be non-negative")
    kept = [
        r
        for r in records
        if (category_predicate is None or category_predicate(r.categories))
        and (region_predicate is None or region_predicate(r.region))
    ]
    while True:
        item_counts = Counter(r.item_id for r in kept)
        step1 = [r for r in kept if item_counts[r.item_id] > min_item_interactions]
        user_counts = Counter(r.user_id for r in step1)
        step2 = [r for r in step1 if user_counts[r.user_id] > min_user_interactions]
        if len(step2) == len(kept):
            break
        kept = step2
    if not kept:
        logger.warning("filtering removed every record")

    catalog: dict[str, ItemRecord] = {}
    users: dict[str, list[HistoricalInteraction]] = {}
    for r in kept:
        if r.item_id not in catalog:
            catalog[r.item_id] = ItemRecord(
                item_id=r.item_id,
                name=r.item_name,
                categories=list(r.categories),
                region=r.region,
            )
        users.setdefault(r.user_id, []).append(HistoricalInteraction(r.item_id, r.rating, r.review_text, r.timestamp))
    for hist in users.values():
        hist.sort(key=lambda h: (h.timestamp if h.timestamp is not None else float("-inf")))
    return Dataset(users=users, catalog=catalog)


def stable_int(*parts) -> int:
    """Process-independent 64-bit integer from arbitrary key parts."""
    digest = hashlib.sha256("\x1f".join(str(p) for p in parts).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def sample_history(history: Sequence[HistoricalInteraction], n: int, seed) -> list[HistoricalInteraction]:
    """Uniform sample of ``min(n, len(history))`` interactions without replacement."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if len(history) <= n:
        return list(history)
    rng = np.random.default_rng(seed)
    idx = np.sort(rng.choice(len(history), size=n, replace=False))
    return [history[i] for i in idx]


class AugmentationCache:
    """item_id -> augmented description, optionally persisted as JSONL."""

    def __init__(self, path: Optional[Union[str, Path]] = None):
        self.path = Path(path) if path else None
        self.entries: dict[str, str] = {}
        self.failed: set[str] = set()
        if self.path and self.path.exists():
            for line in self.path.read_text("utf-8").splitlines():
                if line.strip():
                    row = json.loads(line)
                    self.entries[row["item_id"]] = row["augmented"]

    def save(self) -> None:
        if not self.path:
            return
        with open(self.path, "w", encoding="utf-8") as fh:
            for item_id in sorted(self.entries):
                fh.write(json.dumps({"item_id": item_id, "augmented": self.entries[item_id]}, ensure_ascii=False) + "\n")


def augment_item(item: ItemRecord, gateway, cache: Optional[AugmentationCache] = None) -> Optional[str]:
    """Fill ``item.augmented_description`` via the gateway; cached by item id.

    On gateway failure the item is left un-augmented and recorded in
    ``cache.failed``; ``None`` is returned.
    """
    if cache is not None and item.item_id in cache.entries:
        item.augmented_description = cache.entries[item.item_id]
        return item.augmented_description
    if item.augmented_description:
        return item.augmented_description
    system, user = load_prompt("augment").render(
        name=item.name,
        brand=item.brand or "none",
        categories=", ".join(item.categories),
        description=item.description or "none",
    )
    try:
        text = gateway.complete(user, system=system).text.strip()
    except GatewayError as exc:
        logger.warning("augmentation failed for %s: %s", item.item_id, exc)
        if cache is not None:
            cache.failed.add(item.item_id)
        return None
    item.augmented_description = text
    if cache is not None:
        cache.entries[item.item_id] = text
    return text


def augment_catalog(catalog: dict[str, ItemRecord], gateway, cache: Optional[AugmentationCache] = None) -> list[str]:
    """Augment every item concurrently (gateway in-flight cap); returns ids that failed."""
    cache = cache if cache is not None else AugmentationCache()
    ids = sorted(catalog)
    todo = [i for i in ids if i not in cache.entries and not catalog[i].augmented_description]
    results = gateway.map(lambda i: augment_item(catalog[i], gateway, None), todo)
    failed = []
    for item_id, res in zip(todo, results):
        if isinstance(res, str):
            cache.entries[item_id] = res
        else:
            failed.append(item_id)
            cache.failed.add(item_id)
    for item_id in ids:
        if item_id in cache.entries:
            catalog[item_id].augmented_description = cache.entries[item_id]
    cache.save()
    return failed
