"""Item attribute store: real-time action effects, item snapshots, interventions."""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from typing import Optional

from .domain import (
    Action,
    ActionKind,
    Intervention,
    ItemDynamics,
    ItemRecord,
    Review,
    average_rating,
    validate_action,
)
from .errors import InteractSimError

COUNTERS = ("like_count", "dislike_count", "share_count", "purchase_count")


class UnknownTargetError(InteractSimError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else "unknown target"


@dataclass
class ReviewView:
    review_id: str
    author_kind: str
    text: str
    rating: Optional[int]
    like_count: int
    dislike_count: int
    step: int
    replies: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "review_id": self.review_id,
            "author_kind": self.author_kind,
            "text": self.text,
            "rating": self.rating,
            "like_count": self.like_count,
            "dislike_count": self.dislike_count,
            "step": self.step,
            "replies": list(self.replies),
        }


@dataclass
class ItemView:
    """What an agent sees of one item: static record plus current attributes."""

    item_id: str
    name: str
    brand: Optional[str]
    categories: list[str]
    description: str
    like_count: int
    dislike_count: int
    purchase_count: int
    share_count: Optional[int]
    average_rating: Optional[float]
    rating_count: int
    review_count: int
    recent_reviews: list[ReviewView]

    @property
    def popularity(self) -> int:
        return self.like_count + self.purchase_count

    def review_ids(self) -> set[str]:
        return {r.review_id for r in self.recent_reviews}

    def to_dict(self) -> dict:
        return {
            "item_id": self.item_id,
            "name": self.name,
            "brand": self.brand,
            "categories": list(self.categories),
            "description": self.description,
            "like_count": self.like_count,
            "dislike_count": self.dislike_count,
            "purchase_count": self.purchase_count,
            "share_count": self.share_count,
            "average_rating": self.average_rating,
            "rating_count": self.rating_count,
            "review_count": self.review_count,
            "recent_reviews": [r.to_dict() for r in self.recent_reviews],
        }

    def render(self) -> str:
        avg = "no ratings yet" if self.average_rating is None else f"{self.average_rating:.1f}/5 from {self.rating_count} ratings"
        head = f"[{self.item_id}] {self.name}"
        if self.brand:
            head += f" ({self.brand})"
        lines = [
            head,
            f"  categories: {', '.join(self.categories)}",
            f"  about: {self.description}" if self.description else None,
            f"  likes: {self.like_count}  dislikes: {self.dislike_count}  sales: {self.purchase_count}"
            + (f"  shares: {self.share_count}" if self.share_count is not None else ""),
            f"  rating: {avg}",
        ]
        for r in self.recent_reviews:
            stars = f"{r.rating}/5 " if r.rating else ""
            lines.append(f"  review {r.review_id} ({stars}{r.like_count} up, {r.dislike_count} down): {r.text}")
            for reply in r.replies:
                lines.append(f"    merchant reply: {reply}")
        return "\n".join(x for x in lines if x is not None)


class ItemStore:
    """Static item records and their mutable dynamics, keyed by item id."""

    def __init__(self, statics: dict[str, ItemRecord], dynamics: Optional[dict[str, ItemDynamics]] = None):
        self.statics = statics
        self.dynamics = dynamics if dynamics is not None else {i: ItemDynamics() for i in statics}
        if set(self.statics) != set(self.dynamics):
            raise ValueError("statics and dynamics must cover the same items")
        self._review_index: dict[str, Review] = {}
        self._reindex()

    def _reindex(self) -> None:
        self._review_index = {}
        for dyn in self.dynamics.values():
            for r in dyn.reviews:
                self._review_index[r.review_id] = r

    def copy(self) -> "ItemStore":
        return ItemStore(copy.deepcopy(self.statics), copy.deepcopy(self.dynamics))

    def __contains__(self, item_id) -> bool:
        return item_id in self.statics

    def item_ids(self) -> list[str]:
        return sorted(self.statics)

    def review(self, review_id: str) -> Review:
        try:
            return self._review_index[review_id]
        except KeyError:
            raise UnknownTargetError(f"unknown review {review_id!r}") from None

    def _dyn(self, item_id: str) -> ItemDynamics:
        try:
            return self.dynamics[item_id]
        except KeyError:
            raise UnknownTargetError(f"unknown item {item_id!r}") from None

    def add_review(self, item_id, author_kind, text, step, author_id=None, rating=None) -> Review:
        dyn = self._dyn(item_id)
        review = Review(dyn.next_review_id(item_id), item_id, author_kind, text, step, author_id, rating)
        dyn.reviews.append(review)
        if rating is not None:
            dyn.rating_sum += rating
            dyn.rating_count += 1
        dyn.last_updated_step = step
        self._review_index[review.review_id] = review
        return review

    def add_reply(self, parent_review_id: str, merchant_id: str, text: str, step: int) -> Review:
        parent = self.review(parent_review_id)
        dyn = self._dyn(parent.item_id)
        reply = Review(dyn.next_review_id(parent.item_id), parent.item_id, "merchant", text, step, merchant_id)
        parent.replies.append(reply)
        dyn.last_updated_step = step
        return reply

    def popularity(self, item_id: str) -> int:
        d = self._dyn(item_id)
        return d.like_count + d.purchase_count

    def live_counts(self) -> dict[str, int]:
        return {i: d.like_count + d.purchase_count for i, d in self.dynamics.items()}

    def counters(self) -> dict[str, dict[str, int]]:
        return {
            i: {**{c: getattr(d, c) for c in COUNTERS}, "review_count": len(d.reviews), "rating_sum": d.rating_sum, "rating_count": d.rating_count}
            for i, d in sorted(self.dynamics.items())
        }

    def violations(self) -> list[str]:
        problems = []
        if set(self.statics) != set(self.dynamics):
            problems.append("statics/dynamics key mismatch")
        for i, d in self.dynamics.items():
            problems.extend(f"{i}: {p}" for p in d.violations())
        return problems

    def to_dict(self) -> dict:
        return {
            "statics": {i: r.to_dict() for i, r in sorted(self.statics.items())},
            "dynamics": {i: d.to_dict() for i, d in sorted(self.dynamics.items())},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ItemStore":
        return cls(
            {i: ItemRecord.from_dict(r) for i, r in d["statics"].items()},
            {i: ItemDynamics.from_dict(x) for i, x in d["dynamics"].items()},
        )


def apply_action(store: ItemStore, agent_id: str, action: Action, step: int) -> Optional[Review]:
    """Mutate ``store`` in place; returns the created review for CreateReview."""
    problems = validate_action(action)
    if problems:
        raise ValueError(f"invalid action: {'; '.join(problems)}")
    kind = action.kind
    if kind == ActionKind.DO_NOTHING:
        return None
    if kind in (ActionKind.LIKE_REVIEW, ActionKind.DISLIKE_REVIEW):
        review = store.review(action.target_review)
        if kind == ActionKind.LIKE_REVIEW:
            review.like_count += 1
        else:
            review.dislike_count += 1
        store.dynamics[review.item_id].last_updated_step = step
        return None
    dyn = store._dyn(action.target_item)
    if kind == ActionKind.CREATE_REVIEW:
        return store.add_review(action.target_item, "user", action.review_text, step, agent_id, action.rating)
    attr = {
        ActionKind.LIKE_PRODUCT: "like_count",
        ActionKind.DISLIKE_PRODUCT: "dislike_count",
        ActionKind.SHARE_PRODUCT: "share_count",
        ActionKind.PURCHASE_PRODUCT: "purchase_count",
    }[kind]
    setattr(dyn, attr, getattr(dyn, attr) + 1)
    dyn.last_updated_step = step
    return None


def snapshot_item(store: ItemStore, item_id: str, review_window: int = 5, show_share_count: bool = False) -> ItemView:
    """Current view of one item with its ``review_window`` most recent reviews (newest first)."""
    if item_id not in store.statics:
        raise UnknownTargetError(f"unknown item {item_id!r}")
    rec = store.statics[item_id]
    dyn = store.dynamics[item_id]
    ordered = sorted(dyn.reviews, key=lambda r: (r.step, int(r.review_id.rsplit("#", 1)[1])), reverse=True)
    recent = [
        ReviewView(r.review_id, r.author_kind, r.text, r.rating, r.like_count, r.dislike_count, r.step, [x.text for x in r.replies])
        for r in ordered[: max(0, review_window)]
    ]
    return ItemView(
        item_id=item_id,
        name=rec.name,
        brand=rec.brand,
        categories=list(rec.categories),
        description=rec.augmented_description or rec.description,
        like_count=dyn.like_count,
        dislike_count=dyn.dislike_count,
        purchase_count=dyn.purchase_count,
        share_count=dyn.share_count if show_share_count else None,
        average_rating=average_rating(dyn),
        rating_count=dyn.rating_count,
        review_count=len(dyn.reviews),
        recent_reviews=recent,
    )


def apply_intervention(store: ItemStore, intervention: Intervention, step: int) -> tuple[dict[str, int], list[str]]:
    """Apply a scripted intervention; returns (counter deltas, created review ids)."""
    if intervention.step != step:
        raise ValueError(f"intervention scheduled for step {intervention.step}, applied at {step}")
    item_id = intervention.item_id
    if item_id not in store.statics:
        raise UnknownTargetError(f"unknown item {item_id!r}")
    dyn = store.dynamics[item_id]
    deltas: dict[str, int] = {}
    created: list[str] = []
    if intervention.kind == "BrandRename":
        store.statics[item_id].name = intervention.new_name
        return deltas, created
    ratings = intervention.ratings or [None] * len(intervention.texts)
    for text, rating in zip(intervention.texts, ratings):
        created.append(store.add_review(item_id, "injected", text, step, None, rating).review_id)
    if created:
        deltas["review_count"] = len(created)
        rated = [r for r in ratings if r is not None]
        if rated:
            deltas["rating_count"] = len(rated)
            deltas["rating_sum"] = sum(rated)
    if intervention.kind == "SeedBoost" and intervention.initial_sales is not None:
        deltas["purchase_count"] = intervention.initial_sales - dyn.purchase_count
        dyn.purchase_count = intervention.initial_sales
    dyn.last_updated_step = step
    return deltas, created
