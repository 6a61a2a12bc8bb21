"""Shared domain types: catalog items, their mutable attributes, actions, events.

All types are plain dataclasses with ``to_dict``/``from_dict`` helpers so
they round-trip through JSON unchanged.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Any, Optional


class ActionKind(str, enum.Enum):
    DO_NOTHING = "DoNothing"
    LIKE_PRODUCT = "LikeProduct"
    DISLIKE_PRODUCT = "DislikeProduct"
    SHARE_PRODUCT = "ShareProduct"
    PURCHASE_PRODUCT = "PurchaseProduct"
    CREATE_REVIEW = "CreateReview"
    LIKE_REVIEW = "LikeReview"
    DISLIKE_REVIEW = "DislikeReview"

    @classmethod
    def parse(cls, value: str) -> "ActionKind":
        """Accept ``LikeProduct``, ``like_product`` or ``like product``."""
        if isinstance(value, ActionKind):
            return value
        key = str(value).strip().replace("_", "").replace(" ", "").replace("-", "").lower()
        for kind in cls:
            if kind.value.lower() == key:
                return kind
        raise ValueError(f"unknown action kind: {value!r}")


PRODUCT_ACTIONS = frozenset(
    {
        ActionKind.LIKE_PRODUCT,
        ActionKind.DISLIKE_PRODUCT,
        ActionKind.SHARE_PRODUCT,
        ActionKind.PURCHASE_PRODUCT,
        ActionKind.CREATE_REVIEW,
    }
)
REVIEW_VOTE_ACTIONS = frozenset({ActionKind.LIKE_REVIEW, ActionKind.DISLIKE_REVIEW})


def _valid_rating(value: Any) -> bool:
    return isinstance(value, int) and not isinstance(value, bool) and 1 <= value <= 5


@dataclass
class ItemRecord:
    item_id: str
    name: str
    categories: list[str]
    description: str = ""
    brand: Optional[str] = None
    augmented_description: Optional[str] = None
    merchant_id: str = ""
    region: Optional[str] = None

    def __post_init__(self):
        if not self.merchant_id:
            self.merchant_id = f"m-{self.item_id}"

    def to_dict(self) -> dict:
        return {
            "item_id": self.item_id,
            "name": self.name,
            "brand": self.brand,
            "categories": list(self.categories),
            "description": self.description,
            "augmented_description": self.augmented_description,
            "merchant_id": self.merchant_id,
            "region": self.region,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ItemRecord":
        return cls(
            item_id=d["item_id"],
            name=d["name"],
            categories=list(d.get("categories") or []),
            description=d.get("description", ""),
            brand=d.get("brand"),
            augmented_description=d.get("augmented_description"),
            merchant_id=d.get("merchant_id", ""),
            region=d.get("region"),
        )


@dataclass
class Review:
    review_id: str
    item_id: str
    author_kind: str  # "user" | "merchant" | "injected"
    text: str
    step: int
    author_id: Optional[str] = None
    rating: Optional[int] = None
    like_count: int = 0
    dislike_count: int = 0
    replies: list["Review"] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "review_id": self.review_id,
            "item_id": self.item_id,
            "author_kind": self.author_kind,
            "author_id": self.author_id,
            "text": self.text,
            "rating": self.rating,
            "like_count": self.like_count,
            "dislike_count": self.dislike_count,
            "replies": [r.to_dict() for r in self.replies],
            "step": self.step,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Review":
        return cls(
            review_id=d["review_id"],
            item_id=d["item_id"],
            author_kind=d["author_kind"],
            author_id=d.get("author_id"),
            text=d["text"],
            rating=d.get("rating"),
            like_count=d.get("like_count", 0),
            dislike_count=d.get("dislike_count", 0),
            replies=[cls.from_dict(r) for r in d.get("replies", [])],
            step=d["step"],
        )

    def violations(self) -> list[str]:
        problems = []
        if self.author_kind not in ("user", "merchant", "injected"):
            problems.append(f"unknown author kind {self.author_kind!r}")
        if self.rating is not None:
            if self.author_kind == "merchant":
                problems.append("merchant reviews carry no rating")
            elif not _valid_rating(self.rating):
                problems.append("rating must be an integer in 1..5")
        if self.like_count < 0 or self.dislike_count < 0:
            problems.append("review vote counters must be non-negative")
        for reply in self.replies:
            if reply.author_kind != "merchant":
                problems.append("replies must be authored by merchants")
        return problems


@dataclass
class ItemDynamics:
    """Mutable attribute block of one item; agents rewrite it during a run."""

    like_count: int = 0
    dislike_count: int = 0
    share_count: int = 0
    purchase_count: int = 0
    reviews: list[Review] = field(default_factory=list)
    rating_sum: int = 0
    rating_count: int = 0
    last_updated_step: int = 0
    review_seq: int = 0

    def next_review_id(self, item_id: str) -> str:
        self.review_seq += 1
        return f"{item_id}#{self.review_seq}"

    def to_dict(self) -> dict:
        return {
            "like_count": self.like_count,
            "dislike_count": self.dislike_count,
            "share_count": self.share_count,
            "purchase_count": self.purchase_count,
            "reviews": [r.to_dict() for r in self.reviews],
            "rating_sum": self.rating_sum,
            "rating_count": self.rating_count,
            "last_updated_step": self.last_updated_step,
            "review_seq": self.review_seq,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ItemDynamics":
        return cls(
            like_count=d.get("like_count", 0),
            dislike_count=d.get("dislike_count", 0),
            share_count=d.get("share_count", 0),
            purchase_count=d.get("purchase_count", 0),
            reviews=[Review.from_dict(r) for r in d.get("reviews", [])],
            rating_sum=d.get("rating_sum", 0),
            rating_count=d.get("rating_count", 0),
            last_updated_step=d.get("last_updated_step", 0),
            review_seq=d.get("review_seq", 0),
        )

    def violations(self) -> list[str]:
        problems = []
        for name in ("like_count", "dislike_count", "share_count", "purchase_count", "rating_count"):
            if getattr(self, name) < 0:
                problems.append(f"{name} must be non-negative")
        if self.rating_sum < 0:
            problems.append("rating_sum must be non-negative")
        avg = average_rating(self)
        if avg is not None and not (1.0 <= avg <= 5.0):
            problems.append(f"average rating {avg} outside [1, 5]")
        for review in self.reviews:
            problems.extend(review.violations())
        return problems


def average_rating(dynamics: ItemDynamics) -> Optional[float]:
    if dynamics.rating_count <= 0:
        return None
    return dynamics.rating_sum / dynamics.rating_count


@dataclass(frozen=True)
class HistoricalInteraction:
    item_id: str
    rating: int
    review_text: Optional[str] = None
    timestamp: Optional[float] = None

    def __post_init__(self):
        if not _valid_rating(self.rating):
            raise ValueError(f"rating must be an integer in 1..5, got {self.rating!r}")

    @property
    def has_review(self) -> bool:
        return bool(self.review_text and self.review_text.strip())

    def to_dict(self) -> dict:
        return {
            "item_id": self.item_id,
            "rating": self.rating,
            "review_text": self.review_text,
            "timestamp": self.timestamp,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "HistoricalInteraction":
        return cls(d["item_id"], int(d["rating"]), d.get("review_text"), d.get("timestamp"))


@dataclass(frozen=True)
class Action:
    kind: ActionKind
    target_item: Optional[str] = None
    target_review: Optional[str] = None
    review_text: Optional[str] = None
    rating: Optional[int] = None

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "target_item": self.target_item,
            "target_review": self.target_review,
            "review_text": self.review_text,
            "rating": self.rating,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Action":
        return cls(
            kind=ActionKind.parse(d["kind"]),
            target_item=d.get("target_item"),
            target_review=d.get("target_review"),
            review_text=d.get("review_text"),
            rating=d.get("rating"),
        )

    def label(self) -> str:
        return self.kind.value


DO_NOTHING = Action(ActionKind.DO_NOTHING)


def validate_action(action: Action) -> list[str]:
    """Return every violated Action invariant; an empty list means valid."""
    problems = []
    kind = action.kind
    if kind in PRODUCT_ACTIONS and not action.target_item:
        problems.append("target_item required")
    if kind == ActionKind.CREATE_REVIEW and not (action.review_text and action.review_text.strip()):
        problems.append("review_text required")
    if kind in REVIEW_VOTE_ACTIONS and not action.target_review:
        problems.append("target_review required")
    if action.rating is not None:
        if kind != ActionKind.CREATE_REVIEW:
            problems.append("rating only allowed on CreateReview")
        elif not _valid_rating(action.rating):
            problems.append("rating must be an integer in 1..5")
    return problems


@dataclass
class EventRecord:
    """One applied agent action. ``prompt``/``response`` are set when prompt recording is on."""

    step: int
    agent_id: str
    action: Action
    page_items: list[str]
    thought: Optional[str] = None
    decision_index: int = 0
    flags: list[str] = field(default_factory=list)
    prompt: Optional[str] = None
    response: Optional[str] = None

    record_type = "action"

    def to_dict(self) -> dict:
        d = {
            "record": self.record_type,
            "step": self.step,
            "agent_id": self.agent_id,
            "action": self.action.to_dict(),
            "page_items": list(self.page_items),
            "thought": self.thought,
            "decision_index": self.decision_index,
            "flags": list(self.flags),
        }
        if self.prompt is not None:
            d["prompt"] = self.prompt
            d["response"] = self.response
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "EventRecord":
        return cls(
            step=d["step"],
            agent_id=d["agent_id"],
            action=Action.from_dict(d["action"]),
            page_items=list(d["page_items"]),
            thought=d.get("thought"),
            decision_index=d.get("decision_index", 0),
            flags=list(d.get("flags", [])),
            prompt=d.get("prompt"),
            response=d.get("response"),
        )


INTERVENTION_KINDS = ("MaliciousReviews", "BrandRename", "SeedBoost")


@dataclass
class Intervention:
    kind: str
    step: int
    item_id: str
    texts: list[str] = field(default_factory=list)
    ratings: Optional[list[Optional[int]]] = None
    new_name: Optional[str] = None
    initial_sales: Optional[int] = None

    def __post_init__(self):
        if self.kind not in INTERVENTION_KINDS:
            raise ValueError(f"unknown intervention kind {self.kind!r}; expected one of {INTERVENTION_KINDS}")
        if self.kind == "BrandRename" and not self.new_name:
            raise ValueError("BrandRename requires new_name")
        if self.ratings is not None and len(self.ratings) != len(self.texts):
            raise ValueError("ratings must align with texts")

    @classmethod
    def malicious_reviews(cls, step, item_id, texts, ratings=None):
        return cls("MaliciousReviews", step, item_id, texts=list(texts), ratings=ratings)

    @classmethod
    def brand_rename(cls, step, item_id, new_name):
        return cls("BrandRename", step, item_id, new_name=new_name)

    @classmethod
    def seed_boost(cls, step, item_id, reviews, initial_sales, ratings=None):
        return cls("SeedBoost", step, item_id, texts=list(reviews), ratings=ratings, initial_sales=initial_sales)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "step": self.step,
            "item_id": self.item_id,
            "texts": list(self.texts),
            "ratings": None if self.ratings is None else list(self.ratings),
            "new_name": self.new_name,
            "initial_sales": self.initial_sales,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Intervention":
        return cls(
            kind=d["kind"],
            step=int(d["step"]),
            item_id=str(d["item_id"]),
            texts=list(d.get("texts") or d.get("reviews") or []),
            ratings=d.get("ratings"),
            new_name=d.get("new_name"),
            initial_sales=d.get("initial_sales"),
        )


@dataclass
class InterventionRecord:
    """Log entry for an applied intervention, with the counter deltas it caused."""

    step: int
    intervention: Intervention
    deltas: dict[str, int] = field(default_factory=dict)
    review_ids: list[str] = field(default_factory=list)

    record_type = "intervention"

    def to_dict(self) -> dict:
        return {
            "record": self.record_type,
            "step": self.step,
            "intervention": self.intervention.to_dict(),
            "deltas": dict(self.deltas),
            "review_ids": list(self.review_ids),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "InterventionRecord":
        return cls(d["step"], Intervention.from_dict(d["intervention"]), dict(d.get("deltas", {})), list(d.get("review_ids", [])))


@dataclass
class MerchantReplyRecord:
    step: int
    merchant_id: str
    strategy: str
    reply: Review
    parent_review_id: str

    record_type = "merchant_reply"

    def to_dict(self) -> dict:
        return {
            "record": self.record_type,
            "step": self.step,
            "merchant_id": self.merchant_id,
            "strategy": self.strategy,
            "parent_review_id": self.parent_review_id,
            "reply": self.reply.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MerchantReplyRecord":
        return cls(d["step"], d["merchant_id"], d["strategy"], Review.from_dict(d["reply"]), d["parent_review_id"])


_RECORD_TYPES = {
    "action": EventRecord,
    "intervention": InterventionRecord,
    "merchant_reply": MerchantReplyRecord,
}


def record_from_dict(d: dict):
    return _RECORD_TYPES[d.get("record", "action")].from_dict(d)
