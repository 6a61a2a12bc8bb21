"""User profile pool: objective statistics plus LLM-derived subjective and inferred blocks."""

from __future__ import annotations

import json
import logging
from collections import Counter
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .domain import HistoricalInteraction, ItemRecord
from .errors import FormatError, GatewayError, ProfileParseError
from .ingestion import Dataset, sample_history, stable_int
from .llm import ChatMessage
from .prompting import extract_json_block, load_prompt
from .text import CorpusStats, compute_tfidf_keywords, whitespace_token_count

logger = logging.getLogger(__name__)

UNKNOWN = "unknown"
TOP_CATEGORIES = 30
TOP_ITEMS = 10
TOP_KEYWORDS = 20
PROFILE_SAMPLE_SIZE = 60


@dataclass
class ObjectiveProfile:
    t_act: float
    t_conf: float
    t_cons: float
    t_cate: list[str]
    t_item: list[str]
    t_rate: float
    t_repr: float
    t_relen: float
    t_rekey: list[tuple[str, float]]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["t_rekey"] = [[w, s] for w, s in self.t_rekey]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ObjectiveProfile":
        d = dict(d)
        d["t_rekey"] = [(w, float(s)) for w, s in d.get("t_rekey", [])]
        return cls(**d)


@dataclass
class DatasetStats:
    """Dataset-wide quantities the objective profile is measured against."""

    interaction_counts: np.ndarray
    item_mean_rating: dict[str, float]
    corpus: CorpusStats

    @classmethod
    def from_dataset(cls, dataset: Dataset) -> "DatasetStats":
        counts = np.array(sorted(len(h) for h in dataset.users.values()), dtype=float)
        sums: Counter = Counter()
        ns: Counter = Counter()
        docs = []
        for uid in sorted(dataset.users):
            reviews = []
            for h in dataset.users[uid]:
                sums[h.item_id] += h.rating
                ns[h.item_id] += 1
                if h.has_review:
                    reviews.append(h.review_text)
            if reviews:
                docs.append(" ".join(reviews))
        means = {i: sums[i] / ns[i] for i in ns}
        return cls(counts, means, CorpusStats.from_documents(docs))


def _top_k(counter: Counter, k: int) -> list[str]:
    return [key for key, _ in sorted(counter.items(), key=lambda kv: (-kv[1], kv[0]))[:k]]


def compute_objective_profile(
    history: Sequence[HistoricalInteraction],
    catalog: dict[str, ItemRecord],
    stats: DatasetStats,
) -> ObjectiveProfile:
    if not history:
        raise ValueError("history must be non-empty")
    n = len(history)
    ratings = [h.rating for h in history]
    reviewed = [h for h in history if h.has_review]

    categories: Counter = Counter()
    items: Counter = Counter()
    for h in history:
        rec = catalog[h.item_id]
        categories.update(set(rec.categories))
        items[h.item_id] += 1
    # rank by count, then item name, then id
    item_order = sorted(items.items(), key=lambda kv: (-kv[1], catalog[kv[0]].name, kv[0]))
    t_item = [catalog[i].name for i, _ in item_order[:TOP_ITEMS]]

    counts = stats.interaction_counts
    t_act = float(np.mean(counts <= n)) if counts.size else 1.0
    t_conf = float(np.mean([abs(h.rating - stats.item_mean_rating.get(h.item_id, h.rating)) for h in history]))
    t_cons = min(1.0, max(0.0, 1.0 - len(categories) / n))

    return ObjectiveProfile(
        t_act=t_act,
        t_conf=t_conf,
        t_cons=t_cons,
        t_cate=_top_k(categories, TOP_CATEGORIES),
        t_item=t_item,
        t_rate=sum(ratings) / n,
        t_repr=len(reviewed) / n,
        t_relen=(sum(whitespace_token_count(h.review_text) for h in reviewed) / len(reviewed)) if reviewed else 0.0,
        t_rekey=compute_tfidf_keywords([h.review_text for h in reviewed], stats.corpus, TOP_KEYWORDS)
        if stats.corpus.n_docs
        else [],
    )


@dataclass
class SubjectiveProfile:
    consumption_budget_range: str
    scenario_preferences: list[str]
    consumption_habits: list[str]
    taste_preferences: list[str]
    reason: str = ""

    FIELDS = {
        "consumption_budget_range": str,
        "scenario_preferences": list,
        "consumption_habits": list,
        "taste_preferences": list,
    }

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SubjectiveProfile":
        return cls(**{k: d[k] for k in (*cls.FIELDS, "reason")})

    @classmethod
    def placeholder(cls) -> "SubjectiveProfile":
        return cls(UNKNOWN, [UNKNOWN], [UNKNOWN], [UNKNOWN], "placeholder")


@dataclass
class InferredProfile:
    estimated_age_range: str
    possible_occupation_type: str
    estimated_income_level: str
    life_status: str
    price_sensitivity: str
    quality_consciousness: str
    service_preferences: list[str]
    points_of_concern: list[str]
    review_language_style: list[str]
    reason: str = ""

    FIELDS = {
        "estimated_age_range": str,
        "possible_occupation_type": str,
        "estimated_income_level": str,
        "life_status": str,
        "price_sensitivity": str,
        "quality_consciousness": str,
        "service_preferences": list,
        "points_of_concern": list,
        "review_language_style": list,
    }

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "InferredProfile":
        return cls(**{k: d[k] for k in (*cls.FIELDS, "reason")})

    @classmethod
    def placeholder(cls) -> "InferredProfile":
        values = {k: (UNKNOWN if t is str else [UNKNOWN]) for k, t in cls.FIELDS.items()}
        return cls(**values, reason="placeholder")


@dataclass
class UserProfile:
    user_id: str
    objective: ObjectiveProfile
    subjective: SubjectiveProfile
    inferred: InferredProfile
    flags: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "user_id": self.user_id,
            "objective": self.objective.to_dict(),
            "subjective": self.subjective.to_dict(),
            "inferred": self.inferred.to_dict(),
            "flags": list(self.flags),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "UserProfile":
        return cls(
            user_id=d["user_id"],
            objective=ObjectiveProfile.from_dict(d["objective"]),
            subjective=SubjectiveProfile.from_dict(d["subjective"]),
            inferred=InferredProfile.from_dict(d["inferred"]),
            flags=list(d.get("flags", [])),
        )

    def render(self) -> str:
        o = self.objective
        lines = [
            f"Activity percentile: {o.t_act:.2f}; rating deviation from crowd: {o.t_conf:.2f}; taste consistency: {o.t_cons:.2f}",
            f"Average rating given: {o.t_rate:.2f}; reviews written on {o.t_repr:.0%} of visits, {o.t_relen:.0f} words on average",
            "Favourite categories: " + ", ".join(o.t_cate[:10]),
            "Most visited: " + ", ".join(o.t_item[:5]),
            "Review vocabulary: " + ", ".join(w for w, _ in o.t_rekey[:10]),
        ]
        s = self.subjective
        if s.reason != "placeholder":
            lines += [
                f"Budget: {s.consumption_budget_range}",
                "Tastes: " + ", ".join(s.taste_preferences),
                "Scenarios: " + ", ".join(s.scenario_preferences),
                "Habits: " + ", ".join(s.consumption_habits),
            ]
        i = self.inferred
        if i.reason != "placeholder":
            lines += [
                f"Age: {i.estimated_age_range}; occupation: {i.possible_occupation_type}; income: {i.estimated_income_level}; life: {i.life_status}",
                f"Price sensitivity: {i.price_sensitivity}; quality consciousness: {i.quality_consciousness}",
                "Cares about: " + ", ".join(i.service_preferences + i.points_of_concern),
                "Writes reviews that are: " + ", ".join(i.review_language_style),
            ]
        return "\n".join(lines)


def _render_history(samples, catalog, with_reviews: bool) -> str:
    lines = []
    for h in samples:
        rec = catalog[h.item_id]
        parts = [
            f"- {rec.name} [{', '.join(rec.categories)}]",
            f"  description: {rec.augmented_description or rec.description or 'n/a'}",
            f"  rating: {h.rating}",
        ]
        if with_reviews and h.has_review:
            parts.append(f"  review: {h.review_text}")
        lines.append("\n".join(parts))
    return "\n".join(lines)


def _check_subjective(obj: dict) -> SubjectiveProfile:
    block = obj.get("profile")
    if not isinstance(block, dict):
        raise FormatError("missing 'profile' object")
    values = {}
    for key, typ in SubjectiveProfile.FIELDS.items():
        if key not in block or not isinstance(block[key], typ):
            raise FormatError(f"field {key!r} missing or not a {typ.__name__}")
        values[key] = [str(x) for x in block[key]] if typ is list else block[key]
    return SubjectiveProfile(**values, reason=str(obj.get("reason", "")))


def _blank(value) -> bool:
    return value is None or (isinstance(value, str) and not value.strip())


def _check_inferred(obj: dict) -> InferredProfile:
    block = obj.get("profile")
    if not isinstance(block, dict):
        raise FormatError("missing 'profile' object")
    values = {}
    for key, typ in InferredProfile.FIELDS.items():
        raw = block.get(key)
        if typ is str:
            if isinstance(raw, list):
                raw = ", ".join(str(x) for x in raw if not _blank(x))
            values[key] = UNKNOWN if _blank(raw) or str(raw).strip().lower() in ("unknow", UNKNOWN) else str(raw)
        else:
            if isinstance(raw, str):
                raw = [raw]
            items = [str(x) for x in (raw or []) if not _blank(x)]
            items = [UNKNOWN if x.strip().lower() == "unknow" else x for x in items]
            values[key] = items or [UNKNOWN]
    return InferredProfile(**values, reason=str(obj.get("reason", "")))


def _ask_structured(gateway, template: str, history_text: str, check):
    """One prompt, one corrective reprompt on schema mismatch, then ProfileParseError."""
    system, user = load_prompt(template).render(history=history_text)
    first = gateway.complete(user, system=system)
    try:
        result = check(extract_json_block(first.text, "profile"))
        result.retry_count = 0
        return result
    except FormatError as exc:
        problem = str(exc)
    history = [ChatMessage("user", user), ChatMessage("assistant", first.text)]
    fix = f"Your reply could not be used ({problem}). Reply again with only the JSON object in the required layout."
    second = gateway.complete(fix, system=system, history=history)
    try:
        result = check(extract_json_block(second.text, "profile"))
    except FormatError as exc:
        raise ProfileParseError(f"{template}: unusable reply after retry ({exc})") from exc
    result.retry_count = 1
    return result


def build_subjective_profile(samples: Sequence[HistoricalInteraction], catalog, gateway) -> SubjectiveProfile:
    if not samples:
        raise ValueError("need at least one sampled interaction")
    return _ask_structured(gateway, "subjective_profile", _render_history(samples, catalog, False), _check_subjective)


def build_inferred_profile(samples: Sequence[HistoricalInteraction], catalog, gateway) -> InferredProfile:
    if not samples:
        raise ValueError("need at least one sampled interaction")
    return _ask_structured(gateway, "inferred_profile", _render_history(samples, catalog, True), _check_inferred)


def assemble_profile_pool(dataset: Dataset, gateway=None, seed: int = 0, sample_size: int = PROFILE_SAMPLE_SIZE) -> dict[str, UserProfile]:
    """One profile per user. Without a gateway the LLM blocks are placeholders.

    A user whose LLM profiling fails keeps its objective block and gets
    placeholder subjective/inferred blocks plus a flag.
    """
    stats = DatasetStats.from_dataset(dataset)
    user_ids = sorted(dataset.users)

    def one(uid: str) -> UserProfile:
        hist = dataset.users[uid]
        objective = compute_objective_profile(hist, dataset.catalog, stats)
        if gateway is None:
            return UserProfile(uid, objective, SubjectiveProfile.placeholder(), InferredProfile.placeholder(), ["mock-placeholder"])
        samples = sample_history(hist, sample_size, stable_int(seed, uid))
        flags = []
        try:
            subjective = build_subjective_profile(samples, dataset.catalog, gateway)
        except (GatewayError, ProfileParseError) as exc:
            logger.warning("subjective profile failed for %s: %s", uid, exc)
            subjective = SubjectiveProfile.placeholder()
            flags.append("subjective-failed")
        try:
            inferred = build_inferred_profile(samples, dataset.catalog, gateway)
        except (GatewayError, ProfileParseError) as exc:
            logger.warning("inferred profile failed for %s: %s", uid, exc)
            inferred = InferredProfile.placeholder()
            flags.append("inferred-failed")
        return UserProfile(uid, objective, subjective, inferred, flags)

    if gateway is None:
        results = [one(u) for u in user_ids]
    else:
        results = gateway.map(one, user_ids)
    pool = {}
    for uid, res in zip(user_ids, results):
        if isinstance(res, Exception):
            raise res
        pool[uid] = res
    return pool


def save_profile_pool(pool: dict[str, UserProfile], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for uid in sorted(pool):
            fh.write(json.dumps(pool[uid].to_dict(), sort_keys=True, ensure_ascii=False) + "\n")


def load_profile_pool(path) -> dict[str, UserProfile]:
    pool = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                p = UserProfile.from_dict(json.loads(line))
                pool[p.user_id] = p
    return pool
