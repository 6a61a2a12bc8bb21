"""User and merchant agents.

``decide`` is the LLM path: prompt, parse, fall back to DoNothing on failure,
record memories. ``mock_policy_decide`` is a deterministic stand-in used for
offline experiments; it never touches a gateway.
"""

from __future__ import annotations

import enum
import json
import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .domain import DO_NOTHING, Action, ActionKind, REVIEW_VOTE_ACTIONS, validate_action
from .errors import FormatError, GatewayError
from .llm import ChatMessage, ChatRequest
from .memory import CognitiveMemory, MemoryStore, PerceptualMemory
from .profiling import UserProfile
from .prompting import extract_json_block, load_prompt, task_tag
from .sentiment import is_negative_review, sentiment_compound
from .store import ItemStore, ItemView, Review

logger = logging.getLogger(__name__)

DEFAULT_MAX_ACTIONS = 4


class MerchantStrategy(str, enum.Enum):
    NO_REPLY = "NoReply"
    POSITIVE_ENGAGE = "PositiveEngage"
    NEGATIVE_CONFRONT = "NegativeConfront"

    @classmethod
    def parse(cls, value) -> "MerchantStrategy":
        if isinstance(value, MerchantStrategy):
            return value
        key = str(value).replace("_", "").replace("-", "").lower()
        for s in cls:
            if s.value.lower() == key:
                return s
        raise ValueError(f"unknown merchant strategy {value!r}; valid: {[s.value for s in cls]}")


PERSONAS = ("preference-match", "popularity-sensitive", "sentiment-sensitive", "random")
LLM_POLICY = "llm"
AGENT_POLICIES = PERSONAS + (LLM_POLICY,)


@dataclass
class PersonaParams:
    popularity_threshold: int = 1
    saturation: float = 20.0
    purchase_probability: float = 0.3
    review_probability: float = 0.0
    sentiment_threshold: float = 0.0


@dataclass
class UserAgentState:
    agent_id: str
    profile: UserProfile
    memory: MemoryStore = field(default_factory=MemoryStore)
    persona: str = "preference-match"
    purchased: set = field(default_factory=set)

    def to_dict(self) -> dict:
        return {
            "agent_id": self.agent_id,
            "profile": self.profile.to_dict(),
            "memory": self.memory.to_dict(),
            "persona": self.persona,
            "purchased": sorted(self.purchased),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "UserAgentState":
        return cls(d["agent_id"], UserProfile.from_dict(d["profile"]), MemoryStore.from_dict(d["memory"]), d["persona"], set(d["purchased"]))


@dataclass
class AgentDecision:
    thought: str
    actions: list[Action]
    flags: list[str] = field(default_factory=list)
    prompt: Optional[str] = None
    response: Optional[str] = None

    def __post_init__(self):
        if not self.actions:
            self.actions = [DO_NOTHING]

    def to_json(self) -> str:
        return json.dumps({"thought": self.thought, "actions": [a.to_dict() for a in self.actions]}, ensure_ascii=False, sort_keys=True)


def decision_violations(actions: Sequence[Action]) -> list[str]:
    problems = []
    for a in actions:
        problems.extend(f"{a.kind.value}: {p}" for p in validate_action(a))
    if any(a.kind == ActionKind.DO_NOTHING for a in actions) and len(actions) > 1:
        problems.append("DoNothing must appear alone")
    return problems


def _action_from_obj(obj) -> Action:
    if not isinstance(obj, dict) or "kind" not in obj:
        raise FormatError("each action needs a 'kind'")
    try:
        kind = ActionKind.parse(obj["kind"])
    except ValueError:
        raise FormatError(f"unknown action kind {obj['kind']!r}") from None
    rating = obj.get("rating")
    if rating is not None:
        try:
            rating = int(rating)
        except (TypeError, ValueError):
            raise FormatError(f"rating {rating!r} is not an integer") from None
    target = obj.get("target_item", obj.get("target"))
    return Action(
        kind=kind,
        target_item=None if target is None else str(target),
        target_review=None if obj.get("target_review") is None else str(obj["target_review"]),
        review_text=obj.get("review_text"),
        rating=rating,
    )


def parse_agent_output(text: str) -> AgentDecision:
    """Extract ``{thought, actions: [...]}`` from model text; raises FormatError."""
    block = extract_json_block(text, "actions")
    raw_actions = block.get("actions")
    if not isinstance(raw_actions, list):
        raise FormatError("'actions' must be a list")
    actions = [_action_from_obj(a) for a in raw_actions] or [DO_NOTHING]
    problems = decision_violations(actions)
    if problems:
        raise FormatError("; ".join(problems))
    thought = block.get("thought")
    if not isinstance(thought, str):
        thought = ""
    return AgentDecision(thought=thought, actions=actions, response=text)


def restrict_to_page(decision: AgentDecision, page: Sequence[ItemView], max_actions: int = DEFAULT_MAX_ACTIONS) -> AgentDecision:
    """Drop actions targeting items or reviews not on the page; cap the action count."""
    page_ids = {v.item_id for v in page}
    review_ids = set().union(*(v.review_ids() for v in page)) if page else set()
    kept = []
    dropped = 0
    for a in decision.actions:
        if a.kind == ActionKind.DO_NOTHING:
            kept.append(a)
        elif a.kind in REVIEW_VOTE_ACTIONS:
            if a.target_review in review_ids:
                kept.append(a)
            else:
                dropped += 1
        elif a.target_item in page_ids:
            kept.append(a)
        else:
            dropped += 1
    flags = list(decision.flags)
    if dropped:
        flags.append("dropped-offpage")
    if len(kept) > max_actions:
        kept = kept[:max_actions]
        flags.append("capped")
    if not kept:
        kept = [DO_NOTHING]
    return AgentDecision(decision.thought, kept, flags, decision.prompt, decision.response)


def reasoning_context(page: Sequence[ItemView]) -> str:
    return " ".join(f"{v.name} {' '.join(v.categories)}" for v in page)


def render_memories(perceptual: Sequence[PerceptualMemory], cognitive: Sequence[CognitiveMemory]) -> str:
    lines = []
    for m in cognitive:
        acts = ", ".join(_describe(a) for a in m.actions)
        lines.append(f"- step {m.step}: thought \"{m.thought}\" -> {acts}")
    for m in perceptual:
        acts = ", ".join(_describe(a) for a in m.actions)
        lines.append(f"- step {m.step}: saw {', '.join(m.page_item_names)} -> {acts}")
    return "\n".join(lines) if lines else "(no memories yet)"


def _describe(a: Action) -> str:
    if a.kind == ActionKind.DO_NOTHING:
        return "did nothing"
    target = a.target_review if a.kind in REVIEW_VOTE_ACTIONS else a.target_item
    return f"{a.kind.value}({target})"


def build_decision_prompt(state: UserAgentState, page: Sequence[ItemView], retrieved, step: int, max_actions: int = DEFAULT_MAX_ACTIONS) -> tuple[str, str]:
    perceptual, cognitive = retrieved
    return load_prompt("decision").render(
        profile=state.profile.render(),
        memories=render_memories(perceptual, cognitive),
        page="\n".join(v.render() for v in page),
        step=step,
        max_actions=max_actions,
    )


def record_decision(state: UserAgentState, page: Sequence[ItemView], decision: AgentDecision, step: int) -> None:
    state.memory.record_perceptual([v.item_id for v in page], decision.actions, step, [v.name for v in page])
    state.memory.record_cognitive([v.to_dict() for v in page], decision.thought or "(no stated reasoning)", decision.actions, step)
    for a in decision.actions:
        if a.kind == ActionKind.PURCHASE_PRODUCT:
            state.purchased.add(a.target_item)


def decide(
    state: UserAgentState,
    page: Sequence[ItemView],
    retrieved_memories,
    gateway,
    step: int,
    max_actions: int = DEFAULT_MAX_ACTIONS,
) -> AgentDecision:
    """Think-then-act through the gateway, with one corrective reprompt on malformed output."""
    if not page:
        raise ValueError("page must be non-empty")
    system, user = build_decision_prompt(state, page, retrieved_memories, step, max_actions)
    decision = None
    flags = []
    text = None
    try:
        text = gateway.complete(user, system=system).text
        try:
            decision = parse_agent_output(text)
        except FormatError as exc:
            history = [ChatMessage("user", user), ChatMessage("assistant", text)]
            fix = f"Your reply could not be parsed ({exc}). Reply again with the reasoning and one valid JSON object."
            text = gateway.complete(fix, system=system, history=history).text
            try:
                decision = parse_agent_output(text)
                flags.append("reprompted")
            except FormatError:
                flags.append("fallback-format")
    except GatewayError as exc:
        logger.warning("decision gateway failure for %s: %s", state.agent_id, exc)
        flags.append("fallback-gateway")
    if decision is None:
        decision = AgentDecision("", [DO_NOTHING], response=text)
    decision.flags = flags + decision.flags
    decision.prompt = f"{system}\n\n{user}"
    decision.response = text
    decision = restrict_to_page(decision, page, max_actions)
    record_decision(state, page, decision, step)
    return decision


# --- deterministic personas --------------------------------------------------

POSITIVE_REVIEWS = (
    "Great food and friendly service, would happily come back.",
    "Loved it. Fresh, tasty and good value.",
    "Excellent experience, the staff were wonderful.",
    "Really good meal and a nice atmosphere.",
)
NEGATIVE_REVIEWS = (
    "Terrible food and rude staff. Awful experience.",
    "Disgusting meal, dirty tables, horrible service.",
    "Worst visit ever, cold food and angry staff.",
)


def review_sentiment(view: ItemView) -> Optional[float]:
    """Mean compound score over the visible reviews and merchant replies; None without reviews."""
    scores = []
    for r in view.recent_reviews:
        scores.append(sentiment_compound(r.text))
        scores.extend(sentiment_compound(t) for t in r.replies)
    return float(np.mean(scores)) if scores else None


def _popularity_choice(page, refuse=None):
    best = None
    for v in page:
        if refuse is not None and refuse(v):
            continue
        if best is None or v.popularity > best.popularity:
            best = v
    return best


def mock_policy_decide(
    persona: str,
    state: UserAgentState,
    page: Sequence[ItemView],
    rng: np.random.Generator,
    params: PersonaParams = PersonaParams(),
    max_actions: int = DEFAULT_MAX_ACTIONS,
) -> AgentDecision:
    """Rule-based decision for one page. Deterministic given ``rng`` state and inputs.

    The popularity personas draw the same three uniforms on every call so two
    runs sharing a seed see identical random numbers whatever the page shows.
    """
    if not page:
        raise ValueError("page must be non-empty")
    if persona == "preference-match":
        wanted = set(state.profile.objective.t_cate)
        hits = [v for v in page if wanted.intersection(v.categories)]
        if not hits:
            return AgentDecision("Nothing here matches what I usually enjoy.", [DO_NOTHING])
        acts = [Action(ActionKind.LIKE_PRODUCT, v.item_id) for v in hits[:max_actions]]
        return AgentDecision("These match my favourite categories: " + ", ".join(v.name for v in hits[:max_actions]), acts)

    if persona in ("popularity-sensitive", "sentiment-sensitive"):
        u_like, u_buy, u_review = rng.random(3)
        refuse = None
        if persona == "sentiment-sensitive":
            def refuse(v):
                s = review_sentiment(v)
                return s is not None and s < params.sentiment_threshold
        target = _popularity_choice(page, refuse)
        if target is None:
            return AgentDecision("The reviews put me off everything on this page.", [DO_NOTHING])
        pop = target.popularity
        if pop < params.popularity_threshold:
            return AgentDecision("Nothing here looks popular enough to try.", [DO_NOTHING])
        p_like = pop / (pop + params.saturation)
        if u_like >= p_like:
            return AgentDecision(f"{target.name} is popular but I'll pass this time.", [DO_NOTHING])
        acts = [Action(ActionKind.LIKE_PRODUCT, target.item_id)]
        if u_buy < params.purchase_probability:
            acts.append(Action(ActionKind.PURCHASE_PRODUCT, target.item_id))
        if u_review < params.review_probability:
            text = POSITIVE_REVIEWS[int(u_review * 1e6) % len(POSITIVE_REVIEWS)]
            acts.append(Action(ActionKind.CREATE_REVIEW, target.item_id, review_text=text, rating=5))
        return AgentDecision(f"{target.name} is popular ({pop} likes and sales), so I'll go for it.", acts[:max_actions])

    if persona.startswith("random"):
        kinds = list(ActionKind)
        kind = kinds[int(rng.integers(len(kinds)))]
        item = page[int(rng.integers(len(page)))]
        if kind == ActionKind.DO_NOTHING:
            return AgentDecision("Random pick: nothing.", [DO_NOTHING])
        if kind in REVIEW_VOTE_ACTIONS:
            reviews = [r.review_id for v in page for r in v.recent_reviews]
            if not reviews:
                return AgentDecision("Random pick: no reviews to vote on.", [DO_NOTHING])
            return AgentDecision("Random pick.", [Action(kind, target_review=reviews[int(rng.integers(len(reviews)))])])
        if kind == ActionKind.CREATE_REVIEW:
            rating = int(rng.integers(1, 6))
            pool = POSITIVE_REVIEWS if rating >= 3 else NEGATIVE_REVIEWS
            return AgentDecision("Random pick.", [Action(kind, item.item_id, review_text=pool[int(rng.integers(len(pool)))], rating=rating)])
        return AgentDecision("Random pick.", [Action(kind, item.item_id)])

    raise ValueError(f"unknown persona {persona!r}; valid: {', '.join(PERSONAS)}")


# --- merchants ---------------------------------------------------------------

_STANCES = {
    MerchantStrategy.POSITIVE_ENGAGE: "You reply warmly to every review, thank the customer, apologize for any problem and defend the business politely.",
    MerchantStrategy.NEGATIVE_CONFRONT: "You reply combatively to negative reviews and argue with the customer.",
}


def merchant_step(
    merchant_id: str,
    new_reviews: Sequence[Review],
    strategy,
    gateway,
    store: ItemStore,
    step: int,
) -> tuple[list[tuple[str, Review]], list[str]]:
    """Reply to this step's user reviews per strategy.

    Returns ``([(parent_review_id, reply), ...], flags)``. Replies are attached
    to the parent reviews in ``store``.
    """
    strategy = MerchantStrategy.parse(strategy)
    if strategy == MerchantStrategy.NO_REPLY:
        return [], []
    if strategy == MerchantStrategy.NEGATIVE_CONFRONT:
        targets = [r for r in new_reviews if is_negative_review(r.text, r.rating)]
    else:
        targets = list(new_reviews)
    replies, flags = [], []
    for review in targets:
        system, user = load_prompt("merchant_reply").render(
            strategy=strategy.value,
            item_name=store.statics[review.item_id].name,
            stance=_STANCES[strategy],
            rating=review.rating if review.rating is not None else "none",
            review_text=review.text,
        )
        try:
            text = gateway.complete(user, system=system).text.strip()
        except GatewayError as exc:
            logger.warning("merchant %s reply failed: %s", merchant_id, exc)
            flags.append(f"reply-failed:{review.review_id}")
            continue
        if not text:
            flags.append(f"reply-empty:{review.review_id}")
            continue
        replies.append((review.review_id, store.add_reply(review.review_id, merchant_id, text, step)))
    return replies, flags


# --- offline responder -------------------------------------------------------

_MOCK_SUBJECTIVE = {
    "reason": "Derived offline; no model was consulted.",
    "profile": {
        "consumption_budget_range": "moderate",
        "scenario_preferences": ["casual dining"],
        "consumption_habits": ["visits familiar places"],
        "taste_preferences": ["varied"],
    },
}


def default_mock_responder(request: ChatRequest) -> str:
    """Deterministic replies keyed on the ``[task: ...]`` tag of each prompt template."""
    tag = task_tag(request.system_message) or ""
    user = request.last_user_message
    if tag == "augment-item":
        for line in user.splitlines():
            if line.startswith("Name: "):
                return line[len("Name: "):]
        return ""
    if tag == "subjective-profile":
        return json.dumps(_MOCK_SUBJECTIVE)
    if tag == "inferred-profile":
        from .profiling import InferredProfile

        return json.dumps({"reason": "Derived offline.", "profile": {k: ("unknown" if t is str else ["unknown"]) for k, t in InferredProfile.FIELDS.items()}})
    if tag == "agent-decision":
        return 'Nothing stands out to me right now.\n{"thought": "Nothing stands out.", "actions": [{"kind": "DoNothing"}]}'
    if tag.startswith("merchant-reply/"):
        strategy = tag.split("/", 1)[1]
        if strategy == MerchantStrategy.POSITIVE_ENGAGE.value:
            return "Thank you so much for your kind feedback! We truly appreciate you and hope to welcome you back soon."
        return "This review is wrong and unfair. We reject your complaint and you were rude to our staff."
    if tag == "pairwise-judge":
        return "1"
    if tag == "llm-filter":
        return "PASS"
    if tag == "eval-select":
        return '{"thought": "Offline responder.", "selected": []}'
    raise GatewayError(f"mock responder has no rule for task {tag!r}")
