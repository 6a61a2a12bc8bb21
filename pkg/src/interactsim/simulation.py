"""The platform loop: pages, agent decisions, real-time store updates, merchants.

Randomness is counter-based: the visiting order of step ``t`` comes from
``default_rng([seed, t, ORDER_STREAM])`` and agent ``n``'s persona draws from
``default_rng([seed, t, n])``. Two runs that differ only in an intervention or
in the interaction switch therefore consume identical random numbers, and a
resumed run needs nothing but the seed and the step counter.
"""

from __future__ import annotations

import copy
import json
import logging
import tempfile
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .agents import (
    LLM_POLICY,
    AgentDecision,
    UserAgentState,
    build_decision_prompt,
    decide,
    default_mock_responder,
    merchant_step,
    mock_policy_decide,
    reasoning_context,
    record_decision,
    restrict_to_page,
)
from .config import SimulationConfig
from .domain import (
    ActionKind,
    EventRecord,
    Intervention,
    InterventionRecord,
    ItemDynamics,
    MerchantReplyRecord,
    Review,
    record_from_dict,
)
from .errors import SimulationError, SnapshotVersionError
from .ingestion import Dataset
from .llm import Gateway, MockBackend
from .profiling import UserProfile
from .recommenders import TrainedModel, recommend
from .store import COUNTERS, ItemStore, ItemView, UnknownTargetError, apply_action, apply_intervention, snapshot_item

logger = logging.getLogger(__name__)

SNAPSHOT_FORMAT_VERSION = 1
ORDER_STREAM = 0x5EED
SEED_REVIEWS_PER_ITEM = 20
EXCLUSION_POLICIES = ("none", "exclude-purchased")


@dataclass
class Page:
    items: list[ItemView]
    flags: list[str] = field(default_factory=list)

    @property
    def item_ids(self) -> list[str]:
        return [v.item_id for v in self.items]


@dataclass
class SimulationState:
    step: int
    store: ItemStore
    agents: list[UserAgentState]
    event_log: list = field(default_factory=list)
    seed: int = 0
    presented: Optional[ItemStore] = None
    initial_counters: dict = field(default_factory=dict)

    @property
    def rng_state(self) -> dict:
        return {"seed": self.seed, "step": self.step, "order_stream": ORDER_STREAM}

    def view_store(self) -> ItemStore:
        """The store agents read from: the live one unless interaction is switched off."""
        return self.presented if self.presented is not None else self.store

    def to_dict(self, config: Optional[SimulationConfig] = None) -> dict:
        return {
            "format_version": SNAPSHOT_FORMAT_VERSION,
            "config": None if config is None else config.to_dict(),
            "step": self.step,
            "rng_state": self.rng_state,
            "store": self.store.to_dict(),
            "presented": None if self.presented is None else self.presented.to_dict(),
            "agents": [a.to_dict() for a in self.agents],
            "initial_counters": self.initial_counters,
            "event_count": len(self.event_log),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SimulationState":
        version = d.get("format_version")
        if not isinstance(version, int) or version > SNAPSHOT_FORMAT_VERSION:
            raise SnapshotVersionError(
                f"snapshot format version {version!r} is newer than supported version {SNAPSHOT_FORMAT_VERSION}"
            )
        return cls(
            step=d["step"],
            store=ItemStore.from_dict(d["store"]),
            agents=[UserAgentState.from_dict(a) for a in d["agents"]],
            seed=d["rng_state"]["seed"],
            presented=None if d.get("presented") is None else ItemStore.from_dict(d["presented"]),
            initial_counters=d.get("initial_counters", {}),
        )


def save_snapshot(state: SimulationState, path: Union[str, Path], config: Optional[SimulationConfig] = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(state.to_dict(config), sort_keys=True, ensure_ascii=False), "utf-8")
    return path


def load_snapshot(path: Union[str, Path]) -> tuple[SimulationState, Optional[SimulationConfig]]:
    d = json.loads(Path(path).read_text("utf-8"))
    state = SimulationState.from_dict(d)
    config = SimulationConfig.from_dict(d["config"]) if d.get("config") else None
    return state, config


# --- event log I/O -----------------------------------------------------------


def event_line(record) -> str:
    return json.dumps(record.to_dict(), sort_keys=True, ensure_ascii=False)


def write_event_log(records: Sequence, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for r in records:
            fh.write(event_line(r) + "\n")
    return path


def read_event_log(path: Union[str, Path]) -> list:
    out = []
    with Path(path).open(encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                out.append(record_from_dict(json.loads(line)))
    return out


# --- setup -------------------------------------------------------------------


def initial_store(dataset: Dataset, seed_reviews: int = SEED_REVIEWS_PER_ITEM) -> ItemStore:
    """Seed item dynamics from history: ratings >= 4 count as likes, <= 2 as dislikes.

    Every historical rating enters the rating average; the ``seed_reviews``
    most recent reviews per item are attached at step 0.
    """
    per_item = defaultdict(list)
    for uid in sorted(dataset.users):
        for h in dataset.users[uid]:
            per_item[h.item_id].append((uid, h))
    dynamics = {}
    for item_id in sorted(dataset.catalog):
        dyn = ItemDynamics()
        rows = per_item.get(item_id, [])
        for _, h in rows:
            dyn.rating_sum += h.rating
            dyn.rating_count += 1
            if h.rating >= 4:
                dyn.like_count += 1
            elif h.rating <= 2:
                dyn.dislike_count += 1
        reviewed = sorted(
            (r for r in rows if r[1].has_review),
            key=lambda r: (r[1].timestamp if r[1].timestamp is not None else float("-inf"), r[0]),
        )
        for uid, h in reviewed[-seed_reviews:] if seed_reviews > 0 else []:
            dyn.reviews.append(Review(dyn.next_review_id(item_id), item_id, "user", h.review_text, 0, uid, h.rating))
        dynamics[item_id] = dyn
    return ItemStore(copy.deepcopy(dataset.catalog), dynamics)


def make_agents(profile_pool: dict[str, UserProfile], config: SimulationConfig) -> list[UserAgentState]:
    """``agent_count`` agents drawn from the pool in a seeded order; cycles when the pool is smaller."""
    if not profile_pool:
        raise ValueError("profile pool is empty")
    users = sorted(profile_pool)
    order = np.random.default_rng([config.seed, 0xA6E7]).permutation(len(users))
    agents = []
    for n in range(config.agent_count):
        uid = users[order[n % len(users)]]
        cycle = n // len(users)
        agent_id = uid if cycle == 0 else f"{uid}~{cycle}"
        agents.append(UserAgentState(agent_id, profile_pool[uid], persona=config.persona_for(n)))
    return agents


def agent_user_id(state: UserAgentState) -> str:
    return state.profile.user_id


def default_gateway(max_in_flight: int = 4) -> Gateway:
    return Gateway(MockBackend(default_mock_responder), max_in_flight=max_in_flight)


# --- pages -------------------------------------------------------------------


def build_recommendation_page(
    recommender: TrainedModel,
    user: Union[str, UserAgentState],
    store: ItemStore,
    page_size: int,
    exclusion_policy: str = "none",
    purchased: Sequence[str] = (),
    salt: int = 0,
    review_window: int = 5,
    show_share_count: bool = False,
) -> Page:
    """Top ``page_size`` items as enriched views; short pages are padded by current popularity."""
    if page_size < 1:
        raise ValueError("page_size must be >= 1")
    if exclusion_policy not in EXCLUSION_POLICIES:
        raise ValueError(f"unknown exclusion policy {exclusion_policy!r}")
    if isinstance(user, UserAgentState):
        purchased = purchased or sorted(user.purchased)
        user = agent_user_id(user)
    exclude = set(purchased) if exclusion_policy == "exclude-purchased" else set()
    exclude |= {i for i in recommender.item_ids if i not in store}
    ids = recommend(recommender, user, page_size, exclude, salt=salt, live_counts=store.live_counts())
    flags = []
    if len(ids) < page_size:
        taken = set(ids)
        counts = store.live_counts()
        extra = sorted((i for i in store.item_ids() if i not in taken and i not in exclude), key=lambda i: (-counts[i], i))
        if len(ids) + len(extra) < page_size:
            # everything eligible is already shown; fall back to excluded items too
            extra += sorted((i for i in store.item_ids() if i not in taken and i not in extra), key=lambda i: (-counts[i], i))
        ids = ids + extra[: page_size - len(ids)]
        flags.append("popularity-fallback")
    return Page([snapshot_item(store, i, review_window, show_share_count) for i in ids], flags)


# --- the loop ----------------------------------------------------------------


def _mirror_intervention(presented: ItemStore, live: ItemStore, intervention: Intervention, created: list[str]) -> None:
    """Copy an intervention's effect into the frozen store with identical review ids."""
    item = intervention.item_id
    presented.statics[item].name = live.statics[item].name
    dyn = presented.dynamics[item]
    for rid in created:
        review = copy.deepcopy(live.review(rid))
        dyn.reviews.append(review)
        if review.rating is not None:
            dyn.rating_sum += review.rating
            dyn.rating_count += 1
    dyn.review_seq = max(dyn.review_seq, live.dynamics[item].review_seq)
    if intervention.kind == "SeedBoost" and intervention.initial_sales is not None:
        dyn.purchase_count = intervention.initial_sales
    presented._reindex()


class _Run:
    def __init__(self, config, state, recommender, gateway, event_log_path, snapshot_dir, dump_dir):
        self.config = config
        self.state = state
        self.recommender = recommender
        self.gateway = gateway
        self.event_log_path = Path(event_log_path) if event_log_path else None
        self.snapshot_dir = Path(snapshot_dir) if snapshot_dir else None
        self.dump_dir = Path(dump_dir) if dump_dir else None
        self.new_events: list = []

    def emit(self, record) -> None:
        self.state.event_log.append(record)
        self.new_events.append(record)
        if self.event_log_path is not None:
            with self.event_log_path.open("a", encoding="utf-8") as fh:
                fh.write(event_line(record) + "\n")

    def abort(self, message: str):
        target = self.dump_dir or Path(tempfile.mkdtemp(prefix="interactsim-dump-"))
        path = save_snapshot(self.state, target / f"dump-step-{self.state.step}.json", self.config)
        raise SimulationError(message, str(path))

    def check_invariants(self) -> None:
        problems = self.state.store.violations()
        if self.state.presented is not None:
            problems += [f"presented: {p}" for p in self.state.presented.violations()]
        late = [r for r in self.state.event_log if r.step > self.state.step]
        if late:
            problems.append(f"{len(late)} log records are ahead of step {self.state.step}")
        if problems:
            self.abort("invariant breach: " + "; ".join(problems[:5]))

    def apply_interventions(self, step: int) -> None:
        for iv in self.config.interventions:
            if iv.step != step:
                continue
            deltas, created = apply_intervention(self.state.store, iv, step)
            if self.state.presented is not None:
                _mirror_intervention(self.state.presented, self.state.store, iv, created)
            self.emit(InterventionRecord(step, iv, deltas, created))

    def page_for(self, agent: UserAgentState, store: ItemStore, step: int) -> Page:
        cfg = self.config
        return build_recommendation_page(
            self.recommender,
            agent_user_id(agent),
            store,
            cfg.page_size,
            cfg.exclusion_policy,
            sorted(agent.purchased),
            salt=step,
            review_window=cfg.review_window,
            show_share_count=cfg.show_share_count,
        )

    def decide_one(self, index: int, agent: UserAgentState, page: Page, step: int) -> AgentDecision:
        cfg = self.config
        if agent.persona == LLM_POLICY:
            retrieved = agent.memory.retrieve(reasoning_context(page.items), step, cfg.retrieval)
            decision = decide(agent, page.items, retrieved, self.gateway, step, cfg.max_actions_per_step)
        else:
            rng = np.random.default_rng([cfg.seed, step, index])
            decision = mock_policy_decide(agent.persona, agent, page.items, rng, cfg.persona_params, cfg.max_actions_per_step)
            decision = restrict_to_page(decision, page.items, cfg.max_actions_per_step)
            if cfg.record_prompts:
                retrieved = agent.memory.retrieve(reasoning_context(page.items), step, cfg.retrieval)
                system, user = build_decision_prompt(agent, page.items, retrieved, step, cfg.max_actions_per_step)
                decision.prompt = f"{system}\n\n{user}"
                decision.response = decision.to_json()
            record_decision(agent, page.items, decision, step)
        decision.flags = decision.flags + page.flags
        return decision

    def commit(self, agent: UserAgentState, page: Page, decision: AgentDecision, step: int, new_reviews: list) -> None:
        for n, action in enumerate(decision.actions):
            flags = list(decision.flags)
            try:
                created = apply_action(self.state.store, agent.agent_id, action, step)
            except UnknownTargetError as exc:
                logger.warning("rejected action from %s: %s", agent.agent_id, exc)
                flags.append("rejected")
                created = None
            if created is not None:
                new_reviews.append(created)
            record = EventRecord(step, agent.agent_id, action, page.item_ids, decision.thought, n, flags)
            if self.config.record_prompts and n == 0:
                record.prompt = decision.prompt
                record.response = decision.response
            self.emit(record)

    def merchants(self, step: int, new_reviews: list) -> None:
        by_merchant = defaultdict(list)
        for review in new_reviews:
            by_merchant[self.state.store.statics[review.item_id].merchant_id].append(review)
        for merchant_id in sorted(by_merchant):
            strategy = self.config.strategy_for(merchant_id)
            replies, flags = merchant_step(merchant_id, by_merchant[merchant_id], strategy, self.gateway, self.state.store, step)
            for flag in flags:
                logger.warning("merchant %s: %s", merchant_id, flag)
            for parent_id, reply in replies:
                self.emit(MerchantReplyRecord(step, merchant_id, strategy.value, reply, parent_id))

    def run_step(self, step: int) -> None:
        cfg = self.config
        self.state.step = step
        self.apply_interventions(step)
        order = np.random.default_rng([cfg.seed, step, ORDER_STREAM]).permutation(len(self.state.agents))
        new_reviews: list = []
        if cfg.parallel:
            frozen = self.state.view_store().copy()
            pages = {int(n): self.page_for(self.state.agents[n], frozen, step) for n in order}
            decisions = self.gateway.map(
                lambda n: self.decide_one(n, self.state.agents[n], pages[n], step), [int(n) for n in order]
            )
            for n, decision in zip(order, decisions):
                if isinstance(decision, Exception):
                    raise decision
                self.commit(self.state.agents[n], pages[int(n)], decision, step, new_reviews)
        else:
            for n in order:
                agent = self.state.agents[n]
                page = self.page_for(agent, self.state.view_store(), step)
                decision = self.decide_one(int(n), agent, page, step)
                self.commit(agent, page, decision, step, new_reviews)
        self.merchants(step, new_reviews)
        self.check_invariants()
        if self.snapshot_dir is not None and cfg.snapshot_every and step % cfg.snapshot_every == 0:
            save_snapshot(self.state, self.snapshot_dir / f"snapshot-step-{step}.json", cfg)


def new_state(config: SimulationConfig, dataset_or_store: Union[Dataset, ItemStore], profile_pool: dict[str, UserProfile]) -> SimulationState:
    store = dataset_or_store.copy() if isinstance(dataset_or_store, ItemStore) else initial_store(dataset_or_store)
    state = SimulationState(
        step=0,
        store=store,
        agents=make_agents(profile_pool, config),
        seed=config.seed,
        initial_counters=store.counters(),
    )
    if not config.interaction_enabled:
        state.presented = store.copy()
    return state


def run_simulation(
    config: SimulationConfig,
    dataset: Union[Dataset, ItemStore, None],
    profile_pool: Optional[dict[str, UserProfile]],
    recommender: TrainedModel,
    gateway: Optional[Gateway] = None,
    *,
    resume_from: Optional[SimulationState] = None,
    event_log_path: Union[str, Path, None] = None,
    snapshot_dir: Union[str, Path, None] = None,
    dump_dir: Union[str, Path, None] = None,
) -> tuple[list, SimulationState]:
    """Run steps ``state.step + 1 .. config.total_steps``; returns (records emitted by this call, final state).

    Step-0 interventions are applied before the first step of a fresh run.
    ``event_log_path`` is truncated for a fresh run and appended to on resume.
    """
    gateway = gateway or default_gateway(config.llm.get("max_in_flight", 4))
    if resume_from is not None:
        state = resume_from
        if state.seed != config.seed:
            raise ValueError("snapshot seed differs from config seed")
    else:
        if dataset is None or profile_pool is None:
            raise ValueError("dataset and profile_pool are required for a fresh run")
        state = new_state(config, dataset, profile_pool)
    if event_log_path is not None:
        Path(event_log_path).parent.mkdir(parents=True, exist_ok=True)
        if resume_from is None:
            Path(event_log_path).write_text("", "utf-8")
    run = _Run(config, state, recommender, gateway, event_log_path, snapshot_dir, dump_dir)
    if resume_from is None:
        run.apply_interventions(0)
        run.check_invariants()
    for step in range(state.step + 1, config.total_steps + 1):
        run.run_step(step)
    if snapshot_dir is not None:
        save_snapshot(state, Path(snapshot_dir) / "snapshot-final.json", config)
    return run.new_events, state


# --- log-derived quantities --------------------------------------------------

_COUNTER_OF = {
    ActionKind.LIKE_PRODUCT: "like_count",
    ActionKind.DISLIKE_PRODUCT: "dislike_count",
    ActionKind.SHARE_PRODUCT: "share_count",
    ActionKind.PURCHASE_PRODUCT: "purchase_count",
}


def counters_from_log(initial: dict, records: Sequence) -> dict:
    """Replay counters from the log alone: initial + applied actions + intervention deltas."""
    out = {i: dict(c) for i, c in initial.items()}
    for r in records:
        if isinstance(r, EventRecord):
            if "rejected" in r.flags:
                continue
            kind = r.action.kind
            if kind in _COUNTER_OF:
                out[r.action.target_item][_COUNTER_OF[kind]] += 1
            elif kind == ActionKind.CREATE_REVIEW:
                c = out[r.action.target_item]
                c["review_count"] += 1
                if r.action.rating is not None:
                    c["rating_count"] += 1
                    c["rating_sum"] += r.action.rating
        elif isinstance(r, InterventionRecord):
            for k, v in r.deltas.items():
                out[r.intervention.item_id][k] += v
    return out


def like_series(records: Sequence, item_id: str, total_steps: int, counter: str = "like_count") -> list[int]:
    """Cumulative per-step count of actions on ``item_id`` feeding ``counter``, steps 1..T."""
    kind = {v: k for k, v in _COUNTER_OF.items()}[counter]
    per_step = [0] * (total_steps + 1)
    for r in records:
        if isinstance(r, EventRecord) and r.action.kind == kind and r.action.target_item == item_id and "rejected" not in r.flags:
            per_step[r.step] += 1
    return list(np.cumsum(per_step[1:]).astype(int).tolist())


__all__ = [
    "COUNTERS",
    "Page",
    "SimulationState",
    "build_recommendation_page",
    "counters_from_log",
    "initial_store",
    "like_series",
    "load_snapshot",
    "make_agents",
    "new_state",
    "read_event_log",
    "run_simulation",
    "save_snapshot",
    "write_event_log",
]
