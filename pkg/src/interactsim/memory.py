"""Perceptual and cognitive memory with recency/relevance retrieval scoring."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

from .domain import Action
from .text import tf_cosine

Similarity = Callable[[str, str], float]


@dataclass(frozen=True)
class RetrievalParams:
    alpha: float = 0.7
    beta: float = 0.3
    gamma: float = 0.2
    theta_p: Optional[int] = 25
    theta_c: Optional[int] = 5

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("alpha and beta must be non-negative")
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")
        for cap in (self.theta_p, self.theta_c):
            if cap is not None and cap < 0:
                raise ValueError("retrieval caps must be non-negative")


@dataclass
class PerceptualMemory:
    page_item_ids: list[str]
    page_item_names: list[str]
    actions: list[Action]
    step: int

    def render(self) -> str:
        acts = " ".join(a.label() for a in self.actions)
        return " ".join(self.page_item_names) + " " + acts

    def to_dict(self) -> dict:
        return {
            "page_item_ids": list(self.page_item_ids),
            "page_item_names": list(self.page_item_names),
            "actions": [a.to_dict() for a in self.actions],
            "step": self.step,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PerceptualMemory":
        return cls(list(d["page_item_ids"]), list(d["page_item_names"]), [Action.from_dict(a) for a in d["actions"]], d["step"])


@dataclass
class CognitiveMemory:
    page_items_enriched: list[dict]
    thought: str
    actions: list[Action]
    step: int

    def __post_init__(self):
        if not self.thought or not self.thought.strip():
            raise ValueError("cognitive memory needs a non-empty thought")

    def render(self) -> str:
        names = " ".join(str(v.get("name", "")) for v in self.page_items_enriched)
        acts = " ".join(a.label() for a in self.actions)
        return f"{names} {acts} {self.thought}"

    def to_dict(self) -> dict:
        return {
            "page_items_enriched": [dict(v) for v in self.page_items_enriched],
            "thought": self.thought,
            "actions": [a.to_dict() for a in self.actions],
            "step": self.step,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CognitiveMemory":
        return cls([dict(v) for v in d["page_items_enriched"]], d["thought"], [Action.from_dict(a) for a in d["actions"]], d["step"])


Memory = Union[PerceptualMemory, CognitiveMemory]


def similarity(a: str, b: str) -> float:
    return tf_cosine(a, b)


def score_memory(
    memory: Memory,
    reasoning_context: str,
    now: int,
    params: RetrievalParams = RetrievalParams(),
    sim: Similarity = similarity,
) -> float:
    elapsed = now - memory.step
    if elapsed < 0:
        raise ValueError("memory is from the future")
    return params.alpha * math.exp(-params.gamma * elapsed) + params.beta * sim(memory.render(), reasoning_context)


def rank_memories(memories: Sequence[Memory], context: str, now: int, params: RetrievalParams, cap: Optional[int], sim: Similarity = similarity):
    scored = [(score_memory(m, context, now, params, sim), m.step, i, m) for i, m in enumerate(memories)]
    scored.sort(key=lambda t: (-t[0], -t[1], t[2]))
    ranked = [t[3] for t in scored]
    return ranked if cap is None else ranked[:cap]


@dataclass
class MemoryStore:
    perceptual: list[PerceptualMemory] = field(default_factory=list)
    cognitive: list[CognitiveMemory] = field(default_factory=list)

    def record_perceptual(self, page_item_ids, action_or_actions, step, page_item_names=None) -> PerceptualMemory:
        if self.perceptual and step <= self.perceptual[-1].step:
            raise ValueError(f"perceptual memory steps must increase (got {step} after {self.perceptual[-1].step})")
        actions = [action_or_actions] if isinstance(action_or_actions, Action) else list(action_or_actions)
        names = list(page_item_names) if page_item_names is not None else list(page_item_ids)
        mem = PerceptualMemory(list(page_item_ids), names, actions, step)
        self.perceptual.append(mem)
        return mem

    def record_cognitive(self, page_items_enriched, thought, action_or_actions, step) -> CognitiveMemory:
        if self.cognitive and step <= self.cognitive[-1].step:
            raise ValueError(f"cognitive memory steps must increase (got {step} after {self.cognitive[-1].step})")
        actions = [action_or_actions] if isinstance(action_or_actions, Action) else list(action_or_actions)
        mem = CognitiveMemory([dict(v) for v in page_items_enriched], thought, actions, step)
        self.cognitive.append(mem)
        return mem

    def retrieve(self, reasoning_context: str, now: int, params: RetrievalParams = RetrievalParams(), sim: Similarity = similarity):
        return (
            rank_memories(self.perceptual, reasoning_context, now, params, params.theta_p, sim),
            rank_memories(self.cognitive, reasoning_context, now, params, params.theta_c, sim),
        )

    def to_dict(self) -> dict:
        return {"perceptual": [m.to_dict() for m in self.perceptual], "cognitive": [m.to_dict() for m in self.cognitive]}

    @classmethod
    def from_dict(cls, d: dict) -> "MemoryStore":
        return cls(
            [PerceptualMemory.from_dict(m) for m in d.get("perceptual", [])],
            [CognitiveMemory.from_dict(m) for m in d.get("cognitive", [])],
        )


def retrieve(store: MemoryStore, reasoning_context: str, now: int, params: RetrievalParams = RetrievalParams(), sim: Similarity = similarity):
    return store.retrieve(reasoning_context, now, params, sim)


def record_perceptual(store: MemoryStore, page_item_ids, action, step, page_item_names=None) -> PerceptualMemory:
    return store.record_perceptual(page_item_ids, action, step, page_item_names)


class EmbeddingSimilarity:
    """Cosine similarity over vectors from an external embedding function.

    ``embed`` maps a list of texts to an (n, d) array. Results are clipped to
    [0, 1] and cached per text.
    """

    def __init__(self, embed: Callable[[list[str]], "object"]):
        self.embed = embed
        self._cache: dict[str, object] = {}

    def _vec(self, text: str):
        import numpy as np

        if text not in self._cache:
            self._cache[text] = np.asarray(self.embed([text])[0], dtype=float)
        return self._cache[text]

    def __call__(self, a: str, b: str) -> float:
        import numpy as np

        if not a.strip() or not b.strip():
            return 0.0
        va, vb = self._vec(a), self._vec(b)
        denom = float(np.linalg.norm(va) * np.linalg.norm(vb))
        if denom == 0:
            return 0.0
        return float(min(1.0, max(0.0, va @ vb / denom)))
