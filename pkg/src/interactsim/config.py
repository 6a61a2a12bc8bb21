"""Run configuration: YAML (or JSON) file -> validated :class:`SimulationConfig`.

Defaults follow the reference setting of 10 steps, 1,000 agents, 20-item
pages and a LightGCN ranker. ``CONFIG_SCHEMA`` is the published JSON Schema
for the file format; validation errors carry dotted field paths.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional, Union

import jsonschema
import yaml

from .agents import AGENT_POLICIES, MerchantStrategy, PersonaParams
from .domain import INTERVENTION_KINDS, Intervention
from .errors import ConfigError
from .memory import RetrievalParams
from .recommenders import RECOMMENDER_KINDS, TrainConfig

LLM_BACKENDS = ("mock", "http", "replay")
EXCLUSION_POLICIES = ("none", "exclude-purchased")

_POS_INT = {"type": "integer", "minimum": 1}
_NONNEG_INT = {"type": "integer", "minimum": 0}
_PROB = {"type": "number", "minimum": 0, "maximum": 1}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "interactsim simulation config",
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "total_steps": _POS_INT,
        "agent_count": _POS_INT,
        "page_size": _POS_INT,
        "recommender": {"enum": list(RECOMMENDER_KINDS)},
        "live_popularity": {"type": "boolean"},
        "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
        "interaction_enabled": {"type": "boolean"},
        "merchant_strategy_map": {
            "type": "object",
            "additionalProperties": {"enum": [s.value for s in MerchantStrategy]},
        },
        "default_merchant_strategy": {"enum": [s.value for s in MerchantStrategy]},
        "interventions": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["kind", "step", "item_id"],
                "properties": {
                    "kind": {"enum": list(INTERVENTION_KINDS)},
                    "step": _NONNEG_INT,
                    "item_id": {"type": "string"},
                    "texts": {"type": "array", "items": {"type": "string"}},
                    "reviews": {"type": "array", "items": {"type": "string"}},
                    "ratings": {"type": ["array", "null"], "items": {"type": ["integer", "null"], "minimum": 1, "maximum": 5}},
                    "new_name": {"type": ["string", "null"]},
                    "initial_sales": {"type": ["integer", "null"], "minimum": 0},
                },
                "additionalProperties": False,
            },
        },
        "llm_backend": {"enum": list(LLM_BACKENDS)},
        "llm": {
            "type": "object",
            "properties": {
                "url": {"type": "string"},
                "model": {"type": "string"},
                "api_key_env": {"type": "string"},
                "replay_log": {"type": "string"},
                "record_log": {"type": "string"},
                "max_in_flight": _POS_INT,
            },
            "additionalProperties": False,
        },
        "persona": {"oneOf": [{"enum": list(AGENT_POLICIES)}, {"type": "array", "items": {"enum": list(AGENT_POLICIES)}, "minItems": 1}]},
        "persona_params": {
            "type": "object",
            "properties": {
                "popularity_threshold": _NONNEG_INT,
                "saturation": {"type": "number", "exclusiveMinimum": 0},
                "purchase_probability": _PROB,
                "review_probability": _PROB,
                "sentiment_threshold": {"type": "number", "minimum": -1, "maximum": 1},
            },
            "additionalProperties": False,
        },
        "retrieval": {
            "type": "object",
            "properties": {
                "alpha": {"type": "number", "minimum": 0},
                "beta": {"type": "number", "minimum": 0},
                "gamma": {"type": "number", "exclusiveMinimum": 0},
                "theta_p": {"type": ["integer", "null"], "minimum": 0},
                "theta_c": {"type": ["integer", "null"], "minimum": 0},
            },
            "additionalProperties": False,
        },
        "train": {
            "type": "object",
            "properties": {
                "dim": _POS_INT,
                "layers": _NONNEG_INT,
                "epochs": _NONNEG_INT,
                "learning_rate": {"type": "number", "exclusiveMinimum": 0},
                "negative_samples": _POS_INT,
                "l2": {"type": "number", "minimum": 0},
                "batch_size": _POS_INT,
                "init_std": {"type": "number", "exclusiveMinimum": 0},
                "seed": _NONNEG_INT,
                "positive_threshold": {"type": "integer", "minimum": 1, "maximum": 5},
            },
            "additionalProperties": False,
        },
        "review_window": _NONNEG_INT,
        "exclusion_policy": {"enum": list(EXCLUSION_POLICIES)},
        "max_actions_per_step": _POS_INT,
        "snapshot_every": _NONNEG_INT,
        "record_prompts": {"type": "boolean"},
        "show_share_count": {"type": "boolean"},
        "parallel": {"type": "boolean"},
        "data": {
            "type": "object",
            "properties": {
                "dataset_path": {"type": "string"},
                "profiles_path": {"type": "string"},
                "synthetic_users": _POS_INT,
                "synthetic_items": _POS_INT,
                "synthetic_seed": _NONNEG_INT,
            },
            "additionalProperties": False,
        },
    },
}


@dataclass
class SimulationConfig:
    total_steps: int = 10
    agent_count: int = 1000
    page_size: int = 20
    recommender: str = "lightgcn"
    live_popularity: bool = False
    seed: int = 0
    interaction_enabled: bool = True
    merchant_strategy_map: dict = field(default_factory=dict)
    default_merchant_strategy: str = "NoReply"
    interventions: list = field(default_factory=list)
    llm_backend: str = "mock"
    llm: dict = field(default_factory=dict)
    persona: Union[str, list] = "popularity-sensitive"
    persona_params: PersonaParams = field(default_factory=PersonaParams)
    retrieval: RetrievalParams = field(default_factory=RetrievalParams)
    train: TrainConfig = field(default_factory=TrainConfig)
    review_window: int = 5
    exclusion_policy: str = "none"
    max_actions_per_step: int = 4
    snapshot_every: int = 0
    record_prompts: bool = False
    show_share_count: bool = False
    parallel: bool = False
    data: dict = field(default_factory=dict)

    def __post_init__(self):
        self.interventions = [i if isinstance(i, Intervention) else Intervention.from_dict(i) for i in self.interventions]
        if isinstance(self.persona_params, dict):
            self.persona_params = PersonaParams(**self.persona_params)
        if isinstance(self.retrieval, dict):
            self.retrieval = RetrievalParams(**self.retrieval)
        if isinstance(self.train, dict):
            self.train = TrainConfig(**self.train)
        problems = self.violations()
        if problems:
            raise ConfigError(problems)

    def violations(self) -> list[str]:
        problems = []
        if self.total_steps < 1:
            problems.append("total_steps: must be >= 1")
        if self.agent_count < 1:
            problems.append("agent_count: must be >= 1")
        if self.page_size < 1:
            problems.append("page_size: must be >= 1")
        if self.recommender not in RECOMMENDER_KINDS:
            problems.append(f"recommender: unknown {self.recommender!r}; valid names: {', '.join(RECOMMENDER_KINDS)}")
        if self.llm_backend not in LLM_BACKENDS:
            problems.append(f"llm_backend: unknown {self.llm_backend!r}; valid names: {', '.join(LLM_BACKENDS)}")
        if self.exclusion_policy not in EXCLUSION_POLICIES:
            problems.append(f"exclusion_policy: unknown {self.exclusion_policy!r}")
        personas = [self.persona] if isinstance(self.persona, str) else list(self.persona)
        for p in personas:
            if p not in AGENT_POLICIES:
                problems.append(f"persona: unknown {p!r}; valid names: {', '.join(AGENT_POLICIES)}")
        for n, iv in enumerate(self.interventions):
            if not 0 <= iv.step <= self.total_steps:
                problems.append(f"interventions.{n}.step: {iv.step} outside [0, {self.total_steps}]")
        for mid, strat in self.merchant_strategy_map.items():
            try:
                MerchantStrategy.parse(strat)
            except ValueError as exc:
                problems.append(f"merchant_strategy_map.{mid}: {exc}")
        return problems

    def persona_for(self, agent_index: int) -> str:
        if isinstance(self.persona, str):
            return self.persona
        return self.persona[agent_index % len(self.persona)]

    def strategy_for(self, merchant_id: str) -> MerchantStrategy:
        return MerchantStrategy.parse(self.merchant_strategy_map.get(merchant_id, self.default_merchant_strategy))

    def to_dict(self) -> dict:
        d = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name == "interventions":
                v = [i.to_dict() for i in v]
            elif f.name in ("persona_params", "retrieval", "train"):
                v = asdict(v)
            d[f.name] = v
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SimulationConfig":
        return cls(**d)

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()

    def replace(self, **changes) -> "SimulationConfig":
        d = self.to_dict()
        d.update(changes)
        return SimulationConfig.from_dict(d)


def _path(error) -> str:
    parts = [str(p) for p in error.absolute_path]
    return ".".join(parts) if parts else "<root>"


def validate_config_dict(raw) -> list[str]:
    if not isinstance(raw, dict):
        return ["<root>: config must be a mapping"]
    validator = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
    problems = []
    for err in sorted(validator.iter_errors(raw), key=lambda e: list(map(str, e.absolute_path))):
        if err.validator == "enum" and err.absolute_path and err.absolute_path[-1] == "recommender":
            problems.append(f"recommender: unknown {err.instance!r}; valid names: {', '.join(RECOMMENDER_KINDS)}")
        else:
            problems.append(f"{_path(err)}: {err.message}")
    return problems


def config_from_mapping(raw: Optional[dict]) -> SimulationConfig:
    raw = {} if raw is None else raw
    problems = validate_config_dict(raw)
    if problems:
        raise ConfigError(problems)
    try:
        return SimulationConfig.from_dict(dict(raw))
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc


def load_config(path: Union[str, Path]) -> SimulationConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"{path}: file not found")
    text = path.read_text("utf-8")
    try:
        raw = json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)
    except (yaml.YAMLError, json.JSONDecodeError) as exc:
        raise ConfigError(f"{path}: parse error: {exc}") from exc
    return config_from_mapping(raw)
