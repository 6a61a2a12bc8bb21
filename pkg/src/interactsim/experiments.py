"""Paired-run scenarios. Runs within a scenario share the dataset, profiles,
recommender and seed, and differ only in the variable under study."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .agents import MerchantStrategy
from .config import SimulationConfig
from .domain import Intervention
from .evaluation import (
    VALID_RATIOS,
    category_selector,
    gateway_selector,
    run_credibility_eval,
    write_eval_report,
)
from .ingestion import Dataset
from .recommenders import TrainedModel, train_recommender
from .reporting import RunManifest, emit_report
from .simulation import initial_store, run_simulation, write_event_log

logger = logging.getLogger(__name__)

SCENARIOS = ("interaction-ablation", "malicious-review", "merchant-reply", "brand-rename", "seed-boost", "credibility-eval")

MALICIOUS_TEXTS = (
    "Terrible food, rude staff and a dirty kitchen. Worst meal ever, avoid.",
    "Awful experience. The food was disgusting and I got sick afterwards.",
    "Horrible service, filthy tables, cold greasy food. Never again.",
)
BOOST_TEXTS = (
    "Amazing food and wonderful staff, best meal in town!",
    "Loved everything, fresh and delicious. Highly recommend.",
    "Excellent service and great value, we will definitely return.",
)
RENAME_TO = "Stack Shack"


@dataclass
class ExperimentScript:
    name: str
    runs: dict[str, SimulationConfig]
    tracked_items: list[str]
    baseline: Optional[str]
    counters: tuple[str, ...] = ("like",)


@dataclass
class ExperimentResult:
    script: ExperimentScript
    logs: dict[str, list] = field(default_factory=dict)
    states: dict = field(default_factory=dict)
    artifacts: dict[str, str] = field(default_factory=dict)
    metrics: dict = field(default_factory=dict)

    def final(self, run: str, item: str, counter: str = "like") -> int:
        from .reporting import cumulative_series

        return cumulative_series(self.logs[run], item, self.script.runs[run].total_steps, counter)[-1]


def popularity_ranking(dataset: Dataset) -> list[str]:
    counts = initial_store(dataset).live_counts()
    return sorted(counts, key=lambda i: (-counts[i], i))


def build_script(name: str, base: SimulationConfig, dataset: Dataset, target: Optional[str] = None) -> ExperimentScript:
    if name not in SCENARIOS:
        raise ValueError(f"unknown scenario {name!r}; valid: {', '.join(SCENARIOS)}")
    ranking = popularity_ranking(dataset)
    if name == "interaction-ablation":
        target = target or ranking[0]
        cfg = base.replace(persona="popularity-sensitive", interventions=[])
        return ExperimentScript(name, {"interaction": cfg, "no_interaction": cfg.replace(interaction_enabled=False)}, [target], "no_interaction")
    if name == "malicious-review":
        target = target or ranking[0]
        cfg = base.replace(persona="sentiment-sensitive", interventions=[])
        attack = Intervention.malicious_reviews(min(5, base.total_steps), target, list(MALICIOUS_TEXTS), [1, 1, 1])
        return ExperimentScript(name, {"control": cfg, "malicious": cfg.replace(interventions=[attack.to_dict()])}, [target], "control")
    if name == "merchant-reply":
        target = target or ranking[0]
        cfg = base.replace(
            persona=["sentiment-sensitive", "sentiment-sensitive", "random"],
            persona_params={**base.to_dict()["persona_params"], "review_probability": max(base.persona_params.review_probability, 0.2)},
            interventions=[],
        )
        runs = {s.value: cfg.replace(default_merchant_strategy=s.value) for s in MerchantStrategy}
        return ExperimentScript(name, runs, [target], MerchantStrategy.NO_REPLY.value)
    if name == "brand-rename":
        target = target or ranking[0]
        cfg = base.replace(interventions=[])
        rename = Intervention.brand_rename(0, target, RENAME_TO)
        return ExperimentScript(name, {"original": cfg, "renamed": cfg.replace(interventions=[rename.to_dict()])}, [target], "original")
    if name == "seed-boost":
        target = target or ranking[len(ranking) // 2]
        cfg = base.replace(persona="popularity-sensitive", interventions=[])
        boost = Intervention.seed_boost(0, target, list(BOOST_TEXTS), 100, [5, 5, 5])
        return ExperimentScript(name, {"control": cfg, "boosted": cfg.replace(interventions=[boost.to_dict()])}, [target], "control")
    return ExperimentScript(name, {"eval": base}, [], None)


def run_experiment(
    name: str,
    base: SimulationConfig,
    dataset: Dataset,
    profile_pool: dict,
    out_dir=None,
    gateway=None,
    recommender: Optional[TrainedModel] = None,
    target: Optional[str] = None,
    eval_users: Optional[int] = None,
) -> ExperimentResult:
    script = build_script(name, base, dataset, target)
    result = ExperimentResult(script)
    out = Path(out_dir) if out_dir is not None else None
    if name == "credibility-eval":
        selector = gateway_selector(gateway) if gateway is not None and base.llm_backend != "mock" else category_selector
        for m in VALID_RATIOS:
            _, metrics = run_credibility_eval(dataset, profile_pool, m, selector, seed=base.seed, max_users=eval_users)
            result.metrics[f"1:{m}"] = metrics
            if out is not None:
                result.artifacts[f"eval_1_{m}"] = str(write_eval_report(out / f"eval_1_{m}.json", "simulator", metrics))
        return result
    if recommender is None:
        recommender = train_recommender(
            base.recommender, dataset.interactions(), base.train, item_ids=sorted(dataset.catalog), user_ids=sorted(dataset.users), live=base.live_popularity
        )
    for run_name, cfg in script.runs.items():
        log, state = run_simulation(cfg, dataset, profile_pool, recommender, gateway)
        result.logs[run_name] = log
        result.states[run_name] = state
        if out is not None:
            log_path = write_event_log(log, out / run_name / "events.jsonl")
            manifest = RunManifest(f"experiment {name} {run_name}", cfg.config_hash(), cfg.seed, 0, cfg.total_steps, {"event_log": str(log_path)})
            result.artifacts[f"manifest_{run_name}"] = str(manifest.write(out / run_name / "manifest.json"))
    if out is not None:
        paths = emit_report(
            result.logs, out / "report", script.tracked_items, base.total_steps, script.counters, script.baseline, dataset.catalog
        )
        result.artifacts.update({f"report_{k}": v for k, v in paths.items()})
    return result
