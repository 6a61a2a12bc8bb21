"""
Live feedback versus a frozen platform
======================================

Two runs share everything except one switch: whether agent actions feed back
into what later agents see. With feedback on, an early lead in likes makes an
item look more popular, which draws more likes.
"""

from interactsim.experiments import run_experiment
from interactsim.config import SimulationConfig
from interactsim.profiling import assemble_profile_pool
from interactsim.synthetic import generate_synthetic_dataset

# a small synthetic restaurant market; no model calls are needed
dataset = generate_synthetic_dataset(200, 40, seed=0)
pool = assemble_profile_pool(dataset)

base = SimulationConfig(total_steps=10, agent_count=200, page_size=10, recommender="lightgcn", train={"epochs": 30, "dim": 16}, seed=0)
result = run_experiment("interaction-ablation", base, dataset, pool)

# cumulative likes on the tracked (most popular) item, step by step
from interactsim.reporting import cumulative_series

item = result.script.tracked_items[0]
for run in ("interaction", "no_interaction"):
    print(f"{run:>15}: {cumulative_series(result.logs[run], item, base.total_steps)}")
print("final gap:", result.final("interaction", item) - result.final("no_interaction", item))
