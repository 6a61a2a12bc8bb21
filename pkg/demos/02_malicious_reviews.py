"""
Injected one-star reviews
=========================

At step 5 three hostile reviews land on a popular item. Agents that read
recent reviews before acting start skipping it, so its like curve flattens
while an untouched control run keeps climbing.
"""

import numpy as np

from interactsim.config import SimulationConfig
from interactsim.experiments import run_experiment
from interactsim.profiling import assemble_profile_pool
from interactsim.reporting import cumulative_series
from interactsim.sentiment import sentiment_compound
from interactsim.synthetic import generate_synthetic_dataset

dataset = generate_synthetic_dataset(200, 40, seed=0)
pool = assemble_profile_pool(dataset)
base = SimulationConfig(total_steps=10, agent_count=200, page_size=10, recommender="lightgcn", seed=0)

result = run_experiment("malicious-review", base, dataset, pool)
item = result.script.tracked_items[0]

# the injected texts score strongly negative
attack = result.script.runs["malicious"].interventions[0]
print("compound scores:", [round(sentiment_compound(t), 3) for t in attack.texts])

# per-step likes before the attack step and from it onward
for run in ("control", "malicious"):
    series = np.array(cumulative_series(result.logs[run], item, base.total_steps))
    per_step = np.diff(np.concatenate([[0], series]))
    print(f"{run:>9}: likes/step t1-4 {per_step[:4].mean():.1f}, t5-10 {per_step[4:].mean():.1f}")
