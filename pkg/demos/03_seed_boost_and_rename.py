"""
Seeding a newcomer and renaming a brand
=======================================

Seed boosting gives a mid-ranked item glowing reviews and a sales history at
step 0. Renaming changes only the display name, so anything that ranks on
counters alone should not notice.
"""

from interactsim.config import SimulationConfig
from interactsim.experiments import run_experiment
from interactsim.profiling import assemble_profile_pool
from interactsim.synthetic import generate_synthetic_dataset

dataset = generate_synthetic_dataset(200, 40, seed=2)
pool = assemble_profile_pool(dataset)
base = SimulationConfig(total_steps=10, agent_count=200, page_size=10, recommender="most_popular", live_popularity=True, seed=2)

boost = run_experiment("seed-boost", base, dataset, pool)
item = boost.script.tracked_items[0]
print(f"seed boost on {item}: control {boost.final('control', item)} likes, boosted {boost.final('boosted', item)} likes")

rename = run_experiment("brand-rename", base, dataset, pool)
item = rename.script.tracked_items[0]
same = rename.states["original"].store.counters() == rename.states["renamed"].store.counters()
print(f"rename of {item}: new name {rename.states['renamed'].store.statics[item].name!r}, counters unchanged: {same}")
