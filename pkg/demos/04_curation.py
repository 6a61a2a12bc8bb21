"""
From recorded decisions to a fine-tuning file
=============================================

Runs with prompt recording keep the full prompt and reply of every agent
decision. The curation pipeline then drops malformed replies, replies whose
likes disagree with the user's real history, replies a judge rejects, and
replies a person rejects.
"""

import tempfile
from pathlib import Path

from interactsim.config import SimulationConfig
from interactsim.curation import collect_cot_samples, emit_finetune_dataset, run_pipeline
from interactsim.llm import Gateway, MockBackend
from interactsim.profiling import assemble_profile_pool
from interactsim.recommenders import train_recommender
from interactsim.simulation import run_simulation
from interactsim.synthetic import generate_synthetic_dataset

dataset = generate_synthetic_dataset(80, 30, seed=4)
pool = assemble_profile_pool(dataset)
model = train_recommender("most_popular", dataset.interactions(), item_ids=sorted(dataset.catalog))

# two independent runs with recording switched on
runs = {}
for seed in (1, 2):
    cfg = SimulationConfig(total_steps=3, agent_count=40, page_size=8, recommender="most_popular", record_prompts=True, seed=seed)
    runs[f"run-{seed}"], _ = run_simulation(cfg, dataset, pool, model)
samples = collect_cot_samples(runs)
print("decisions collected:", len(samples))

# an offline judge that accepts everything; human review skipped here
history = {u: {h.item_id for h in hist} for u, hist in dataset.users.items()}
judge = Gateway(MockBackend(lambda request: "PASS"))
result = run_pipeline(samples, history, judge, stages=("format", "preference", "llm"))
print("pipeline:", result.counts())

out = Path(tempfile.mkdtemp()) / "finetune.jsonl"
print("written:", emit_finetune_dataset(result.passed, out), "lines to", out)
