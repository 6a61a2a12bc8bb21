import json

import pytest

from interactsim.domain import EventRecord, Intervention, InterventionRecord
from interactsim.errors import SnapshotVersionError
from interactsim.recommenders import train_recommender
from interactsim.simulation import (
    build_recommendation_page,
    counters_from_log,
    initial_store,
    load_snapshot,
    read_event_log,
    run_simulation,
    save_snapshot,
    write_event_log,
)


def _lines(records):
    return [json.dumps(r.to_dict(), sort_keys=True) for r in records]


def test_two_steps_three_agents_bounds_and_conservation(small_dataset, small_pool, popular_model, small_config):
    cfg = small_config.replace(total_steps=2, agent_count=3)
    records, state = run_simulation(cfg, small_dataset, small_pool, popular_model)
    actions = [r for r in records if isinstance(r, EventRecord)]
    assert len(actions) <= 2 * 3 * cfg.max_actions_per_step
    assert {r.step for r in actions} <= {1, 2}
    assert counters_from_log(state.initial_counters, records) == state.store.counters()


def test_runs_are_deterministic(small_dataset, small_pool, popular_model, small_config):
    a, _ = run_simulation(small_config, small_dataset, small_pool, popular_model)
    b, _ = run_simulation(small_config, small_dataset, small_pool, popular_model)
    assert _lines(a) == _lines(b)


def test_seed_changes_the_run(small_dataset, small_pool, popular_model, small_config):
    a, _ = run_simulation(small_config, small_dataset, small_pool, popular_model)
    b, _ = run_simulation(small_config.replace(seed=6), small_dataset, small_pool, popular_model)
    assert _lines(a) != _lines(b)


def test_no_interaction_pages_are_frozen(small_dataset, small_pool, popular_model, small_config):
    cfg = small_config.replace(interaction_enabled=False, live_popularity=True, total_steps=4)
    records, state = run_simulation(cfg, small_dataset, small_pool, popular_model)
    pages: dict = {}
    for r in records:
        if isinstance(r, EventRecord):
            pages.setdefault(r.agent_id, set()).add(tuple(r.page_items))
    assert pages and all(len(v) == 1 for v in pages.values())
    assert state.presented.counters() == state.initial_counters
    assert state.store.counters() != state.initial_counters
    assert any(isinstance(r, EventRecord) for r in records)


def test_page_builder(small_dataset, popular_model):
    store = initial_store(small_dataset)
    page = build_recommendation_page(popular_model, "anyone", store, 10)
    assert len(page.item_ids) == 10 and len(set(page.item_ids)) == 10
    assert page.flags == []

    rnd = train_recommender("random", small_dataset.interactions(), item_ids=sorted(small_dataset.catalog))
    p1 = build_recommendation_page(rnd, "u", store, 10, salt=3)
    p2 = build_recommendation_page(rnd, "u", store, 10, salt=3)
    assert p1.item_ids == p2.item_ids

    everything = store.item_ids()
    fb = build_recommendation_page(popular_model, "u", store, 5, "exclude-purchased", everything)
    assert "popularity-fallback" in fb.flags
    assert len(fb.item_ids) == 5


def test_page_builder_rejects_bad_arguments(small_dataset, popular_model):
    store = initial_store(small_dataset)
    with pytest.raises(ValueError):
        build_recommendation_page(popular_model, "u", store, 0)
    with pytest.raises(ValueError):
        build_recommendation_page(popular_model, "u", store, 5, "exclude-everything")


def test_snapshot_round_trip(tmp_path, small_dataset, small_pool, popular_model, small_config):
    cfg = small_config.replace(agent_count=3, total_steps=2)
    _, state = run_simulation(cfg, small_dataset, small_pool, popular_model)
    path = save_snapshot(state, tmp_path / "s.json", cfg)
    back, back_cfg = load_snapshot(path)
    assert back_cfg == cfg
    assert back.step == state.step
    assert back.store.to_dict() == state.store.to_dict()
    assert [a.to_dict() for a in back.agents] == [a.to_dict() for a in state.agents]


def test_resume_reproduces_the_full_run(tmp_path, small_dataset, small_pool, popular_model, small_config):
    cfg = small_config.replace(total_steps=8, snapshot_every=5)
    full, full_state = run_simulation(cfg, small_dataset, small_pool, popular_model, snapshot_dir=tmp_path)
    state5, cfg5 = load_snapshot(tmp_path / "snapshot-step-5.json")
    assert state5.step == 5
    rest, resumed = run_simulation(cfg5, None, None, popular_model, resume_from=state5)
    tail = [r for r in full if r.step > 5]
    assert _lines(rest) == _lines(tail)
    assert resumed.store.to_dict() == full_state.store.to_dict()


def test_newer_snapshot_version_is_rejected(tmp_path, small_dataset, small_pool, popular_model, small_config):
    cfg = small_config.replace(agent_count=3, total_steps=1)
    _, state = run_simulation(cfg, small_dataset, small_pool, popular_model)
    path = save_snapshot(state, tmp_path / "s.json", cfg)
    raw = json.loads(path.read_text())
    raw["format_version"] = 2
    path.write_text(json.dumps(raw))
    with pytest.raises(SnapshotVersionError):
        load_snapshot(path)


def test_parallel_mode_conserves_counters(small_dataset, small_pool, popular_model, small_config):
    cfg = small_config.replace(parallel=True)
    records, state = run_simulation(cfg, small_dataset, small_pool, popular_model)
    assert counters_from_log(state.initial_counters, records) == state.store.counters()
    again, _ = run_simulation(cfg, small_dataset, small_pool, popular_model)
    assert _lines(records) == _lines(again)


def test_interventions_reach_the_frozen_store(small_dataset, small_pool, popular_model, small_config):
    item = sorted(small_dataset.catalog)[0]
    ivs = [
        Intervention.malicious_reviews(1, item, ["awful", "never again"], [1, 1]),
        Intervention.brand_rename(0, item, "Renamed Place"),
    ]
    cfg = small_config.replace(interaction_enabled=False, interventions=[i.to_dict() for i in ivs])
    records, state = run_simulation(cfg, small_dataset, small_pool, popular_model)
    assert sum(isinstance(r, InterventionRecord) for r in records) == 2
    assert state.presented.statics[item].name == "Renamed Place"
    live_ids = {r.review_id for r in state.store.dynamics[item].reviews if r.step == 1 and r.author_kind != "user"}
    shown_ids = {r.review_id for r in state.presented.dynamics[item].reviews if r.step == 1}
    assert live_ids and live_ids <= shown_ids


def test_event_log_round_trip(tmp_path, small_dataset, small_pool, popular_model, small_config):
    records, _ = run_simulation(small_config, small_dataset, small_pool, popular_model)
    path = write_event_log(records, tmp_path / "log.jsonl")
    assert _lines(read_event_log(path)) == _lines(records)


def test_streamed_log_matches_returned_records(tmp_path, small_dataset, small_pool, popular_model, small_config):
    path = tmp_path / "events.jsonl"
    records, _ = run_simulation(small_config, small_dataset, small_pool, popular_model, event_log_path=path)
    assert _lines(read_event_log(path)) == _lines(records)


def test_prompt_recording(small_dataset, small_pool, popular_model, small_config):
    cfg = small_config.replace(record_prompts=True)
    records, _ = run_simulation(cfg, small_dataset, small_pool, popular_model)
    actions = [r for r in records if isinstance(r, EventRecord)]
    assert actions
    for r in actions:
        if r.decision_index == 0:
            assert r.prompt and r.response
        else:
            assert r.prompt is None
