"""Exit criteria, one marked test (or group) per criterion.

Each test carries ``@pytest.mark.acceptance(n, title)``; conftest prints a
PASS/FAIL line per criterion and a summary section at the end of the run.
"""

import json
import math
import time
from pathlib import Path

import numpy as np
import pytest

import oracles
from interactsim.agents import PersonaParams
from interactsim.config import SimulationConfig
from interactsim.curation import CotSample, FilterVerdict, STAGES, emit_finetune_dataset, run_pipeline
from interactsim.domain import HistoricalInteraction, Intervention, ItemRecord
from interactsim.evaluation import (
    EvalSample,
    JudgeSample,
    adjusted_win_rate,
    aggregate_metrics,
    build_eval_set,
    judge_pairs,
    judge_totals,
)
from interactsim.experiments import run_experiment
from interactsim.ingestion import Dataset
from interactsim.llm import Gateway, MockBackend
from interactsim.memory import CognitiveMemory, RetrievalParams, score_memory
from interactsim.profiling import DatasetStats, assemble_profile_pool, compute_objective_profile
from interactsim.recommenders import (
    TrainConfig,
    auc,
    lightgcn_loss_and_grad,
    normalized_adjacency,
    propagate_embeddings,
    recommend,
    train_recommender,
)
from interactsim.sentiment import sentiment_compound
from interactsim.simulation import (
    build_recommendation_page,
    counters_from_log,
    initial_store,
    run_simulation,
    write_event_log,
)
from interactsim.store import apply_intervention
from interactsim.synthetic import generate_synthetic_dataset

acceptance = pytest.mark.acceptance


def no_sleep(_):
    return None


# --- shared scaled-scenario world (criteria 6-8) --------------------------------


@pytest.fixture(scope="module")
def world():
    dataset = generate_synthetic_dataset(200, 40, mean_history=12, seed=0)
    pool = assemble_profile_pool(dataset)
    base = SimulationConfig(total_steps=10, agent_count=200, page_size=10, recommender="lightgcn", seed=0)
    model = train_recommender("lightgcn", dataset.interactions(), base.train, item_ids=sorted(dataset.catalog), user_ids=sorted(dataset.users))
    return dataset, pool, base, model


# 1 ------------------------------------------------------------------------------


@acceptance(1, "Adjusted Win Rate matches the published table to 1e-4")
def test_awr_table():
    t0 = time.perf_counter()
    for (w, l, t), expected in oracles.AWR_TABLE:
        assert adjusted_win_rate(w, l, t) == pytest.approx(expected, abs=1e-4)
    assert time.perf_counter() - t0 < 1.0


# 2 ------------------------------------------------------------------------------


@acceptance(2, "memory score: exact anchors and strict recency decay")
def test_memory_score_formula():
    params = RetrievalParams()
    assert (params.alpha, params.beta, params.gamma) == (0.7, 0.3, 0.2)
    ctx = "spicy ramen noodles"
    same = CognitiveMemory([], ctx, [], step=10)
    assert score_memory(same, ctx, 10, params) == 1.0
    unrelated = CognitiveMemory([], "quiet jazz bar", [], step=5)
    assert abs(score_memory(unrelated, ctx, 10, params) - 0.7 * math.exp(-1)) < 1e-12
    scores = [score_memory(CognitiveMemory([], "quiet jazz bar", [], step=20 - dt), ctx, 20, params) for dt in range(21)]
    assert all(a > b for a, b in zip(scores, scores[1:]))
    assert all(s == pytest.approx(oracles.memory_score(dt, 0.0), abs=1e-15) for dt, s in enumerate(scores))


# 3 ------------------------------------------------------------------------------


@acceptance(3, "metric protocol: oracle agent scores 1.0, coin-flip agent ~0.5")
def test_metric_protocol_oracle():
    dataset = generate_synthetic_dataset(80, 60, mean_history=25, seed=11)
    users = [u for u in sorted(dataset.users) if len({h.item_id for h in dataset.users[u]}) >= 10]
    for m in (1, 3, 9):
        samples = []
        for uid in users:
            s = build_eval_set(dataset.users[uid], dataset.catalog, m, seed=0, user_id=uid)
            samples.append(EvalSample(uid, s.items, s.labels, list(s.labels), m))
        metrics = aggregate_metrics(samples)
        for key in ("accuracy", "precision", "recall", "f1"):
            assert metrics[key] == 1.0, (m, key)

    rng = np.random.default_rng(2024)
    coin = []
    for n in range(1000):
        uid = users[n % len(users)]
        s = build_eval_set(dataset.users[uid], dataset.catalog, 1, seed=n, user_id=uid)
        coin.append(EvalSample(uid, s.items, s.labels, [bool(x) for x in rng.random(len(s.items)) < 0.5], 1))
    metrics = aggregate_metrics(coin)
    assert abs(metrics["accuracy"] - 0.5) <= 0.03
    c = metrics["confusion"]
    assert (c["tp"], c["fp"], c["tn"], c["fn"]) == oracles.confusion_recount([(s.labels, s.selections) for s in coin])


# 4 ------------------------------------------------------------------------------


@acceptance(4, "counter conservation: final = initial + log events + intervention deltas")
def test_counter_conservation():
    dataset = generate_synthetic_dataset(120, 40, mean_history=12, seed=4)
    pool = assemble_profile_pool(dataset)
    interventions = [
        Intervention.malicious_reviews(3, "i001", ["awful food"], [1]).to_dict(),
        Intervention.seed_boost(0, "i020", ["lovely place"], 50, [5]).to_dict(),
    ]
    cfg = SimulationConfig(
        total_steps=10,
        agent_count=100,
        page_size=10,
        recommender="most_popular",
        seed=9,
        persona=["popularity-sensitive", "sentiment-sensitive", "random", "preference-match"],
        persona_params=PersonaParams(review_probability=0.3),
        interventions=interventions,
        default_merchant_strategy="PositiveEngage",
    )
    model = train_recommender("most_popular", dataset.interactions(), item_ids=sorted(dataset.catalog))
    log, state = run_simulation(cfg, dataset, pool, model)
    assert len(log) > 100
    assert counters_from_log(state.initial_counters, log) == state.store.counters()


# 5 ------------------------------------------------------------------------------


@acceptance(5, "determinism: same seed gives byte-identical logs, different seed differs")
def test_determinism(tmp_path):
    dataset = generate_synthetic_dataset(80, 30, mean_history=10, seed=5)
    pool = assemble_profile_pool(dataset)
    model = train_recommender("most_popular", dataset.interactions(), item_ids=sorted(dataset.catalog))
    cfg = SimulationConfig(total_steps=6, agent_count=50, page_size=8, recommender="most_popular", seed=1, persona=["random", "popularity-sensitive"])

    def run(c, name):
        log, _ = run_simulation(c, dataset, pool, model)
        return write_event_log(log, tmp_path / name).read_bytes()

    a, b = run(cfg, "a.jsonl"), run(cfg, "b.jsonl")
    assert a == b
    assert run(cfg.replace(seed=2), "c.jsonl") != a


# 6 ------------------------------------------------------------------------------


@acceptance(6, "interaction ablation: interaction raises likes; diff non-decreasing after crossing")
def test_interaction_ablation(world):
    dataset, pool, base, model = world
    res = run_experiment("interaction-ablation", base, dataset, pool, recommender=model)
    target = res.script.tracked_items[0]
    on = res.final("interaction", target)
    off = res.final("no_interaction", target)
    assert on > off
    from interactsim.reporting import cumulative_series

    s_on = cumulative_series(res.logs["interaction"], target, 10)
    s_off = cumulative_series(res.logs["no_interaction"], target, 10)
    diff = [a - b for a, b in zip(s_on, s_off)]
    cross = next(t for t, d in enumerate(diff) if d > 0)
    assert all(x <= y for x, y in zip(diff[cross:], diff[cross + 1 :]))


# 7 ------------------------------------------------------------------------------


@acceptance(7, "malicious reviews at t=5 flatten the target's like slope over t=6..10")
def test_malicious_review(world):
    dataset, pool, base, model = world
    res = run_experiment("malicious-review", base, dataset, pool, recommender=model)
    target = res.script.tracked_items[0]
    from interactsim.reporting import cumulative_series

    ctrl = cumulative_series(res.logs["control"], target, 10)
    attacked = cumulative_series(res.logs["malicious"], target, 10)
    # index 4 is the end of step 5, index 9 the end of step 10
    assert attacked[9] - attacked[4] < ctrl[9] - ctrl[4]


# 8 ------------------------------------------------------------------------------


@acceptance(8, "seed boost at t=0 yields strictly more final likes")
def test_seed_boost(world):
    dataset, pool, base, model = world
    res = run_experiment("seed-boost", base, dataset, pool, recommender=model)
    target = res.script.tracked_items[0]
    assert res.final("boosted", target) > res.final("control", target)


# 9 ------------------------------------------------------------------------------


@acceptance(9, "brand rename changes only the name: rankings and counters unchanged")
def test_brand_rename_neutral(small_dataset):
    store = initial_store(small_dataset)
    target = sorted(small_dataset.catalog)[0]
    models = {
        kind: train_recommender(kind, small_dataset.interactions(), TrainConfig(epochs=5), item_ids=sorted(small_dataset.catalog), user_ids=sorted(small_dataset.users))
        for kind in ("random", "most_popular", "mf", "lightgcn")
    }
    users = sorted(small_dataset.users)[:15]

    def snapshot():
        pages = {(k, u): build_recommendation_page(m, u, store, 8, salt=1).item_ids for k, m in models.items() for u in users}
        ranks = {(k, u): recommend(m, u, 10, salt=1, live_counts=store.live_counts()) for k, m in models.items() for u in users}
        return pages, ranks, store.counters()

    before = snapshot()
    old_name = store.statics[target].name
    deltas, created = apply_intervention(store, Intervention.brand_rename(0, target, "Stack Shack"), 0)
    assert deltas == {} and created == []
    assert store.statics[target].name == "Stack Shack" != old_name
    assert snapshot() == before


# 10 -----------------------------------------------------------------------------


@acceptance(10, "LightGCN propagation matches a dense normalized-adjacency oracle")
def test_propagation_oracle():
    rng = np.random.default_rng(10)
    for trial in range(25):
        n_u = int(rng.integers(1, 10))
        n_i = 10 - n_u
        R = (rng.random((n_u, n_i)) < 0.4).astype(float)
        e0 = rng.normal(size=(10, 4))
        for K in range(4):
            got = propagate_embeddings(R, e0, K)
            np.testing.assert_allclose(got, oracles.dense_propagate(R, e0, K), atol=1e-9, rtol=0)
        dense, _ = oracles.dense_norm_adj(R)
        np.testing.assert_allclose(normalized_adjacency(R)[0].toarray(), dense, atol=1e-12)

    eu, ei = np.array([[1.0, -2.0]]), np.array([[3.0, 0.5]])
    e0 = np.vstack([eu, ei])
    one = propagate_embeddings(np.array([[1.0]]), e0, 1)
    np.testing.assert_array_equal(one, np.vstack([(eu + ei) / 2, (ei + eu) / 2]))
    two = propagate_embeddings(np.array([[1.0]]), e0, 2)
    np.testing.assert_allclose(two, np.vstack([(2 * eu + ei) / 3, (2 * ei + eu) / 3]), atol=1e-15)


# 11 -----------------------------------------------------------------------------


@acceptance(11, "LightGCN BPR gradient matches central finite differences")
def test_lightgcn_gradient_check():
    R = np.array([[1.0, 0.0], [1.0, 1.0]])
    norm_adj, isolated = normalized_adjacency(R)
    triples = np.array([[0, 0, 1], [1, 1, 0], [1, 0, 1]])
    rng = np.random.default_rng(11)
    for l2, layers in ((0.0, 1), (0.1, 2), (0.05, 3)):
        e0 = rng.normal(size=(4, 3))
        loss, grad = lightgcn_loss_and_grad(e0, norm_adj, isolated, layers, 2, triples, l2)
        f = lambda x: lightgcn_loss_and_grad(x, norm_adj, isolated, layers, 2, triples, l2)[0]
        fd = oracles.finite_difference(f, e0.copy())
        rel = np.linalg.norm(grad - fd) / max(np.linalg.norm(fd), 1e-12)
        assert rel < 1e-4
        # independent loss value from the dense oracle
        final = oracles.dense_propagate(R, e0, layers)
        bpr, _ = oracles.bpr_loss_dense(final, 2, triples, l2)
        rows = [t[0] for t in triples] + [2 + t[1] for t in triples] + [2 + t[2] for t in triples]
        reg = 0.5 * l2 * sum(float(e0[r] @ e0[r]) for r in rows) / len(triples)
        assert loss == pytest.approx(bpr + reg, rel=1e-10)


# 12 -----------------------------------------------------------------------------


def _block_data():
    """20 users x 20 items in two blocks; two items per user held out."""
    train, held, negs = [], {}, {}
    for u in range(20):
        block = range(0, 10) if u < 10 else range(10, 20)
        other = [f"i{j:02d}" for j in range(20) if j not in block]
        items = [f"i{j:02d}" for j in block]
        out = {items[u % 10], items[(u + 3) % 10]}
        held[f"u{u:02d}"] = sorted(out)
        negs[f"u{u:02d}"] = other
        train += [(f"u{u:02d}", i, 5) for i in items if i not in out]
    return train, held, negs


@acceptance(12, "MF and LightGCN: loss strictly decreasing for 20 epochs, held-out AUC > 0.8")
@pytest.mark.parametrize("kind", ["mf", "lightgcn"])
def test_learning_sanity(kind):
    train, held, negs = _block_data()
    cfg = TrainConfig(dim=16, layers=2, epochs=20, learning_rate=0.02, init_std=0.01, batch_size=32, seed=0)
    users = sorted(held)
    items = [f"i{j:02d}" for j in range(20)]
    model = train_recommender(kind, train, cfg, item_ids=items, user_ids=users)
    h = model.loss_history
    assert len(h) == 20
    assert all(a > b for a, b in zip(h, h[1:])), h
    assert auc(model, held, negs) > 0.8


# 13 -----------------------------------------------------------------------------


@acceptance(13, "profile statistics equal brute-force recomputation")
def test_profile_formulas():
    catalog = {
        "a": ItemRecord("a", "Zed Grill", ["Restaurants", "Burgers", "Burgers"]),
        "b": ItemRecord("b", "Alpha Noodle", ["Restaurants", "Noodles", "Asian"]),
        "c": ItemRecord("c", "Mid Cafe", ["Cafes", "Coffee"]),
        "d": ItemRecord("d", "Alpha Noodle", ["Restaurants", "Asian"]),
        "e": ItemRecord("e", "Taco Town", ["Restaurants", "Mexican"]),
    }
    history = [
        ("a", 5, "Great burgers and crispy fries, great service"),
        ("b", 4, "Noodles were fresh"),
        ("a", 4, None),
        ("c", 3, "Coffee was fine but the wait was long"),
        ("d", 2, "  "),
        ("b", 5, "Best noodles ever, the broth is great"),
        ("e", 1, "Cold tacos"),
        ("c", 4, None),
        ("a", 5, "burgers burgers burgers"),
        ("d", 3, "Asian fusion done ok"),
    ]
    others = {
        "v": [HistoricalInteraction("a", 3, "fries were soggy"), HistoricalInteraction("e", 5, "tacos rule")],
        "w": [HistoricalInteraction("c", 4, "great coffee, great staff")],
        "x": [HistoricalInteraction("b", 2)],
    }
    users = {"u": [HistoricalInteraction(i, r, t) for i, r, t in history], **others}
    dataset = Dataset(users, catalog)
    stats = DatasetStats.from_dataset(dataset)
    prof = compute_objective_profile(users["u"], catalog, stats)

    plain_catalog = {k: {"name": v.name, "categories": v.categories} for k, v in catalog.items()}
    t_rate, t_repr, t_relen, t_cate, t_item = oracles.brute_profile(history, plain_catalog)
    assert prof.t_rate == t_rate
    assert prof.t_repr == t_repr
    assert prof.t_relen == t_relen
    assert prof.t_cate == t_cate
    assert prof.t_item == t_item

    stop = frozenset(Path(__file__).resolve().parents[1].joinpath("src/interactsim/data/stopwords.txt").read_text().split())
    docs = []
    for uid in sorted(users):
        texts = [h.review_text for h in users[uid] if h.review_text and h.review_text.strip()]
        if texts:
            docs.append(" ".join(texts))
    reviews = [t for _, _, t in history if t and t.strip()]
    expected = oracles.brute_tfidf(reviews, docs, stop, 20)
    assert [w for w, _ in prof.t_rekey] == [w for w, _ in expected]
    assert [s for _, s in prof.t_rekey] == pytest.approx([s for _, s in expected], abs=1e-12)


# 14 -----------------------------------------------------------------------------


@acceptance(14, "sentiment: empty is 0, 'good' is 0.4404, negation flips the sign")
def test_sentiment():
    assert sentiment_compound("") == 0.0
    x = oracles.GOOD_VALENCE
    assert x / math.sqrt(x * x + 15) == pytest.approx(oracles.GOOD_COMPOUND, abs=1e-4)
    assert sentiment_compound("good") == pytest.approx(0.4404, abs=1e-4)
    assert sentiment_compound("not good") == pytest.approx(-0.4404, abs=1e-4)
    assert sentiment_compound("the food was not very good") < 0


# 15 -----------------------------------------------------------------------------


def _curation_fixture():
    like = lambda item: json.dumps({"thought": "t", "actions": [{"kind": "LikeProduct", "target_item": item}]})
    bad_format = [
        "not json at all",
        json.dumps({"thought": "t", "actions": [{"kind": "CreateReview", "target_item": "a"}]}),
        json.dumps({"thought": "t", "actions": "LikeProduct"}),
        json.dumps({"thought": "t", "actions": [{"kind": "Teleport", "target_item": "a"}]}),
    ]
    samples, truth = [], {}
    for k in range(20):
        if k < 4:
            response = bad_format[k]
        elif k < 9:
            response = like("zzz")  # never visited
        else:
            response = like("a" if k % 2 else "b")
        samples.append(CotSample(f"r:{k + 1}:u", f"prompt marker-{k:02d}", response, "u", "r", k + 1, "u"))
        truth[f"r:{k + 1}:u"] = {
            "format": k >= 4,
            "preference": k >= 9,
            "llm": k not in (9, 10, 11),
            "human": k not in (12, 13, 14),
        }
    return samples, truth


def _judge(request):
    text = request.last_user_message
    return "FAIL\nimplausible" if any(f"marker-{k:02d}" in text for k in (9, 10, 11)) else "PASS"


@acceptance(15, "curation emits exactly the passers of every enabled stage; removing stages never shrinks output")
def test_curation_pipeline(tmp_path):
    samples, truth = _curation_fixture()
    humans = {sid: FilterVerdict("human", truth[sid]["human"], "", sid) for sid in truth if sid != "r:15:u"}
    gateway = Gateway(MockBackend(_judge), sleep=no_sleep)
    history = {"u": {"a", "b", "c"}}

    full = run_pipeline(samples, history, gateway, humans)
    n = emit_finetune_dataset(full.passed, tmp_path / "ft.jsonl")
    lines = [json.loads(x) for x in (tmp_path / "ft.jsonl").read_text().splitlines()]
    expected = {sid for sid, t in truth.items() if all(t.values())}
    assert n == len(lines) == len(expected) == 5
    assert {s.sample_id for s in full.passed} == expected
    assert {x["prompt"] for x in lines} == {s.prompt for s in samples if s.sample_id in expected}
    assert [s.sample_id for s in full.held] == ["r:15:u"]

    from itertools import combinations

    for r in range(1, len(STAGES) + 1):
        for subset in combinations(STAGES, r):
            res = run_pipeline(samples, history, gateway, humans, stages=subset)
            got = {s.sample_id for s in res.passed}
            assert got == {sid for sid, t in truth.items() if all(t[s] for s in subset)}, subset
            assert got >= expected


# 16 -----------------------------------------------------------------------------


def _judge_pairs(n_win, n_loss):
    pairs = []
    for k in range(n_win + n_loss):
        good_first = k < n_win
        a = JudgeSample("ours", f"profile {k}", "m", "GOOD trace" if good_first else "weak trace")
        b = JudgeSample("baseline", f"profile {k}", "m", "weak trace" if good_first else "GOOD trace")
        pairs.append((f"p{k:02d}", a, b))
    return pairs


@acceptance(16, "judge swap: position-biased judge gives all Ties; consistent judge gives scripted split")
def test_judge_swap():
    pairs = _judge_pairs(7, 3)
    biased = Gateway(MockBackend(lambda req: "1"), sleep=no_sleep)
    totals = judge_totals(judge_pairs(pairs, biased))
    assert (totals["win"], totals["loss"], totals["tie"], totals["invalid"]) == (0, 0, 10, 0)
    assert totals["adjusted_win_rate"] == 0.5

    def consistent(req):
        first = req.last_user_message.split("## Sample 2")[0]
        return "1" if "GOOD" in first else "2"

    totals = judge_totals(judge_pairs(pairs, Gateway(MockBackend(consistent), sleep=no_sleep)))
    assert (totals["win"], totals["loss"], totals["tie"]) == (7, 3, 0)
    assert totals["adjusted_win_rate"] == pytest.approx(0.7)
