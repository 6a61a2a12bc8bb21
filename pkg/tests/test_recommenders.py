import numpy as np
import pytest
from hypothesis import given, strategies as st

import oracles
from interactsim.recommenders import (
    TrainConfig,
    TrainedModel,
    auc,
    load_model,
    most_popular,
    normalized_adjacency,
    propagate_embeddings,
    recommend,
    train_recommender,
)


def test_most_popular_sort():
    inter = [("u", "A", 5)] * 5 + [("u", "B", 5)] * 9 + [("u", "C", 5)]
    assert recommend(most_popular(inter), "anyone", 2) == ["B", "A"]


def test_most_popular_live_counts():
    model = most_popular([("u", "A", 5)], item_ids=["A", "B"], live=True)
    assert recommend(model, "u", 1, live_counts={"A": 1, "B": 7}) == ["B"]


def test_random_seeded():
    items = [f"i{k}" for k in range(30)]
    a = train_recommender("random", [], TrainConfig(seed=7), item_ids=items, user_ids=["u"])
    b = train_recommender("random", [], TrainConfig(seed=7), item_ids=items, user_ids=["u"])
    assert recommend(a, "u", 10, salt=3) == recommend(b, "u", 10, salt=3)
    assert recommend(a, "u", 10, salt=3) != recommend(a, "u", 10, salt=4)


def test_mf_hand_set_embeddings():
    model = TrainedModel("mf", ["u"], ["A", "B"], np.array([[1.0, 0.0]]), np.array([[1.0, 0.0], [0.0, 1.0]]), np.zeros(2))
    assert recommend(model, "u", 1) == ["A"]


@given(st.integers(1, 12), st.lists(st.sampled_from([f"i{k}" for k in range(10)]), max_size=10), st.sampled_from(["random", "most_popular", "mf"]))
def test_recommend_excludes_and_never_duplicates(k, excluded, kind):
    items = [f"i{j}" for j in range(10)]
    rng = np.random.default_rng(0)
    if kind == "mf":
        model = TrainedModel("mf", ["u"], items, rng.normal(size=(1, 3)), rng.normal(size=(10, 3)), np.zeros(10))
    elif kind == "random":
        model = train_recommender("random", [], item_ids=items, user_ids=["u"])
    else:
        model = most_popular([("u", i, 5) for i in items[:4]], items)
    out = recommend(model, "u", k, set(excluded))
    assert len(out) == len(set(out)) == min(k, 10 - len(set(excluded)))
    assert not set(out) & set(excluded)


def _block(seed=0):
    rng = np.random.default_rng(seed)
    train, held, negs = [], {}, {}
    for u in range(20):
        blk = list(range(10)) if u < 10 else list(range(10, 20))
        out = set(rng.choice(blk, 2, replace=False).tolist())
        held[f"u{u}"] = [f"i{j}" for j in sorted(out)]
        negs[f"u{u}"] = [f"i{j}" for j in range(20) if j not in blk]
        train += [(f"u{u}", f"i{j}", 5) for j in blk if j not in out]
    return train, held, negs


@pytest.mark.parametrize("kind", ["mf", "lightgcn"])
def test_training_progress_auc_and_determinism(kind):
    train, held, negs = _block()
    cfg = TrainConfig(dim=16, epochs=40, learning_rate=0.02, batch_size=32, seed=3)
    items, users = [f"i{j}" for j in range(20)], sorted(held)
    m1 = train_recommender(kind, train, cfg, item_ids=items, user_ids=users)
    m2 = train_recommender(kind, train, cfg, item_ids=items, user_ids=users)
    assert m1.loss_history[-1] < m1.loss_history[0]
    assert auc(m1, held, negs) > 0.8
    np.testing.assert_array_equal(m1.user_embeddings, m2.user_embeddings)
    np.testing.assert_array_equal(m1.item_embeddings, m2.item_embeddings)


def _co_neighborhood(seed=1, blocks=4, size=12, per_user=3):
    """Sparse community data: each user sees 3 of their block's 12 items, one more is held out."""
    rng = np.random.default_rng(seed)
    train, held, negs = [], {}, {}
    for b in range(blocks):
        its = [f"i{b}_{k}" for k in range(size)]
        for u in range(size):
            uid = f"u{b}_{u}"
            pick = rng.choice(size, per_user + 1, replace=False)
            train += [(uid, its[j], 5) for j in pick[:per_user]]
            held[uid] = [its[pick[-1]]]
            negs[uid] = [f"i{c}_{k}" for c in range(blocks) if c != b for k in range(size)]
    return train, held, negs


def test_lightgcn_beats_mf_on_co_neighborhood_data():
    train, held, negs = _co_neighborhood()
    items = sorted({i for _, i, _ in train} | {x for v in held.values() for x in v})
    cfg = TrainConfig(dim=16, layers=2, epochs=60, learning_rate=0.05, seed=0)
    scores = {k: auc(train_recommender(k, train, cfg, item_ids=items, user_ids=sorted(held)), held, negs) for k in ("mf", "lightgcn")}
    assert scores["lightgcn"] > scores["mf"]


def test_propagation_examples():
    e0 = np.array([[1.0, 2.0], [3.0, -1.0]])
    np.testing.assert_array_equal(propagate_embeddings(np.array([[1]]), e0, 1), np.array([[2.0, 0.5], [2.0, 0.5]]))
    rng = np.random.default_rng(0)
    R = (rng.random((3, 4)) < 0.5).astype(float)
    x = rng.normal(size=(7, 3))
    np.testing.assert_array_equal(propagate_embeddings(R, x, 0), x)
    # two users sharing one item
    R = np.array([[1.0], [1.0]])
    e0 = rng.normal(size=(3, 2))
    out = propagate_embeddings(R, e0, 1)
    item_layer1 = (e0[0] + e0[1]) / np.sqrt(2)
    np.testing.assert_allclose(out[2], (e0[2] + item_layer1) / 2, atol=1e-12)
    np.testing.assert_allclose(out, oracles.dense_propagate(R, e0, 1), atol=1e-9)


def test_isolated_nodes_keep_e0():
    R = np.array([[1.0, 0.0], [0.0, 0.0]])
    e0 = np.arange(8.0).reshape(4, 2)
    out = propagate_embeddings(R, e0, 2)
    np.testing.assert_array_equal(out[1], e0[1])
    np.testing.assert_array_equal(out[3], e0[3])
    _, isolated = normalized_adjacency(R)
    assert isolated.tolist() == [False, True, False, True]


@given(st.integers(0, 2**16), st.floats(-3, 3), st.floats(-3, 3), st.integers(0, 3))
def test_propagation_is_linear(seed, a, b, K):
    rng = np.random.default_rng(seed)
    R = (rng.random((3, 5)) < 0.5).astype(float)
    X, Y = rng.normal(size=(8, 2)), rng.normal(size=(8, 2))
    lhs = propagate_embeddings(R, a * X + b * Y, K)
    rhs = a * propagate_embeddings(R, X, K) + b * propagate_embeddings(R, Y, K)
    np.testing.assert_allclose(lhs, rhs, atol=1e-9)


@given(st.integers(0, 2**16), st.floats(0.1, 10))
def test_scaling_embeddings_preserves_ranking(seed, c):
    rng = np.random.default_rng(seed)
    U, V = rng.normal(size=(4, 3)), rng.normal(size=(9, 3))
    items = [f"i{k}" for k in range(9)]
    base = TrainedModel("mf", list("abcd"), items, U, V, np.zeros(9))
    scaled = TrainedModel("mf", list("abcd"), items, c * U, c * V, np.zeros(9))
    for u in "abcd":
        assert recommend(base, u, 9) == recommend(scaled, u, 9)
        np.testing.assert_allclose(scaled.scores(u), c * c * base.scores(u), rtol=1e-9, atol=1e-12)


@pytest.mark.parametrize("kind", ["random", "most_popular", "mf", "lightgcn"])
def test_checkpoint_roundtrip(tmp_path, kind):
    train, held, _ = _block()
    m = train_recommender(kind, train, TrainConfig(dim=4, epochs=2), item_ids=[f"i{j}" for j in range(20)], user_ids=sorted(held))
    from interactsim.recommenders import save_model

    save_model(m, tmp_path / "m.npz")
    back = load_model(tmp_path / "m.npz")
    assert back.kind == kind and back.item_ids == m.item_ids
    for u in ("u0", "u15"):
        assert recommend(back, u, 5, salt=1) == recommend(m, u, 5, salt=1)


def test_config_and_kind_validation():
    with pytest.raises(ValueError):
        TrainConfig(dim=0)
    with pytest.raises(ValueError):
        train_recommender("multvae", [("u", "i", 5)])
    with pytest.raises(ValueError):
        train_recommender("mf", [("u", "i", 1)])
    with pytest.raises(ValueError):
        recommend(most_popular([("u", "i", 5)]), "u", 0)
