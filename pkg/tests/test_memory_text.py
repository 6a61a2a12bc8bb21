import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

import oracles
from interactsim.domain import DO_NOTHING, Action, ActionKind
from interactsim.memory import (
    CognitiveMemory,
    EmbeddingSimilarity,
    MemoryStore,
    PerceptualMemory,
    RetrievalParams,
    rank_memories,
    record_perceptual,
    retrieve,
    score_memory,
    similarity,
)
from interactsim.text import tf_cosine, tokenize

LIKE = Action(ActionKind.LIKE_PRODUCT, "a")


def test_record_perceptual_examples():
    store = MemoryStore()
    record_perceptual(store, ["a"], LIKE, 1)
    assert len(store.perceptual) == 1
    record_perceptual(store, ["b"], DO_NOTHING, 2)
    record_perceptual(store, ["c"], DO_NOTHING, 3)
    assert [m.step for m in store.perceptual] == [1, 2, 3]
    with pytest.raises(ValueError):
        record_perceptual(store, ["d"], DO_NOTHING, 3)


def test_score_examples():
    p = RetrievalParams()
    fresh = PerceptualMemory(["x"], ["quiet jazz"], [], 4)
    assert score_memory(fresh, "spicy ramen", 4, p) == pytest.approx(0.7)
    assert score_memory(fresh, "spicy ramen", 9, p) == pytest.approx(0.7 * math.exp(-1), abs=1e-12)
    assert 0.7 * math.exp(-1) == pytest.approx(0.2575, abs=1e-4)
    with pytest.raises(ValueError):
        score_memory(fresh, "x", 3, p)


def test_similarity_examples():
    assert similarity("pizza place", "pizza place") == pytest.approx(1.0)
    assert similarity("pizza", "sushi") == 0.0
    assert similarity("cheap pizza", "pizza deal") == pytest.approx(0.5)
    assert similarity("", "pizza") == 0.0


words = st.lists(st.sampled_from(["pizza", "sushi", "cheap", "deal", "ramen", "tacos", "spicy"]), max_size=8).map(" ".join)


@given(words, words)
def test_similarity_symmetric_bounded_and_matches_oracle(a, b):
    s = similarity(a, b)
    assert s == similarity(b, a)
    assert 0.0 <= s <= 1.0
    assert s == pytest.approx(oracles.tf_cosine_unit(tokenize(a), tokenize(b)))


# gamma*dt stays below ~30 so the recency term is still representable next to beta*sim
@given(st.floats(0, 1), st.integers(0, 14), st.floats(0.01, 2))
def test_score_strictly_decreasing_in_elapsed(sim, dt, gamma):
    p = RetrievalParams(gamma=gamma)
    fixed = lambda a, b: sim
    m0 = PerceptualMemory([], ["x"], [], 40 - dt)
    m1 = PerceptualMemory([], ["x"], [], 40 - dt - 1)
    assert score_memory(m0, "ctx", 40, p, fixed) > score_memory(m1, "ctx", 40, p, fixed)


def _mems(n, rng):
    names = ["pizza", "sushi", "ramen", "tacos", "curry", "salad"]
    return [PerceptualMemory(["i"], [str(rng.choice(names)), str(rng.choice(names))], [], step) for step in range(1, n + 1)]


def test_retrieve_caps_and_complement():
    rng = np.random.default_rng(0)
    store = MemoryStore(perceptual=_mems(30, rng))
    ctx = "pizza ramen"
    got, cog = store.retrieve(ctx, 31)
    assert len(got) == 25 and cog == []
    full = sorted(store.perceptual, key=lambda m: (-score_memory(m, ctx, 31), -m.step))
    assert got == full[:25]
    left_out = [m for m in store.perceptual if all(m is not g for g in got)]
    assert sorted(m.step for m in left_out) == sorted(m.step for m in full[25:])


def test_retrieve_empty_and_tie_break():
    assert retrieve(MemoryStore(), "x", 5) == ([], [])
    flat = lambda a, b: 0.0
    params = RetrievalParams(gamma=1e-300)  # effectively equal recency terms
    m3, m7 = PerceptualMemory([], ["a"], [], 3), PerceptualMemory([], ["a"], [], 7)
    assert score_memory(m3, "", 8, params, flat) == score_memory(m7, "", 8, params, flat)
    assert rank_memories([m3, m7], "", 8, params, None, flat) == [m7, m3]


@given(st.integers(0, 12), st.integers(0, 1000))
def test_unbounded_retrieve_is_consistent_with_pairwise_scores(n, seed):
    rng = np.random.default_rng(seed)
    mems = _mems(n, rng)
    ranked = rank_memories(mems, "pizza curry", n + 2, RetrievalParams(), None)
    for i in range(len(ranked)):
        for j in range(i + 1, len(ranked)):
            si = score_memory(ranked[i], "pizza curry", n + 2)
            sj = score_memory(ranked[j], "pizza curry", n + 2)
            assert si > sj or (si == sj and ranked[i].step > ranked[j].step)


def test_cognitive_requires_thought_and_roundtrips():
    with pytest.raises(ValueError):
        CognitiveMemory([], "  ", [], 1)
    store = MemoryStore()
    store.record_perceptual(["a"], [LIKE], 1, ["Alpha"])
    store.record_cognitive([{"item_id": "a", "name": "Alpha"}], "liked it", LIKE, 1)
    assert MemoryStore.from_dict(store.to_dict()) == store
    assert store.cognitive[0].render().startswith("Alpha")


def test_embedding_similarity_caches_and_clips():
    calls = []
    vecs = {"a": [1.0, 0.0], "b": [0.0, 1.0], "c": [-1.0, 0.0]}

    def embed(texts):
        calls.extend(texts)
        return [vecs[t] for t in texts]

    sim = EmbeddingSimilarity(embed)
    assert sim("a", "b") == pytest.approx(0.0)
    assert sim("a", "c") == 0.0
    assert sim("a", "a") == pytest.approx(1.0)
    assert calls.count("a") == 1


def test_retrieval_params_validation():
    with pytest.raises(ValueError):
        RetrievalParams(gamma=0)
    with pytest.raises(ValueError):
        RetrievalParams(theta_p=-1)


def test_tokenize_drops_stop_words():
    assert tokenize("The pizza was GREAT, and the staff's smile!") == ["pizza", "great", "staff's", "smile"]
    assert tf_cosine("the and", "the and") == 0.0
