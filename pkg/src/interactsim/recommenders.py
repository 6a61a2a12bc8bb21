"""Ranking backends: Random, MostPopular, BPR matrix factorization and LightGCN.

Embedding models are trained with BPR on (user, positive, negative) triples
using plain minibatch SGD. LightGCN gradients flow through the propagation
exactly: propagation is a symmetric linear operator, so the gradient with
respect to the layer-0 embeddings is the same operator applied to the
gradient with respect to the final embeddings.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np
import scipy.sparse as sp

logger = logging.getLogger(__name__)

RECOMMENDER_KINDS = ("random", "most_popular", "mf", "lightgcn")


@dataclass
class TrainConfig:
    dim: int = 64
    layers: int = 2
    epochs: int = 200
    learning_rate: float = 0.05
    negative_samples: int = 1
    l2: float = 1e-4
    batch_size: int = 256
    init_std: float = 0.01
    seed: int = 0
    positive_threshold: int = 4

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if self.layers < 0:
            raise ValueError("layers must be >= 0")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.negative_samples < 1 or self.batch_size < 1:
            raise ValueError("negative_samples and batch_size must be >= 1")


@dataclass
class TrainedModel:
    kind: str
    user_ids: list[str]
    item_ids: list[str]
    user_embeddings: Optional[np.ndarray] = None
    item_embeddings: Optional[np.ndarray] = None
    popularity: Optional[np.ndarray] = None
    seed: int = 0
    layers: int = 0
    live: bool = False
    loss_history: list[float] = field(default_factory=list)

    def __post_init__(self):
        if self.kind not in RECOMMENDER_KINDS:
            raise ValueError(f"unknown recommender {self.kind!r}; valid: {', '.join(RECOMMENDER_KINDS)}")
        self._user_index = {u: i for i, u in enumerate(self.user_ids)}
        self._item_index = {it: i for i, it in enumerate(self.item_ids)}
        if self.user_embeddings is not None:
            if self.user_embeddings.shape[0] != len(self.user_ids) or self.item_embeddings.shape[0] != len(self.item_ids):
                raise ValueError("embedding rows must match user/item counts")
            if not (np.isfinite(self.user_embeddings).all() and np.isfinite(self.item_embeddings).all()):
                raise ValueError("embeddings contain non-finite values")
        if self.popularity is None:
            self.popularity = np.zeros(len(self.item_ids))

    @property
    def dim(self) -> int:
        return 0 if self.user_embeddings is None else int(self.user_embeddings.shape[1])

    def item_index(self, item_id: str) -> int:
        return self._item_index[item_id]

    def scores(self, user_id: str) -> np.ndarray:
        """Scores over ``item_ids``; unknown users fall back to popularity."""
        if self.kind in ("mf", "lightgcn") and user_id in self._user_index:
            return self.item_embeddings @ self.user_embeddings[self._user_index[user_id]]
        return np.asarray(self.popularity, dtype=float)


def _top_k_by_score(item_ids: Sequence[str], scores: np.ndarray, k: int, exclude: frozenset) -> list[str]:
    order = sorted(
        (i for i in range(len(item_ids)) if item_ids[i] not in exclude),
        key=lambda i: (-scores[i], item_ids[i]),
    )
    return [item_ids[i] for i in order[:k]]


def recommend(
    model: TrainedModel,
    user_id: str,
    k: int,
    exclusion_set: Iterable[str] = (),
    salt: int = 0,
    live_counts: Optional[Mapping[str, float]] = None,
) -> list[str]:
    """Top-``k`` items for ``user_id``; fewer when candidates run out.

    ``salt`` varies the Random backend's draw (e.g. per step); ``live_counts``
    feeds MostPopular's live mode.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    exclude = frozenset(exclusion_set)
    if model.kind == "random":
        from .ingestion import stable_int

        candidates = [i for i in model.item_ids if i not in exclude]
        rng = np.random.default_rng([model.seed, stable_int(user_id), salt])
        take = min(k, len(candidates))
        picks = rng.choice(len(candidates), size=take, replace=False) if take else []
        return [candidates[j] for j in picks]
    if model.kind == "most_popular" and model.live and live_counts is not None:
        scores = np.array([float(live_counts.get(i, 0.0)) for i in model.item_ids])
        return _top_k_by_score(model.item_ids, scores, k, exclude)
    return _top_k_by_score(model.item_ids, model.scores(user_id), k, exclude)


def _index(interactions, user_ids=None, item_ids=None):
    users = sorted({u for u, _, _ in interactions}) if user_ids is None else list(user_ids)
    items = sorted({i for _, i, _ in interactions}) if item_ids is None else list(item_ids)
    return users, items, {u: n for n, u in enumerate(users)}, {i: n for n, i in enumerate(items)}


def random_model(item_ids: Sequence[str], seed: int = 0, user_ids: Sequence[str] = ()) -> TrainedModel:
    return TrainedModel("random", list(user_ids), sorted(item_ids), seed=seed)


def most_popular(interactions, item_ids: Optional[Sequence[str]] = None, live: bool = False) -> TrainedModel:
    """Popularity = historical interaction count. ``live`` re-ranks by current counters at query time."""
    users, items, _, iidx = _index(interactions, item_ids=item_ids)
    pop = np.zeros(len(items))
    for _, i, _ in interactions:
        if i in iidx:
            pop[iidx[i]] += 1
    return TrainedModel("most_popular", users, items, popularity=pop, live=live)


# --- graph propagation -------------------------------------------------------


def normalized_adjacency(interaction_matrix) -> tuple[sp.csr_matrix, np.ndarray]:
    """Symmetric-normalized bipartite adjacency D^-1/2 A D^-1/2 over users+items.

    ``interaction_matrix`` is (n_users, n_items), binary. Returns the matrix and
    a boolean mask of isolated (degree-0) nodes.
    """
    r = sp.csr_matrix(interaction_matrix, dtype=float)
    r.data[:] = 1.0
    n_u, n_i = r.shape
    a = sp.bmat([[None, r], [r.T, None]], format="csr")
    a.sum_duplicates()
    deg = np.asarray(a.sum(axis=1)).ravel()
    isolated = deg == 0
    inv_sqrt = np.zeros_like(deg)
    inv_sqrt[~isolated] = deg[~isolated] ** -0.5
    d = sp.diags(inv_sqrt)
    return (d @ a @ d).tocsr(), isolated


def _propagate(norm_adj, isolated, e0: np.ndarray, layers: int) -> np.ndarray:
    acc = e0.copy()
    cur = e0
    for _ in range(layers):
        cur = norm_adj @ cur
        acc += cur
    out = acc / (layers + 1)
    if isolated.any():
        out[isolated] = e0[isolated]
    return out


def propagate_embeddings(bipartite_adjacency, e0: np.ndarray, layers: int) -> np.ndarray:
    """Mean of layers 0..K of E^(k+1) = D^-1/2 A D^-1/2 E^(k); isolated nodes keep their E0 rows.

    ``bipartite_adjacency`` is the (n_users, n_items) interaction matrix;
    ``e0`` stacks user rows then item rows.
    """
    norm_adj, isolated = normalized_adjacency(bipartite_adjacency)
    e0 = np.asarray(e0, dtype=float)
    if e0.shape[0] != norm_adj.shape[0]:
        raise ValueError("e0 must have n_users + n_items rows")
    return _propagate(norm_adj, isolated, e0, layers)


# --- BPR training ------------------------------------------------------------


def _positives(interactions, uidx, iidx, threshold):
    pos = [(uidx[u], iidx[i]) for u, i, r in interactions if r >= threshold and u in uidx and i in iidx]
    return sorted(set(pos))


def sample_triples(pos_pairs, seen: list[set], n_items: int, negatives: int, rng) -> np.ndarray:
    """One row (u, i+, i-) per positive per negative; negatives drawn from items the user never touched."""
    rows = []
    for u, i in pos_pairs:
        for _ in range(negatives):
            if len(seen[u]) >= n_items:
                break
            j = int(rng.integers(n_items))
            while j in seen[u]:
                j = int(rng.integers(n_items))
            rows.append((u, i, j))
    return np.array(rows, dtype=np.int64).reshape(-1, 3)


def _log_sigmoid(x):
    return -np.logaddexp(0.0, -x)


def bpr_loss_and_grad(user_emb, item_emb, triples, l2):
    """Mean BPR loss over ``triples`` plus batch-row L2, and its gradients w.r.t. both tables."""
    u, i, j = triples[:, 0], triples[:, 1], triples[:, 2]
    eu, ei, ej = user_emb[u], item_emb[i], item_emb[j]
    x = np.einsum("bd,bd->b", eu, ei - ej)
    n = len(triples)
    reg = 0.5 * l2 * (np.sum(eu * eu) + np.sum(ei * ei) + np.sum(ej * ej)) / n
    loss = float(-np.mean(_log_sigmoid(x)) + reg)
    coef = (-np.exp(_log_sigmoid(-x)) / n)[:, None]  # dL/dx = -sigmoid(-x)/n
    g_user = np.zeros_like(user_emb)
    g_item = np.zeros_like(item_emb)
    np.add.at(g_user, u, coef * (ei - ej) + l2 * eu / n)
    np.add.at(g_item, i, coef * eu + l2 * ei / n)
    np.add.at(g_item, j, -coef * eu + l2 * ej / n)
    return loss, g_user, g_item


def _setup(interactions, cfg: TrainConfig, user_ids, item_ids):
    users, items, uidx, iidx = _index(interactions, user_ids, item_ids)
    pos = _positives(interactions, uidx, iidx, cfg.positive_threshold)
    if not pos:
        raise ValueError("no positive interactions (rating >= positive_threshold)")
    seen = [set() for _ in users]
    for u, i, _ in interactions:
        if u in uidx and i in iidx:
            seen[uidx[u]].add(iidx[i])
    return users, items, pos, seen


def train_mf(interactions, cfg: TrainConfig = TrainConfig(), user_ids=None, item_ids=None) -> TrainedModel:
    """BPR-MF: maximize ln sigmoid(x_ui+ - x_ui-) with L2, minibatch SGD at a fixed learning rate."""
    users, items, pos, seen = _setup(interactions, cfg, user_ids, item_ids)
    rng = np.random.default_rng(cfg.seed)
    user_emb = rng.normal(0.0, cfg.init_std, (len(users), cfg.dim))
    item_emb = rng.normal(0.0, cfg.init_std, (len(items), cfg.dim))
    history = []
    for _ in range(cfg.epochs):
        triples = sample_triples(pos, seen, len(items), cfg.negative_samples, rng)
        rng.shuffle(triples)
        losses = []
        for start in range(0, len(triples), cfg.batch_size):
            batch = triples[start : start + cfg.batch_size]
            loss, gu, gi = bpr_loss_and_grad(user_emb, item_emb, batch, cfg.l2)
            # step size is per triple, as in sample-wise BPR-SGD
            user_emb -= cfg.learning_rate * len(batch) * gu
            item_emb -= cfg.learning_rate * len(batch) * gi
            losses.append(loss * len(batch))
        history.append(sum(losses) / len(triples))
    pop = _popularity(interactions, items)
    return TrainedModel("mf", users, items, user_emb, item_emb, pop, seed=cfg.seed, loss_history=history)


def _popularity(interactions, items):
    idx = {i: n for n, i in enumerate(items)}
    pop = np.zeros(len(items))
    for _, i, _ in interactions:
        if i in idx:
            pop[idx[i]] += 1
    return pop


def _interaction_matrix(pos, n_users, n_items):
    rows = [u for u, _ in pos]
    cols = [i for _, i in pos]
    return sp.csr_matrix((np.ones(len(pos)), (rows, cols)), shape=(n_users, n_items))


def lightgcn_loss_and_grad(e0, norm_adj, isolated, layers, n_users, triples, l2):
    """BPR loss on propagated embeddings and its exact gradient w.r.t. layer-0 embeddings."""
    final = _propagate(norm_adj, isolated, e0, layers)
    loss, gu, gi = bpr_loss_and_grad(final[:n_users], final[n_users:], triples, 0.0)
    g_final = np.vstack([gu, gi])
    g_e0 = _propagate(norm_adj, isolated, g_final, layers)
    if l2:
        rows = np.concatenate([triples[:, 0], n_users + triples[:, 1], n_users + triples[:, 2]])
        n = len(triples)
        sel = e0[rows]
        loss += float(0.5 * l2 * np.sum(sel * sel) / n)
        np.add.at(g_e0, rows, l2 * sel / n)
    return loss, g_e0


def train_lightgcn(interactions, cfg: TrainConfig = TrainConfig(), user_ids=None, item_ids=None) -> TrainedModel:
    users, items, pos, seen = _setup(interactions, cfg, user_ids, item_ids)
    n_u, n_i = len(users), len(items)
    norm_adj, isolated = normalized_adjacency(_interaction_matrix(pos, n_u, n_i))
    rng = np.random.default_rng(cfg.seed)
    e0 = rng.normal(0.0, cfg.init_std, (n_u + n_i, cfg.dim))
    history = []
    for _ in range(cfg.epochs):
        triples = sample_triples(pos, seen, n_i, cfg.negative_samples, rng)
        rng.shuffle(triples)
        losses = []
        for start in range(0, len(triples), cfg.batch_size):
            batch = triples[start : start + cfg.batch_size]
            loss, g = lightgcn_loss_and_grad(e0, norm_adj, isolated, cfg.layers, n_u, batch, cfg.l2)
            e0 -= cfg.learning_rate * len(batch) * g
            losses.append(loss * len(batch))
        history.append(sum(losses) / len(triples))
    final = _propagate(norm_adj, isolated, e0, cfg.layers)
    pop = _popularity(interactions, items)
    return TrainedModel(
        "lightgcn", users, items, final[:n_u], final[n_u:], pop, seed=cfg.seed, layers=cfg.layers, loss_history=history
    )


def train_recommender(kind: str, interactions, cfg: TrainConfig = TrainConfig(), item_ids=None, user_ids=None, live: bool = False):
    if kind == "random":
        items = item_ids if item_ids is not None else sorted({i for _, i, _ in interactions})
        users = user_ids if user_ids is not None else sorted({u for u, _, _ in interactions})
        return random_model(items, cfg.seed, users)
    if kind == "most_popular":
        return most_popular(interactions, item_ids, live=live)
    if kind == "mf":
        return train_mf(interactions, cfg, user_ids, item_ids)
    if kind == "lightgcn":
        return train_lightgcn(interactions, cfg, user_ids, item_ids)
    raise ValueError(f"unknown recommender {kind!r}; valid: {', '.join(RECOMMENDER_KINDS)}")


def auc(model: TrainedModel, held_out: Mapping[str, Iterable[str]], negatives: Mapping[str, Iterable[str]]) -> float:
    """Mean per-user AUC of held-out positives against the given negatives (ties count half)."""
    per_user = []
    for u, pos_items in held_out.items():
        pos_items, neg_items = list(pos_items), list(negatives[u])
        if not pos_items or not neg_items:
            continue
        s = model.scores(u)
        ps = np.array([s[model.item_index(i)] for i in pos_items])
        ns = np.array([s[model.item_index(i)] for i in neg_items])
        diff = ps[:, None] - ns[None, :]
        per_user.append(float(np.mean((diff > 0) + 0.5 * (diff == 0))))
    return float(np.mean(per_user)) if per_user else float("nan")


def save_model(model: TrainedModel, path) -> None:
    """``.npz`` checkpoint; the ``header`` entry is JSON {kind, d, K, seed, ...}."""
    header = {
        "kind": model.kind,
        "d": model.dim,
        "K": model.layers,
        "seed": model.seed,
        "live": model.live,
        "user_ids": model.user_ids,
        "item_ids": model.item_ids,
    }
    arrays = {"header": np.array(json.dumps(header)), "popularity": np.asarray(model.popularity, dtype=float)}
    if model.user_embeddings is not None:
        arrays["user_embeddings"] = model.user_embeddings
        arrays["item_embeddings"] = model.item_embeddings
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_model(path) -> TrainedModel:
    with np.load(Path(path), allow_pickle=False) as z:
        header = json.loads(str(z["header"]))
        ue = z["user_embeddings"] if "user_embeddings" in z else None
        ie = z["item_embeddings"] if "item_embeddings" in z else None
        pop = z["popularity"]
    return TrainedModel(
        header["kind"], header["user_ids"], header["item_ids"], ue, ie, pop,
        seed=header["seed"], layers=header["K"], live=header["live"],
    )
