"""Credibility evaluation: the 1:m selection protocol, pairwise judging, distributions."""

from __future__ import annotations

import csv
import json
import logging
import math
import re
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Mapping, Optional, Sequence, Union

import numpy as np

from .domain import ActionKind, EventRecord, HistoricalInteraction, ItemRecord
from .errors import EvaluationError, FormatError, GatewayError
from .ingestion import Dataset, stable_int
from .profiling import UserProfile
from .prompting import extract_json_block, load_prompt
from .sentiment import SentimentLexicon, bundled_lexicon, sentiment_compound

logger = logging.getLogger(__name__)

EVAL_SET_SIZE = 20
VALID_RATIOS = (1, 3, 9)
DEFAULT_KINDS = ("like", "dislike", "review")
_KIND_ACTIONS = {
    "like": ActionKind.LIKE_PRODUCT,
    "dislike": ActionKind.DISLIKE_PRODUCT,
    "review": ActionKind.CREATE_REVIEW,
    "share": ActionKind.SHARE_PRODUCT,
    "purchase": ActionKind.PURCHASE_PRODUCT,
    "like_review": ActionKind.LIKE_REVIEW,
    "dislike_review": ActionKind.DISLIKE_REVIEW,
    "nothing": ActionKind.DO_NOTHING,
}


# --- 1:m protocol ------------------------------------------------------------


@dataclass
class EvalSample:
    user_id: str
    items: list[str]
    labels: list[bool]
    selections: Optional[list[bool]] = None
    m: int = 1

    def __post_init__(self):
        if len(self.items) != len(self.labels):
            raise ValueError("items and labels must align")
        if self.selections is not None and len(self.selections) != len(self.items):
            raise ValueError("selections must align with items")

    @property
    def positives(self) -> int:
        return sum(self.labels)

    def with_selections(self, selected: Iterable[str]) -> "EvalSample":
        chosen = set(selected)
        return EvalSample(self.user_id, list(self.items), list(self.labels), [i in chosen for i in self.items], self.m)

    def to_dict(self) -> dict:
        return {"user_id": self.user_id, "m": self.m, "items": self.items, "labels": self.labels, "selections": self.selections}

    @classmethod
    def from_dict(cls, d: dict) -> "EvalSample":
        return cls(d["user_id"], list(d["items"]), list(d["labels"]), d.get("selections"), d.get("m", 1))


def positives_for(m: int, size: int = EVAL_SET_SIZE) -> int:
    if m < 1 or size % (1 + m):
        raise EvaluationError(f"ratio 1:{m} does not divide a {size}-item set")
    return size // (1 + m)


def build_eval_set(
    user_history: Union[Sequence[HistoricalInteraction], Sequence[str]],
    catalog: Union[Mapping[str, ItemRecord], Sequence[str]],
    m: int,
    seed,
    user_id: str = "",
    size: int = EVAL_SET_SIZE,
) -> EvalSample:
    """``size/(1+m)`` history items plus never-interacted items, shuffled by ``seed``."""
    n_pos = positives_for(m, size)
    history = sorted({h.item_id if isinstance(h, HistoricalInteraction) else h for h in user_history})
    pool = sorted(i for i in catalog if i not in set(history))
    if len(history) < n_pos:
        raise EvaluationError(f"user {user_id!r} has {len(history)} distinct items; 1:{m} needs {n_pos}")
    if len(pool) < size - n_pos:
        raise EvaluationError(f"catalog has {len(pool)} never-interacted items for {user_id!r}; need {size - n_pos}")
    rng = np.random.default_rng([stable_int(seed), stable_int(user_id), m])
    pos = [history[j] for j in rng.choice(len(history), n_pos, replace=False)]
    neg = [pool[j] for j in rng.choice(len(pool), size - n_pos, replace=False)]
    items = pos + neg
    labels = [True] * n_pos + [False] * (size - n_pos)
    order = rng.permutation(size)
    return EvalSample(user_id, [items[j] for j in order], [labels[j] for j in order], None, m)


def confusion(samples: Sequence[EvalSample]) -> dict[str, int]:
    tp = fp = tn = fn = 0
    for s in samples:
        if s.selections is None:
            raise EvaluationError(f"sample for {s.user_id!r} has no selections")
        for label, sel in zip(s.labels, s.selections):
            if sel and label:
                tp += 1
            elif sel:
                fp += 1
            elif label:
                fn += 1
            else:
                tn += 1
    return {"tp": tp, "fp": fp, "tn": tn, "fn": fn}


def aggregate_metrics(samples: Sequence[EvalSample]) -> dict:
    """Micro-averaged accuracy/precision/recall/F1; undefined ratios are 0 and listed in ``flags``."""
    c = confusion(samples)
    tp, fp, tn, fn = c["tp"], c["fp"], c["tn"], c["fn"]
    total = tp + fp + tn + fn
    flags = []

    def ratio(num, den, name):
        if den == 0:
            flags.append(f"{name}-undefined")
            return 0.0
        return num / den

    accuracy = ratio(tp + tn, total, "accuracy")
    precision = ratio(tp, tp + fp, "precision")
    recall = ratio(tp, tp + fn, "recall")
    f1 = 0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall)
    if precision + recall == 0:
        flags.append("f1-undefined")
    return {"accuracy": accuracy, "precision": precision, "recall": recall, "f1": f1, "confusion": c, "flags": flags}


Selector = Callable[[UserProfile, EvalSample, Mapping[str, ItemRecord]], Iterable[str]]


def gateway_selector(gateway) -> Selector:
    """Ask the model which items it would pick; a failed call selects nothing."""

    def select(profile: UserProfile, sample: EvalSample, catalog: Mapping[str, ItemRecord]) -> list[str]:
        lines = []
        for item_id in sample.items:
            rec = catalog[item_id]
            lines.append(f"[{item_id}] {rec.name} | {', '.join(rec.categories)} | {rec.augmented_description or rec.description}")
        system, user = load_prompt("eval_select").render(profile=profile.render(), items="\n".join(lines))
        try:
            block = extract_json_block(gateway.complete(user, system=system).text, "selected")
        except (GatewayError, FormatError) as exc:
            logger.warning("selection for %s failed: %s", profile.user_id, exc)
            return []
        chosen = block.get("selected")
        return [str(x) for x in chosen] if isinstance(chosen, list) else []

    return select


def category_selector(profile: UserProfile, sample: EvalSample, catalog: Mapping[str, ItemRecord]) -> list[str]:
    """Offline stand-in: pick items sharing a category with the user's top categories (excluding generic ones)."""
    counts = profile.objective.t_cate
    generic = {"Restaurants", "Food"}
    wanted = {c for c in counts[:3] if c not in generic}
    return [i for i in sample.items if wanted.intersection(catalog[i].categories)]


def run_credibility_eval(
    dataset: Dataset,
    profile_pool: Mapping[str, UserProfile],
    m: int,
    selector: Selector,
    seed: int = 0,
    max_users: Optional[int] = None,
) -> tuple[list[EvalSample], dict]:
    samples = []
    skipped = 0
    for uid in sorted(profile_pool)[: max_users or None]:
        try:
            blank = build_eval_set(dataset.users[uid], dataset.catalog, m, seed, user_id=uid)
        except EvaluationError:
            skipped += 1
            continue
        samples.append(blank.with_selections(selector(profile_pool[uid], blank, dataset.catalog)))
    if not samples:
        raise EvaluationError("no user qualified for the evaluation set")
    metrics = aggregate_metrics(samples)
    metrics.update({"m": m, "samples": len(samples), "skipped_users": skipped})
    return samples, metrics


# --- pairwise judging --------------------------------------------------------


def adjusted_win_rate(win: int, loss: int, tie: int) -> float:
    if min(win, loss, tie) < 0:
        raise ValueError("counts must be non-negative")
    total = win + loss + tie
    if total == 0:
        raise ValueError("no judgments to aggregate")
    return (win + 0.5 * tie) / total


@dataclass
class JudgeSample:
    """What the judge sees for one method: profile, retrieved memories and the behaviour trace."""

    method: str
    profile: str
    memories: str
    trace: str

    def render(self) -> str:
        return f"### Profile\n{self.profile}\n\n### Memories\n{self.memories}\n\n### Behaviour\n{self.trace}"


@dataclass
class JudgeVerdict:
    pair_id: str
    first_pass: Optional[str]
    second_pass: Optional[str]
    outcome: Optional[str]
    valid: bool = True
    note: str = ""

    def to_dict(self) -> dict:
        return {
            "pair_id": self.pair_id,
            "first_pass": self.first_pass,
            "second_pass": self.second_pass,
            "outcome": self.outcome,
            "valid": self.valid,
            "note": self.note,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "JudgeVerdict":
        return cls(d["pair_id"], d.get("first_pass"), d.get("second_pass"), d.get("outcome"), d.get("valid", True), d.get("note", ""))


def verdict_outcome(first_pass: str, second_pass: str) -> str:
    if first_pass == second_pass == "A":
        return "Win"
    if first_pass == second_pass == "B":
        return "Loss"
    return "Tie"


_CHOICE = re.compile(r"\b([12])\b")


def _ask_judge(gateway, first: str, second: str) -> int:
    system, user = load_prompt("judge").render(first=first, second=second)
    text = gateway.complete(user, system=system).text
    m = _CHOICE.search(text)
    if not m:
        raise FormatError(f"judge reply has no 1/2 choice: {text[:60]!r}")
    return int(m.group(1))


def pairwise_judge(sample_a, sample_b, judge_gateway, pair_id: str = "") -> JudgeVerdict:
    """Two judge calls with the presentation order swapped; a Win needs A preferred both times."""
    a = sample_a.render() if hasattr(sample_a, "render") else str(sample_a)
    b = sample_b.render() if hasattr(sample_b, "render") else str(sample_b)
    try:
        p1 = "A" if _ask_judge(judge_gateway, a, b) == 1 else "B"
        p2 = "B" if _ask_judge(judge_gateway, b, a) == 1 else "A"
    except (GatewayError, FormatError) as exc:
        return JudgeVerdict(pair_id, None, None, None, valid=False, note=str(exc))
    return JudgeVerdict(pair_id, p1, p2, verdict_outcome(p1, p2))


def judge_pairs(pairs: Sequence[tuple[str, object, object]], judge_gateway) -> list[JudgeVerdict]:
    """Judge ``(pair_id, a, b)`` triples concurrently; results come back in pair-id order."""
    ordered = sorted(pairs, key=lambda p: p[0])
    out = judge_gateway.map(lambda p: pairwise_judge(p[1], p[2], judge_gateway, p[0]), ordered)
    return [v if isinstance(v, JudgeVerdict) else JudgeVerdict(p[0], None, None, None, False, str(v)) for p, v in zip(ordered, out)]


def judge_totals(verdicts: Sequence[JudgeVerdict]) -> dict:
    counts = Counter(v.outcome for v in verdicts if v.valid)
    win, loss, tie = counts["Win"], counts["Loss"], counts["Tie"]
    invalid = sum(1 for v in verdicts if not v.valid)
    awr = adjusted_win_rate(win, loss, tie) if win + loss + tie else None
    return {"win": win, "loss": loss, "tie": tie, "invalid": invalid, "adjusted_win_rate": awr}


# --- distributions -----------------------------------------------------------


def action_distribution(event_log: Sequence, kinds: Sequence[str] = DEFAULT_KINDS) -> tuple[np.ndarray, list[str]]:
    """Proportions of the selected action kinds; an all-zero vector is flagged ``empty``."""
    wanted = [_KIND_ACTIONS[k] for k in kinds]
    counts = np.zeros(len(kinds))
    for r in event_log:
        if isinstance(r, EventRecord) and r.action.kind in wanted and "rejected" not in r.flags:
            counts[wanted.index(r.action.kind)] += 1
    total = counts.sum()
    if total == 0:
        return counts, ["empty"]
    return counts / total, []


def history_action_distribution(dataset: Dataset) -> np.ndarray:
    """Real-data analogue over (like, dislike, review): rating >= 4, rating <= 2, reviewed."""
    counts = np.zeros(3)
    for hist in dataset.users.values():
        for h in hist:
            counts[0] += h.rating >= 4
            counts[1] += h.rating <= 2
            counts[2] += h.has_review
    return counts / counts.sum() if counts.sum() else counts


def compare_distributions(p, q) -> float:
    """Jensen-Shannon divergence (natural log), in [0, ln 2]."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise ValueError("distributions must share a support")
    for v in (p, q):
        if (v < 0).any() or not math.isclose(v.sum(), 1.0, abs_tol=1e-9):
            raise ValueError("each distribution must be non-negative and sum to 1")
    mid = 0.5 * (p + q)

    def kl(a):
        mask = a > 0
        return float(np.sum(a[mask] * np.log(a[mask] / mid[mask])))

    return min(max(0.5 * kl(p) + 0.5 * kl(q), 0.0), math.log(2))


def top_k(counts: Mapping[str, float], k: int) -> list[str]:
    return [i for i, _ in sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))[:k]]


def top_items_overlap(real_counts: Mapping[str, float], sim_counts: Mapping[str, float], k: int) -> tuple[int, list[str], list[str]]:
    if k < 1:
        raise ValueError("k must be >= 1")
    a, b = top_k(real_counts, k), top_k(sim_counts, k)
    return len(set(a) & set(b)), a, b


def sentiment_scores(texts: Iterable[str], lexicon: Optional[SentimentLexicon] = None) -> list[float]:
    lexicon = lexicon or bundled_lexicon()
    return [sentiment_compound(t, lexicon) for t in texts]


# --- report files ------------------------------------------------------------


def write_eval_report(path, method: str, metrics: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    body = {"method": method, "m": metrics.get("m")}
    body.update({k: metrics[k] for k in ("accuracy", "precision", "recall", "f1")})
    body["flags"] = metrics.get("flags", [])
    body["samples"] = metrics.get("samples")
    path.write_text(json.dumps(body, sort_keys=True, indent=2) + "\n", "utf-8")
    return path


def write_judge_ledger(path, verdicts: Sequence[JudgeVerdict]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for v in verdicts:
            fh.write(json.dumps(v.to_dict(), sort_keys=True) + "\n")
    return path


def write_distribution_csv(path, rows: Mapping[str, Sequence[float]], kinds: Sequence[str] = DEFAULT_KINDS) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["source", *kinds])
        for name, vec in rows.items():
            w.writerow([name, *(f"{x:.6f}" for x in vec)])
    return path
