"""Plot-ready report files and run manifests."""

from __future__ import annotations

import csv
import hashlib
import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .domain import ActionKind, EventRecord, InterventionRecord, MerchantReplyRecord
from .evaluation import DEFAULT_KINDS, action_distribution
from .sentiment import sentiment_compound
from .text import tokenize

COUNTER_ACTIONS = {
    "like": ActionKind.LIKE_PRODUCT,
    "dislike": ActionKind.DISLIKE_PRODUCT,
    "share": ActionKind.SHARE_PRODUCT,
    "purchase": ActionKind.PURCHASE_PRODUCT,
    "review": ActionKind.CREATE_REVIEW,
}
SENTIMENT_BINS = np.linspace(-1.0, 1.0, 11)


class ReportError(ValueError):
    pass


def cumulative_series(records: Sequence, item_id: str, total_steps: int, counter: str = "like") -> list[int]:
    """Cumulative count of ``counter`` actions on ``item_id`` at the end of steps 1..T."""
    kind = COUNTER_ACTIONS[counter]
    per_step = np.zeros(total_steps + 1, dtype=int)
    for r in records:
        if isinstance(r, EventRecord) and r.action.kind == kind and r.action.target_item == item_id and "rejected" not in r.flags:
            if r.step <= total_steps:
                per_step[r.step] += 1
    return np.cumsum(per_step[1:]).tolist()


def comparison_table(
    logs: Mapping[str, Sequence],
    tracked_items: Sequence[str],
    total_steps: int,
    counter: str = "like",
    baseline: Optional[str] = None,
    known_items: Optional[Iterable[str]] = None,
) -> list[dict]:
    """Rows of ``{item, step, <run>..., diff_<run>...}``; diffs are run minus ``baseline``."""
    if known_items is not None:
        missing = sorted(set(tracked_items) - set(known_items))
        if missing:
            raise ReportError(f"tracked items not in the catalog: {', '.join(missing)}")
    names = list(logs)
    if baseline is not None and baseline not in logs:
        raise ReportError(f"baseline run {baseline!r} not among {names}")
    rows = []
    for item in tracked_items:
        series = {n: cumulative_series(logs[n], item, total_steps, counter) for n in names}
        for t in range(total_steps):
            row = {"item": item, "step": t + 1}
            for n in names:
                row[n] = series[n][t]
            if baseline is not None:
                for n in names:
                    if n != baseline:
                        row[f"diff_{n}"] = series[n][t] - series[baseline][t]
            rows.append(row)
    return rows


def _write_rows(path: Path, rows: Sequence[dict], header: Optional[Sequence[str]] = None) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    header = list(header or (rows[0].keys() if rows else []))
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=header, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    return path


def review_texts(records: Sequence, include_replies: bool = False) -> list[str]:
    out = []
    for r in records:
        if isinstance(r, EventRecord) and r.action.kind == ActionKind.CREATE_REVIEW and "rejected" not in r.flags:
            out.append(r.action.review_text or "")
        elif include_replies and isinstance(r, MerchantReplyRecord):
            out.append(r.reply.text)
        elif isinstance(r, InterventionRecord):
            out.extend(r.intervention.texts)
    return out


def sentiment_histogram(texts: Sequence[str], bins=SENTIMENT_BINS) -> list[dict]:
    scores = [sentiment_compound(t) for t in texts]
    counts, edges = np.histogram(scores, bins=bins)
    return [{"lo": round(float(lo), 3), "hi": round(float(hi), 3), "count": int(c)} for lo, hi, c in zip(edges[:-1], edges[1:], counts)]


def word_frequencies(texts: Sequence[str], top: int = 50) -> list[dict]:
    counts = Counter(tok for t in texts for tok in tokenize(t))
    return [{"word": w, "count": c} for w, c in sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))[:top]]


def emit_report(
    logs: Mapping[str, Sequence],
    out_dir,
    tracked_items: Sequence[str],
    total_steps: int,
    counters: Sequence[str] = ("like",),
    baseline: Optional[str] = None,
    known_items: Optional[Iterable[str]] = None,
    kinds: Sequence[str] = DEFAULT_KINDS,
) -> dict[str, str]:
    """Write series, distribution, sentiment and word-frequency tables; returns artifact paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths: dict[str, str] = {}
    summary: dict = {"runs": list(logs), "baseline": baseline, "tracked_items": list(tracked_items), "final": {}}
    for counter in counters:
        rows = comparison_table(logs, tracked_items, total_steps, counter, baseline, known_items)
        header = ["item", "step", *logs] + ([f"diff_{n}" for n in logs if n != baseline] if baseline else [])
        paths[f"series_{counter}"] = str(_write_rows(out / f"series_{counter}.csv", rows, header))
        for item in tracked_items:
            last = [r for r in rows if r["item"] == item][-1]
            summary["final"].setdefault(counter, {})[item] = {k: v for k, v in last.items() if k not in ("item", "step")}
    dist_rows = []
    for name, recs in logs.items():
        vec, flags = action_distribution(recs, kinds)
        dist_rows.append({"run": name, **{k: round(float(x), 6) for k, x in zip(kinds, vec)}, "flags": ";".join(flags)})
    paths["distribution"] = str(_write_rows(out / "action_distribution.csv", dist_rows, ["run", *kinds, "flags"]))
    sent_rows, word_rows = [], []
    for name, recs in logs.items():
        texts = review_texts(recs, include_replies=True)
        sent_rows += [{"run": name, **row} for row in sentiment_histogram(texts)]
        word_rows += [{"run": name, **row} for row in word_frequencies(texts)]
    paths["sentiment"] = str(_write_rows(out / "sentiment_histogram.csv", sent_rows, ["run", "lo", "hi", "count"]))
    paths["words"] = str(_write_rows(out / "word_frequencies.csv", word_rows, ["run", "word", "count"]))
    summary_path = out / "summary.json"
    summary_path.write_text(json.dumps(summary, sort_keys=True, indent=2) + "\n", "utf-8")
    paths["summary"] = str(summary_path)
    return paths


# --- manifests ---------------------------------------------------------------


@dataclass
class RunManifest:
    command: str
    config_hash: str
    seed: int
    start_step: int = 0
    end_step: int = 0
    artifacts: dict[str, str] = field(default_factory=dict)
    extra: dict = field(default_factory=dict)
    run_id: str = ""

    def __post_init__(self):
        if not self.run_id:
            key = f"{self.command}|{self.config_hash}|{self.seed}|{self.start_step}"
            self.run_id = hashlib.sha256(key.encode()).hexdigest()[:16]

    def to_dict(self) -> dict:
        return {
            "run_id": self.run_id,
            "command": self.command,
            "config_hash": self.config_hash,
            "seed": self.seed,
            "start_step": self.start_step,
            "end_step": self.end_step,
            "artifacts": dict(sorted(self.artifacts.items())),
            "extra": self.extra,
        }

    def write(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n", "utf-8")
        return path

    @classmethod
    def read(cls, path) -> "RunManifest":
        d = json.loads(Path(path).read_text("utf-8"))
        return cls(d["command"], d["config_hash"], d["seed"], d["start_step"], d["end_step"], d["artifacts"], d.get("extra", {}), d["run_id"])
