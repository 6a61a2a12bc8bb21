"""Turn recorded decisions into a filtered fine-tuning set.

Samples pass through four stages in order (format, preference, llm, human);
only samples with a pass verdict at every enabled stage are emitted.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

from .agents import AgentDecision, decision_violations, parse_agent_output
from .domain import ActionKind, EventRecord
from .errors import FormatError, GatewayError, InteractSimError
from .prompting import load_prompt
from .sentiment import sentiment_compound

logger = logging.getLogger(__name__)

STAGES = ("format", "preference", "llm", "human")
_POSITIVE = {ActionKind.LIKE_PRODUCT, ActionKind.SHARE_PRODUCT, ActionKind.PURCHASE_PRODUCT}


class CurationError(InteractSimError):
    pass


@dataclass
class CotSample:
    sample_id: str
    prompt: str
    response: str
    user_id: str
    run_id: str
    step: int
    agent_id: str
    parsed: Optional[AgentDecision] = None

    def sort_key(self):
        return (self.run_id, self.step, self.agent_id)


@dataclass
class FilterVerdict:
    stage: str
    passed: Optional[bool]
    reason: str = ""
    sample_id: str = ""

    @property
    def held(self) -> bool:
        return self.passed is None

    def to_dict(self) -> dict:
        return {"sample_id": self.sample_id, "stage": self.stage, "pass": self.passed, "reason": self.reason}


def collect_cot_samples(runs: Mapping[str, Sequence]) -> list[CotSample]:
    """One sample per agent-step decision, from ``{run_id: event records}``."""
    samples = []
    for run_id in sorted(runs):
        for r in runs[run_id]:
            if not isinstance(r, EventRecord) or r.decision_index != 0:
                continue
            if r.prompt is None or r.response is None:
                raise CurationError("prompts not recorded")
            samples.append(
                CotSample(
                    sample_id=f"{run_id}:{r.step}:{r.agent_id}",
                    prompt=r.prompt,
                    response=r.response,
                    user_id=r.agent_id.split("~", 1)[0],
                    run_id=run_id,
                    step=r.step,
                    agent_id=r.agent_id,
                )
            )
    ids = [s.sample_id for s in samples]
    if len(ids) != len(set(ids)):
        raise CurationError("duplicate decisions in the run logs")
    return samples


def format_filter(sample: CotSample) -> FilterVerdict:
    try:
        decision = parse_agent_output(sample.response)
    except FormatError as exc:
        return FilterVerdict("format", False, str(exc), sample.sample_id)
    problems = decision_violations(decision.actions)
    if problems:
        return FilterVerdict("format", False, "; ".join(problems), sample.sample_id)
    sample.parsed = decision
    return FilterVerdict("format", True, "", sample.sample_id)


def action_polarity(action) -> Optional[bool]:
    """True for positive, False for negative, None for actions the check ignores."""
    if action.kind in _POSITIVE:
        return True
    if action.kind == ActionKind.DISLIKE_PRODUCT:
        return False
    if action.kind == ActionKind.CREATE_REVIEW:
        return sentiment_compound(action.review_text or "") >= 0
    return None


def preference_filter(sample: CotSample, real_history: Mapping[str, Iterable[str]]) -> FilterVerdict:
    if sample.user_id not in real_history:
        raise CurationError(f"unknown user {sample.user_id!r}")
    seen = set(real_history[sample.user_id])
    decision = sample.parsed or parse_agent_output(sample.response)
    for a in decision.actions:
        polarity = action_polarity(a)
        if polarity is True and a.target_item not in seen:
            return FilterVerdict("preference", False, f"{a.kind.value} on never-visited {a.target_item}", sample.sample_id)
        if polarity is False and a.target_item in seen:
            return FilterVerdict("preference", False, f"{a.kind.value} on visited {a.target_item}", sample.sample_id)
    return FilterVerdict("preference", True, "", sample.sample_id)


def llm_filter(sample: CotSample, judge_gateway) -> FilterVerdict:
    system, user = load_prompt("llm_filter").render(prompt=sample.prompt, response=sample.response)
    try:
        text = judge_gateway.complete(user, system=system).text
    except GatewayError as exc:
        return FilterVerdict("llm", None, f"held: {exc}", sample.sample_id)
    lines = [x.strip() for x in text.strip().splitlines() if x.strip()]
    head = lines[0].upper() if lines else ""
    if head.startswith("PASS"):
        return FilterVerdict("llm", True, "", sample.sample_id)
    if head.startswith("FAIL"):
        return FilterVerdict("llm", False, lines[1] if len(lines) > 1 else "", sample.sample_id)
    return FilterVerdict("llm", None, f"held: unreadable judge reply {text[:40]!r}", sample.sample_id)


def export_review_queue(samples: Sequence[CotSample], path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for s in sorted(samples, key=CotSample.sort_key):
            fh.write(json.dumps({"sample_id": s.sample_id, "prompt": s.prompt, "response": s.response}, ensure_ascii=False, sort_keys=True) + "\n")
    return path


def import_human_decisions(path, known_ids: Optional[Iterable[str]] = None) -> dict[str, FilterVerdict]:
    known = None if known_ids is None else set(known_ids)
    out: dict[str, FilterVerdict] = {}
    with Path(path).open(encoding="utf-8") as fh:
        for n, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
                sid, ok = row["sample_id"], row["pass"]
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise CurationError(f"line {n}: malformed decision ({exc})") from None
            if not isinstance(ok, bool):
                raise CurationError(f"line {n}: 'pass' must be true or false")
            if known is not None and sid not in known:
                raise CurationError(f"line {n}: unknown sample_id {sid!r}")
            if sid in out:
                raise CurationError(f"line {n}: duplicate sample_id {sid!r}")
            out[sid] = FilterVerdict("human", ok, str(row.get("reason", "")), sid)
    return out


def emit_finetune_dataset(passed: Sequence[CotSample], path) -> int:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if not passed:
        logger.warning("no samples passed curation; writing an empty dataset")
    with path.open("w", encoding="utf-8") as fh:
        for s in sorted(passed, key=CotSample.sort_key):
            fh.write(json.dumps({"prompt": s.prompt, "response": s.response}, ensure_ascii=False, sort_keys=True) + "\n")
    return len(passed)


@dataclass
class CurationResult:
    passed: list[CotSample] = field(default_factory=list)
    failed: list[CotSample] = field(default_factory=list)
    held: list[CotSample] = field(default_factory=list)
    verdicts: list[FilterVerdict] = field(default_factory=list)

    def counts(self) -> dict[str, int]:
        return {"passed": len(self.passed), "failed": len(self.failed), "held": len(self.held)}


def run_pipeline(
    samples: Sequence[CotSample],
    real_history: Mapping[str, Iterable[str]],
    judge_gateway=None,
    human_decisions: Optional[Mapping[str, FilterVerdict]] = None,
    stages: Sequence[str] = STAGES,
) -> CurationResult:
    """Apply the enabled stages in canonical order; a sample stops at its first non-pass.

    Samples without a human decision (or held by the judge) land in ``held``.
    """
    unknown = set(stages) - set(STAGES)
    if unknown:
        raise ValueError(f"unknown stages {sorted(unknown)}; valid: {', '.join(STAGES)}")
    if "llm" in stages and judge_gateway is None:
        raise ValueError("the llm stage needs a judge gateway")
    result = CurationResult()
    for sample in sorted(samples, key=CotSample.sort_key):
        outcome = True
        for stage in (s for s in STAGES if s in stages):
            if stage == "format":
                v = format_filter(sample)
            elif stage == "preference":
                try:
                    v = preference_filter(sample, real_history)
                except (FormatError, CurationError) as exc:
                    v = FilterVerdict("preference", False, str(exc), sample.sample_id)
            elif stage == "llm":
                v = llm_filter(sample, judge_gateway)
            else:
                v = (human_decisions or {}).get(sample.sample_id) or FilterVerdict("human", None, "pending", sample.sample_id)
            result.verdicts.append(v)
            if v.passed is not True:
                outcome = v.passed
                break
        (result.passed if outcome is True else result.held if outcome is None else result.failed).append(sample)
    return result


def write_verdict_ledger(verdicts: Sequence[FilterVerdict], path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for v in verdicts:
            fh.write(json.dumps(v.to_dict(), sort_keys=True) + "\n")
    return path
