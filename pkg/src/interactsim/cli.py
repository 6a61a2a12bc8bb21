"""Command-line entry point.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
Failures print one JSON object to stderr. Every subcommand writes a
``manifest.json`` into its output directory.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

from .agents import default_mock_responder
from .config import SimulationConfig, config_from_mapping, load_config
from .curation import (
    STAGES,
    collect_cot_samples,
    emit_finetune_dataset,
    export_review_queue,
    import_human_decisions,
    run_pipeline,
    write_verdict_ledger,
)
from .errors import ConfigError, InteractSimError
from .evaluation import (
    VALID_RATIOS,
    category_selector,
    gateway_selector,
    judge_pairs,
    judge_totals,
    run_credibility_eval,
    write_eval_report,
    write_judge_ledger,
)
from .experiments import SCENARIOS, run_experiment
from .ingestion import (
    AugmentationCache,
    Dataset,
    augment_catalog,
    california_predicate,
    filter_dataset,
    parse_interaction_log,
    restaurant_predicate,
)
from .llm import Gateway, HTTPBackend, MockBackend, RecordingBackend, ReplayBackend
from .profiling import assemble_profile_pool, load_profile_pool, save_profile_pool
from .recommenders import train_recommender
from .reporting import RunManifest, emit_report
from .simulation import load_snapshot, read_event_log, run_simulation
from .synthetic import generate_synthetic_dataset

logger = logging.getLogger("interactsim")


class UsageError(InteractSimError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        _emit_error("UsageError", message)
        sys.exit(2)


def _emit_error(kind: str, message: str, details=None) -> None:
    body = {"error": kind, "message": message}
    if details:
        body["details"] = details
    print(json.dumps(body, sort_keys=True), file=sys.stderr)


def _add_globals(p: argparse.ArgumentParser, suppress: bool) -> None:
    d = argparse.SUPPRESS if suppress else None
    p.add_argument("--seed", type=int, default=d, help="override the config seed")
    p.add_argument("--config", default=d, help="YAML or JSON run configuration")
    p.add_argument("--mock-llm", action="store_true", default=argparse.SUPPRESS if suppress else False, help="answer every model call offline")
    p.add_argument("--replay", default=d, metavar="LOG", help="answer model calls from a recorded JSONL log")
    p.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS if suppress else False)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="interactsim", description="Agent-based recommender-platform simulator.")
    _add_globals(parser, suppress=False)
    common = _Parser(add_help=False)
    _add_globals(common, suppress=True)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("ingest", parents=[common], help="filter a raw interaction log into a dataset")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--input", help="raw interaction JSONL")
    src.add_argument("--synthetic", action="store_true", help="generate a synthetic dataset instead")
    p.add_argument("--users", type=int, default=200, help="synthetic users")
    p.add_argument("--items", type=int, default=40, help="synthetic items")
    p.add_argument("--min-user", type=int, default=300)
    p.add_argument("--min-item", type=int, default=10)
    p.add_argument("--any-category", action="store_true", help="keep non-restaurant items")
    p.add_argument("--any-region", action="store_true", help="keep items outside California")
    p.add_argument("--augment", action="store_true", help="rewrite item descriptions through the model")
    p.add_argument("--out", required=True)

    p = sub.add_parser("profile", parents=[common], help="build the profile pool")
    p.add_argument("--dataset")
    p.add_argument("--no-llm", action="store_true", help="objective statistics only, placeholder LLM blocks")
    p.add_argument("--sample-size", type=int, default=60)
    p.add_argument("--out", required=True)

    p = sub.add_parser("simulate", parents=[common], help="run the platform loop")
    p.add_argument("--dataset")
    p.add_argument("--profiles")
    p.add_argument("--resume", help="snapshot to continue from")
    p.add_argument("--out", required=True)

    p = sub.add_parser("evaluate", parents=[common], help="1:m credibility metrics")
    p.add_argument("--dataset")
    p.add_argument("--profiles")
    p.add_argument("--ratios", default=",".join(map(str, VALID_RATIOS)))
    p.add_argument("--max-users", type=int)
    p.add_argument("--out", required=True)

    p = sub.add_parser("judge", parents=[common], help="pairwise judging with order swap")
    p.add_argument("--pairs", required=True, help="JSONL of {pair_id, a, b} rendered samples")
    p.add_argument("--out", required=True)

    p = sub.add_parser("curate", parents=[common], help="filter recorded decisions into a fine-tune set")
    p.add_argument("--log", action="append", required=True, metavar="RUN=PATH")
    p.add_argument("--dataset")
    p.add_argument("--stages", default=",".join(STAGES))
    p.add_argument("--human-decisions")
    p.add_argument("--out", required=True)

    p = sub.add_parser("experiment", parents=[common], help="run a paired scenario")
    p.add_argument("scenario", choices=SCENARIOS)
    p.add_argument("--dataset")
    p.add_argument("--profiles")
    p.add_argument("--target", help="item to track (default chosen per scenario)")
    p.add_argument("--out", required=True)

    p = sub.add_parser("report", parents=[common], help="series and distribution tables from event logs")
    p.add_argument("--log", action="append", required=True, metavar="RUN=PATH")
    p.add_argument("--items", required=True, help="comma-separated tracked item ids")
    p.add_argument("--steps", type=int, required=True)
    p.add_argument("--baseline")
    p.add_argument("--counters", default="like")
    p.add_argument("--dataset", help="validate tracked items against this catalog")
    p.add_argument("--out", required=True)
    return parser


# --- shared plumbing ---------------------------------------------------------


def _config(args) -> SimulationConfig:
    cfg = load_config(args.config) if args.config else config_from_mapping({})
    if args.seed is not None:
        cfg = cfg.replace(seed=args.seed)
    return cfg


def _gateway(args, cfg: SimulationConfig) -> Gateway:
    llm = cfg.llm
    in_flight = llm.get("max_in_flight", 4)
    replay = args.replay or (llm.get("replay_log") if cfg.llm_backend == "replay" else None)
    if replay:
        backend = ReplayBackend(replay)
    elif args.mock_llm or cfg.llm_backend == "mock":
        backend = MockBackend(default_mock_responder)
    else:
        if "url" not in llm or "model" not in llm:
            raise ConfigError("llm: url and model are required for the http backend")
        key = os.environ.get(llm["api_key_env"]) if llm.get("api_key_env") else None
        backend = HTTPBackend(llm["url"], llm["model"], key)
        if llm.get("record_log"):
            backend = RecordingBackend(backend, llm["record_log"])
    return Gateway(backend, max_in_flight=in_flight)


def _dataset(path: Optional[str], cfg: SimulationConfig) -> Dataset:
    path = path or cfg.data.get("dataset_path")
    if path:
        return Dataset.load(path)
    d = cfg.data
    return generate_synthetic_dataset(d.get("synthetic_users", 200), d.get("synthetic_items", 40), seed=d.get("synthetic_seed", cfg.seed))


def _profiles(path: Optional[str], dataset: Dataset, cfg: SimulationConfig, gateway: Gateway):
    path = path or cfg.data.get("profiles_path")
    if path:
        return load_profile_pool(path)
    return assemble_profile_pool(dataset, gateway, seed=cfg.seed)


def _out(path: str) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _named_paths(values: Sequence[str]) -> dict[str, str]:
    out = {}
    for v in values:
        name, sep, path = v.partition("=")
        if not sep or not name or not path:
            raise UsageError(f"expected RUN=PATH, got {v!r}")
        out[name] = path
    return out


def _manifest(out: Path, command: str, cfg: SimulationConfig, artifacts: dict, end_step: int = 0, start_step: int = 0, **extra) -> None:
    m = RunManifest(command, cfg.config_hash(), cfg.seed, start_step, end_step, artifacts, extra)
    m.write(out / "manifest.json")
    print(json.dumps(m.to_dict(), sort_keys=True))


# --- subcommands -------------------------------------------------------------


def cmd_ingest(args, cfg):
    out = _out(args.out)
    if args.synthetic:
        dataset = generate_synthetic_dataset(args.users, args.items, seed=cfg.seed)
        extra = {"source": "synthetic"}
    else:
        with open(args.input, encoding="utf-8") as fh:
            report = parse_interaction_log(fh)
        dataset = filter_dataset(
            report.records,
            args.min_user,
            args.min_item,
            None if args.any_category else restaurant_predicate,
            None if args.any_region else california_predicate,
        )
        extra = {"source": args.input, "malformed_lines": report.malformed}
    if args.augment:
        cache = AugmentationCache(out / "augmentation_cache.jsonl")
        failed = augment_catalog(dataset.catalog, _gateway(args, cfg), cache)
        extra["augmentation_failed"] = len(failed)
    path = out / "dataset.json"
    dataset.save(path)
    _manifest(out, "ingest", cfg, {"dataset": str(path)}, users=len(dataset.users), items=len(dataset.catalog), **extra)


def cmd_profile(args, cfg):
    out = _out(args.out)
    dataset = _dataset(args.dataset, cfg)
    gateway = None if args.no_llm else _gateway(args, cfg)
    pool = assemble_profile_pool(dataset, gateway, seed=cfg.seed, sample_size=args.sample_size)
    path = out / "profiles.jsonl"
    save_profile_pool(pool, path)
    flagged = sum(1 for p in pool.values() if p.flags)
    _manifest(out, "profile", cfg, {"profiles": str(path)}, users=len(pool), flagged=flagged)


def cmd_simulate(args, cfg):
    out = _out(args.out)
    gateway = _gateway(args, cfg)
    dataset = _dataset(args.dataset, cfg)
    resume = None
    if args.resume:
        resume, snap_cfg = load_snapshot(args.resume)
        if snap_cfg is not None and not args.config:
            cfg = snap_cfg if args.seed is None else snap_cfg.replace(seed=args.seed)
    pool = None if resume else _profiles(args.profiles, dataset, cfg, gateway)
    recommender = train_recommender(
        cfg.recommender, dataset.interactions(), cfg.train, item_ids=sorted(dataset.catalog), user_ids=sorted(dataset.users), live=cfg.live_popularity
    )
    start = resume.step if resume else 0
    log_path = out / "events.jsonl"
    snapshots = out / "snapshots"
    log, state = run_simulation(cfg, dataset, pool, recommender, gateway, resume_from=resume, event_log_path=log_path, snapshot_dir=snapshots)
    artifacts = {"event_log": str(log_path), "snapshot": str(snapshots / "snapshot-final.json")}
    _manifest(out, "simulate", cfg, artifacts, end_step=state.step, start_step=start, records=len(log), agents=len(state.agents))


def cmd_evaluate(args, cfg):
    out = _out(args.out)
    gateway = _gateway(args, cfg)
    dataset = _dataset(args.dataset, cfg)
    pool = _profiles(args.profiles, dataset, cfg, gateway)
    mock = args.mock_llm or (cfg.llm_backend == "mock" and not args.replay)
    selector = category_selector if mock else gateway_selector(gateway)
    artifacts, summary = {}, {}
    for m in (int(x) for x in args.ratios.split(",") if x.strip()):
        _, metrics = run_credibility_eval(dataset, pool, m, selector, seed=cfg.seed, max_users=args.max_users)
        artifacts[f"eval_1_{m}"] = str(write_eval_report(out / f"eval_1_{m}.json", "offline" if mock else "llm", metrics))
        summary[f"1:{m}"] = {k: round(metrics[k], 4) for k in ("accuracy", "precision", "recall", "f1")}
    _manifest(out, "evaluate", cfg, artifacts, metrics=summary)


def cmd_judge(args, cfg):
    out = _out(args.out)
    pairs = []
    with open(args.pairs, encoding="utf-8") as fh:
        for n, line in enumerate(fh, 1):
            if line.strip():
                row = json.loads(line)
                try:
                    pairs.append((str(row["pair_id"]), row["a"], row["b"]))
                except KeyError as exc:
                    raise UsageError(f"{args.pairs}:{n}: missing {exc}") from None
    verdicts = judge_pairs(pairs, _gateway(args, cfg))
    path = write_judge_ledger(out / "judge_ledger.jsonl", verdicts)
    _manifest(out, "judge", cfg, {"ledger": str(path)}, totals=judge_totals(verdicts))


def cmd_curate(args, cfg):
    out = _out(args.out)
    runs = {name: read_event_log(path) for name, path in _named_paths(args.log).items()}
    samples = collect_cot_samples(runs)
    dataset = _dataset(args.dataset, cfg)
    history = {u: [h.item_id for h in hist] for u, hist in dataset.users.items()}
    stages = [s.strip() for s in args.stages.split(",") if s.strip()]
    human = import_human_decisions(args.human_decisions, [s.sample_id for s in samples]) if args.human_decisions else None
    gateway = _gateway(args, cfg) if "llm" in stages else None
    result = run_pipeline(samples, history, gateway, human, stages)
    artifacts = {
        "finetune": str(out / "finetune.jsonl"),
        "verdicts": str(write_verdict_ledger(result.verdicts, out / "verdicts.jsonl")),
    }
    emit_finetune_dataset(result.passed, out / "finetune.jsonl")
    if "human" in stages and result.held:
        artifacts["review_queue"] = str(export_review_queue(result.held, out / "review_queue.jsonl"))
    _manifest(out, "curate", cfg, artifacts, samples=len(samples), **result.counts())


def cmd_experiment(args, cfg):
    out = _out(args.out)
    gateway = _gateway(args, cfg)
    dataset = _dataset(args.dataset, cfg)
    pool = _profiles(args.profiles, dataset, cfg, gateway)
    result = run_experiment(args.scenario, cfg, dataset, pool, out, gateway, target=args.target)
    extra = {"tracked_items": result.script.tracked_items}
    if result.metrics:
        extra["metrics"] = {k: {m: round(v[m], 4) for m in ("accuracy", "precision", "recall", "f1")} for k, v in result.metrics.items()}
    else:
        extra["final"] = {run: {i: result.final(run, i) for i in result.script.tracked_items} for run in result.logs}
    _manifest(out, f"experiment {args.scenario}", cfg, result.artifacts, end_step=cfg.total_steps, **extra)


def cmd_report(args, cfg):
    out = _out(args.out)
    logs = {name: read_event_log(path) for name, path in _named_paths(args.log).items()}
    known = Dataset.load(args.dataset).catalog if args.dataset else None
    items = [i.strip() for i in args.items.split(",") if i.strip()]
    counters = tuple(c.strip() for c in args.counters.split(",") if c.strip())
    paths = emit_report(logs, out, items, args.steps, counters, args.baseline, known)
    _manifest(out, "report", cfg, paths, end_step=args.steps)


COMMANDS = {
    "ingest": cmd_ingest,
    "profile": cmd_profile,
    "simulate": cmd_simulate,
    "evaluate": cmd_evaluate,
    "judge": cmd_judge,
    "curate": cmd_curate,
    "experiment": cmd_experiment,
    "report": cmd_report,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config(args)
        COMMANDS[args.command](args, cfg)
    except (ConfigError, UsageError) as exc:
        _emit_error(type(exc).__name__, str(exc), getattr(exc, "problems", None))
        return 2
    except (InteractSimError, OSError, ValueError, KeyError) as exc:
        _emit_error(type(exc).__name__, str(exc), getattr(exc, "dump_path", None))
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
