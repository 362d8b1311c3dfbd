"""Command-line frontend: extract, optimize, report, apply.

A run directory holds everything one optimisation produces::

    config.json     effective project configuration
    manifest.json   extracted sites, genes and templates
    cache.jsonl     every evaluation outcome, appended as it completes
    baseline.json   VERIFY measurement of the original program
    history.jsonl   surviving population per generation
    state.json      progress and, once finished, the final front
    report/         report.md, pareto.json, diffs/, best-*/ trees

Interrupted runs resume by replaying the search from its seed: outcomes
already in cache.jsonl are reused, so only unfinished work is measured.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import Callable, Optional

from filelock import FileLock, Timeout

from .config import ProjectConfig, load_config
from .errors import (
    AllInfeasible,
    BaselineInfeasible,
    ConfigError,
    DarwinError,
    ExtractError,
    GeneOutOfRange,
    NoRunFound,
    NothingToOptimize,
    RunCorrupt,
    StoreError,
    TargetNotEmpty,
    UnknownSolution,
)
from .evaluate import Evaluator, Measurement
from .extract import Extraction, extract, load_manifest, manifest_to_dict, render_file, save_manifest, search_space_size
from .report import build_report, emit_artifacts
from .search import nsga2_run
from .store import BUILTIN_STORES

log = logging.getLogger("darwinian")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NOTHING = 3
EXIT_BASELINE = 4
EXIT_INFEASIBLE = 5
EXIT_CORRUPT = 6

EvaluatorFactory = Callable[[Extraction, object, Path], Evaluator]


def _write_json(path: Path, data) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    os.replace(tmp, path)


def _read_json(path: Path):
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise NoRunFound(f"{path} not found") from None
    except json.JSONDecodeError as exc:
        raise RunCorrupt(path, exc.lineno, exc.msg) from exc


# ---------------------------------------------------------------- commands


def cmd_extract(config: ProjectConfig, out=sys.stdout) -> Extraction:
    """Scan the project, write the manifest into the run directory."""
    ex = extract(config.source_root, config.load_store(), config.site_ranking(), config.file_globs)
    config.out_dir.mkdir(parents=True, exist_ok=True)
    save_manifest(ex, config.out_dir / "manifest.json")
    schema = ex.schema
    active = {g.site_id for g in schema.genes}
    print(
        f"sites: {len(schema.sites)} (active {len(active)})  genes: {len(schema.genes)}  "
        f"search space: {search_space_size(schema)}",
        file=out,
    )
    if not schema.genes:
        raise NothingToOptimize(f"no substitution sites found under {config.source_root}")
    return ex


def _prepare(config: ProjectConfig, run_dir: Path, out) -> Extraction:
    """Extract afresh; drop the evaluation cache if the manifest changed."""
    old_path = run_dir / "manifest.json"
    old = json.loads(old_path.read_text(encoding="utf-8")) if old_path.exists() else None
    ex = cmd_extract(config, out)
    cache = run_dir / "cache.jsonl"
    if old is not None and old != manifest_to_dict(ex) and cache.exists():
        log.warning("source or store changed since the last run; discarding cached outcomes")
        os.replace(cache, run_dir / "cache.jsonl.stale")
    return ex


def cmd_optimize(
    config: ProjectConfig, evaluator_factory: Optional[EvaluatorFactory] = None, out=sys.stdout
) -> Path:
    """Measure the baseline, run the search and persist its history."""
    run_dir = config.out_dir
    run_dir.mkdir(parents=True, exist_ok=True)
    lock = FileLock(str(run_dir / ".lock"))
    try:
        lock.acquire(timeout=0)
    except Timeout:
        raise ConfigError(f"another optimize is running in {run_dir}") from None
    try:
        return _optimize_locked(config, run_dir, evaluator_factory, out)
    finally:
        lock.release()


def _optimize_locked(config, run_dir, evaluator_factory, out) -> Path:
    ex = _prepare(config, run_dir, out)
    _write_json(run_dir / "config.json", config.to_dict())
    cfg = config.eval_config()
    params = config.search_params()
    factory = evaluator_factory or Evaluator
    evaluator = factory(ex, cfg, run_dir / "cache.jsonl")
    state = {"status": "running", "generation": None, "evaluations": 0}
    _write_json(run_dir / "state.json", state)

    baseline = evaluator.measure_baseline()
    _write_json(run_dir / "baseline.json", {"measurement": baseline.to_dict(), "timeout": evaluator.timeout})
    print(
        "baseline: time {:.4f} s  memory {:.2f} MiB  cpu {:.3f}".format(
            baseline.objectives[0], baseline.objectives[1] / 2**20, baseline.objectives[2]
        ),
        file=out,
    )
    history_path = run_dir / "history.jsonl"

    if params.max_evaluations == 0:
        log.warning("budget is 0; the front is the original program")
        history_path.write_text("", encoding="utf-8")
        front = [list(ex.schema.seed_genome)]
        state = {"status": "complete", "front": front, "evaluations": 0, "generations": 0, "converged": False}
    else:
        if search_space_size(ex.schema) < 2:
            raise NothingToOptimize("the search space holds a single variant")
        with open(history_path, "w", encoding="utf-8") as hist:

            def on_generation(gen, records):
                for r in records:
                    hist.write(json.dumps(r, sort_keys=True) + "\n")
                hist.flush()
                _write_json(run_dir / "state.json", {"status": "running", "generation": gen})
                print(f"generation {gen}: {sum(1 for r in records if r['rank'] == 0)} on the first front", file=out)

            result = nsga2_run(ex.schema, evaluator, params, on_generation)
        state = {
            "status": "complete",
            "front": [list(ind.genome) for ind in result.front],
            "evaluations": result.evaluations,
            "generations": result.generations,
            "converged": result.converged,
        }
        if not result.front:
            log.warning("search ended before a full generation was evaluated")
    state["recorded_machine_seconds"] = round(getattr(evaluator, "recorded_machine_seconds", 0.0), 6)
    _write_json(run_dir / "state.json", state)
    print(f"front: {len(state['front'])} solution(s); run directory {run_dir}", file=out)
    return run_dir


def read_history(path: Path, extraction: Extraction) -> list[dict]:
    """Parse and validate history.jsonl, naming the first bad line."""
    records = []
    try:
        fh = open(path, encoding="utf-8")
    except FileNotFoundError:
        return records
    with fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise RunCorrupt(path, lineno, f"invalid JSON: {exc.msg}") from None
            if not isinstance(rec, dict) or not {"generation", "genome", "rank", "outcome"} <= set(rec):
                raise RunCorrupt(path, lineno, "record lacks generation/genome/rank/outcome")
            if not isinstance(rec["genome"], list) or not all(isinstance(v, int) for v in rec["genome"]):
                raise RunCorrupt(path, lineno, "genome is not a list of integers")
            try:
                extraction.schema.check(rec["genome"])
            except GeneOutOfRange as exc:
                raise RunCorrupt(path, lineno, str(exc)) from None
            records.append(rec)
    return records


def _run_front(run_dir: Path, extraction: Extraction) -> list[tuple]:
    history = read_history(run_dir / "history.jsonl", extraction)
    state_path = run_dir / "state.json"
    state = _read_json(state_path) if state_path.exists() else {}
    if state.get("status") == "complete":
        return [tuple(g) for g in state["front"]]
    if not history:
        return []
    # partial run: first front of the last completed generation
    last = max(r["generation"] for r in history)
    return [
        tuple(r["genome"])
        for r in history
        if r["generation"] == last and r["rank"] == 0 and r["outcome"].get("status") == "feasible"
    ]


def _load_run(run_dir: Path):
    run_dir = Path(run_dir)
    if not (run_dir / "config.json").is_file() or not (run_dir / "manifest.json").is_file():
        raise NoRunFound(f"{run_dir} is not a run directory")
    config = ProjectConfig.from_dict(_read_json(run_dir / "config.json"))
    return run_dir, config, load_manifest(run_dir / "manifest.json")


def cmd_report(run_dir, evaluator_factory: Optional[EvaluatorFactory] = None, out=sys.stdout) -> Path:
    """Re-measure the front in VERIFY mode and write the report artifacts."""
    run_dir, config, ex = _load_run(run_dir)
    front = _run_front(run_dir, ex)
    if not (run_dir / "baseline.json").is_file():
        raise NoRunFound(f"{run_dir} has no baseline measurement yet")
    base = _read_json(run_dir / "baseline.json")
    baseline = Measurement.from_dict(base["measurement"])
    factory = evaluator_factory or Evaluator
    evaluator = factory(ex, config.eval_config(), run_dir / "cache.jsonl")
    evaluator.timeout = base.get("timeout")
    report = build_report(front, baseline, evaluator)
    dest = emit_artifacts(report, run_dir / "report", ex)
    print(f"{len(report.solutions)} solution(s) reported in {dest / 'report.md'}", file=out)
    return dest


def _find_solution(pareto: dict, solution_id: str) -> dict:
    sols = pareto.get("solutions", [])
    wanted = str(solution_id)
    if wanted.startswith("best-"):
        wanted = (pareto.get("best") or {}).get(wanted[5:]) or ""
    if wanted.isdigit():
        wanted = f"solution-{wanted}"
    for s in sols:
        if s["id"] == wanted:
            return s
    raise UnknownSolution(f"no solution {solution_id!r}; known: {[s['id'] for s in sols]}")


def cmd_apply(run_dir, solution_id: str, target=None, in_place: bool = False, out=sys.stdout) -> Path:
    """Write the chosen solution as a full tree at ``target``."""
    run_dir, config, ex = _load_run(run_dir)
    pareto_path = run_dir / "report" / "pareto.json"
    if not pareto_path.is_file():
        raise NoRunFound(f"{pareto_path} not found; run the report command first")
    pareto = _read_json(pareto_path)
    if solution_id in ("baseline", "original"):
        genome = ex.schema.seed_genome
    else:
        genome = ex.schema.check(_find_solution(pareto, solution_id)["genome"])
    if in_place:
        root = ex.source_root
        for tf in ex.templates:
            (root / tf.file).write_bytes(render_file(tf, ex.schema, genome))
        print(f"applied {solution_id} in place to {root}", file=out)
        return root
    if target is None:
        raise ConfigError("a target directory is required unless --in-place is given")
    target = Path(target)
    if target.exists() and (not target.is_dir() or any(target.iterdir())):
        raise TargetNotEmpty(f"{target} exists and is not empty")
    ex.materialize(genome, target)
    print(f"wrote {solution_id} to {target}", file=out)
    return target


# ---------------------------------------------------------------- argparse


def _add_overrides(p: argparse.ArgumentParser) -> None:
    p.add_argument("--store", help="builtin store id or store JSON file")
    p.add_argument("--budget", type=int, help="maximum number of evaluated variants")
    p.add_argument("--pop", type=int, help="population size")
    p.add_argument("--seed", type=int, help="search RNG seed")
    p.add_argument("--runs-search", type=int, help="test runs per SEARCH evaluation")
    p.add_argument("--runs-verify", type=int, help="test runs per VERIFY evaluation")
    p.add_argument("--warmup", type=int, help="discarded warmup runs (both modes)")
    p.add_argument("--sample-period", type=float, help="resource sampling period in seconds")
    p.add_argument("--timeout", type=float, help="per test run timeout in seconds")
    p.add_argument("--workers", type=int, help="parallel builds (timed runs stay serialized)")
    p.add_argument("--rate", type=float, help="machine cost per hour")
    p.add_argument("--ranking", help="all | static | hotness=PATH")
    p.add_argument("--max-sites", type=int, help="keep only the top N ranked sites")
    p.add_argument("--out", help="run directory")


def config_from_args(args) -> ProjectConfig:
    config = load_config(args.config)
    search = {}
    ev = {}
    for flag, key in (("budget", "max_evaluations"), ("pop", "population_size"), ("seed", "rng_seed"), ("workers", "workers")):
        if getattr(args, flag) is not None:
            search[key] = getattr(args, flag)
    for flag, key in (
        ("runs_search", "runs_search"),
        ("runs_verify", "runs_verify"),
        ("sample_period", "sample_period"),
        ("timeout", "timeout"),
        ("workers", "workers"),
        ("rate", "rate_per_hour"),
    ):
        if getattr(args, flag) is not None:
            ev[key] = getattr(args, flag)
    if args.warmup is not None:
        ev["warmup_search"] = ev["warmup_verify"] = args.warmup
    store = args.store
    if store is not None and store not in BUILTIN_STORES:
        store = str(Path(store).resolve())
    ranking = args.ranking
    if ranking and "=" in ranking:
        kind, path = ranking.split("=", 1)
        ranking = f"{kind}={Path(path).resolve()}"
    return config.with_overrides(
        store=store,
        search=search,
        eval=ev,
        ranking=ranking,
        max_sites=args.max_sites,
        out_dir=Path(args.out).resolve() if args.out else None,
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="darwinian", description="Search for better collection implementations.")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in (("extract", "scan the project and write the manifest"), ("optimize", "run the search")):
        p = sub.add_parser(name, help=text)
        p.add_argument("config", help="project configuration JSON")
        _add_overrides(p)
    p = sub.add_parser("report", help="re-measure the front and write the report")
    p.add_argument("run_dir")
    p = sub.add_parser("apply", help="materialize a reported solution")
    p.add_argument("run_dir")
    p.add_argument("solution", help="solution-K, K, best-time, best-memory, best-cpu or baseline")
    p.add_argument("target", nargs="?", help="empty or missing directory to write")
    p.add_argument("--in-place", action="store_true", help="rewrite the project's own files")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(levelname)s: %(message)s")
    try:
        if args.command == "extract":
            cmd_extract(config_from_args(args))
        elif args.command == "optimize":
            cmd_optimize(config_from_args(args))
        elif args.command == "report":
            cmd_report(args.run_dir)
        else:
            cmd_apply(args.run_dir, args.solution, args.target, args.in_place)
    except NothingToOptimize as exc:
        log.error("%s", exc)
        return EXIT_NOTHING
    except BaselineInfeasible as exc:
        log.error("%s", exc)
        return EXIT_BASELINE
    except AllInfeasible as exc:
        log.error("%s", exc)
        return EXIT_INFEASIBLE
    except RunCorrupt as exc:
        log.error("run corrupt at line %d: %s", exc.lineno, exc)
        return EXIT_CORRUPT
    except (ConfigError, StoreError, ExtractError, NoRunFound, UnknownSolution, TargetNotEmpty) as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    except DarwinError as exc:
        log.error("%s", exc)
        return 1
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
