"""Fitness evaluation: materialize, build, run the tests, measure.

A variant is feasible only when its build succeeds and every test run exits
cleanly inside the timeout.  Objectives are per-coordinate medians over the
post-warmup runs: wall time (s), peak RSS of the test process tree (bytes)
and CPU load (CPU seconds of the tree divided by wall time).
"""

from __future__ import annotations

import enum
import json
import logging
import os
import shutil
import tempfile
import threading
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from filelock import FileLock

from .errors import BaselineInfeasible, SandboxSetupError
from .extract import Extraction, genome_hash
from .procmon import run_sampled
from .stats import median

log = logging.getLogger(__name__)

OBJECTIVES = ("time", "memory", "cpu")


class Mode(str, enum.Enum):
    SEARCH = "SEARCH"
    VERIFY = "VERIFY"


class Stage(str, enum.Enum):
    BUILD_FAILED = "BUILD_FAILED"
    TESTS_FAILED = "TESTS_FAILED"
    TIMEOUT = "TIMEOUT"


@dataclass
class EvalConfig:
    build_cmd: str
    test_cmd: str
    workdir_root: Path = Path(tempfile.gettempdir()) / "darwinian-work"
    runs_search: int = 5
    runs_verify: int = 30
    warmup_search: int = 1
    warmup_verify: int = 2
    sample_period: float = 0.1
    timeout: Optional[float] = None  # per test run; None means 10x baseline wall time
    build_timeout: float = 600.0
    timeout_factor: float = 10.0
    min_timeout: float = 1.0
    rate_per_hour: float = 0.41
    currency: str = "£"
    workers: int = 1
    keep_workdirs: bool = False
    measure_lock: Optional[Path] = Path(tempfile.gettempdir()) / "darwinian-measure.lock"

    def __post_init__(self):
        self.workdir_root = Path(self.workdir_root)
        if self.runs_search < 1:
            raise ValueError("runs_search must be >= 1")
        if self.warmup_search >= self.runs_search:
            raise ValueError("warmup_search must leave at least one measured run")
        if self.runs_verify < self.warmup_verify + 2:
            raise ValueError("runs_verify must be >= warmup_verify + 2")
        if self.sample_period <= 0:
            raise ValueError("sample_period must be positive")

    def runs(self, mode: Mode) -> tuple[int, int]:
        if mode is Mode.SEARCH:
            return self.runs_search, self.warmup_search
        return self.runs_verify, self.warmup_verify


@dataclass(frozen=True)
class RunSample:
    wall_time: float
    peak_rss: float
    cpu_load: float

    def as_tuple(self):
        return (self.wall_time, self.peak_rss, self.cpu_load)


@dataclass
class Measurement:
    samples: list[RunSample]
    objectives: tuple[float, float, float]
    total_machine_seconds: float = 0.0

    @classmethod
    def from_samples(cls, samples, machine_seconds=0.0) -> "Measurement":
        samples = list(samples)
        objs = tuple(median([s.as_tuple()[i] for s in samples]) for i in range(3))
        return cls(samples, objs, machine_seconds)

    def column(self, i: int) -> list[float]:
        return [s.as_tuple()[i] for s in self.samples]

    def to_dict(self) -> dict:
        return {
            "objectives": list(self.objectives),
            "samples": [list(s.as_tuple()) for s in self.samples],
            "total_machine_seconds": self.total_machine_seconds,
        }

    @classmethod
    def from_dict(cls, d) -> "Measurement":
        return cls([RunSample(*s) for s in d["samples"]], tuple(d["objectives"]), d["total_machine_seconds"])


@dataclass
class EvalOutcome:
    measurement: Optional[Measurement] = None
    stage: Optional[Stage] = None
    detail: str = ""
    machine_seconds: float = 0.0

    @classmethod
    def ok(cls, measurement: Measurement) -> "EvalOutcome":
        return cls(measurement=measurement, machine_seconds=measurement.total_machine_seconds)

    @classmethod
    def fail(cls, stage: Stage, detail: str = "", machine_seconds: float = 0.0) -> "EvalOutcome":
        return cls(stage=Stage(stage), detail=detail, machine_seconds=machine_seconds)

    @property
    def feasible(self) -> bool:
        return self.measurement is not None

    @property
    def objectives(self):
        return self.measurement.objectives if self.measurement else None

    def to_dict(self) -> dict:
        if self.feasible:
            return {"status": "feasible", **self.measurement.to_dict()}
        return {
            "status": "infeasible",
            "stage": self.stage.value,
            "detail": self.detail,
            "total_machine_seconds": self.machine_seconds,
        }

    @classmethod
    def from_dict(cls, d) -> "EvalOutcome":
        if d["status"] == "feasible":
            return cls.ok(Measurement.from_dict(d))
        return cls.fail(Stage(d["stage"]), d.get("detail", ""), d.get("total_machine_seconds", 0.0))


def _tail(path: Path, limit: int = 2000) -> str:
    try:
        data = path.read_bytes()
    except OSError:
        return ""
    return data[-limit:].decode("utf-8", "replace")


class Evaluator:
    """Callable fitness function over genomes of one extraction.

    Outcomes are cached per (mode, genome) and, when ``cache_path`` is given,
    appended to that file so later invocations replay them without running
    anything.
    """

    def __init__(self, extraction: Extraction, cfg: EvalConfig, cache_path=None):
        if not cfg.test_cmd or not cfg.test_cmd.strip():
            raise SandboxSetupError("test command is empty")
        self.extraction = extraction
        self.cfg = cfg
        self.cache_path = Path(cache_path) if cache_path else None
        self.cache: dict[tuple[str, str], EvalOutcome] = {}
        self.launches = 0
        self.total_machine_seconds = 0.0
        self.timeout = cfg.timeout
        self._lock = threading.Lock()
        self._measure = threading.Lock()
        self._file_lock = FileLock(str(cfg.measure_lock)) if cfg.measure_lock else None
        if self.cache_path and self.cache_path.exists():
            self._load_cache()

    def _load_cache(self):
        for line in self.cache_path.read_text(encoding="utf-8").splitlines():
            try:
                rec = json.loads(line)
                self.cache[(rec["mode"], rec["genome_hash"])] = EvalOutcome.from_dict(rec["outcome"])
            except (json.JSONDecodeError, KeyError, ValueError):
                log.warning("ignoring unreadable cache record in %s", self.cache_path)

    def _store(self, mode: Mode, genome, outcome: EvalOutcome):
        key = (mode.value, genome_hash(genome))
        with self._lock:
            self.cache[key] = outcome
            if self.cache_path:
                rec = {"mode": mode.value, "genome_hash": key[1], "genome": list(genome), "outcome": outcome.to_dict()}
                with open(self.cache_path, "a", encoding="utf-8") as fh:
                    fh.write(json.dumps(rec, sort_keys=True) + "\n")

    @property
    def recorded_machine_seconds(self) -> float:
        """Machine time of every evaluation in the cache, including replayed ones."""
        return sum(o.machine_seconds for o in self.cache.values())

    def __call__(self, genome) -> EvalOutcome:
        return self.evaluate(genome, Mode.SEARCH)

    def cached(self, genome, mode: Mode = Mode.SEARCH) -> Optional[EvalOutcome]:
        return self.cache.get((Mode(mode).value, genome_hash(genome)))

    def _run(self, command, cwd, env, timeout, log_path):
        self.launches += 1
        return run_sampled(command, cwd, env, self.cfg.sample_period, timeout, log_path)

    @contextmanager
    def _timed(self):
        """Serialize timed test runs machine-wide."""
        with self._measure:
            if self._file_lock is None:
                yield
            else:
                with self._file_lock:
                    yield

    def evaluate(self, genome, mode: Mode = Mode.SEARCH) -> EvalOutcome:
        mode = Mode(mode)
        genome = self.extraction.schema.check(tuple(genome))
        hit = self.cached(genome, mode)
        if hit is not None:
            return hit
        outcome = self._evaluate_fresh(genome, mode)
        with self._lock:
            self.total_machine_seconds += outcome.machine_seconds
        self._store(mode, genome, outcome)
        return outcome

    def _evaluate_fresh(self, genome, mode: Mode) -> EvalOutcome:
        cfg = self.cfg
        h = genome_hash(genome)
        try:
            cfg.workdir_root.mkdir(parents=True, exist_ok=True)
            work = Path(tempfile.mkdtemp(prefix=f"{mode.value.lower()}-{h}-", dir=cfg.workdir_root))
        except OSError as exc:
            raise SandboxSetupError(f"cannot create work directory under {cfg.workdir_root}: {exc}") from exc
        src = work / "src"
        logs = work / "logs"
        logs.mkdir()
        try:
            self.extraction.materialize(genome, src)
            env = dict(os.environ, DARWIN_VARIANT_ID=h)
            spent = 0.0
            if cfg.build_cmd and cfg.build_cmd.strip():
                build = self._run(cfg.build_cmd, src, env, cfg.build_timeout, logs / "build.log")
                spent += build.wall_time
                if build.timed_out:
                    return EvalOutcome.fail(Stage.TIMEOUT, "build timed out", spent)
                if build.returncode != 0:
                    return EvalOutcome.fail(
                        Stage.BUILD_FAILED, f"exit {build.returncode}: {_tail(logs / 'build.log')}", spent
                    )
            runs, warmup = cfg.runs(mode)
            samples = []
            # baseline runs get a generous limit until the real timeout is known
            timeout = self.timeout if self.timeout is not None else cfg.build_timeout
            for i in range(runs):
                with self._timed():
                    run = self._run(cfg.test_cmd, src, env, timeout, logs / f"test-{i}.log")
                spent += run.wall_time
                if run.timed_out:
                    return EvalOutcome.fail(Stage.TIMEOUT, f"test run {i} exceeded {timeout:.2f}s", spent)
                if run.returncode != 0:
                    return EvalOutcome.fail(
                        Stage.TESTS_FAILED, f"run {i} exit {run.returncode}: {_tail(logs / f'test-{i}.log')}", spent
                    )
                if i >= warmup:
                    samples.append(RunSample(run.wall_time, float(run.peak_rss), run.cpu_load))
            return EvalOutcome.ok(Measurement.from_samples(samples, spent))
        finally:
            if not cfg.keep_workdirs:
                shutil.rmtree(work, ignore_errors=True)

    def measure_baseline(self) -> Measurement:
        """VERIFY-mode measurement of the unmodified program."""
        outcome = self.evaluate(self.extraction.schema.seed_genome, Mode.VERIFY)
        if not outcome.feasible:
            raise BaselineInfeasible(outcome)
        if self.timeout is None:
            self.timeout = max(self.cfg.timeout_factor * outcome.objectives[0], self.cfg.min_timeout)
            log.info("per-run timeout set to %.2fs", self.timeout)
        return outcome.measurement


def evaluate_genome(genome, schema, templates, cfg: EvalConfig, mode: Mode = Mode.SEARCH, source_root=None, store=None):
    """One-shot evaluation without a persistent evaluator."""
    ex = Extraction(Path(source_root) if source_root else None, store, templates, schema)
    return Evaluator(ex, cfg).evaluate(genome, mode)


def measure_baseline(schema, templates, cfg: EvalConfig, source_root=None, store=None) -> Measurement:
    ex = Extraction(Path(source_root) if source_root else None, store, templates, schema)
    return Evaluator(ex, cfg).measure_baseline()
