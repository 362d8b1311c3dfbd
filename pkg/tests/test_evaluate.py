import json
import sys
from pathlib import Path

import pytest

from darwinian.errors import BaselineInfeasible, SandboxSetupError
from darwinian.evaluate import (
    EvalConfig,
    EvalOutcome,
    Evaluator,
    Measurement,
    Mode,
    RunSample,
    Stage,
    evaluate_genome,
    measure_baseline,
)
from darwinian.extract import GeneKind, extract
from darwinian.store import builtin_store, load_store


def snapshot(root: Path):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


@pytest.fixture
def demo_ex(demo_dir):
    return extract(demo_dir / "project", builtin_store("generic-demo"))


@pytest.fixture
def broken_ex(demo_dir, fixtures_dir):
    return extract(demo_dir / "project", load_store(fixtures_dir / "broken_store.json"))


def cfg(tmp_path, **kw):
    opts = dict(
        build_cmd="python3 build_check.py",
        test_cmd="python3 run_tests.py",
        workdir_root=tmp_path / "work",
        measure_lock=tmp_path / "measure.lock",
        runs_search=2,
        warmup_search=1,
        runs_verify=4,
        warmup_verify=2,
        sample_period=0.01,
    )
    opts.update(kw)
    return EvalConfig(**opts)


def with_hot_site(ex, value):
    g = list(ex.schema.seed_genome)
    g[ex.schema.gene_index(0, GeneKind.IMPL)] = value
    return tuple(g)


def test_config_invariants(tmp_path):
    with pytest.raises(ValueError):
        cfg(tmp_path, runs_search=0)
    with pytest.raises(ValueError):
        cfg(tmp_path, runs_verify=3, warmup_verify=2)
    with pytest.raises(ValueError):
        cfg(tmp_path, sample_period=0)
    assert EvalConfig("b", "t").runs(Mode.SEARCH) == (5, 1)
    assert EvalConfig("b", "t").runs(Mode.VERIFY) == (30, 2)


def test_measurement_medians():
    m = Measurement.from_samples([RunSample(1, 10, 0.5), RunSample(3, 30, 0.7), RunSample(2, 20, 0.9)])
    assert m.objectives == (2, 20, 0.7)
    assert Measurement.from_dict(json.loads(json.dumps(m.to_dict()))) == m


def test_outcome_round_trip():
    bad = EvalOutcome.fail(Stage.TIMEOUT, "slow", 1.5)
    again = EvalOutcome.from_dict(bad.to_dict())
    assert (again.stage, again.detail, again.machine_seconds, again.feasible) == (Stage.TIMEOUT, "slow", 1.5, False)


def test_seed_within_recorded_envelope(demo_ex, demo_dir, tmp_path):
    envelope = json.loads((demo_dir / "calibration.json").read_text())["baseline"]
    out = Evaluator(demo_ex, cfg(tmp_path, runs_search=5)).evaluate(demo_ex.schema.seed_genome)
    assert out.feasible
    t, mem, cpu = out.objectives
    # wall time on a shared machine drifts; memory and load are far steadier
    assert 0.5 * envelope["time"]["min"] <= t <= 2.0 * envelope["time"]["max"]
    assert 0.85 * envelope["memory"]["min"] <= mem <= 1.15 * envelope["memory"]["max"]
    assert envelope["cpu"]["min"] - 0.2 <= cpu <= envelope["cpu"]["max"] + 0.2
    assert len(out.measurement.samples) == 4


def test_undefined_impl_fails_build(broken_ex, tmp_path):
    out = Evaluator(broken_ex, cfg(tmp_path)).evaluate(with_hot_site(broken_ex, 3))
    assert out.stage is Stage.BUILD_FAILED
    assert "GhostBuffer" in out.detail


def test_lossy_impl_fails_tests(broken_ex, tmp_path):
    out = Evaluator(broken_ex, cfg(tmp_path)).evaluate(with_hot_site(broken_ex, 2))
    assert out.stage is Stage.TESTS_FAILED and out.objectives is None


def test_timeout(demo_ex, tmp_path):
    ev = Evaluator(demo_ex, cfg(tmp_path, test_cmd="sleep 5", timeout=0.3))
    out = ev.evaluate(demo_ex.schema.seed_genome)
    assert out.stage is Stage.TIMEOUT


def test_cache_soundness_and_persistence(demo_ex, tmp_path):
    cache = tmp_path / "cache.jsonl"
    ev = Evaluator(demo_ex, cfg(tmp_path), cache_path=cache)
    g = with_hot_site(demo_ex, 1)
    first = ev.evaluate(g)
    launches = ev.launches
    second = ev.evaluate(g)
    assert ev.launches == launches and second.objectives == first.objectives
    replay = Evaluator(demo_ex, cfg(tmp_path), cache_path=cache)
    assert replay.evaluate(g).objectives == first.objectives
    assert replay.launches == 0
    # each mode keeps its own entry
    replay.evaluate(g, Mode.VERIFY)
    assert replay.launches == 1 + 4


def test_isolation_and_accounting(demo_ex, demo_dir, tmp_path):
    before = snapshot(demo_dir / "project")
    ev = Evaluator(demo_ex, cfg(tmp_path))
    outcomes = [ev.evaluate(with_hot_site(demo_ex, v)) for v in (0, 1)]
    assert snapshot(demo_dir / "project") == before
    assert list((tmp_path / "work").iterdir()) == []
    assert ev.total_machine_seconds == pytest.approx(sum(o.machine_seconds for o in outcomes))
    assert ev.recorded_machine_seconds == pytest.approx(ev.total_machine_seconds)


def test_variant_id_is_exported(demo_ex, tmp_path):
    ev = Evaluator(demo_ex, cfg(tmp_path, build_cmd="", test_cmd='test -n "$DARWIN_VARIANT_ID"'))
    assert ev.evaluate(demo_ex.schema.seed_genome).feasible


def test_baseline_sets_timeout(demo_ex, tmp_path):
    ev = Evaluator(demo_ex, cfg(tmp_path))
    base = ev.measure_baseline()
    assert len(base.samples) == 2
    assert ev.timeout == pytest.approx(max(10 * base.objectives[0], 1.0))


def test_failing_baseline(demo_ex, tmp_path):
    with pytest.raises(BaselineInfeasible):
        measure_baseline(demo_ex.schema, demo_ex.templates,
                         cfg(tmp_path, test_cmd="python3 run_tests.py --fail"), source_root=demo_ex.source_root)


def test_empty_test_command(demo_ex, tmp_path):
    with pytest.raises(SandboxSetupError):
        Evaluator(demo_ex, cfg(tmp_path, test_cmd=""))
    with pytest.raises(SandboxSetupError):
        measure_baseline(demo_ex.schema, demo_ex.templates, cfg(tmp_path, test_cmd="  "))


def test_one_shot_helper(demo_ex, tmp_path):
    out = evaluate_genome(demo_ex.schema.seed_genome, demo_ex.schema, demo_ex.templates, cfg(tmp_path),
                          source_root=demo_ex.source_root)
    assert out.feasible
