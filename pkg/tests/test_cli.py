import io
import json
import shutil
import subprocess
import sys
from pathlib import Path

import pytest
from filelock import FileLock

from darwinian import cli
from darwinian.config import ConfigError, load_config
from darwinian.errors import AllInfeasible, BaselineInfeasible, NothingToOptimize, RunCorrupt, TargetNotEmpty, UnknownSolution
from darwinian.evaluate import EvalOutcome, Mode, Stage
from darwinian.extract import extract
from darwinian.store import builtin_store

from stubs import StubEvaluator, demo_scale


def write_config(tmp_path, source, **extra):
    data = {
        "source_root": str(source),
        "store": "generic-demo",
        "build_cmd": "python3 build_check.py",
        "test_cmd": "python3 run_tests.py",
        "search": {"population_size": 10, "max_evaluations": 40, "rng_seed": 3},
        "eval": {"runs_search": 3, "runs_verify": 8},
        "out_dir": str(tmp_path / "run"),
    }
    for key, value in extra.items():
        if isinstance(value, dict) and isinstance(data.get(key), dict):
            data[key] = {**data[key], **value}
        else:
            data[key] = value
    path = tmp_path / "darwin.json"
    path.write_text(json.dumps(data))
    return path


def stub_factory(scale=demo_scale, record=None):
    def make(ex, cfg, cache_path):
        ev = StubEvaluator(ex, cfg, cache_path, scale=scale)
        if record is not None:
            record.append(ev)
        return ev

    return make


@pytest.fixture
def config_path(tmp_path, demo_dir):
    return write_config(tmp_path, demo_dir / "project")


def optimize(path, **kw):
    return cli.cmd_optimize(load_config(path), stub_factory(**kw), out=io.StringIO())


def test_extract_summary(config_path):
    out = io.StringIO()
    ex = cli.cmd_extract(load_config(config_path), out)
    assert out.getvalue().strip() == "sites: 3 (active 3)  genes: 4  search space: 64"
    assert (Path(load_config(config_path).out_dir) / "manifest.json").is_file()
    assert {tf.file for tf in ex.templates if len(tf.segments) > 1} == {"workload.py"}


def test_extract_nothing_to_optimize(tmp_path):
    src = tmp_path / "empty"
    src.mkdir()
    (src / "a.py").write_text("x = [1, 2]\n")
    path = write_config(tmp_path, src)
    with pytest.raises(NothingToOptimize):
        cli.cmd_extract(load_config(path), io.StringIO())
    assert cli.main(["extract", str(path)]) == cli.EXIT_NOTHING


def test_config_errors(tmp_path, demo_dir):
    path = write_config(tmp_path, demo_dir / "project", store="missing-store.json")
    assert cli.main(["extract", str(path)]) == cli.EXIT_CONFIG
    path = write_config(tmp_path, demo_dir / "project", search={"population_size": 7})
    assert cli.main(["extract", str(path)]) == cli.EXIT_CONFIG
    path = write_config(tmp_path, demo_dir / "project", eval={"bogus": 1})
    with pytest.raises(ConfigError):
        load_config(path)
    assert cli.main(["extract", str(tmp_path / "nope.json")]) == cli.EXIT_CONFIG


def test_flag_overrides(config_path, tmp_path):
    args = cli.build_parser().parse_args(
        ["optimize", str(config_path), "--budget", "7", "--pop", "6", "--warmup", "0", "--runs-verify", "5", "--out", str(tmp_path / "o")]
    )
    config = cli.config_from_args(args)
    params = config.search_params()
    cfg = config.eval_config()
    assert (params.max_evaluations, params.population_size, params.rng_seed) == (7, 6, 3)
    assert (cfg.warmup_search, cfg.warmup_verify, cfg.runs_verify, cfg.runs_search) == (0, 0, 5, 3)
    assert config.out_dir == (tmp_path / "o").resolve()
    assert cfg.workdir_root == tmp_path / "work"  # DARWIN_WORKDIR wins


def test_optimize_writes_run_directory(config_path):
    run = optimize(config_path)
    for name in ("config.json", "manifest.json", "cache.jsonl", "baseline.json", "history.jsonl", "state.json"):
        assert (run / name).is_file(), name
    state = json.loads((run / "state.json").read_text())
    assert state["status"] == "complete" and 0 < state["evaluations"] <= 40
    assert any(g[0] == 1 for g in state["front"]) and [0, 0, 0, 0] not in state["front"]
    history = [json.loads(l) for l in (run / "history.jsonl").read_text().splitlines()]
    assert {r["generation"] for r in history} == set(range(state["generations"] + 1))
    base = json.loads((run / "baseline.json").read_text())
    assert base["timeout"] == pytest.approx(max(10 * base["measurement"]["objectives"][0], 1.0))


def test_budget_zero_reports_original(config_path):
    run = cli.cmd_optimize(load_config(config_path).with_overrides(search={"max_evaluations": 0}), stub_factory(), io.StringIO())
    state = json.loads((run / "state.json").read_text())
    assert state["front"] == [[0, 0, 0, 0]] and (run / "history.jsonl").read_text() == ""
    dest = cli.cmd_report(run, stub_factory(), io.StringIO())
    pareto = json.loads((dest / "pareto.json").read_text())
    assert [s["classification"] for s in pareto["solutions"]] == ["DOMINATED"]
    assert pareto["solutions"][0]["percent"] == [100.0, 100.0, 100.0]


def test_deterministic_history(tmp_path, demo_dir):
    runs = []
    for k in range(2):
        d = tmp_path / f"r{k}"
        d.mkdir()
        runs.append(optimize(write_config(d, demo_dir / "project")))
    assert (runs[0] / "history.jsonl").read_bytes() == (runs[1] / "history.jsonl").read_bytes()
    s0, s1 = (json.loads((r / "state.json").read_text()) for r in runs)
    assert s0 == s1


class Interrupted(Exception):
    pass


def test_resume_reuses_cache(tmp_path, demo_dir):
    ref_dir = tmp_path / "ref"
    ref_dir.mkdir()
    ref = optimize(write_config(ref_dir, demo_dir / "project"))
    ref_evals = json.loads((ref / "state.json").read_text())["evaluations"]

    path = write_config(tmp_path, demo_dir / "project")
    calls = {"n": 0}

    def flaky(g):
        calls["n"] += 1
        if calls["n"] > 15:
            raise Interrupted()
        return demo_scale(g)

    with pytest.raises(Interrupted):
        optimize(path, scale=flaky)
    run = load_config(path).out_dir
    assert json.loads((run / "state.json").read_text())["status"] == "running"
    cached = len((run / "cache.jsonl").read_text().splitlines())
    assert cached == 15
    made = []
    optimize(path, record=made)
    # only the unfinished work is measured again
    assert len(made[0].fresh) == ref_evals + 1 - cached
    assert (run / "history.jsonl").read_bytes() == (ref / "history.jsonl").read_bytes()


def test_changed_source_discards_cache(tmp_path, demo_dir):
    src = tmp_path / "project"
    shutil.copytree(demo_dir / "project", src)
    path = write_config(tmp_path, src)
    run = optimize(path)
    wl = src / "workload.py"
    wl.write_text(wl.read_text() + "\n# touched\n")
    made = []
    optimize(path, record=made)
    assert (run / "cache.jsonl.stale").is_file()
    assert len(made[0].fresh) >= 2


def test_lock_rejects_second_optimizer(config_path):
    config = load_config(config_path)
    config.out_dir.mkdir(parents=True)
    with FileLock(str(config.out_dir / ".lock")):
        with pytest.raises(ConfigError, match="another optimize"):
            cli.cmd_optimize(config, stub_factory(), io.StringIO())


def snapshot(root):
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_report_idempotent_and_apply(config_path, tmp_path):
    run = optimize(config_path)
    dest = cli.cmd_report(run, stub_factory(), io.StringIO())
    first = snapshot(dest)
    made = []
    cli.cmd_report(run, stub_factory(record=made), io.StringIO())
    assert snapshot(dest) == first
    assert made[0].fresh == []  # VERIFY outcomes replayed from the cache
    pareto = json.loads((dest / "pareto.json").read_text())
    sd = [s for s in pareto["solutions"] if s["classification"] == "STRICTLY_DOMINANT"]
    assert sd and all(all(s["significant"]) for s in sd)

    target = cli.cmd_apply(run, "best-time", tmp_path / "bt", out=io.StringIO())
    assert snapshot(target) == snapshot(dest / "best-time")
    name = pareto["solutions"][0]["id"]
    assert snapshot(cli.cmd_apply(run, name.split("-")[1], tmp_path / "k", out=io.StringIO())) == snapshot(
        cli.cmd_apply(run, name, tmp_path / "n", out=io.StringIO())
    )
    with pytest.raises(UnknownSolution):
        cli.cmd_apply(run, "solution-99", tmp_path / "x", out=io.StringIO())
    with pytest.raises(TargetNotEmpty):
        cli.cmd_apply(run, name, tmp_path / "bt", out=io.StringIO())
    seed = cli.cmd_apply(run, "baseline", tmp_path / "seed", out=io.StringIO())
    config = load_config(config_path)
    for rel in ("workload.py", "buffers.py"):
        assert (seed / rel).read_bytes() == (config.source_root / rel).read_bytes()
    assert cli.main(["apply", str(run), "nope", str(tmp_path / "y")]) == cli.EXIT_CONFIG


def test_apply_in_place(tmp_path, demo_dir):
    src = tmp_path / "project"
    shutil.copytree(demo_dir / "project", src)
    run = optimize(write_config(tmp_path, src))
    dest = cli.cmd_report(run, stub_factory(), io.StringIO())
    cli.cmd_apply(run, "best-time", in_place=True, out=io.StringIO())
    assert (src / "workload.py").read_bytes() == (dest / "best-time" / "workload.py").read_bytes()
    assert (src / "buffers.py").read_bytes() == (demo_dir / "project" / "buffers.py").read_bytes()


def test_partial_run_report_uses_last_generation(config_path):
    run = optimize(config_path)
    state = json.loads((run / "state.json").read_text())
    (run / "state.json").write_text(json.dumps({"status": "running", "generation": state["generations"]}))
    dest = cli.cmd_report(run, stub_factory(), io.StringIO())
    reported = sorted(s["genome"] for s in json.loads((dest / "pareto.json").read_text())["solutions"])
    assert reported == sorted(state["front"])


def test_corrupt_history_names_line(config_path, caplog):
    run = optimize(config_path)
    lines = (run / "history.jsonl").read_text().splitlines()
    lines[4] = lines[4][:-5]
    (run / "history.jsonl").write_text("\n".join(lines) + "\n")
    with pytest.raises(RunCorrupt) as info:
        cli.cmd_report(run, stub_factory(), io.StringIO())
    assert info.value.lineno == 5
    assert cli.main(["report", str(run)]) == cli.EXIT_CORRUPT
    rec = json.loads(lines[0])
    rec["genome"] = [5, 0, 0, 0]
    lines[4] = json.dumps(rec)
    (run / "history.jsonl").write_text("\n".join(lines) + "\n")
    with pytest.raises(RunCorrupt) as info:
        cli.cmd_report(run, stub_factory(), io.StringIO())
    assert info.value.lineno == 5


def test_report_without_run(tmp_path):
    assert cli.main(["report", str(tmp_path)]) == cli.EXIT_CONFIG


def test_baseline_infeasible_exit(config_path):
    with pytest.raises(BaselineInfeasible):
        optimize(config_path, scale=lambda g: None)


class SearchAlwaysFails(StubEvaluator):
    def _evaluate_fresh(self, genome, mode):
        if mode is Mode.SEARCH:
            return EvalOutcome.fail(Stage.BUILD_FAILED, "stub", 0.1)
        return super()._evaluate_fresh(genome, mode)


def test_all_infeasible(config_path):
    factory = lambda ex, cfg, cache: SearchAlwaysFails(ex, cfg, cache)
    with pytest.raises(AllInfeasible) as info:
        cli.cmd_optimize(load_config(config_path), factory, io.StringIO())
    assert info.value.stage == "BUILD_FAILED"


def test_exit_codes_through_main(config_path, monkeypatch):
    monkeypatch.setattr(cli, "Evaluator", lambda ex, cfg, cache: StubEvaluator(ex, cfg, cache, scale=lambda g: None))
    assert cli.main(["optimize", str(config_path)]) == cli.EXIT_BASELINE
    monkeypatch.setattr(cli, "Evaluator", lambda ex, cfg, cache: SearchAlwaysFails(ex, cfg, cache))
    assert cli.main(["optimize", str(config_path), "--out", str(config_path.parent / "r2")]) == cli.EXIT_INFEASIBLE


def test_real_demo_smoke(tmp_path, demo_dir):
    """A tiny real optimisation through the console entry point."""
    path = write_config(
        tmp_path,
        demo_dir / "project",
        search={"population_size": 4, "max_evaluations": 6},
        eval={"runs_search": 2, "runs_verify": 4, "sample_period": 0.01},
    )
    proc = subprocess.run([sys.executable, "-m", "darwinian", "optimize", str(path)], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert "sites: 3 (active 3)" in proc.stdout
    proc = subprocess.run([sys.executable, "-m", "darwinian", "report", str(tmp_path / "run")], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "run" / "report" / "report.md").is_file()
