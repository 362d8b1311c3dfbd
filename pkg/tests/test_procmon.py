import os
import subprocess
import sys
import time

import pytest

from darwinian.errors import ProcessVanished
from darwinian.procmon import run_sampled, sample_resources

MB = 2**20
PY = sys.executable


def hold(mb, seconds=0.6):
    # repeating a one-byte array touches every page, unlike a zeroed allocation
    return f"{PY} -c \"import time; b = bytearray(b'\\x01') * ({mb} * 2**20); time.sleep({seconds})\""


def peak(cmd, tmp_path, reps=3):
    return min(run_sampled(cmd, tmp_path, period=0.05).peak_rss for _ in range(reps))


def test_single_allocation_calibration(tmp_path):
    delta = peak(hold(50), tmp_path) - peak(hold(0), tmp_path)
    assert 0.8 * 50 * MB <= delta <= 1.2 * 50 * MB


def test_two_children_are_summed(tmp_path):
    two = f"{hold(50)} & {hold(50)} & wait"
    blank = f"{hold(0)} & {hold(0)} & wait"
    delta = peak(two, tmp_path) - peak(blank, tmp_path)
    assert 0.8 * 100 * MB <= delta <= 1.2 * 100 * MB


def test_instant_exit_still_measured(tmp_path):
    run = run_sampled("true", tmp_path)
    assert run.returncode == 0 and run.wall_time > 0 and run.n_samples >= 1
    assert run.peak_rss > 0


def test_exit_code_and_log(tmp_path):
    log = tmp_path / "out.log"
    run = run_sampled("echo hello; exit 3", tmp_path, log_path=log)
    assert run.returncode == 3 and not run.timed_out
    assert log.read_text() == "hello\n"


def test_cpu_load_busy_versus_idle(tmp_path):
    busy = run_sampled(f'{PY} -c "sum(i * i for i in range(4_000_000))"', tmp_path)
    idle = run_sampled("sleep 0.4", tmp_path)
    assert busy.cpu_load > 0.6
    assert idle.cpu_load < 0.2


def test_timeout_kills_whole_tree(tmp_path):
    start = time.perf_counter()
    run = run_sampled("sleep 30 & sleep 30; wait", tmp_path, timeout=0.5)
    assert run.timed_out
    assert time.perf_counter() - start < 5


def test_sampler_reports_vanished_process():
    p = subprocess.Popen(["true"])
    p.wait()
    with pytest.raises(ProcessVanished):
        next(sample_resources(p.pid, 0.05))


def test_sampler_sees_live_process():
    p = subprocess.Popen(["sleep", "0.5"])
    try:
        rss, cpu, hwm = next(sample_resources(p.pid, 0.05))
        assert rss > 0 and cpu >= 0 and hwm >= rss
    finally:
        p.kill()
        p.wait()
