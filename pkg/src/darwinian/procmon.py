"""Run a shell command while sampling the resources of its process tree."""

from __future__ import annotations

import os
import resource
import signal
import subprocess
import threading
import time
from dataclasses import dataclass
from typing import Iterator, NamedTuple, Optional

import psutil

from .errors import ProcessVanished


@dataclass
class ProcessRun:
    returncode: int
    wall_time: float
    peak_rss: int  # bytes
    cpu_seconds: float
    timed_out: bool
    n_samples: int

    @property
    def cpu_load(self) -> float:
        return self.cpu_seconds / self.wall_time if self.wall_time > 0 else 0.0


class ResourceSample(NamedTuple):
    rss: int  # summed resident set of the live tree, bytes
    cpu_seconds: float
    hwm: int  # largest per-process resident high-water mark, bytes


def _hwm(pid: int) -> int:
    """Peak RSS of one process since its exec, from /proc (0 if unknown)."""
    try:
        with open(f"/proc/{pid}/status", "rb") as fh:
            for line in fh:
                if line.startswith(b"VmHWM:"):
                    return int(line.split()[1]) * 1024
    except (OSError, ValueError, IndexError):
        pass
    return 0


def _tree(root: psutil.Process) -> list[psutil.Process]:
    try:
        return [root] + root.children(recursive=True)
    except psutil.Error:
        return [root]


def sample_resources(pid: int, period: float, stop: Optional[threading.Event] = None) -> Iterator[ResourceSample]:
    """Yield ``(rss, cpu_seconds, hwm)`` samples for the tree rooted at ``pid``.

    rss is summed over every live descendant; cpu_seconds is cumulative
    user+system time of the live tree plus its reaped children; hwm is the
    largest per-process peak RSS, which also covers spikes between samples.
    Raises :class:`ProcessVanished` if the root is gone before the first
    sample.
    """
    try:
        root = psutil.Process(pid)
    except psutil.NoSuchProcess:
        raise ProcessVanished(f"process {pid} exited before the first sample") from None
    first = True
    while True:
        rss = 0
        cpu = 0.0
        hwm = 0
        alive = False
        for p in _tree(root):
            try:
                with p.oneshot():
                    if p.status() == psutil.STATUS_ZOMBIE:
                        continue
                    rss += p.memory_info().rss
                    hwm = max(hwm, _hwm(p.pid))
                    t = p.cpu_times()
                    cpu += t.user + t.system + t.children_user + t.children_system
                    alive = True
            except psutil.Error:
                continue
        if not alive:
            if first:
                raise ProcessVanished(f"process {pid} exited before the first sample")
            return
        first = False
        yield ResourceSample(rss, cpu, hwm)
        if stop is not None:
            if stop.wait(period):
                return
        else:
            time.sleep(period)


def _kill_group(pgid: int) -> None:
    try:
        os.killpg(pgid, signal.SIGKILL)
    except (ProcessLookupError, PermissionError):
        pass


def run_sampled(command: str, cwd, env=None, period: float = 0.1, timeout: Optional[float] = None, log_path=None) -> ProcessRun:
    """Run ``command`` through the shell and measure its whole process tree.

    Wall time comes from a monotonic clock around spawn/reap.  The peak RSS
    is the largest of the sampled tree sum, the per-process high-water marks
    and the kernel's max-RSS for the reaped tree.  The kernel figure starts
    from this process's own peak at fork time, so it is only used when it
    exceeds that floor.
    """
    floor = resource.getrusage(resource.RUSAGE_SELF).ru_maxrss * 1024
    out = open(log_path, "ab") if log_path else subprocess.DEVNULL
    try:
        start = time.perf_counter()
        proc = subprocess.Popen(
            command, shell=True, cwd=cwd, env=env, stdout=out, stderr=subprocess.STDOUT, start_new_session=True
        )
    finally:
        if log_path:
            out.close()
    peak = 0
    cpu_sampled = 0.0
    n = 0
    stop = threading.Event()
    timed_out = threading.Event()

    def sampler():
        nonlocal peak, cpu_sampled, n
        try:
            for rss, cpu, hwm in sample_resources(proc.pid, period, stop):
                peak = max(peak, rss, hwm)
                cpu_sampled = max(cpu_sampled, cpu)
                n += 1
        except ProcessVanished:
            pass

    def on_timeout():
        timed_out.set()
        _kill_group(proc.pid)

    thread = threading.Thread(target=sampler, daemon=True)
    thread.start()
    timer = threading.Timer(timeout, on_timeout) if timeout else None
    if timer:
        timer.daemon = True
        timer.start()
    try:
        _, status, usage = os.wait4(proc.pid, 0)
    finally:
        wall = time.perf_counter() - start
        if timer:
            timer.cancel()
        stop.set()
    proc.returncode = os.waitstatus_to_exitcode(status)
    thread.join()
    _kill_group(proc.pid)  # stray background children must not outlive the run
    cpu = max(cpu_sampled, usage.ru_utime + usage.ru_stime)
    kernel_peak = usage.ru_maxrss * 1024
    if kernel_peak > floor or peak == 0:
        # with no sample at all the kernel figure is the only (upper) bound
        peak = max(peak, kernel_peak)
    return ProcessRun(
        returncode=proc.returncode,
        wall_time=wall,
        peak_rss=peak,
        cpu_seconds=cpu,
        timed_out=timed_out.is_set(),
        n_samples=n + 1,  # the kernel accounting at exit is the final sample
    )
