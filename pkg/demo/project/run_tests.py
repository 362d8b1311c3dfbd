"""Performance test suite: checks results, exits nonzero on any mismatch."""

import sys

import workload


def main(argv):
    if "--fail" in argv:
        print("forced failure")
        return 1
    log, sessions, squares = workload.run()
    assert len(log) == workload.EVENTS
    assert list(log)[:3] == [workload.EVENTS - 1, workload.EVENTS - 2, workload.EVENTS - 3]
    assert sum(log) == workload.EVENTS * (workload.EVENTS - 1) // 2
    assert len(sessions) == workload.SESSIONS
    assert all(list(s) == [i, -i] for i, s in enumerate(sessions))
    assert list(squares) == [x * x for x in range(100)]
    assert squares.pop_front() == 0 and len(squares) == 99
    print("ok")
    return 0


if __name__ == "__main__":
    sys.exit(main(sys.argv[1:]))
