"""A small event pipeline whose buffers are chosen by the optimiser."""

import time

from buffers import ArrayBuffer, LinkedBuffer, LossyBuffer  # noqa: F401

EVENTS = 12000
SESSIONS = 2000


def recent_first(n=EVENTS):
    # newest event first: every event is inserted at the head
    log = ArrayBuffer(capacity=64)
    for i in range(n):
        log.push_front(i)
    return log


def open_sessions(n=SESSIONS):
    sessions = [ArrayBuffer() for _ in range(n)]
    for i, s in enumerate(sessions):
        s.push_back(i)
        s.push_back(-i)
    return sessions


def batch(items):
    out = ArrayBuffer(len(items) * 2)
    for x in items:
        out.push_back(x * x)
    return out


def run():
    log = recent_first()
    sessions = open_sessions()
    squares = batch(list(range(100)))
    time.sleep(0.03)  # stands in for I/O wait
    return log, sessions, squares
