"""Two interchangeable buffer implementations with the same interface."""

from collections import deque


class ArrayBuffer:
    """List-backed buffer with preallocated slots.

    ``push_front`` moves every stored item, so head insertion is linear.
    """

    def __init__(self, capacity=1024):
        self._slots = [None] * max(int(capacity), 1)
        self._size = 0

    def _grow(self):
        self._slots.extend([None] * len(self._slots))

    def push_back(self, item):
        if self._size == len(self._slots):
            self._grow()
        self._slots[self._size] = item
        self._size += 1

    def push_front(self, item):
        if self._size == len(self._slots):
            self._grow()
        self._slots.insert(0, item)
        self._slots.pop()
        self._size += 1

    def pop_front(self):
        if not self._size:
            raise IndexError("pop from empty buffer")
        item = self._slots.pop(0)
        self._slots.append(None)
        self._size -= 1
        return item

    def __len__(self):
        return self._size

    def __iter__(self):
        return iter(self._slots[: self._size])


class LinkedBuffer:
    """Deque-backed buffer; the capacity hint is accepted and ignored."""

    def __init__(self, capacity=None):
        self._items = deque()

    def push_back(self, item):
        self._items.append(item)

    def push_front(self, item):
        self._items.appendleft(item)

    def pop_front(self):
        if not self._items:
            raise IndexError("pop from empty buffer")
        return self._items.popleft()

    def __len__(self):
        return len(self._items)

    def __iter__(self):
        return iter(self._items)


class LossyBuffer(LinkedBuffer):
    """Drops every hundredth item; a variant that must fail the tests."""

    def __init__(self, capacity=None):
        super().__init__(capacity)
        self._count = 0

    def push_back(self, item):
        self._count += 1
        if self._count % 100:
            super().push_back(item)

    def push_front(self, item):
        self._count += 1
        if self._count % 100:
            super().push_front(item)
