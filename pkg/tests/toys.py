"""Small generated projects and synthetic fitness functions for tests."""

import hashlib
import itertools
import random
from pathlib import Path

from darwinian.evaluate import EvalOutcome, Measurement, RunSample, Stage
from darwinian.extract import scan_project, search_space_size
from darwinian.store import builtin_store

JAVA = builtin_store("java-collections")

# literal capacities that are not in the default domain, so every capacity
# gene value renders to different text
_LITERALS = ["3", "10", "100", "5000"]
_ARGS = ["", "", ""] + _LITERALS + ["other", "n + 1", "x.size()"]
_CTORS = ["ArrayList", "LinkedList", "HashMap", "LinkedHashSet", "Vector", "ArrayBlockingQueue", "SynchronousQueue"]


def java_toy_source(rng: random.Random, n_sites: int) -> str:
    lines = ["class Toy {", "  void run(int n, Object other) {"]
    for i in range(n_sites):
        ctor = rng.choice(_CTORS)
        args = rng.choice(_ARGS)
        gen = rng.choice(["<>", "<String>", ""])
        lines.append(f"    Object v{i} = new {ctor}{gen}({args});  // site {i}")
    lines += ["  }", "}", ""]
    return "\n".join(lines)


def make_toy_project(root: Path, seed: int, max_space: int = 512, min_space: int = 16):
    """Write a one-file toy project whose search space lies in the bounds."""
    rng = random.Random(seed)
    while True:
        src = java_toy_source(rng, rng.randint(1, 3))
        root.mkdir(parents=True, exist_ok=True)
        (root / "Toy.java").write_text(src)
        templates, schema = scan_project(root, JAVA)
        if min_space <= search_space_size(schema) <= max_space:
            return templates, schema


def distinct_variant_count(templates, schema) -> int:
    """Materialize every genome in memory and count distinct outputs."""
    seen = set()
    from darwinian.extract import placeholder_texts

    for g in itertools.product(*(range(c) for c in schema.cardinalities)):
        texts = placeholder_texts(schema, g)
        seen.add(tuple(t.render(texts) for t in templates))
    return len(seen)


class SyntheticFitness:
    """Deterministic correlated 3-objective fitness with infeasible holes."""

    def __init__(self, schema, seed: int, infeasible_rate: float = 0.1, spread: float = 3.0):
        rng = random.Random(seed)
        self.seed = seed
        self.cards = schema.cardinalities
        self.base = [[rng.uniform(0, 10) for _ in range(c)] for c in self.cards]
        self.noise = [[[rng.uniform(-spread, spread) for _ in range(c)] for c in self.cards] for _ in range(3)]
        self.infeasible_rate = infeasible_rate
        self.calls = 0

    def objectives(self, g):
        base = sum(w[v] for w, v in zip(self.base, g))
        return tuple(base + sum(n[i][v] for i, v in enumerate(g)) + 20.0 * (k + 1) for k, n in enumerate(self.noise))

    def feasible(self, g) -> bool:
        h = hashlib.sha256(f"{self.seed}:{g}".encode()).digest()
        return h[0] / 256 >= self.infeasible_rate or list(g) == [0] * len(g)

    def __call__(self, g) -> EvalOutcome:
        self.calls += 1
        g = tuple(g)
        if not self.feasible(g):
            return EvalOutcome.fail(Stage.TESTS_FAILED, "synthetic failure")
        objs = self.objectives(g)
        return EvalOutcome.ok(Measurement([RunSample(*objs)], objs, 1.0))

    def brute_force_front(self) -> set:
        genomes = [g for g in itertools.product(*(range(c) for c in self.cards)) if self.feasible(g)]
        objs = {g: self.objectives(g) for g in genomes}

        def beaten(p):
            return any(all(x <= y for x, y in zip(q, p)) and q != p for q in objs.values())

        return {g for g, p in objs.items() if not beaten(p)}
