"""NSGA-II over integer genomes with three minimised objectives.

Infeasible variants are ordered by constraint domination: every feasible
individual beats every infeasible one, and failures are ranked by the stage
at which they broke.
"""

from __future__ import annotations

import enum
import json
import logging
import math
import random
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

from .errors import AllInfeasible, SchemaMismatch, SearchError
from .evaluate import EvalOutcome, Stage
from .extract import GenomeSchema, genome_hash, search_space_size

log = logging.getLogger(__name__)

INF = float("inf")


class Dominance(str, enum.Enum):
    STRICT = "STRICT"
    WEAK = "WEAK"
    NONE = "NONE"


class Classification(str, enum.Enum):
    STRICTLY_DOMINANT = "STRICTLY_DOMINANT"
    NON_DOMINATED = "NON_DOMINATED"
    DOMINATED = "DOMINATED"


# lower is less severe; equal severities never dominate each other
_SEVERITY = {Stage.TESTS_FAILED: 0, Stage.BUILD_FAILED: 1, Stage.TIMEOUT: 1}


@dataclass(frozen=True)
class SearchParams:
    population_size: int = 30
    max_evaluations: int = 900
    crossover_prob: float = 0.8
    mutation_prob_per_gene: float = 0.1
    rng_seed: int = 0
    convergence_generations: int = 5
    convergence_tolerance: float = 0.005
    workers: int = 1

    def __post_init__(self):
        if self.population_size < 4 or self.population_size % 2:
            raise ValueError("population_size must be even and >= 4")
        for name in ("crossover_prob", "mutation_prob_per_gene"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.max_evaluations < 0:
            raise ValueError("max_evaluations must be >= 0")


@dataclass
class Individual:
    genome: tuple
    outcome: EvalOutcome
    rank: int = 0
    crowding: float = 0.0

    @property
    def feasible(self) -> bool:
        return self.outcome.feasible

    @property
    def objectives(self) -> Optional[tuple[float, float, float]]:
        return self.outcome.objectives if self.outcome.feasible else None


def dominates(a: Sequence[float], b: Sequence[float]) -> Dominance:
    if all(x < y for x, y in zip(a, b)):
        return Dominance.STRICT
    if all(x <= y for x, y in zip(a, b)) and any(x < y for x, y in zip(a, b)):
        return Dominance.WEAK
    return Dominance.NONE


def constrained_dominates(a: Individual, b: Individual) -> bool:
    if a.feasible and b.feasible:
        return dominates(a.objectives, b.objectives) is not Dominance.NONE
    if a.feasible != b.feasible:
        return a.feasible
    return _SEVERITY[a.outcome.stage] < _SEVERITY[b.outcome.stage]


def fast_nondominated_sort(pop: Sequence[Individual]) -> list[list[Individual]]:
    """Partition ``pop`` into fronts and set each member's ``rank``."""
    n = len(pop)
    dominated_by = [[] for _ in range(n)]
    counts = [0] * n
    for p in range(n):
        for q in range(p + 1, n):
            if constrained_dominates(pop[p], pop[q]):
                dominated_by[p].append(q)
                counts[q] += 1
            elif constrained_dominates(pop[q], pop[p]):
                dominated_by[q].append(p)
                counts[p] += 1
    current = [i for i in range(n) if counts[i] == 0]
    fronts = []
    rank = 0
    while current:
        fronts.append([pop[i] for i in current])
        for i in current:
            pop[i].rank = rank
        nxt = []
        for i in current:
            for j in dominated_by[i]:
                counts[j] -= 1
                if counts[j] == 0:
                    nxt.append(j)
        current = sorted(nxt)
        rank += 1
    return fronts


def crowding_distance(front: Sequence[Individual]) -> None:
    """Assign NSGA-II crowding distances in place."""
    if not front:
        return
    for ind in front:
        ind.crowding = 0.0
    members = [ind for ind in front if ind.feasible]
    if not members:
        return
    for m in range(3):
        ordered = sorted(members, key=lambda ind: ind.objectives[m])
        lo, hi = ordered[0].objectives[m], ordered[-1].objectives[m]
        ordered[0].crowding = INF
        ordered[-1].crowding = INF
        span = hi - lo
        if span <= 0:
            continue
        for k in range(1, len(ordered) - 1):
            gap = ordered[k + 1].objectives[m] - ordered[k - 1].objectives[m]
            ordered[k].crowding += gap / span


def tournament_select(pop: Sequence[Individual], rng: random.Random) -> Individual:
    if len(pop) == 1:
        return pop[0]
    i, j = rng.sample(range(len(pop)), 2)
    a, b = pop[i], pop[j]
    if a.rank != b.rank:
        return a if a.rank < b.rank else b
    if a.crowding != b.crowding:
        return a if a.crowding > b.crowding else b
    return a


def uniform_crossover(p1, p2, prob: float, rng: random.Random):
    if len(p1) != len(p2):
        raise SchemaMismatch(f"parents have {len(p1)} and {len(p2)} genes")
    c1, c2 = list(p1), list(p2)
    if rng.random() < prob:
        for i in range(len(c1)):
            if rng.random() < 0.5:
                c1[i], c2[i] = c2[i], c1[i]
    return tuple(c1), tuple(c2)


def uniform_mutation(genome, cardinalities: Sequence[int], prob_per_gene: float, rng: random.Random):
    out = list(genome)
    for i, card in enumerate(cardinalities):
        if rng.random() < prob_per_gene:
            out[i] = rng.randrange(card)
    return tuple(out)


def classify_vs_baseline(solution: Sequence[float], baseline: Sequence[float]) -> Classification:
    if dominates(solution, baseline) is Dominance.STRICT:
        return Classification.STRICTLY_DOMINANT
    if tuple(solution) == tuple(baseline) or dominates(baseline, solution) is not Dominance.NONE:
        return Classification.DOMINATED
    return Classification.NON_DOMINATED


def pareto_filter(points: Sequence[Sequence[float]]) -> list[tuple]:
    """Distinct objective vectors not weakly dominated by any other point."""
    uniq = sorted(set(tuple(p) for p in points))
    return [p for p in uniq if not any(dominates(q, p) is not Dominance.NONE for q in uniq)]


# ---------------------------------------------------------------- main loop


@dataclass
class SearchResult:
    front: list[Individual]
    history: list[dict]
    evaluations: int
    generations: int
    converged: bool = False
    population: list[Individual] = field(default_factory=list)

    def __iter__(self):
        # allows ``front, history = nsga2_run(...)``
        return iter((self.front, self.history))


def _history_records(gen: int, pop: Sequence[Individual]) -> list[dict]:
    recs = []
    for ind in pop:
        recs.append(
            {
                "generation": gen,
                "genome_hash": genome_hash(ind.genome),
                "genome": list(ind.genome),
                "outcome": ind.outcome.to_dict(),
                "objectives": list(ind.objectives) if ind.feasible else None,
                "rank": ind.rank,
                "crowding": None if ind.crowding == INF else round(ind.crowding, 12),
            }
        )
    return recs


def _front_vectors(pop: Sequence[Individual]) -> list[tuple]:
    return sorted(ind.objectives for ind in pop if ind.rank == 0 and ind.feasible)


def _same_front(a: list[tuple], b: list[tuple], tol: float) -> bool:
    if len(a) != len(b):
        return False
    for u, v in zip(a, b):
        for x, y in zip(u, v):
            if abs(x - y) > tol * max(abs(x), abs(y), 1e-12):
                return False
    return True


def _survivors(union: list[Individual], size: int) -> list[Individual]:
    seen = set()
    uniq, dups = [], []
    for ind in union:
        (dups if ind.genome in seen else uniq).append(ind)
        seen.add(ind.genome)
    chosen = []
    for front in fast_nondominated_sort(uniq):
        crowding_distance(front)
        if len(chosen) + len(front) <= size:
            chosen.extend(front)
        else:
            # stable sort keeps union order among equal crowding
            front = sorted(front, key=lambda ind: -ind.crowding)
            chosen.extend(front[: size - len(chosen)])
        if len(chosen) == size:
            break
    for d in dups:
        if len(chosen) >= size:
            break
        chosen.append(d)
    _assign(chosen)
    return chosen


def _assign(pop: list[Individual]) -> None:
    for front in fast_nondominated_sort(pop):
        crowding_distance(front)


class _Budget:
    """Evaluates genomes at most once each and never beyond the budget."""

    def __init__(self, eval_fn, limit, workers=1):
        self.eval_fn = eval_fn
        self.limit = limit
        self.workers = workers
        self.cache: dict[tuple, EvalOutcome] = {}
        self.used = 0

    def seen(self, genome) -> bool:
        return genome in self.cache

    def run(self, genomes: Sequence[tuple]) -> list[Optional[EvalOutcome]]:
        """Outcomes in input order; None where the budget ran out."""
        todo = []
        for g in genomes:
            if g not in self.cache and g not in todo and self.used + len(todo) < self.limit:
                todo.append(g)
        if self.workers > 1 and len(todo) > 1:
            from concurrent.futures import ThreadPoolExecutor

            with ThreadPoolExecutor(self.workers) as pool:
                results = list(pool.map(self.eval_fn, todo))
        else:
            results = [self.eval_fn(g) for g in todo]
        for g, r in zip(todo, results):
            self.cache[g] = r
        self.used += len(todo)
        return [self.cache.get(g) for g in genomes]


def nsga2_run(
    schema: GenomeSchema,
    eval_fn: Callable[[tuple], EvalOutcome],
    params: SearchParams = SearchParams(),
    on_generation: Optional[Callable[[int, list[dict]], None]] = None,
) -> SearchResult:
    """Run NSGA-II and return the feasible members of the final first front.

    ``eval_fn`` maps a genome tuple to an :class:`EvalOutcome`; it is called
    at most once per distinct genome and at most ``max_evaluations`` times.
    ``on_generation(gen, records)`` is invoked after each generation with
    the history records for the surviving population.
    """
    if search_space_size(schema) < 2:
        raise SearchError("search space has fewer than 2 variants")
    rng = random.Random(params.rng_seed)
    cards = schema.cardinalities
    size = params.population_size
    space = search_space_size(schema)
    budget = _Budget(eval_fn, params.max_evaluations, params.workers)
    history: list[dict] = []

    def record(gen, pop):
        recs = _history_records(gen, pop)
        history.extend(recs)
        if on_generation is not None:
            on_generation(gen, recs)

    # generation 0: the original program plus random genomes
    genomes = [tuple(schema.seed_genome)]
    attempts = 0
    while len(genomes) < size:
        g = tuple(rng.randrange(c) for c in cards)
        attempts += 1
        if g in genomes and attempts < 20 * size and len(set(genomes)) < space:
            continue
        genomes.append(g)
    outcomes = budget.run(genomes)
    pop = [Individual(g, o) for g, o in zip(genomes, outcomes) if o is not None]
    if not pop:
        return SearchResult([], history, budget.used, 0)
    _assign(pop)
    record(0, pop)
    gen = 0
    stable = 0
    converged = False
    previous = _front_vectors(pop)

    while budget.used < params.max_evaluations and len(pop) == size:
        offspring: list[tuple] = []
        taken = {ind.genome for ind in pop}
        tries = 0
        while len(offspring) < size:
            p1 = tournament_select(pop, rng)
            p2 = tournament_select(pop, rng)
            c1, c2 = uniform_crossover(p1.genome, p2.genome, params.crossover_prob, rng)
            for c in (c1, c2):
                c = uniform_mutation(c, cards, params.mutation_prob_per_gene, rng)
                tries += 1
                # prefer unseen genomes; give up after a while on tiny spaces
                if (c in taken or budget.seen(c)) and tries < 10 * size:
                    continue
                offspring.append(c)
                taken.add(c)
        offspring = offspring[:size]
        outcomes = budget.run(offspring)
        children = [Individual(g, o) for g, o in zip(offspring, outcomes) if o is not None]
        pop = _survivors(pop + children, size)
        gen += 1
        record(gen, pop)
        current = _front_vectors(pop)
        if _same_front(current, previous, params.convergence_tolerance):
            stable += 1
        else:
            stable = 0
        previous = current
        if stable >= params.convergence_generations:
            converged = True
            log.info("front stable for %d generations; stopping at generation %d", stable, gen)
            break

    front = [ind for ind in pop if ind.rank == 0 and ind.feasible]
    if not any(o.feasible for o in budget.cache.values()):
        stages = Counter(o.stage.value for o in budget.cache.values())
        stage, count = stages.most_common(1)[0]
        raise AllInfeasible(stage, count)
    uniq = []
    seen = set()
    for ind in front:
        if ind.genome not in seen:
            uniq.append(ind)
            seen.add(ind.genome)
    return SearchResult(uniq, history, budget.used, gen, converged, pop)


def dump_history(records: Sequence[dict]) -> str:
    return "".join(json.dumps(r, sort_keys=True) + "\n" for r in records)
