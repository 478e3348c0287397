"""Population-based search over physical indexes.

Each generation draws a tournament sample, takes its fittest member and a
percentile of the sample's fitness as admission threshold, and applies
``s_max`` random mutations to that member. Mutants at or below the threshold
join the population; when it overflows, the least fit member of the sample is
evicted.
"""

from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Dict, IO, List, Optional, Sequence, Tuple, Union

import numpy as np

from .builder import BulkloadSpec, default_spec, init_population
from .config import IndexConfig
from .fitness import Evaluator, FitnessRecord
from .mutations import MutationAborted, MutationDistributions, mutate
from .physical import PhysicalIndex
from .workload import Dataset

log = logging.getLogger(__name__)

TRACE_SCHEMA = "gene-trace/1"
TRACE_COLUMNS = ("generation", "best_fitness", "population_size", "mutation_kind", "admitted")


@dataclass(frozen=True)
class GeneticParams:
    g_max: int = 2000
    s_init: int = 10
    s_max: int = 10
    s_pi: int = 50
    s_t: Union[int, str] = 25
    s_ch: int = 1
    q: float = 50.0
    c: int = 5
    master_seed: int = 0
    max_draws: int = 1

    def __post_init__(self) -> None:
        if self.g_max < 0:
            raise ValueError("g_max must be non-negative")
        if self.s_init < 1 or self.s_max < 1 or self.s_pi < 1:
            raise ValueError("s_init, s_max and s_pi must be at least 1")
        if self.s_ch != 1:
            raise ValueError("mutation chains longer than 1 are not supported")
        if not 0.0 <= self.q <= 100.0:
            raise ValueError("q must lie in [0, 100]")
        if self.c < 1 or self.c % 2 == 0:
            raise ValueError("c must be a positive odd number")
        if isinstance(self.s_t, str):
            pct = self.tournament_fraction
            if not 0.0 < pct <= 1.0:
                raise ValueError("a percentage tournament size must lie in (0%, 100%]")
        elif not 1 <= self.s_t <= self.s_pi:
            raise ValueError("s_t must satisfy 1 <= s_t <= s_pi")

    @property
    def tournament_fraction(self) -> float:
        return float(str(self.s_t).rstrip("%")) / 100.0

    def tournament_size(self, population: int) -> int:
        """Sample size for the current population, never larger than the population."""
        if isinstance(self.s_t, str):
            k = math.ceil(self.tournament_fraction * population)
        else:
            k = self.s_t
        return max(1, min(k, population))

    def to_dict(self) -> Dict:
        return dict(self.__dict__)

    @classmethod
    def from_dict(cls, d: Optional[Dict]) -> "GeneticParams":
        d = dict(d or {})
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown genetic parameters: {sorted(unknown)}")
        st = d.get("s_t")
        if isinstance(st, str) and not st.endswith("%"):
            d["s_t"] = int(st)
        return cls(**d)


@dataclass
class Member:
    index: PhysicalIndex
    record: FitnessRecord

    @property
    def fitness(self) -> float:
        return self.record.median

    @property
    def key(self) -> int:
        return self.index.structural_hash


class Population:
    """Members keyed by structural hash, in insertion order."""

    def __init__(self, capacity: int) -> None:
        self.capacity = capacity
        self._members: Dict[int, Member] = {}

    def __len__(self) -> int:
        return len(self._members)

    def __contains__(self, key: int) -> bool:
        return key in self._members

    def __iter__(self):
        return iter(self._members.values())

    @property
    def members(self) -> List[Member]:
        return list(self._members.values())

    def add(self, m: Member) -> bool:
        if m.key in self._members:
            return False
        self._members[m.key] = m
        return True

    def remove(self, key: int) -> None:
        del self._members[key]

    def best(self) -> Member:
        if not self._members:
            raise ValueError("empty population")
        return min(self._members.values(), key=lambda m: m.fitness)

    def worst(self) -> Member:
        if not self._members:
            raise ValueError("empty population")
        return max(self._members.values(), key=lambda m: m.fitness)


def tournament_selection(
    population: Population, s_t: int, rng: np.random.Generator, q: float = 50.0
) -> Tuple[Member, float, List[Member]]:
    """(fittest sample member, admission threshold, sample).

    The threshold is the q-th percentile of the sample's fitness; q = 0 admits
    every mutant.
    """
    members = population.members
    if not members:
        raise ValueError("tournament on an empty population")
    if not 1 <= s_t <= len(members):
        raise ValueError(f"tournament size {s_t} outside [1, {len(members)}]")
    pick = rng.choice(len(members), size=s_t, replace=False)
    sample = [members[i] for i in sorted(pick)]
    best = min(sample, key=lambda m: m.fitness)
    threshold = math.inf if q == 0 else float(np.percentile([m.fitness for m in sample], q))
    return best, threshold, sample


@dataclass(frozen=True)
class TraceRow:
    generation: int
    best_fitness: float
    population_size: int
    mutation_kind: str
    admitted: bool

    def as_row(self) -> Tuple:
        return (self.generation, f"{self.best_fitness:.1f}", self.population_size, self.mutation_kind, int(self.admitted))


@dataclass
class SearchResult:
    best: Member
    initial_best: Member
    trace: List[TraceRow]
    generation_best: List[float]
    evaluations: int
    cache_hits: int
    aborted: int
    elapsed_s: float
    population: List[Member] = field(default_factory=list)

    def best_config(self, **metadata) -> IndexConfig:
        return self.best.index.to_config(fitness=self.best.fitness, **metadata)


def _evict(population: Population, sample: Sequence[Member], mutant: Member) -> Member:
    live = [m for m in sample if m.key in population]
    victim = max(live, key=lambda m: m.fitness) if live else population.worst()
    best = population.best()
    if victim.key == best.key and mutant.fitness > victim.fitness:
        # only reachable with q = 0: never give up the global best for a worse mutant
        victim = population.worst()
    population.remove(victim.key)
    return victim


def genetic_search(
    params: GeneticParams,
    dataset: Dataset,
    evaluator: Evaluator,
    dist: Optional[MutationDistributions] = None,
    *,
    init_spec: Optional[BulkloadSpec] = None,
    trace_file: Optional[IO[str]] = None,
    on_generation: Optional[Callable[[int, Population], None]] = None,
) -> SearchResult:
    """Run the search; returns the fittest member of the final population.

    Every random draw comes from generators derived from ``params.master_seed``,
    so with the deterministic cost model the whole run is reproducible.
    """
    t0 = time.perf_counter()
    dist = dist or MutationDistributions()
    init_ss, search_ss = np.random.SeedSequence(params.master_seed).spawn(2)
    rng = np.random.default_rng(search_ss)
    spec = init_spec or default_spec(dataset.n)
    population = Population(params.s_pi)
    for index in init_population(dataset.keys, params.s_init, np.random.default_rng(init_ss), spec):
        if index.structural_hash in population:
            continue
        population.add(Member(index, evaluator.evaluate(index)))
        if len(population) > params.s_pi:
            population.remove(population.worst().key)
    initial_best = population.best()

    writer = None
    if trace_file is not None:
        writer = csv.writer(trace_file)
        writer.writerow(TRACE_COLUMNS)
    trace: List[TraceRow] = []
    gen_best: List[float] = []
    aborted = 0

    for g in range(params.g_max):
        s_t = params.tournament_size(len(population))
        parent, threshold, sample = tournament_selection(population, s_t, rng, params.q)
        for _ in range(params.s_max):
            mutant = kind = None
            for _attempt in range(params.max_draws):
                try:
                    mutant, info = mutate(parent.index, rng, dist)
                    kind = info.kind
                    break
                except MutationAborted:
                    aborted += 1
            admitted = False
            if mutant is not None and mutant.structural_hash not in population:
                m = Member(mutant, evaluator.evaluate(mutant))
                if m.fitness <= threshold:
                    population.add(m)
                    admitted = True
                    if len(population) > params.s_pi:
                        _evict(population, sample, m)
            row = TraceRow(
                g, population.best().fitness, len(population), kind.label if kind is not None else "none", admitted
            )
            trace.append(row)
            if writer is not None:
                writer.writerow(row.as_row())
        gen_best.append(population.best().fitness)
        if on_generation is not None:
            on_generation(g, population)
        if g % 100 == 0:
            log.info("generation %d: best %.1f, population %d", g, gen_best[-1], len(population))
    return SearchResult(
        best=population.best(),
        initial_best=initial_best,
        trace=trace,
        generation_best=gen_best,
        evaluations=evaluator.measurements,
        cache_hits=evaluator.cache_hits,
        aborted=aborted,
        elapsed_s=time.perf_counter() - t0,
        population=population.members,
    )
