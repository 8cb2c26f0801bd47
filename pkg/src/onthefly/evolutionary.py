"""Real-valued evolutionary algorithm for fitting repressilator parameters.

A population is a pair ``(x, f)``: genomes of shape ``(n, d)`` and their
fitness values of shape ``(n,)``. Fitness is minimised, so the "least fit"
individuals are the ones with the highest values.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ConfigError
from .objectives import REPRESSILATOR_BOX, BoxDomain, repressilator_fitness_batch


@dataclass
class Individual:
    genome: np.ndarray
    fitness: float = float("nan")


@dataclass
class EAConfig:
    pop_size: int = 100
    generations: int = 10
    mutation_std: float = 1.0
    recomb_flag: int = 1
    mut_flag: int = 1
    parent_fraction: float = 0.25
    replacement_count: int | None = None
    domain: BoxDomain = REPRESSILATOR_BOX
    fitness: Callable = field(default=repressilator_fitness_batch, repr=False)

    def __post_init__(self):
        if int(self.pop_size) != self.pop_size or self.pop_size < 2:
            raise ConfigError("pop_size must be an integer >= 2", field="pop_size")
        self.pop_size = int(self.pop_size)
        if int(self.generations) != self.generations or self.generations < 0:
            raise ConfigError("generations must be a non-negative integer", field="generations")
        self.generations = int(self.generations)
        if not self.mutation_std >= 0:
            raise ConfigError("mutation_std must be >= 0", field="mutation_std")
        for name in ("recomb_flag", "mut_flag"):
            if getattr(self, name) not in (0, 1):
                raise ConfigError(f"{name} must be 0 or 1", field=name)
            setattr(self, name, int(getattr(self, name)))
        if not 0 < self.parent_fraction <= 1:
            raise ConfigError("parent_fraction must lie in (0, 1]", field="parent_fraction")
        if self.replacement_count is None:
            self.replacement_count = math.ceil(self.pop_size / 5)
        if not 1 <= self.replacement_count < self.pop_size:
            raise ConfigError("replacement_count must be in [1, pop_size)",
                              field="replacement_count")


@dataclass
class GenerationStats:
    generation: int
    best_fitness: float
    mean_fitness: float
    std_fitness: float


def init_population(pop_size, rng, domain=REPRESSILATOR_BOX, fitness=repressilator_fitness_batch):
    x = rng.uniform(domain.lower, domain.upper, size=(pop_size, domain.dimension))
    return x, np.asarray(fitness(x), dtype=float)


def select_parents(f, fraction):
    """Indices of the ``ceil(fraction * n)`` lowest-fitness individuals (ties by index)."""
    k = math.ceil(fraction * len(f))
    return np.argsort(f, kind="stable")[:k]


def one_point_crossover(a, b, rng, cut=None):
    """Offspring ``a[:cut] + b[cut:]`` with ``cut`` uniform in ``1..len(a)-1``."""
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    if cut is None:
        cut = int(rng.integers(1, a.size))
    return np.concatenate([a[:cut], b[cut:]])


def mutate(genome, std, rng, domain=REPRESSILATOR_BOX):
    """Add N(0, std^2) to one uniformly chosen gene, then clamp to ``domain``."""
    child = np.array(genome, dtype=float)
    gene = int(rng.integers(child.size))
    child[gene] += rng.normal(0.0, std)
    return domain.clip(child)


def _offspring(x, f, cfg, rng, mutation_std):
    pool = select_parents(f, cfg.parent_fraction)
    children = []
    for _ in range(cfg.replacement_count):
        if cfg.recomb_flag:
            if pool.size >= 2:
                i, j = rng.choice(pool, size=2, replace=False)
            else:
                i = j = pool[0]
            child = one_point_crossover(x[i], x[j], rng)
        else:
            child = x[rng.choice(pool)].copy()
        if cfg.mut_flag:
            child = mutate(child, mutation_std, rng, cfg.domain)
        children.append(child)
    return np.array(children)


def ea_step(x, f, recomb_flag, mut_flag, cfg, rng, mutation_std=None):
    """One generation: breed ``replacement_count`` children and replace the worst.

    With both flags 0 the population is returned untouched. All random draws
    happen before the (batched) fitness evaluation.
    """
    if len(x) != cfg.pop_size:
        raise ConfigError(f"population has {len(x)} members, expected {cfg.pop_size}",
                          field="pop_size")
    if not (recomb_flag or mut_flag):
        return x, f
    if mutation_std is None:
        mutation_std = cfg.mutation_std
    step_cfg = cfg
    if (recomb_flag, mut_flag) != (cfg.recomb_flag, cfg.mut_flag):
        step_cfg = _with_flags(cfg, recomb_flag, mut_flag)
    children = _offspring(x, f, step_cfg, rng, mutation_std)
    child_f = np.asarray(cfg.fitness(children), dtype=float)
    worst = np.argsort(f, kind="stable")[len(f) - cfg.replacement_count:]
    x, f = x.copy(), f.copy()
    x[worst] = children
    f[worst] = child_f
    return x, f


def _with_flags(cfg, recomb_flag, mut_flag):
    return EAConfig(cfg.pop_size, cfg.generations, cfg.mutation_std, recomb_flag, mut_flag,
                    cfg.parent_fraction, cfg.replacement_count, cfg.domain, cfg.fitness)


def generation_stats(generation, f):
    return GenerationStats(generation, float(np.min(f)), float(np.mean(f)), float(np.std(f)))


def iter_ea(cfg, rng, params=None):
    """Yield ``(generation, x, f)`` for generation 0 (initial) through ``cfg.generations``.

    ``params["mutation_std"]`` is read at the start of each generation.
    """
    if params is None:
        params = {"mutation_std": cfg.mutation_std}
    x, f = init_population(cfg.pop_size, rng, cfg.domain, cfg.fitness)
    yield 0, x, f
    for g in range(1, cfg.generations + 1):
        x, f = ea_step(x, f, cfg.recomb_flag, cfg.mut_flag, cfg, rng,
                       mutation_std=params["mutation_std"])
        yield g, x, f


def ea_run(cfg, rng):
    return [generation_stats(g, f) for g, _, f in iter_ea(cfg, rng)]
