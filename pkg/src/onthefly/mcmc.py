"""Metropolis-Hastings and simulated annealing over the 2-d target densities.

All density arithmetic is done on log densities. The proposal is a symmetric
Gaussian random walk, re-drawn until it lands inside the target's box.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ArgumentError, ConfigError, ProposalExhaustedError
from .objectives import ObjectiveId, contains, domain_of, log_density


@dataclass(frozen=True)
class TemperatureSchedule:
    t0: float = 100.0
    cooling: float = 0.95

    def __post_init__(self):
        if not self.t0 > 0:
            raise ConfigError("t0 must be positive", field="t0")
        if not 0 < self.cooling < 1:
            raise ConfigError("cooling must lie in (0, 1)", field="cooling")


@dataclass
class ChainConfig:
    target: str = ObjectiveId.MH_DENSITY
    init: tuple = (-3.0, 2.0)
    n_iterations: int = 1000
    proposal_std: float = 0.2
    temperature_schedule: TemperatureSchedule | None = None
    max_proposal_redraws: int = 1000

    def __post_init__(self):
        self.target = ObjectiveId(self.target)
        if self.target not in (ObjectiveId.MH_DENSITY, ObjectiveId.SA_DENSITY):
            raise ConfigError(f"{self.target} is not a density target", field="target")
        if int(self.n_iterations) != self.n_iterations or self.n_iterations < 0:
            raise ConfigError("n_iterations must be a non-negative integer", field="n_iterations")
        self.n_iterations = int(self.n_iterations)
        if not self.proposal_std > 0:
            raise ConfigError("proposal_std must be positive", field="proposal_std")
        if not contains(domain_of(self.target), self.init):
            raise ConfigError("init lies outside the target domain", field="init")


@dataclass
class ChainStep:
    index: int
    current: np.ndarray
    candidate: np.ndarray
    alpha: float
    u: float
    accepted: bool
    temperature: float
    acceptance_count: int


@dataclass
class SampleRun:
    steps: list = field(default_factory=list)
    accepted_points: list = field(default_factory=list)
    rejected_points: list = field(default_factory=list)
    acceptance_count: int = 0

    @property
    def n_iterations(self):
        return len(self.steps)

    @property
    def acceptance_rate(self):
        return len(self.accepted_points) / self.n_iterations if self.steps else 0.0

    @property
    def mean_alpha(self):
        return float(np.mean([s.alpha for s in self.steps])) if self.steps else 0.0

    def add(self, step):
        self.steps.append(step)
        (self.accepted_points if step.accepted else self.rejected_points).append(step.candidate)
        self.acceptance_count = step.acceptance_count


def propose(current, std, domain, rng, max_redraws=1000):
    current = np.asarray(current, dtype=float)
    for _ in range(max_redraws + 1):
        candidate = current + rng.normal(0.0, std, size=current.shape)
        if contains(domain, candidate):
            return candidate
    raise ProposalExhaustedError(
        f"no in-domain proposal after {max_redraws} redraws (std={std})")


def acceptance_probability(log_p_current, log_p_candidate, temperature=1.0):
    """``min(1, exp((log_p_candidate - log_p_current) / T))``."""
    z = (log_p_candidate - log_p_current) / temperature
    if z >= 0:
        return 1.0
    return math.exp(z)  # underflows to 0.0 for very negative z


def sa_temperature(i, t0, cooling):
    return t0 * cooling**i


def iter_chain(cfg, rng, params=None, log_target=None):
    """Yield one :class:`ChainStep` per iteration.

    ``params`` may hold ``proposal_std`` and, in annealing mode, ``t0`` and
    ``cooling``; each is re-read at the start of every iteration.
    ``log_target`` overrides the log density (used for tests with toy targets).
    """
    if params is None:
        params = {"proposal_std": cfg.proposal_std}
        if cfg.temperature_schedule is not None:
            params["t0"] = cfg.temperature_schedule.t0
            params["cooling"] = cfg.temperature_schedule.cooling
    if log_target is None:
        def log_target(x):
            return log_density(cfg.target, x)
    domain = domain_of(cfg.target)
    current = np.asarray(cfg.init, dtype=float)
    log_p = log_target(current)
    count = 0
    for i in range(cfg.n_iterations):
        if "t0" in params:
            temperature = sa_temperature(i, params["t0"], params["cooling"])
        else:
            temperature = 1.0
        candidate = propose(current, params["proposal_std"], domain, rng,
                            cfg.max_proposal_redraws)
        log_p_cand = log_target(candidate)
        alpha = acceptance_probability(log_p, log_p_cand, temperature)
        u = float(rng.uniform())
        accepted = u < alpha
        count += 1 if accepted else -1
        yield ChainStep(i, current, candidate, alpha, u, accepted, temperature, count)
        if accepted:
            current, log_p = candidate, log_p_cand


def chain_run(cfg, rng, log_target=None):
    run = SampleRun()
    for step in iter_chain(cfg, rng, log_target=log_target):
        run.add(step)
    return run


def density_histogram(points, domain, bins):
    """Occupancy counts on a ``bins x bins`` grid indexed ``[bin_x2, bin_x1]``.

    Cells are equal width; points on the upper boundary fall in the last cell.
    """
    if bins < 1:
        raise ArgumentError("bins must be >= 1")
    grid = np.zeros((bins, bins), dtype=int)
    for p in points:
        if not contains(domain, p):
            raise ArgumentError(f"point {list(p)} lies outside the domain")
        i1, i2 = histogram_cell(p, domain, bins)
        grid[i2, i1] += 1
    return grid


def histogram_cell(p, domain, bins):
    lo, hi = np.asarray(domain.lower), np.asarray(domain.upper)
    width = np.where(hi > lo, hi - lo, 1.0)
    idx = np.floor((np.asarray(p, dtype=float) - lo) / width * bins).astype(int)
    idx = np.clip(idx, 0, bins - 1)
    return int(idx[0]), int(idx[1])
