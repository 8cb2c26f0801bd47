"""Objective functions, target densities and the repressilator fitness.

Points are plain 1-d float arrays.  Everything here is a pure function of its
inputs; the only mutable thing passed in is a caller-owned numpy ``Generator``.
"""
from __future__ import annotations

import csv
import enum
import functools
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .errors import ArgumentError, IntegrationBlowupError, UnsupportedObjectiveError


class ObjectiveId(str, enum.Enum):
    BOHACHEVSKY = "bohachevsky"
    BOOTH = "booth"
    MH_DENSITY = "mh_density"
    SA_DENSITY = "sa_density"
    REPRESSILATOR = "repressilator"

    def __str__(self):
        return self.value


@dataclass(frozen=True)
class BoxDomain:
    """Closed axis-aligned box ``[lower[0], upper[0]] x ... x [lower[d-1], upper[d-1]]``."""

    lower: tuple
    upper: tuple

    def __post_init__(self):
        lower = tuple(float(v) for v in self.lower)
        upper = tuple(float(v) for v in self.upper)
        if len(lower) != len(upper):
            raise ArgumentError("lower and upper bounds differ in length")
        if any(lo > hi for lo, hi in zip(lower, upper)):
            raise ArgumentError("lower bound exceeds upper bound")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @property
    def dimension(self):
        return len(self.lower)

    def clip(self, x):
        return np.clip(np.asarray(x, dtype=float), self.lower, self.upper)

    def to_dict(self):
        return {"lower": list(self.lower), "upper": list(self.upper)}


SQUARE_100 = BoxDomain((-100.0, -100.0), (100.0, 100.0))
DENSITY_BOX = BoxDomain((-3.0, 2.0), (3.0, 4.0))
# (alpha0, eta, beta, alpha)
REPRESSILATOR_BOX = BoxDomain((-2.0, 0.0, -5.0, 500.0), (10.0, 10.0, 20.0, 2500.0))

DOMAINS = {
    ObjectiveId.BOHACHEVSKY: SQUARE_100,
    ObjectiveId.BOOTH: SQUARE_100,
    ObjectiveId.MH_DENSITY: DENSITY_BOX,
    ObjectiveId.SA_DENSITY: DENSITY_BOX,
    ObjectiveId.REPRESSILATOR: REPRESSILATOR_BOX,
}


def domain_of(objective):
    return DOMAINS[ObjectiveId(objective)]


def dimension_of(objective):
    return domain_of(objective).dimension


def _as_point(x, dim):
    x = np.asarray(x, dtype=float)
    if x.shape != (dim,):
        raise ArgumentError(f"expected a point of dimension {dim}, got shape {x.shape}")
    return x


# Vectorised formulas; x1, x2 may be scalars or arrays of matching shape.

def _bohachevsky(x1, x2):
    return (x1**2 + 2 * x2**2 - 0.3 * np.cos(3 * np.pi * x1)
            - 0.4 * np.cos(4 * np.pi * x2) + 0.7)


def _booth(x1, x2):
    return (x1 + 2 * x2 - 7) ** 2 + (2 * x1 + x2 - 5) ** 2


def _mh_log_density(x1, x2):
    return -0.01 * (np.sin(x1) * np.exp((1 - np.cos(x2)) ** 2)
                    + np.cos(x2) * np.exp((1 - np.sin(x1)) ** 2)
                    + (x1 - x2) ** 2)


def _sa_log_density(x1, x2):
    return -0.02 * (np.cos(x1) * np.exp((1 - np.sin(x2)) ** 2)
                    - np.sin(x2) * np.exp((1 + np.cos(x1)) ** 2)
                    - (x1 - x2) ** 2)


_SCALAR = {
    ObjectiveId.BOHACHEVSKY: _bohachevsky,
    ObjectiveId.BOOTH: _booth,
}
_LOG_DENSITY = {
    ObjectiveId.MH_DENSITY: _mh_log_density,
    ObjectiveId.SA_DENSITY: _sa_log_density,
}


def _objective_id(objective):
    try:
        return ObjectiveId(objective)
    except ValueError:
        raise UnsupportedObjectiveError(f"unknown objective {objective!r}") from None


def evaluate(objective, x):
    """Value of a scalar objective (bohachevsky or booth) at ``x``.

    The domain is not enforced; any finite 2-vector is accepted.
    """
    oid = _objective_id(objective)
    if oid not in _SCALAR:
        raise UnsupportedObjectiveError(f"{oid} has no scalar objective")
    x = _as_point(x, 2)
    return float(_SCALAR[oid](x[0], x[1]))


def gradient(objective, x):
    """Analytic gradient; only available for bohachevsky."""
    oid = _objective_id(objective)
    if oid is not ObjectiveId.BOHACHEVSKY:
        raise UnsupportedObjectiveError(f"no analytic gradient for {oid}")
    x = _as_point(x, 2)
    return np.array([
        2 * x[0] + 0.9 * np.pi * np.sin(3 * np.pi * x[0]),
        4 * x[1] + 1.6 * np.pi * np.sin(4 * np.pi * x[1]),
    ])


def log_density(objective, x):
    """Log of the unnormalised target density (mh_density or sa_density)."""
    oid = _objective_id(objective)
    if oid not in _LOG_DENSITY:
        raise UnsupportedObjectiveError(f"{oid} is not a density target")
    x = _as_point(x, 2)
    return float(_LOG_DENSITY[oid](x[0], x[1]))


def contains(domain, x):
    x = np.asarray(x, dtype=float)
    if x.shape != (domain.dimension,):
        raise ArgumentError(
            f"point of shape {x.shape} does not match domain dimension {domain.dimension}")
    return bool(np.all(x >= domain.lower) and np.all(x <= domain.upper))


def sample_uniform(domain, rng):
    return rng.uniform(domain.lower, domain.upper)


def grid_eval(objective, resolution):
    """Evaluate a 2-d objective on a ``resolution x resolution`` lattice of its domain.

    Returns an array indexed ``[i2, i1]`` (row-major with x1 varying fastest).
    Densities are reported as ``exp(log_density)``.
    """
    oid = _objective_id(objective)
    if oid is ObjectiveId.REPRESSILATOR:
        raise UnsupportedObjectiveError("grid_eval needs a 2-dimensional objective")
    if int(resolution) < 2:
        raise ArgumentError("resolution must be at least 2")
    x1, x2 = grid_axes(oid, resolution)
    X1, X2 = np.meshgrid(x1, x2)
    if oid in _SCALAR:
        return _SCALAR[oid](X1, X2)
    return np.exp(_LOG_DENSITY[oid](X1, X2))


def grid_axes(objective, resolution):
    dom = domain_of(objective)
    return (np.linspace(dom.lower[0], dom.upper[0], int(resolution)),
            np.linspace(dom.lower[1], dom.upper[1], int(resolution)))


def grid_rows(objective, resolution):
    """Yield ``(x1, x2, value)`` rows in the CSV order of :func:`grid_eval`."""
    values = grid_eval(objective, resolution)
    x1, x2 = grid_axes(objective, resolution)
    for j, b in enumerate(x2):
        for i, a in enumerate(x1):
            yield float(a), float(b), float(values[j, i])


# --------------------------------------------------------------------------
# Repressilator
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class RepressilatorParams:
    alpha0: float
    eta: float
    beta: float
    alpha: float

    def as_array(self):
        return np.array([self.alpha0, self.eta, self.beta, self.alpha], dtype=float)

    @classmethod
    def from_array(cls, genome):
        a0, eta, beta, alpha = (float(v) for v in genome)
        return cls(a0, eta, beta, alpha)


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    states: np.ndarray  # (len(times), 6): m1, m2, m3, p1, p2, p3


REFERENCE_PARAMS = RepressilatorParams(1.0, 2.0, 5.0, 1000.0)
REFERENCE_Y0 = (0.0, 0.0, 0.0, 1.0, 2.0, 3.0)
REFERENCE_DT = 0.05
REFERENCE_T_END = 10.0
BLOWUP_PENALTY = 1e12
GOLDEN_TRAJECTORY = "reference_trajectory_v1.csv"
TRAJECTORY_COLUMNS = ("t", "m1", "m2", "m3", "p1", "p2", "p3")

# p_j repressing m_i for i = 1, 2, 3
_REPRESSOR = np.array([2, 0, 1])


def _rhs(y, params):
    """Vector field for a batch of states ``y`` (n, 6) and params (n, 4)."""
    a0, eta, beta, alpha = (params[:, k:k + 1] for k in range(4))
    m, p = y[:, :3], y[:, 3:]
    dm = -m + alpha / (1.0 + p[:, _REPRESSOR] ** eta) + a0
    dp = -beta * (p - m)
    return np.hstack([dm, dp])


def _n_steps(dt, t_end):
    n = int(round(t_end / dt))
    if not np.isclose(n * dt, t_end, rtol=1e-9, atol=1e-12):
        raise ArgumentError(f"t_end={t_end} is not a whole number of steps of dt={dt}")
    return n


def _integrate_batch(params, y0, dt, n):
    """Classical RK4 for a batch. Returns (states (n+1, b, 6), blowup_step (b,))."""
    b = params.shape[0]
    y = np.broadcast_to(np.asarray(y0, dtype=float), (b, 6)).copy()
    out = np.empty((n + 1, b, 6))
    out[0] = y
    blown = np.full(b, -1)
    with np.errstate(all="ignore"):
        for k in range(1, n + 1):
            k1 = _rhs(y, params)
            k2 = _rhs(y + 0.5 * dt * k1, params)
            k3 = _rhs(y + 0.5 * dt * k2, params)
            k4 = _rhs(y + dt * k3, params)
            y = y + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
            bad = ~np.all(np.isfinite(y), axis=1) & (blown < 0)
            blown[bad] = k
            out[k] = y
    return out, blown


def repressilator_trajectory(p, y0, dt, t_end):
    """Integrate the 6-state repressilator with fixed-step RK4.

    Raises :class:`IntegrationBlowupError` carrying the first time at which
    the state became non-finite.
    """
    if dt <= 0 or t_end < dt:
        raise ArgumentError("need dt > 0 and t_end >= dt")
    if p.eta < 0:
        raise ArgumentError("Hill coefficient eta must be non-negative")
    n = _n_steps(dt, t_end)
    states, blown = _integrate_batch(p.as_array()[None, :], y0, dt, n)
    if blown[0] >= 0:
        raise IntegrationBlowupError(blown[0] * dt)
    return Trajectory(times=np.arange(n + 1) * dt, states=states[:, 0, :])


@functools.lru_cache(maxsize=1)
def reference_trajectory():
    return repressilator_trajectory(REFERENCE_PARAMS, REFERENCE_Y0, REFERENCE_DT,
                                    REFERENCE_T_END)


def repressilator_fitness_batch(genomes):
    """SSE against the reference trajectory for each row of ``genomes`` (n, 4).

    Rows whose integration blows up (or whose SSE is not finite) get
    ``BLOWUP_PENALTY``.
    """
    genomes = np.atleast_2d(np.asarray(genomes, dtype=float))
    ref = reference_trajectory().states
    n = ref.shape[0] - 1
    states, blown = _integrate_batch(genomes, REFERENCE_Y0, REFERENCE_DT, n)
    with np.errstate(all="ignore"):
        sse = np.sum((states - ref[:, None, :]) ** 2, axis=(0, 2))
    bad = (blown >= 0) | ~np.isfinite(sse) | (genomes[:, 1] < 0)
    sse[bad] = BLOWUP_PENALTY
    return sse


def repressilator_fitness(p):
    if isinstance(p, RepressilatorParams):
        p = p.as_array()
    return float(repressilator_fitness_batch(np.asarray(p, dtype=float)[None, :])[0])


def write_trajectory_csv(traj, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRAJECTORY_COLUMNS)
        for t, row in zip(traj.times, traj.states):
            w.writerow([repr(float(t))] + [repr(float(v)) for v in row])


def read_trajectory_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if tuple(rows[0]) != TRAJECTORY_COLUMNS:
        raise ArgumentError(f"{path}: unexpected header {rows[0]}")
    data = np.array([[float(v) for v in r] for r in rows[1:]])
    return Trajectory(times=data[:, 0], states=data[:, 1:])


def golden_trajectory():
    """The reference trajectory shipped with the package."""
    with resources.as_file(resources.files(__package__) / "data" / GOLDEN_TRAJECTORY) as path:
        return read_trajectory_csv(path)
