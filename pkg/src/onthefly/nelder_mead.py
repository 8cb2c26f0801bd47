"""Nelder-Mead downhill simplex, written from scratch.

Moves follow the usual reflect / expand / contract / shrink cycle with
coefficients ``(rho, chi, gamma, sigma)`` = (1, 2, 0.5, 0.5) by default.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .objectives import SQUARE_100, contains, evaluate

DEFAULT_COEFFICIENTS = (1.0, 2.0, 0.5, 0.5)
INITIAL_SCALE = 0.05

MOVES = ("reflect", "expand", "outside_contract", "inside_contract", "shrink")


@dataclass
class Simplex:
    vertices: np.ndarray  # (dim + 1, dim)
    values: np.ndarray    # (dim + 1,)

    def ordered(self):
        order = np.argsort(self.values, kind="stable")
        return Simplex(self.vertices[order], self.values[order])

    @property
    def diameter(self):
        diff = self.vertices[:, None, :] - self.vertices[None, :, :]
        return float(np.sqrt((diff**2).sum(-1)).max())

    @property
    def spread(self):
        return float(self.values.max() - self.values.min())


@dataclass
class NMConfig:
    atol: float = 0.005
    maxiter: int = 100
    init: tuple = (0.0, 0.0)
    coefficients: tuple = DEFAULT_COEFFICIENTS

    def __post_init__(self):
        if not self.atol > 0:
            raise ConfigError("atol must be positive", field="atol")
        if int(self.maxiter) != self.maxiter or self.maxiter < 1:
            raise ConfigError("maxiter must be an integer >= 1", field="maxiter")
        self.maxiter = int(self.maxiter)
        # the search domain only constrains the starting point
        if len(self.init) == 2 and not contains(SQUARE_100, self.init):
            raise ConfigError("init lies outside [-100, 100]^2", field="init")
        rho, chi, gamma, sigma = self.coefficients
        if not (rho > 0 and chi > 1 and 0 < gamma < 1 and 0 < sigma < 1):
            raise ConfigError("invalid Nelder-Mead coefficients", field="coefficients")


@dataclass
class NMResult:
    best_point: np.ndarray
    best_value: float
    iterations_used: int
    converged: bool
    trace: list = field(default_factory=list)
    moves: list = field(default_factory=list)


def _as_function(objective):
    if callable(objective):
        return lambda x: float(objective(x))
    return lambda x: evaluate(objective, x)


def initial_simplex(init, scale, objective=None):
    """Axis-aligned simplex around ``init``; offsets are relative with an absolute floor of 1."""
    init = np.asarray(init, dtype=float)
    dim = init.size
    vertices = np.tile(init, (dim + 1, 1))
    for i in range(dim):
        vertices[i + 1, i] += scale * max(1.0, abs(init[i]))
    if objective is None:
        values = np.full(dim + 1, np.nan)
    else:
        f = _as_function(objective)
        values = np.array([f(v) for v in vertices])
    return Simplex(vertices, values)


def nm_iterate(simplex, objective, coeffs=DEFAULT_COEFFICIENTS):
    """Apply exactly one Nelder-Mead move. Returns ``(new_simplex, move_name)``."""
    f = _as_function(objective)
    rho, chi, gamma, sigma = coeffs
    s = simplex.ordered()
    x, fx = s.vertices.copy(), s.values.copy()
    best, second_worst, worst = fx[0], fx[-2], fx[-1]
    centroid = x[:-1].mean(axis=0)

    xr = centroid + rho * (centroid - x[-1])
    fr = f(xr)
    if fr < best:
        xe = centroid + rho * chi * (centroid - x[-1])
        fe = f(xe)
        if fe < fr:
            x[-1], fx[-1], move = xe, fe, "expand"
        else:
            x[-1], fx[-1], move = xr, fr, "reflect"
    elif fr <= second_worst:
        x[-1], fx[-1], move = xr, fr, "reflect"
    else:
        if fr < worst:
            xc = centroid + rho * gamma * (centroid - x[-1])
            fc = f(xc)
            ok, move = fc <= fr, "outside_contract"
        else:
            xc = centroid - gamma * (centroid - x[-1])
            fc = f(xc)
            ok, move = fc < worst, "inside_contract"
        if ok:
            x[-1], fx[-1] = xc, fc
        else:
            x[1:] = x[0] + sigma * (x[1:] - x[0])
            fx[1:] = [f(v) for v in x[1:]]
            move = "shrink"
    return Simplex(x, fx).ordered(), move


def is_converged(simplex, atol):
    return simplex.diameter < atol and simplex.spread < atol


def iter_nm(objective, cfg, params=None):
    """Yield ``(iteration, simplex, move)``; iteration 0 is the initial simplex.

    ``params["atol"]`` is read before each move, so the tolerance can be
    changed between yields. Returns the converged flag.
    """
    if params is None:
        params = {"atol": cfg.atol}
    s = initial_simplex(cfg.init, INITIAL_SCALE, objective).ordered()
    yield 0, s, "init"
    for k in range(1, cfg.maxiter + 1):
        if is_converged(s, params["atol"]):
            return True
        s, move = nm_iterate(s, objective, cfg.coefficients)
        yield k, s, move
    return is_converged(s, params["atol"])


def nm_minimize(objective, cfg):
    gen = iter_nm(objective, cfg)
    trace, moves = [], []
    best_val, best_pt, used = np.inf, None, 0
    while True:
        try:
            k, s, move = next(gen)
        except StopIteration as stop:
            converged = bool(stop.value)
            break
        used = k
        if s.values[0] < best_val:
            best_val, best_pt = float(s.values[0]), s.vertices[0].copy()
        trace.append(best_val)
        if k:
            moves.append(move)
    return NMResult(best_point=best_pt, best_value=best_val, iterations_used=used,
                    converged=converged, trace=trace, moves=moves)
