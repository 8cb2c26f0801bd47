"""Fixed-step full-gradient descent on the Bohachevsky objective."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .objectives import SQUARE_100, ObjectiveId, contains, evaluate, gradient

OBJECTIVE = ObjectiveId.BOHACHEVSKY
DIVERGENCE_LOSS = 1e12


@dataclass
class GDConfig:
    alpha: float = 0.001
    iterations: int = 10
    init: tuple = (0.0, 0.0)
    clip_to_domain: bool = True

    def __post_init__(self):
        if not self.alpha > 0:
            raise ConfigError("alpha must be positive", field="alpha")
        if int(self.iterations) != self.iterations or self.iterations < 0:
            raise ConfigError("iterations must be a non-negative integer", field="iterations")
        self.iterations = int(self.iterations)
        if not contains(SQUARE_100, self.init):
            raise ConfigError("init lies outside [-100, 100]^2", field="init")


@dataclass
class LossTrace:
    losses: list = field(default_factory=list)
    points: list = field(default_factory=list)
    diverged: bool = False

    @property
    def best_index(self):
        return int(np.argmin(self.losses))

    @property
    def best_loss(self):
        return float(self.losses[self.best_index])

    @property
    def best_point(self):
        return self.points[self.best_index]

    @property
    def final_loss(self):
        return float(self.losses[-1])


def gd_step(x, alpha, clip_to_domain=True):
    x_new = np.asarray(x, dtype=float) - alpha * gradient(OBJECTIVE, x)
    if clip_to_domain:
        x_new = SQUARE_100.clip(x_new)
    return x_new


def iter_gd(cfg, params=None):
    """Yield ``(iteration, point, loss)`` starting with the initial point.

    ``params`` is a mutable mapping holding ``"alpha"``; it is read once per
    step, so a caller may change it between two yields. Iteration stops early
    (after yielding nothing further) when the loss becomes non-finite or
    exceeds ``DIVERGENCE_LOSS``; the generator then returns ``True``.
    """
    if params is None:
        params = {"alpha": cfg.alpha}
    x = np.asarray(cfg.init, dtype=float)
    yield 0, x, evaluate(OBJECTIVE, x)
    for k in range(1, cfg.iterations + 1):
        with np.errstate(all="ignore"):
            x = gd_step(x, params["alpha"], cfg.clip_to_domain)
            loss = evaluate(OBJECTIVE, x) if np.all(np.isfinite(x)) else float("nan")
        if not np.isfinite(loss) or loss > DIVERGENCE_LOSS:
            return True
        yield k, x, loss
    return False


def gd_run(cfg):
    trace = LossTrace()
    gen = iter_gd(cfg)
    while True:
        try:
            _, x, loss = next(gen)
        except StopIteration as stop:
            trace.diverged = bool(stop.value)
            return trace
        trace.points.append(x)
        trace.losses.append(loss)
