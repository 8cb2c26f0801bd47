"""Rule-based on-the-fly tuning between repetitions.

Each repetition is classified (diverged / plateau / improving / converged)
and a fixed rule table adjusts the iteration budget first and the step size
second. The multipliers and thresholds live in :class:`Rules`.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

from .errors import ConfigError
from .harness import ALPHA_KEY, DEFAULT_CONFIGS, ITERATIONS_KEY, Session, check_pairing, mix_seed

DEFAULT_TARGET_LOSS = {"gd": 0.01, "nm": 0.01, "mh": 0.05, "sa": 0.05, "ea": 1.0}
TUNE_COLUMNS = ("repetition", "alpha", "iterations", "best_loss", "verdict")


class Verdict(str, enum.Enum):
    DIVERGED = "diverged"
    PLATEAU = "plateau"
    IMPROVING = "improving"
    CONVERGED = "converged"

    def __str__(self):
        return self.value


@dataclass(frozen=True)
class Rules:
    plateau_tol: float = 1e-3
    grow: float = 2.0
    shrink: float = 0.5
    probe_after: int = 2


@dataclass(frozen=True)
class ControllerState:
    current_alpha: float
    current_iterations: int
    stable_reps: int = 0
    last_best_loss: float = math.inf
    iteration_cap: int = 10000
    target_loss: float = 0.01

    def __post_init__(self):
        if not self.current_alpha > 0:
            raise ConfigError("alpha must be positive", field="alpha")
        if not 1 <= self.current_iterations <= self.iteration_cap:
            raise ConfigError("iterations must lie in [1, iteration_cap]", field="iterations")


@dataclass(frozen=True)
class AdjustmentEvent:
    repetition: int
    parameter: str
    old: float
    new: float
    source: str = "controller"
    reason: str = "manual"

    def to_dict(self):
        return {"repetition": self.repetition, "parameter": self.parameter, "old": self.old,
                "new": self.new, "source": self.source, "reason": self.reason}


def classify_repetition(trace, target_loss, plateau_tol=1e-3):
    losses = list(trace.losses)
    if not losses:
        raise ConfigError("cannot classify an empty trace")
    if getattr(trace, "diverged", False) or losses[-1] > losses[0]:
        return Verdict.DIVERGED
    if min(losses) <= target_loss:
        return Verdict.CONVERGED
    mid = losses[(len(losses) - 1) // 2]
    improvement = (mid - losses[-1]) / abs(mid) if mid else 0.0
    if improvement < plateau_tol:
        return Verdict.PLATEAU
    return Verdict.IMPROVING


def next_params(state, verdict, repetition=0, rules=Rules()):
    """Apply the first matching rule. Returns ``(new_state, events)``."""
    verdict = Verdict(verdict)
    alpha, iters = state.current_alpha, state.current_iterations

    if verdict is Verdict.DIVERGED:
        alpha = alpha * rules.shrink
    elif verdict is Verdict.PLATEAU and iters < state.iteration_cap:
        iters = min(int(iters * rules.grow), state.iteration_cap)
    elif verdict is Verdict.PLATEAU:
        alpha = alpha * rules.shrink
    elif verdict is Verdict.IMPROVING and state.stable_reps >= rules.probe_after:
        alpha = alpha * rules.grow
    else:
        return replace(state, stable_reps=state.stable_reps + 1), []

    events = []
    if alpha != state.current_alpha:
        events.append(AdjustmentEvent(repetition, "alpha", state.current_alpha, alpha,
                                      reason=verdict.value))
    if iters != state.current_iterations:
        events.append(AdjustmentEvent(repetition, "iterations", state.current_iterations, iters,
                                      reason=verdict.value))
    return replace(state, current_alpha=alpha, current_iterations=iters, stable_reps=0), events


@dataclass
class TuneRow:
    repetition: int
    alpha: float
    iterations: int
    best_loss: float
    verdict: str
    seed: int = 0
    evaluations: int = 0

    def as_tuple(self):
        return (self.repetition, self.alpha, self.iterations, self.best_loss, self.verdict)


@dataclass
class TuneTable:
    algorithm: str
    objective: str
    rows: list = field(default_factory=list)
    events: list = field(default_factory=list)

    columns = TUNE_COLUMNS

    @property
    def chosen(self):
        """Row of the best repetition (lowest best_loss, earliest on ties)."""
        if not self.rows:
            return None
        return min(self.rows, key=lambda r: (r.best_loss, r.repetition))

    def best_so_far(self):
        out, best = [], math.inf
        for r in self.rows:
            best = min(best, r.best_loss)
            out.append(best)
        return out

    def history(self):
        return [(r.alpha, r.iterations) for r in self.rows]


def replay_verdicts(state, verdicts, rules=Rules()):
    """Parameter history produced by a scripted verdict sequence (no optimiser runs)."""
    history = [(state.current_alpha, state.current_iterations)]
    events = []
    for rep, verdict in enumerate(verdicts, start=1):
        state, evs = next_params(state, verdict, rep, rules)
        events.extend(evs)
        history.append((state.current_alpha, state.current_iterations))
    return history, events, state


def initial_state(algorithm, alpha=None, iterations=None, iteration_cap=10000, target_loss=None):
    defaults = DEFAULT_CONFIGS[algorithm]
    return ControllerState(
        current_alpha=float(alpha if alpha is not None else defaults[ALPHA_KEY[algorithm]]),
        current_iterations=int(iterations if iterations is not None
                               else defaults[ITERATIONS_KEY[algorithm]]),
        iteration_cap=iteration_cap,
        target_loss=DEFAULT_TARGET_LOSS[algorithm] if target_loss is None else target_loss)


def tune(algorithm, objective, n_reps=20, state=None, master_seed=0, base_config=None,
         rules=Rules(), on_row=None):
    """Run ``n_reps`` repetitions, adjusting parameters between them.

    Repetition ``r`` (1-based) is seeded with ``mix_seed(master_seed, r)`` and
    starts from a fresh uniform random point (the EA always starts from a
    fresh random population).
    """
    check_pairing(algorithm, objective)
    state = state or initial_state(algorithm)
    config = dict(base_config or {})
    if algorithm != "ea":
        config["init"] = "random"
    table = TuneTable(algorithm, str(objective))
    for rep in range(1, n_reps + 1):
        config[ALPHA_KEY[algorithm]] = state.current_alpha
        config[ITERATIONS_KEY[algorithm]] = state.current_iterations
        seed = mix_seed(master_seed, rep)
        session = Session(algorithm, objective, config, seed)
        while session.step() is not None:
            pass
        trace = session.loss_trace()
        verdict = classify_repetition(trace, state.target_loss, rules.plateau_tol)
        row = TuneRow(rep, state.current_alpha, state.current_iterations, session.metric(),
                      verdict.value, seed=seed, evaluations=session.evaluations())
        table.rows.append(row)
        if on_row is not None:
            on_row(row)
        state, events = next_params(state, verdict, rep, rules)
        state = replace(state, last_best_loss=row.best_loss)
        table.events.extend(events)
    return table
