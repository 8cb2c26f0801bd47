"""Seeded experiment execution and run records.

Every run, batch or live, is driven by a :class:`Session`: a thin wrapper
around one algorithm's iterator that turns each iteration into a trace event
and lets adjustable parameters be changed between iterations. Batch runs,
replays and the live service all go through the same code path, which is
what makes live runs replayable.
"""
from __future__ import annotations

import hashlib
import json
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import evolutionary, gradient_descent, mcmc, nelder_mead
from .errors import ArgumentError, ConfigError
from .objectives import ObjectiveId, domain_of, evaluate, sample_uniform

SCHEMA_VERSION = 1
MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15

ALGORITHMS = ("gd", "nm", "mh", "sa", "ea")

PAIRINGS = {
    "gd": (ObjectiveId.BOHACHEVSKY,),
    "nm": (ObjectiveId.BOOTH, ObjectiveId.BOHACHEVSKY),
    "mh": (ObjectiveId.MH_DENSITY, ObjectiveId.SA_DENSITY),
    "sa": (ObjectiveId.SA_DENSITY, ObjectiveId.MH_DENSITY),
    "ea": (ObjectiveId.REPRESSILATOR,),
}

DEFAULT_CONFIGS = {
    "gd": {"alpha": 0.001, "iterations": 10, "init": "random", "clip_to_domain": True},
    "nm": {"atol": 0.005, "maxiter": 100, "init": "random"},
    "mh": {"n_iterations": 1000, "proposal_std": 0.2, "init": [-3.0, 2.0],
           "max_proposal_redraws": 1000},
    "sa": {"n_iterations": 1000, "proposal_std": 0.2, "init": [-3.0, 2.0],
           "temperature_t0": 100.0, "cooling": 0.95, "max_proposal_redraws": 1000},
    "ea": {"pop_size": 100, "generations": 10, "mutation_std": 1.0, "recomb": 1, "mut": 1,
           "parent_fraction": 0.25, "replacement_count": None},
}

# live-adjustable parameter name -> key in the algorithm's params mapping
ADJUSTABLE = {
    "gd": {"alpha": "alpha"},
    "nm": {"alpha": "atol"},
    "mh": {"proposal_std": "proposal_std"},
    "sa": {"proposal_std": "proposal_std", "temperature_t0": "t0", "cooling": "cooling"},
    "ea": {"mutation_std": "mutation_std"},
}

# the controller's "alpha" and "iterations" for each algorithm
ALPHA_KEY = {"gd": "alpha", "nm": "atol", "mh": "proposal_std", "sa": "proposal_std",
             "ea": "mutation_std"}
ITERATIONS_KEY = {"gd": "iterations", "nm": "maxiter", "mh": "n_iterations",
                  "sa": "n_iterations", "ea": "generations"}


def splitmix64_finalize(z):
    z &= MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def mix_seed(master_seed, repetition):
    """Per-repetition seed: ``finalize(master ^ (repetition * golden_gamma))`` on 64 bits."""
    return splitmix64_finalize((master_seed & MASK64) ^ ((repetition * GOLDEN_GAMMA) & MASK64))


def check_pairing(algorithm, objective):
    if algorithm not in PAIRINGS:
        raise ConfigError(f"unknown algorithm {algorithm!r}", field="algorithm")
    try:
        oid = ObjectiveId(objective)
    except ValueError:
        raise ConfigError(f"unknown objective {objective!r}", field="objective") from None
    if oid not in PAIRINGS[algorithm]:
        allowed = ", ".join(o.value for o in PAIRINGS[algorithm])
        raise ConfigError(f"algorithm {algorithm} cannot run on {oid} (allowed: {allowed})",
                          field="objective")
    return oid


def normalize_config(algorithm, config=None):
    """Merge ``config`` over the algorithm defaults and validate it.

    Unknown keys raise :class:`ConfigError`. The result is JSON-serialisable.
    """
    merged = dict(DEFAULT_CONFIGS[algorithm])
    for key, value in (config or {}).items():
        if key not in merged:
            raise ConfigError(f"unknown config key {key!r} for {algorithm}", field=key)
        merged[key] = value
    init = merged.get("init")
    if init is not None and init != "random":
        merged["init"] = [float(v) for v in init]
    _build(algorithm, ObjectiveId(PAIRINGS[algorithm][0]), merged, None, dry=True)
    return merged


def _resolve_init(init, objective, rng, dry):
    if init == "random":
        if dry:
            return tuple(np.mean([domain_of(objective).lower, domain_of(objective).upper], 0))
        return tuple(float(v) for v in sample_uniform(domain_of(objective), rng))
    return tuple(float(v) for v in init)


def _build(algorithm, objective, c, rng, dry=False):
    """Create the algorithm config object; ``dry`` only validates."""
    if algorithm == "gd":
        return gradient_descent.GDConfig(
            alpha=float(c["alpha"]), iterations=c["iterations"],
            init=_resolve_init(c["init"], objective, rng, dry),
            clip_to_domain=bool(c["clip_to_domain"]))
    if algorithm == "nm":
        return nelder_mead.NMConfig(atol=float(c["atol"]), maxiter=c["maxiter"],
                                    init=_resolve_init(c["init"], objective, rng, dry))
    if algorithm in ("mh", "sa"):
        schedule = None
        if algorithm == "sa":
            schedule = mcmc.TemperatureSchedule(float(c["temperature_t0"]), float(c["cooling"]))
        return mcmc.ChainConfig(
            target=objective,
            init=_resolve_init(c["init"], objective, rng, dry),
            n_iterations=c["n_iterations"], proposal_std=float(c["proposal_std"]),
            temperature_schedule=schedule,
            max_proposal_redraws=int(c["max_proposal_redraws"]))
    return evolutionary.EAConfig(
        pop_size=c["pop_size"], generations=c["generations"],
        mutation_std=float(c["mutation_std"]), recomb_flag=c["recomb"], mut_flag=c["mut"],
        parent_fraction=float(c["parent_fraction"]), replacement_count=c["replacement_count"])


def validate_param(name, value):
    if not isinstance(value, (int, float)) or isinstance(value, bool) or not math.isfinite(value):
        raise ConfigError(f"{name} must be a finite number", field=name)
    if name == "cooling" and not 0 < value < 1:
        raise ConfigError("cooling must lie in (0, 1)", field=name)
    if name == "mutation_std" and value < 0:
        raise ConfigError("mutation_std must be >= 0", field=name)
    if name in ("alpha", "proposal_std", "temperature_t0") and value <= 0:
        raise ConfigError(f"{name} must be positive", field=name)
    return float(value)


def _vec(x):
    return [float(v) for v in x]


def _event(iteration, kind, payload):
    return {"iteration": int(iteration), "kind": kind, "payload": payload}


class Session:
    """One run in progress. Call :meth:`step` until it returns ``None``."""

    def __init__(self, algorithm, objective, config, seed):
        self.algorithm = algorithm
        self.objective = check_pairing(algorithm, objective)
        self.config = normalize_config(algorithm, config)
        self.seed = int(seed)
        self.rng = np.random.default_rng(self.seed)
        self.algo_config = _build(algorithm, self.objective, self.config, self.rng)
        self.next_iteration = 0
        self.finished = False
        self.result = None
        self._start(algorithm)

    # -- setup --------------------------------------------------------------

    def _start(self, algorithm):
        cfg = self.algo_config
        if algorithm == "gd":
            self.params = {"alpha": cfg.alpha}
            self._gen = gradient_descent.iter_gd(cfg, self.params)
            self._trace = gradient_descent.LossTrace()
        elif algorithm == "nm":
            self.params = {"atol": cfg.atol}
            self._nm_evals = 0

            def counted(x, _oid=self.objective):
                self._nm_evals += 1
                return evaluate(_oid, x)

            self._gen = nelder_mead.iter_nm(counted, cfg, self.params)
            self._nm = {"best_value": math.inf, "best_point": None, "trace": [], "used": 0}
        elif algorithm in ("mh", "sa"):
            self.params = {"proposal_std": cfg.proposal_std}
            if cfg.temperature_schedule is not None:
                self.params["t0"] = cfg.temperature_schedule.t0
                self.params["cooling"] = cfg.temperature_schedule.cooling
            self._gen = mcmc.iter_chain(cfg, self.rng, self.params)
            self._run = mcmc.SampleRun()
        else:
            self.params = {"mutation_std": cfg.mutation_std}
            self._gen = evolutionary.iter_ea(cfg, self.rng, self.params)
            self._stats = []
            self._best = (math.inf, None)
            self._final_f = None

    @property
    def init(self):
        return _vec(self.algo_config.init) if self.algorithm != "ea" else None

    # -- parameters ---------------------------------------------------------

    def adjustable(self):
        return tuple(ADJUSTABLE[self.algorithm])

    def current_value(self, name):
        return self.params[ADJUSTABLE[self.algorithm][name]]

    def apply(self, name, value, source="human", reason="manual"):
        """Change a parameter before the next iteration.

        Returns the adjustment event, or ``None`` when the value is unchanged.
        """
        if name not in ADJUSTABLE[self.algorithm]:
            raise ConfigError(f"parameter {name!r} is not adjustable for {self.algorithm}",
                              field="parameter")
        value = validate_param(name, value)
        key = ADJUSTABLE[self.algorithm][name]
        old = self.params[key]
        if old == value:
            return None
        self.params[key] = value
        return _event(self.next_iteration, "adjustment",
                      {"parameter": name, "old": old, "new": value,
                       "source": source, "reason": reason})

    # -- stepping -----------------------------------------------------------

    def step(self):
        """Advance one iteration; returns its trace event or ``None`` when done."""
        if self.finished:
            return None
        try:
            item = next(self._gen)
        except StopIteration as stop:
            self.finished = True
            self.result = stop.value
            return None
        event = getattr(self, f"_on_{self.algorithm if self.algorithm != 'sa' else 'mh'}")(item)
        self.next_iteration = event["iteration"] + 1
        return event

    def _on_gd(self, item):
        k, x, loss = item
        self._trace.points.append(x)
        self._trace.losses.append(loss)
        return _event(k, "trace", {"point": _vec(x), "loss": float(loss)})

    def _on_nm(self, item):
        k, s, move = item
        st = self._nm
        if s.values[0] < st["best_value"]:
            st["best_value"], st["best_point"] = float(s.values[0]), _vec(s.vertices[0])
        st["trace"].append(st["best_value"])
        st["used"] = k
        return _event(k, "trace", {"best_point": _vec(s.vertices[0]),
                                   "best_value": float(s.values[0]), "move": move})

    def _on_mh(self, step):
        self._run.add(step)
        return _event(step.index, "trace", {
            "current": _vec(step.current), "candidate": _vec(step.candidate),
            "alpha": float(step.alpha), "u": float(step.u), "accepted": bool(step.accepted),
            "temperature": float(step.temperature),
            "acceptance_count": int(step.acceptance_count)})

    def _on_ea(self, item):
        g, x, f = item
        st = evolutionary.generation_stats(g, f)
        self._stats.append(st)
        i = int(np.argmin(f))
        if f[i] < self._best[0]:
            self._best = (float(f[i]), _vec(x[i]))
        self._final_f = f
        return _event(g, "trace", {"best_fitness": st.best_fitness,
                                   "mean_fitness": st.mean_fitness,
                                   "std_fitness": st.std_fitness,
                                   "best_genome": _vec(x[i])})

    # -- results ------------------------------------------------------------

    def loss_trace(self):
        """Per-iteration scalar metric the tuning controller reads."""
        if self.algorithm == "gd":
            return self._trace
        if self.algorithm == "nm":
            return gradient_descent.LossTrace(losses=list(self._nm["trace"]))
        if self.algorithm in ("mh", "sa"):
            acc = np.cumsum([s.accepted for s in self._run.steps])
            rates = acc / np.arange(1, len(acc) + 1)
            return gradient_descent.LossTrace(losses=list(np.abs(rates - 0.5)))
        return gradient_descent.LossTrace(losses=[s.best_fitness for s in self._stats])

    def metric(self):
        """The scalar reported as ``best_loss`` for this run."""
        trace = self.loss_trace()
        if not trace.losses:
            return math.nan
        if self.algorithm in ("mh", "sa"):
            return float(trace.losses[-1])
        return float(min(trace.losses))

    def evaluations(self):
        """Objective/fitness evaluations performed (cost bookkeeping)."""
        if self.algorithm == "gd":
            return len(self._trace.losses)
        if self.algorithm == "nm":
            return self._nm_evals
        if self.algorithm in ("mh", "sa"):
            return 1 + len(self._run.steps)
        cfg = self.algo_config
        return cfg.pop_size + cfg.replacement_count * (len(self._stats) - 1)

    def summary(self):
        a = self.algorithm
        if a == "gd":
            t = self._trace
            return {"init": self.init, "best_loss": t.best_loss, "best_point": _vec(t.best_point),
                    "final_loss": t.final_loss, "iterations_completed": len(t.losses) - 1,
                    "diverged": bool(self.result)}
        if a == "nm":
            st = self._nm
            return {"init": self.init, "best_value": st["best_value"],
                    "best_point": st["best_point"], "iterations_used": st["used"],
                    "converged": bool(self.result)}
        if a in ("mh", "sa"):
            r = self._run
            return {"init": self.init, "n": r.n_iterations,
                    "accepted": len(r.accepted_points), "rejected": len(r.rejected_points),
                    "accepted_pct": 100.0 * r.acceptance_rate, "mean_alpha": r.mean_alpha,
                    "acceptance_count": r.acceptance_count}
        f = self._final_f
        return {"best_fitness": self._best[0], "best_genome": self._best[1],
                "final_mean_fitness": float(np.mean(f)), "final_std_fitness": float(np.std(f)),
                "generations_completed": len(self._stats) - 1}


@dataclass
class RunRecord:
    run_id: str
    algorithm: str
    objective: str
    master_seed: int
    config: dict
    events: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    schema_version: int = SCHEMA_VERSION

    def to_dict(self):
        return {
            "schema_version": self.schema_version,
            "run_id": self.run_id,
            "algorithm": self.algorithm,
            "objective": self.objective,
            "master_seed": self.master_seed,
            "config": self.config,
            "events": self.events,
            "summary": self.summary,
        }

    @classmethod
    def from_dict(cls, d):
        keys = ("schema_version", "run_id", "algorithm", "objective", "master_seed", "config",
                "events", "summary")
        if set(d) != set(keys):
            raise ArgumentError(f"run record keys {sorted(d)} do not match the schema")
        if d["schema_version"] != SCHEMA_VERSION:
            raise ArgumentError(f"unsupported schema_version {d['schema_version']}")
        return cls(**{k: d[k] for k in keys})

    def trace_events(self):
        return [e for e in self.events if e["kind"] == "trace"]

    def adjustment_events(self):
        return [e for e in self.events if e["kind"] == "adjustment"]


def batch_run_id(algorithm, objective, config, seed):
    blob = json.dumps([algorithm, str(objective), config, int(seed)], sort_keys=True)
    return f"{algorithm}-{hashlib.sha1(blob.encode()).hexdigest()[:12]}"


def run_experiment(algorithm, objective, config=None, master_seed=0, adjustments=None,
                   run_id=None):
    """Run one experiment to completion and wrap it in a :class:`RunRecord`.

    ``adjustments`` is an optional schedule of ``(iteration, parameter, value)``
    or ``(iteration, parameter, value, source)`` tuples; each is applied just
    before the iteration it names is computed.
    """
    started = time.perf_counter()
    session = Session(algorithm, objective, config, master_seed)
    schedule = sorted(adjustments or [], key=lambda a: a[0])
    events = []
    pos = 0
    while not session.finished:
        while pos < len(schedule) and schedule[pos][0] <= session.next_iteration:
            it, name, value, *rest = schedule[pos]
            ev = session.apply(name, value, source=rest[0] if rest else "human")
            if ev is not None:
                events.append(ev)
            pos += 1
        ev = session.step()
        if ev is not None:
            events.append(ev)
    summary = session.summary()
    summary["wall_time_ms"] = round((time.perf_counter() - started) * 1000.0, 3)
    return RunRecord(
        run_id=run_id or batch_run_id(algorithm, session.objective.value, session.config,
                                      master_seed),
        algorithm=algorithm, objective=session.objective.value,
        master_seed=int(master_seed), config=session.config, events=events, summary=summary)


def replay(record):
    """Re-run a record in batch mode, re-applying its recorded adjustments."""
    schedule = [(e["iteration"], e["payload"]["parameter"], e["payload"]["new"],
                 e["payload"].get("source", "human")) for e in record.adjustment_events()]
    return run_experiment(record.algorithm, record.objective, record.config,
                          record.master_seed, adjustments=schedule, run_id=record.run_id)


def strip_timestamps(record):
    """Record as a dict with the only non-deterministic field removed."""
    d = json.loads(json.dumps(record.to_dict()))
    d["summary"].pop("wall_time_ms", None)
    return d


@dataclass(frozen=True)
class SummaryStats:
    mean: float
    std: float
    n: int
    min: float
    max: float


def summarize(values):
    """Mean, population standard deviation, count and range."""
    v = np.asarray(list(values), dtype=float)
    if v.size == 0:
        raise ArgumentError("cannot summarize an empty list")
    return SummaryStats(mean=float(v.mean()), std=float(v.std()), n=int(v.size),
                        min=float(v.min()), max=float(v.max()))
