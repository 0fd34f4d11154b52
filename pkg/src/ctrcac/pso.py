"""Particle swarm search over the adaptation hyperparameters.

The search runs in ``(log10 P0, p_f)`` coordinates by default.  Every
candidate is scored by a closed-loop simulation; diverged runs receive a
finite penalty so the swarm can rank them.
"""

from dataclasses import dataclass, field

import numpy as np

from .validation import ConfigurationError

DIVERGENCE_PENALTY = 1e9


@dataclass
class SearchSpace:
    lower: np.ndarray = field(default_factory=lambda: np.array([-4.0, 0.1]))
    upper: np.ndarray = field(default_factory=lambda: np.array([4.0, 10.0]))
    names: tuple = ("log10_P0", "p_f")

    def __post_init__(self):
        self.lower = np.asarray(self.lower, dtype=float)
        self.upper = np.asarray(self.upper, dtype=float)
        if self.lower.shape != self.upper.shape or self.lower.ndim != 1:
            raise ConfigurationError("bounds must be matching 1-D arrays")
        if np.any(self.lower >= self.upper):
            raise ConfigurationError("each lower bound must be below its upper bound")
        if len(self.names) != self.lower.size:
            self.names = tuple(f"x{i}" for i in range(self.lower.size))

    @property
    def ndim(self):
        return self.lower.size

    def clip(self, x):
        return np.clip(x, self.lower, self.upper)


@dataclass
class SwarmConfig:
    """Swarm settings; the defaults are the usual constriction constants."""

    swarm_size: int = 5
    iterations: int = 30
    inertia: float = 0.729
    c1: float = 1.49445
    c2: float = 1.49445
    seed: int = 0

    def __post_init__(self):
        if int(self.swarm_size) < 2:
            raise ConfigurationError("swarm_size must be at least 2")
        if int(self.iterations) < 0:
            raise ConfigurationError("iterations must be non-negative")
        if not 0 < self.inertia < 1:
            raise ConfigurationError("inertia must lie in (0, 1)")
        if not (self.c1 > 0 and self.c2 > 0):
            raise ConfigurationError("acceleration constants must be positive")
        self.swarm_size = int(self.swarm_size)
        self.iterations = int(self.iterations)


@dataclass
class Particle:
    position: np.ndarray
    velocity: np.ndarray
    best_position: np.ndarray
    best_score: float = np.inf


@dataclass
class PSOResult:
    best_position: np.ndarray
    best_score: float
    history: list

    def history_rows(self):
        """Flat rows ``(iteration, particle, *position, score, best_score)``."""
        rows = []
        for h in self.history:
            for k, (pos, sc) in enumerate(zip(h["positions"], h["scores"])):
                rows.append((h["iteration"], k, *pos, sc, h["best_score"]))
        return rows


def _evaluate(objective, positions, executor):
    mapper = map if executor is None else executor.map
    scores = np.array(list(mapper(objective, [p.copy() for p in positions])), dtype=float)
    # a NaN score would break the ordering of bests
    scores[~np.isfinite(scores)] = np.inf
    return scores


def pso_optimize(objective, space=None, cfg=None, executor=None):
    """Minimize ``objective`` over a box with a global-best particle swarm.

    Parameters
    ----------
    objective : callable
        Maps a position (1-D array) to a finite score.
    space : SearchSpace, optional
    cfg : SwarmConfig, optional
    executor : object with a ``map`` method, optional
        Used to evaluate the particles of one iteration concurrently.  Scores
        come back in particle order, so results do not depend on completion
        order.

    Returns
    -------
    PSOResult
        ``history`` holds one entry per iteration (iteration 0 is the initial
        swarm) with all positions, their scores and the global best so far.
    """
    space = SearchSpace() if space is None else space
    cfg = SwarmConfig() if cfg is None else cfg
    rng = np.random.default_rng(cfg.seed)
    n, d = cfg.swarm_size, space.ndim
    span = space.upper - space.lower

    x = space.lower + rng.random((n, d)) * span
    v = np.zeros((n, d))
    scores = _evaluate(objective, x, executor)
    pbest, pbest_score = x.copy(), scores.copy()
    g = int(np.argmin(pbest_score))
    gbest, gbest_score = pbest[g].copy(), float(pbest_score[g])
    history = [dict(iteration=0, positions=x.copy(), scores=scores.copy(),
                    best_position=gbest.copy(), best_score=gbest_score)]

    for it in range(1, cfg.iterations + 1):
        r1 = rng.random((n, d))
        r2 = rng.random((n, d))
        v = cfg.inertia * v + cfg.c1 * r1 * (pbest - x) + cfg.c2 * r2 * (gbest - x)
        x = space.clip(x + v)
        scores = _evaluate(objective, x, executor)
        improved = scores < pbest_score
        pbest[improved] = x[improved]
        pbest_score[improved] = scores[improved]
        g = int(np.argmin(pbest_score))
        if pbest_score[g] < gbest_score:
            gbest, gbest_score = pbest[g].copy(), float(pbest_score[g])
        history.append(dict(iteration=it, positions=x.copy(), scores=scores.copy(),
                            best_position=gbest.copy(), best_score=gbest_score))
    return PSOResult(best_position=gbest, best_score=gbest_score, history=history)


def penalized_score(metrics, horizon):
    """IAE for a completed run; ``1e9 + (T - t_diverge)`` for a diverged one."""
    if metrics.diverged:
        return DIVERGENCE_PENALTY + (horizon - metrics.t_diverge)
    return float(metrics.iae)


def score_scenario(scenario, point):
    """Closed-loop score of ``point = (log10 P0, p_f)`` applied to every loop.

    Oracle accumulators are not needed for scoring and are switched off.
    """
    from .scenario import build_system
    from .simulate import compute_metrics, integrate

    log10_P0, p_f = (float(v) for v in point)
    scn = scenario.with_hyperparameters(P0=10.0 ** log10_P0, p_f=p_f)
    cfg = scn.sim_config()
    cfg.record_oracle = False
    scn.sim.record_oracle = False
    log = integrate(build_system(scn), cfg=cfg)
    metrics = compute_metrics(log)
    return penalized_score(metrics, cfg.T)


def scenario_search(scenario, swarm_size=None, iterations=None, seed=None):
    """Search space and swarm settings from a scenario's ``tune`` section."""
    tune = scenario.tune
    space = SearchSpace(lower=[tune.log10_P0[0], tune.p_f[0]], upper=[tune.log10_P0[1], tune.p_f[1]])
    cfg = SwarmConfig(
        swarm_size=tune.swarm_size if swarm_size is None else swarm_size,
        iterations=tune.iterations if iterations is None else iterations,
        inertia=tune.inertia, c1=tune.c1, c2=tune.c2,
        seed=scenario.sim.seed if seed is None else seed,
    )
    return space, cfg
