"""Particle swarm engine, warden threshold search and Nash-bargaining power allocation."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .covert_metrics import WardenChannel, covert_rate_fast, dep_curve, threshold_box, warden_best_response
from .sinr_stats import UserChannel

SENTINEL = -1e9


class NoFeasiblePoint(RuntimeError):
    pass


@dataclass(frozen=True)
class PsoConfig:
    swarm_size: int = 30
    max_iters: int = 60
    inertia: float = 0.72
    c1: float = 1.49
    c2: float = 1.49
    v_max_frac: float = 0.2  # per-dimension velocity cap as a fraction of the box width
    seed: int = 0
    patience: int | None = None  # stop after this many iterations without improvement

    def __post_init__(self):
        if self.swarm_size < 4:
            raise ValueError("swarm_size must be at least 4")
        if not 0.0 < self.inertia < 1.0:
            raise ValueError("inertia must lie in (0, 1)")
        if not (self.c1 > 0 and self.c2 > 0):
            raise ValueError("acceleration coefficients must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be positive")


def pso_optimize(fitness: Callable[[np.ndarray], float], bounds, cfg: PsoConfig = PsoConfig(),
                 sense: str = "min", seeds: Sequence | None = None):
    """Global-best PSO on a box.

    bounds : (lower, upper) arrays.  seeds : optional points placed in the
    initial swarm (clipped to the box).  Returns (point, value, trace) where
    trace[i] is the best value after iteration i.
    """
    if sense not in ("min", "max"):
        raise ValueError("sense must be 'min' or 'max'")
    lo = np.atleast_1d(np.asarray(bounds[0], dtype=float))
    hi = np.atleast_1d(np.asarray(bounds[1], dtype=float))
    if lo.shape != hi.shape or np.any(hi < lo):
        raise ValueError("empty box")
    sign = 1.0 if sense == "min" else -1.0
    dim, n = lo.size, cfg.swarm_size
    width = hi - lo
    vmax = cfg.v_max_frac * width
    # one stream per particle keeps draws independent of evaluation order
    streams = [np.random.default_rng(s) for s in np.random.SeedSequence(cfg.seed).spawn(n)]
    x = np.array([lo + r.random(dim) * width for r in streams])
    if seeds is not None:
        for i, s in enumerate(list(seeds)[:n]):
            x[i] = np.clip(np.asarray(s, dtype=float), lo, hi)
    v = np.array([(r.random(dim) * 2 - 1) * vmax for r in streams])
    f = np.array([sign * fitness(xi) for xi in x])
    pbest, pval = x.copy(), f.copy()
    g = int(np.argmin(pval))
    gbest, gval = pbest[g].copy(), pval[g]
    trace = []
    stale = 0
    for _ in range(cfg.max_iters):
        for i, r in enumerate(streams):
            r1, r2 = r.random(dim), r.random(dim)
            v[i] = cfg.inertia * v[i] + cfg.c1 * r1 * (pbest[i] - x[i]) + cfg.c2 * r2 * (gbest - x[i])
            v[i] = np.clip(v[i], -vmax, vmax)
            x[i] = np.clip(x[i] + v[i], lo, hi)
            fi = sign * fitness(x[i])
            if fi < pval[i]:
                pbest[i], pval[i] = x[i].copy(), fi
        g = int(np.argmin(pval))
        if pval[g] < gval:
            gbest, gval = pbest[g].copy(), pval[g]
            stale = 0
        else:
            stale += 1
        trace.append(sign * gval)
        if cfg.patience is not None and stale >= cfg.patience:
            break
    return gbest, sign * gval, np.array(trace)


def warden_optimal_threshold(w: WardenChannel, cfg: PsoConfig = PsoConfig(swarm_size=20, max_iters=80)):
    """PSO over the threshold with fitness xi; the lower edge is kappa2."""
    lo, hi = threshold_box(w)
    if w.link.c1 <= 0:
        return lo * (1 + 1e-9), 1.0

    def fitness(x):
        return float(dep_curve(w, x[0])[0])

    point, value, _ = pso_optimize(fitness, ([lo], [hi]), cfg, sense="min")
    return float(point[0]), float(value)


def grid_optimal_threshold(w: WardenChannel, points: int = 10_000):
    lo, hi = threshold_box(w)
    eps = np.linspace(lo, hi, points + 1)[1:]
    xi = dep_curve(w, eps)
    i = int(np.argmin(xi))
    return float(eps[i]), float(xi[i])


# ---------------------------------------------------------------------------
# bargaining game


@dataclass(frozen=True)
class PowerAllocation:
    p_a: np.ndarray
    p_j: np.ndarray

    def __post_init__(self):
        pa = np.asarray(self.p_a, dtype=float)
        pj = np.asarray(self.p_j, dtype=float)
        if pa.shape != pj.shape or pa.ndim != 1:
            raise ValueError("p_a and p_j must be vectors of equal length")
        if np.any(pa < 0) or np.any(pj < 0):
            raise ValueError("powers must be nonnegative")
        object.__setattr__(self, "p_a", pa)
        object.__setattr__(self, "p_j", pj)

    @classmethod
    def equal_split(cls, k: int, p_total: float, j_total: float) -> "PowerAllocation":
        return cls(np.full(k, p_total / k), np.full(k, j_total / k))


@dataclass(frozen=True)
class GameSpec:
    """Users and warden views carry per-watt path gains in link.c1 / link.c2."""

    users: tuple
    wardens: tuple
    r_th: np.ndarray
    xi_th: np.ndarray
    p_total: float
    j_total: float

    def __post_init__(self):
        object.__setattr__(self, "users", tuple(self.users))
        object.__setattr__(self, "wardens", tuple(self.wardens))
        r = np.asarray(self.r_th, dtype=float)
        x = np.asarray(self.xi_th, dtype=float)
        k = len(self.users)
        if k < 1 or len(self.wardens) != k or r.shape != (k,) or x.shape != (k,):
            raise ValueError("users, wardens, r_th and xi_th must share length K >= 1")
        if np.any(r < 0):
            raise ValueError("r_th must be nonnegative")
        if np.any(x >= 1) or np.any(x < 0):
            raise ValueError("xi_th must lie in [0, 1)")
        if self.p_total < 0 or self.j_total < 0:
            raise ValueError("budgets must be nonnegative")
        object.__setattr__(self, "r_th", r)
        object.__setattr__(self, "xi_th", x)

    @property
    def k(self) -> int:
        return len(self.users)


def user_channel_at(g: GameSpec, k: int, p_a: float, p_j: float) -> UserChannel:
    u = g.users[k]
    return u.with_link(c1=u.link.c1 * p_a, c2=u.link.c2 * p_j)


def warden_channel_at(g: GameSpec, k: int, p_a: float, p_j: float) -> WardenChannel:
    w = g.wardens[k]
    return w.with_link(c1=w.link.c1 * p_a, c2=w.link.c2 * p_j)


def user_rate(g: GameSpec, k: int, p_a: float, p_j: float) -> float:
    return covert_rate_fast(user_channel_at(g, k, p_a, p_j))


def user_dep(g: GameSpec, k: int, p_a: float, p_j: float, grid: bool = False) -> float:
    """xi_k at the warden's optimal threshold (Brent by default, 1e4-point grid if asked)."""
    w = warden_channel_at(g, k, p_a, p_j)
    if grid:
        return grid_optimal_threshold(w)[1]
    return warden_best_response(w).xi


def nbs_objective(g: GameSpec, alloc: PowerAllocation, utility_scale: float = 1.0) -> float:
    """sum_k ln(scale (R_k - R_k^th)); -inf once any user sits at or below its threshold."""
    total = 0.0
    for k in range(g.k):
        gap = user_rate(g, k, alloc.p_a[k], alloc.p_j[k]) - g.r_th[k]
        if not gap > 0:
            return -math.inf
        total += math.log(utility_scale * gap)
    return total


@dataclass
class FeasibilityReport:
    budget_slack_a: float
    budget_slack_j: float
    rates: np.ndarray
    rate_slack: np.ndarray
    xi: np.ndarray
    xi_slack: np.ndarray

    @property
    def budgets_ok(self) -> bool:
        return self.budget_slack_a >= -1e-9 and self.budget_slack_j >= -1e-9

    @property
    def feasible(self) -> bool:
        return self.budgets_ok and bool(np.all(self.xi_slack >= 0)) and bool(np.all(self.rate_slack > 0))

    @property
    def violation(self) -> float:
        return (max(-self.budget_slack_a, 0.0) + max(-self.budget_slack_j, 0.0)
                + float(np.sum(np.maximum(-self.xi_slack, 0.0))) + float(np.sum(np.maximum(-self.rate_slack, 0.0))))


def feasibility_check(g: GameSpec, alloc: PowerAllocation, grid: bool = False) -> FeasibilityReport:
    rates = np.array([user_rate(g, k, alloc.p_a[k], alloc.p_j[k]) for k in range(g.k)])
    xi = np.array([user_dep(g, k, alloc.p_a[k], alloc.p_j[k], grid=grid) for k in range(g.k)])
    return FeasibilityReport(g.p_total - alloc.p_a.sum(), g.j_total - alloc.p_j.sum(), rates,
                             rates - g.r_th, xi, xi - g.xi_th)


def _fitness(g: GameSpec, alloc: PowerAllocation, utility_scale: float = 1.0) -> float:
    over = max(alloc.p_a.sum() - g.p_total, 0.0) + max(alloc.p_j.sum() - g.j_total, 0.0)
    if over > 0:
        # budget violations are checked before any channel evaluation
        return SENTINEL - over * (1 + g.k)
    rep = feasibility_check(g, alloc)
    if not rep.feasible:
        return SENTINEL - rep.violation
    return float(np.sum(np.log(utility_scale * rep.rate_slack)))


@dataclass
class AllocationResult:
    allocation: PowerAllocation
    value: float
    round_trace: list = field(default_factory=list)
    converged: bool = True


def ppa_allocate(g: GameSpec, cfg: PsoConfig = PsoConfig(), utility_scale: float = 1.0) -> AllocationResult:
    """One PSO over the joint 2K-dimensional box [0, P_T]^K x [0, P_J]^K."""
    k = g.k
    lo = np.zeros(2 * k)
    hi = np.concatenate([np.full(k, g.p_total), np.full(k, g.j_total)])

    def fitness(x):
        return _fitness(g, PowerAllocation(x[:k], x[k:]), utility_scale)

    start, _ = _feasible_start(g, utility_scale)
    eq = PowerAllocation.equal_split(k, g.p_total, g.j_total)
    seeds = [np.concatenate([start.p_a, start.p_j]), np.concatenate([eq.p_a, eq.p_j])]
    point, value, trace = pso_optimize(fitness, (lo, hi), cfg, sense="max", seeds=seeds)
    if value <= SENTINEL:
        raise NoFeasiblePoint("no feasible allocation found")
    return AllocationResult(PowerAllocation(point[:k], point[k:]), float(value), list(trace))


def _feasible_start(g: GameSpec, utility_scale: float) -> tuple[PowerAllocation, float]:
    """Equal-split jamming with the largest common transmit scale that keeps every xi_k >= xi_th."""
    eq = PowerAllocation.equal_split(g.k, g.p_total, g.j_total)
    val = _fitness(g, eq, utility_scale)
    if val > SENTINEL:
        return eq, val
    # xi_k falls as p_a grows, so the feasible scales form an interval (0, t*]
    lo, hi = 0.0, 1.0
    best = None
    for _ in range(40):
        mid = 0.5 * (lo + hi)
        alloc = PowerAllocation(eq.p_a * mid, eq.p_j)
        v = _fitness(g, alloc, utility_scale)
        if v > SENTINEL:
            lo, best = mid, (alloc, v)
        else:
            hi = mid
        if hi - lo < 1e-4 * hi:
            break
    if best is None:
        return eq, val
    return best


def jtpa_allocate(g: GameSpec, cfg: PsoConfig = PsoConfig(), rho: float = 1e-3, max_rounds: int = 20,
                  utility_scale: float = 1.0) -> AllocationResult:
    """Alternate a jamming-power stage and a transmit-power stage.

    Each stage is a K-dimensional PSO seeded with the incumbent; a stage
    result replaces the incumbent only if it improves the objective.
    """
    if rho <= 0:
        raise ValueError("rho must be positive")
    k = g.k
    inc, val = _feasible_start(g, utility_scale)
    trace = [val]
    converged = False
    for rnd in range(max_rounds):
        prev = val
        for stage in ("jam", "tx"):
            stage_cfg = PsoConfig(cfg.swarm_size, cfg.max_iters, cfg.inertia, cfg.c1, cfg.c2, cfg.v_max_frac,
                                  cfg.seed + 2 * rnd + (stage == "tx"), cfg.patience)
            if stage == "jam":
                fixed = inc.p_a
                fitness = lambda x: _fitness(g, PowerAllocation(fixed, x), utility_scale)
                box = (np.zeros(k), np.full(k, g.j_total))
                seed = inc.p_j
            else:
                fixed = inc.p_j
                fitness = lambda x: _fitness(g, PowerAllocation(x, fixed), utility_scale)
                box = (np.zeros(k), np.full(k, g.p_total))
                seed = inc.p_a
            point, cand, _ = pso_optimize(fitness, box, stage_cfg, sense="max", seeds=[seed])
            if cand > val:
                inc = PowerAllocation(inc.p_a, point) if stage == "jam" else PowerAllocation(point, inc.p_j)
                val = cand
        trace.append(val)
        if val > SENTINEL and abs(val - prev) < rho:
            converged = True
            break
    if val <= SENTINEL:
        raise NoFeasiblePoint("no feasible allocation found")
    return AllocationResult(inc, float(val), trace, converged)
