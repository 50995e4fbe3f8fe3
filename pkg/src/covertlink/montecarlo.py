"""Monte Carlo estimates of the SINR, warden and rate statistics.

Samples are drawn in fixed-size blocks; block b always uses the child
stream SeedSequence(seed).spawn(...)[b], so the estimate does not depend on
how many workers process the blocks.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

from .covert_metrics import WardenChannel
from .fading import sample_f, sample_ftr
from .sinr_stats import UserChannel

BLOCK = 100_000


@dataclass(frozen=True)
class McConfig:
    samples: int = 1_000_000
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if self.samples < 1:
            raise ValueError("samples must be positive")
        if self.workers < 1:
            raise ValueError("workers must be positive")


class Estimate(NamedTuple):
    value: np.ndarray
    stderr: np.ndarray


class DepEstimate(NamedTuple):
    p_fa: float
    p_md: float
    xi: float
    se_fa: float
    se_md: float
    se_xi: float


def _blocks(cfg: McConfig):
    n_blocks = -(-cfg.samples // BLOCK)
    children = np.random.SeedSequence(cfg.seed).spawn(n_blocks)
    sizes = [BLOCK] * (n_blocks - 1) + [cfg.samples - BLOCK * (n_blocks - 1)]
    return list(zip(children, sizes))


def _map_blocks(fn: Callable, cfg: McConfig):
    blocks = _blocks(cfg)
    if cfg.workers == 1:
        return [fn(np.random.default_rng(s), n) for s, n in blocks]
    with ThreadPoolExecutor(cfg.workers) as pool:
        return list(pool.map(lambda b: fn(np.random.default_rng(b[0]), b[1]), blocks))


def _sinr_draws(ch: UserChannel, rng, n):
    x = sample_ftr(ch.ftr, rng, n)
    z = sample_f(ch.fisher, rng, n)
    return ch.link.c1 * x / (ch.link.kappa2 + ch.link.c2 * z)


def estimate_sinr_cdf(ch: UserChannel, gamma_grid, cfg: McConfig = McConfig()) -> Estimate:
    grid = np.atleast_1d(np.asarray(gamma_grid, dtype=float))

    def block(rng, n):
        g = np.sort(_sinr_draws(ch, rng, n))
        return np.searchsorted(g, grid, side="right")

    counts = np.sum(_map_blocks(block, cfg), axis=0)
    p = counts / cfg.samples
    return Estimate(p, np.sqrt(p * (1 - p) / cfg.samples))


def estimate_dep(w: WardenChannel, epsilon: float, cfg: McConfig = McConfig()) -> DepEstimate:
    """H0 draws kappa2 + C2w Z; H1 draws add C1w X.  Independent streams per hypothesis."""
    eps = float(epsilon)

    def block(rng, n):
        z0 = sample_f(w.fisher, rng, n)
        y0 = w.link.kappa2 + w.link.c2 * z0
        x1 = sample_ftr(w.ftr, rng, n)
        z1 = sample_f(w.fisher, rng, n)
        y1 = w.link.c1 * x1 + w.link.kappa2 + w.link.c2 * z1
        return np.count_nonzero(y0 > eps), np.count_nonzero(y1 < eps)

    parts = np.array(_map_blocks(block, cfg))
    n = cfg.samples
    p_fa, p_md = parts[:, 0].sum() / n, parts[:, 1].sum() / n
    se_fa = math.sqrt(p_fa * (1 - p_fa) / n)
    se_md = math.sqrt(p_md * (1 - p_md) / n)
    return DepEstimate(p_fa, p_md, p_fa + p_md, se_fa, se_md, math.hypot(se_fa, se_md))


def estimate_rate(ch: UserChannel, cfg: McConfig = McConfig()) -> Estimate:
    if ch.link.c1 <= 0:
        return Estimate(np.float64(0.0), np.float64(0.0))

    def block(rng, n):
        r = np.log2(1 + _sinr_draws(ch, rng, n))
        return r.sum(), (r * r).sum()

    s = np.array(_map_blocks(block, cfg))
    n = cfg.samples
    mean = s[:, 0].sum() / n
    var = max(s[:, 1].sum() / n - mean ** 2, 0.0)
    return Estimate(np.float64(mean), np.float64(math.sqrt(var / n)))


def ks_distance(samples, analytic_cdf: Callable) -> float:
    """sup |F_n - F| evaluated at both sides of every sample jump."""
    x = np.sort(np.asarray(samples, dtype=float))
    n = x.size
    f = np.asarray(analytic_cdf(x), dtype=float)
    upper = np.arange(1, n + 1) / n - f
    lower = f - np.arange(n) / n
    return float(max(upper.max(), lower.max(), 0.0))
