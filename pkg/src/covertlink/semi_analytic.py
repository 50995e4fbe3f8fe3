"""Quadrature evaluators for the SINR and warden statistics.

These average the FTR series CDF over the Fisher-Snedecor variable with
Gauss-Jacobi rules, writing Z = beta * B / (1 - B) with B ~ Beta(m_f, m_s).
They serve two purposes: a second route for checking the Mellin-Barnes
forms, and a fast path inside the optimisers.
"""
from __future__ import annotations

import math
from functools import lru_cache

import numpy as np
from scipy import integrate, special

LN2 = math.log(2.0)


@lru_cache(maxsize=64)
def _jacobi_rule(n: int, alpha: float, beta: float):
    # weight (1-x)^alpha (1+x)^beta on [-1, 1], mapped to u in [0, 1] and normalised
    x, w = special.roots_jacobi(n, alpha, beta)
    u = 0.5 * (1.0 + x)
    w = w / w.sum()
    u.setflags(write=False)
    w.setflags(write=False)
    return u, w


def series_cdf(weights, sigma2, y):
    """sum_j w_j P(j+1, y / (2 sigma2)) for any array y >= 0."""
    weights = np.asarray(weights, dtype=float)
    y = np.maximum(np.asarray(y, dtype=float), 0.0) / (2.0 * sigma2)
    j = np.arange(weights.size).reshape((-1,) + (1,) * y.ndim)
    return np.tensordot(weights, special.gammainc(j + 1, y[None, ...]), axes=(0, 0))


def series_pdf(weights, sigma2, y):
    weights = np.asarray(weights, dtype=float)
    y = np.asarray(y, dtype=float)
    t = np.maximum(y, 0.0) / (2.0 * sigma2)
    j = np.arange(weights.size).reshape((-1,) + (1,) * y.ndim)
    with np.errstate(divide="ignore", invalid="ignore"):
        logt = j * np.log(t[None, ...]) - t[None, ...] - special.gammaln(j + 1)
        dens = np.where(t[None, ...] > 0, np.exp(logt), (j == 0) * 1.0)
    out = np.tensordot(weights, dens, axes=(0, 0)) / (2.0 * sigma2)
    return np.where(y < 0, 0.0, out)


def fisher_cdf(m_f, m_s, z_bar, z):
    z = np.asarray(z, dtype=float)
    u = m_f * z / (m_f * z + (m_s - 1.0) * z_bar)
    return special.betainc(m_f, m_s, np.clip(u, 0.0, 1.0))


class SinrQuadrature:
    """E_Z of FTR quantities for gamma = C1 X / (kappa2 + C2 Z)."""

    def __init__(self, weights, sigma2, m_f, m_s, z_bar, c1, c2, kappa2, nodes: int = 192):
        self.w = np.asarray(weights, dtype=float)
        self.sigma2 = float(sigma2)
        self.m_f, self.m_s, self.z_bar = float(m_f), float(m_s), float(z_bar)
        self.beta = (self.m_s - 1.0) * self.z_bar / self.m_f
        self.c1, self.c2, self.kappa2 = float(c1), float(c2), float(kappa2)
        self.nodes = int(nodes)
        b, g = _jacobi_rule(self.nodes, self.m_s - 1.0, self.m_f - 1.0)
        self._z = self.beta * b / (1.0 - b)
        self._g = g

    def _denominator(self):
        return self.kappa2 + self.c2 * self._z

    def cdf(self, gamma):
        gamma = np.asarray(gamma, dtype=float)
        if self.c1 <= 0:
            return np.where(gamma >= 0, 1.0, 0.0) * 1.0
        y = gamma[..., None] * self._denominator() / self.c1
        return np.clip(series_cdf(self.w, self.sigma2, y) @ self._g, 0.0, 1.0)

    def pdf(self, gamma):
        gamma = np.asarray(gamma, dtype=float)
        d = self._denominator() / self.c1
        y = gamma[..., None] * d
        return (series_pdf(self.w, self.sigma2, y) * d) @ self._g

    def rate_mgf(self, points_per_unit: int = 24) -> float:
        """(1/ln2) int_0^inf e^{-s k2} M_Z(s C2) (1 - M_X(s C1)) / s ds, s = e^u."""
        if self.c1 <= 0:
            return 0.0
        w = self.w / self.w.sum()
        mean_x = 2 * self.sigma2 * float(np.sum(w * (np.arange(w.size) + 1)))
        lo = math.log(1e-14 / (self.c1 * mean_x))
        hi = math.log(60.0 / self.kappa2)
        lo = min(lo, hi - 30.0)  # vanishing C1: integrand ~ s there, so the cut is harmless
        n = int((hi - lo) * points_per_unit) + 1
        u = np.linspace(lo, hi, n)
        s = np.exp(u)
        j = np.arange(w.size)
        m_x = np.exp(-np.outer(np.log1p(2 * self.sigma2 * s * self.c1), j + 1)) @ w
        m_z = np.exp(-np.outer(s * self.c2, self._z)) @ self._g
        f = np.exp(-s * self.kappa2) * m_z * -np.expm1(np.log(np.maximum(m_x, 1e-300)))
        return float(integrate.trapezoid(f, u) / LN2)

    def rate_definition(self) -> float:
        """(1/ln2) int_0^inf (1 - F(gamma)) / (1 + gamma) d gamma on a log grid."""
        if self.c1 <= 0:
            return 0.0
        mean_guess = self.c1 * 2 * self.sigma2 * float(np.sum(self.w * (np.arange(self.w.size) + 1))) / self.kappa2
        t_lo = math.log(mean_guess) - 40.0
        t_hi = math.log(mean_guess) + 12.0

        def tail(t):
            g = math.exp(t)
            return float(1.0 - self.cdf(np.array([g]))[0]) * g / (1.0 + g)

        val, _ = integrate.quad(tail, t_lo, t_hi, limit=400, epsabs=1e-12, epsrel=1e-10,
                                points=[math.log(mean_guess)])
        return val / LN2


def missed_detection_quad(weights, sigma2, m_f, m_s, z_bar, c1w, c2w, kappa2, epsilon, nodes: int = 96):
    """Pr(C1w X + kappa2 + C2w Z < epsilon) by a Gauss-Jacobi rule on [0, b*]."""
    e = float(epsilon) - kappa2
    if e <= 0:
        return 0.0
    if c1w <= 0:
        return float(fisher_cdf(m_f, m_s, z_bar, e / c2w)) if c2w > 0 else 1.0
    if c2w <= 0:
        return float(series_cdf(weights, sigma2, np.array(e / c1w)))
    beta = (m_s - 1.0) * z_bar / m_f
    r_star = e / (c2w * beta)
    b_star = r_star / (1.0 + r_star)
    v, g = _jacobi_rule(nodes, 0.0, m_f - 1.0)
    b = b_star * v
    z = beta * b / (1.0 - b)
    arg = np.maximum(e - c2w * z, 0.0) / c1w
    inner = (1.0 - b) ** (m_s - 1.0) * series_cdf(weights, sigma2, arg)
    # int_0^b* b^{p-1}(1-b)^{q-1} F db / B(p, q); the v-rule weights integrate to 1/p
    log_scale = m_f * math.log(b_star) - math.log(m_f) - special.betaln(m_f, m_s)
    return float(math.exp(log_scale) * (inner @ g))


def false_alarm_quad(m_f, m_s, z_bar, c2w, kappa2, epsilon):
    e = float(epsilon) - kappa2
    if e <= 0:
        return 1.0
    if c2w <= 0:
        return 0.0
    return float(1.0 - fisher_cdf(m_f, m_s, z_bar, e / c2w))


def detection_error_curve(weights, sigma2, m_f, m_s, z_bar, c1w, c2w, kappa2, epsilon, nodes: int = 96):
    """Vectorised P_FA + P_MD over an array of thresholds (same rule as missed_detection_quad)."""
    eps = np.atleast_1d(np.asarray(epsilon, dtype=float))
    e = eps - kappa2
    out = np.ones_like(eps)
    ok = e > 0
    if not ok.any():
        return out
    e = e[ok]
    pfa = 1.0 - fisher_cdf(m_f, m_s, z_bar, e / c2w) if c2w > 0 else np.zeros_like(e)
    if c1w <= 0:
        pmd = fisher_cdf(m_f, m_s, z_bar, e / c2w) if c2w > 0 else np.ones_like(e)
    elif c2w <= 0:
        pmd = series_cdf(weights, sigma2, e / c1w)
    else:
        beta = (m_s - 1.0) * z_bar / m_f
        r_star = e / (c2w * beta)
        b_star = r_star / (1.0 + r_star)
        v, g = _jacobi_rule(nodes, 0.0, m_f - 1.0)
        b = b_star[:, None] * v[None, :]
        z = beta * b / (1.0 - b)
        arg = np.maximum(e[:, None] - c2w * z, 0.0) / c1w
        inner = (1.0 - b) ** (m_s - 1.0) * series_cdf(weights, sigma2, arg)
        log_scale = m_f * np.log(b_star) - math.log(m_f) - special.betaln(m_f, m_s)
        pmd = np.exp(log_scale) * (inner @ g)
    out[ok] = pfa + pmd
    return out
