"""FTR and Fisher-Snedecor F fading: series coefficients, densities, samplers."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import gmpy2
import mpmath
import numpy as np
from scipy import special

from .special_fn import gauss_2f1

HARD_CAP = 200


class CoefficientInstability(ArithmeticError):
    pass


class TruncationCapExceeded(RuntimeError):
    pass


@dataclass(frozen=True)
class FtrParams:
    m: float
    k_ratio: float
    sigma2: float
    delta: float

    def __post_init__(self):
        if not self.m > 0:
            raise ValueError("m must be positive")
        if not self.k_ratio >= 0:
            raise ValueError("K must be nonnegative")
        if not self.sigma2 > 0:
            raise ValueError("sigma2 must be positive")
        if not 0.0 <= self.delta <= 1.0:
            raise ValueError("delta must lie in [0, 1]")

    @property
    def mean(self) -> float:
        return 2 * self.sigma2 * (1 + self.k_ratio)

    @classmethod
    def from_mean(cls, m, k_ratio, delta, mean):
        return cls(m, k_ratio, mean / (2 * (1 + k_ratio)), delta)


@dataclass(frozen=True)
class FisherFParams:
    m_f: float
    m_s: float
    z_bar: float

    def __post_init__(self):
        if not self.m_f > 0:
            raise ValueError("m_f must be positive")
        if not self.m_s > 1:
            raise ValueError("m_s must exceed 1")
        if not self.z_bar > 0:
            raise ValueError("z_bar must be positive")

    @property
    def scale(self) -> float:
        # Z = scale * G_f / G_s
        return (self.m_s - 1) * self.z_bar / self.m_f


@dataclass(frozen=True)
class FtrCoefficients:
    terms: np.ndarray  # alpha_j
    weights: np.ndarray  # (m^m / Gamma(m)) K^j alpha_j / j!
    m_used: int
    residual: float


# ---------------------------------------------------------------------------
# alpha_j


def _r_function(mu: int, nu: float, x: float) -> float:
    if mu >= 1:
        lp = special.poch((nu - mu) / 2, mu) * special.poch((nu - mu + 1) / 2, mu)
        return lp * x ** mu * special.rgamma(mu + 1.0) * special.hyp2f1((nu + mu) / 2, (nu + mu + 1) / 2, 1 + mu, x)
    return special.hyp2f1((nu - mu) / 2, (nu - mu + 1) / 2, 1 - mu, x) * special.rgamma(1 - mu)


def _f_half_shift_mp(a, c, x):
    # 2F1(a, a+1/2; c; x) through a quadratic map onto a smaller positive argument
    r = mpmath.sqrt(1 - x)
    return ((1 + r) / 2) ** (-2 * a) * mpmath.hyp2f1(2 * a, 2 * a - c + 1, c, (1 - r) / (1 + r))


def _r_function_mp(mu: int, nu, x):
    if mu >= 1:
        return (mpmath.rf((nu - mu) / 2, mu) * mpmath.rf((nu - mu + 1) / 2, mu) * x ** mu / mpmath.factorial(mu)
                * _f_half_shift_mp((nu + mu) / 2, 1 + mu, x))
    return _f_half_shift_mp((nu - mu) / 2, 1 - mu, x) * mpmath.rgamma(1 - mu)


def _log_weight_prefix(m, K, j):
    # log of (m^m/Gamma(m)) K^j / j!
    return m * math.log(m) - special.gammaln(m) + j * math.log(K) - special.gammaln(j + 1)


def _pair_grid(j, delta):
    k, l = np.meshgrid(np.arange(j + 1), np.arange(j + 1), indexing="ij")
    keep = l <= k
    if delta == 0:
        keep &= l == 0
    return k[keep], l[keep]


def _weight_double(m, K, delta, j):
    """Weight for term j in double precision plus the cancellation ratio sum|t|/|sum t|."""
    x = (K * delta / (m + K)) ** 2
    nu = j + m
    k, l = _pair_grid(j, delta)
    mu = k - 2 * l
    with special.errstate(all="ignore"), np.errstate(all="ignore"):
        r_of_mu = np.array([_r_function(int(u), nu, x) for u in range(-j, j + 1)])
    rv = r_of_mu[mu + j]
    ld = math.log(delta) - math.log(2.0) if delta > 0 else 0.0  # delta / 2 underflows for subnormal delta
    lg = (special.gammaln(j + 1) - special.gammaln(j - k + 1) - special.gammaln(l + 1) - special.gammaln(k - l + 1)
          + special.gammaln(j + m + 2 * l - k) + (k - j - m - 2 * l) * math.log(m + K) + (2 * l - k) * math.log(K)
          + 2 * l * ld + _log_weight_prefix(m, K, j))
    with np.errstate(over="ignore", invalid="ignore"):
        terms = np.exp(lg) * rv * np.where(k % 2, -1.0, 1.0)
        total = float(np.sum(terms))
        absum = float(np.sum(np.abs(terms)))
    ratio = absum / abs(total) if total != 0 and np.isfinite(absum) else math.inf
    return total, ratio, absum


def _to_mpfr(v):
    sign, man, exp, _ = v._mpf_
    out = gmpy2.mul_2exp(gmpy2.mpfr(man), exp)
    return -out if sign else out


def _weight_mp(m, K, delta, j, dps):
    """Weight for term j at dps digits; also returns sum of |terms| (same scale)."""
    bits = int(dps * 3.33) + 16
    with mpmath.workdps(dps):
        nu = j + mpmath.mpf(m)
        x = (mpmath.mpf(K) * mpmath.mpf(delta) / (mpmath.mpf(m) + mpmath.mpf(K))) ** 2
        rvals = [_r_function_mp(mu, nu, x) for mu in range(-j, j + 1)]
    with gmpy2.context(gmpy2.get_context(), precision=bits):
        rvals = [_to_mpfr(r) for r in rvals]
        m_, K_, d_ = gmpy2.mpfr(m), gmpy2.mpfr(K), gmpy2.mpfr(delta)
        # Gamma(m+n)/(m+K)^n for n = 0..2j by recurrence
        inv_mk = 1 / (m_ + K_)
        gp = [gmpy2.gamma(m_) * (m_ + K_) ** (-m_)]
        for n in range(2 * j):
            gp.append(gp[-1] * (m_ + n) * inv_mk)
        k_pow = [K_ ** e for e in range(-j, j + 1)]
        d2 = [((d_ / 2) ** 2) ** l for l in range(j + 1)] if delta > 0 else [gmpy2.mpfr(1)]
        total = gmpy2.mpfr(0)
        absum = gmpy2.mpfr(0)
        for k in range(j + 1):
            bjk = math.comb(j, k)
            for l in range(k + 1 if delta > 0 else 1):
                # (m+K)^(k-j-2l) K^(2l-k) folded into gp and k_pow
                t = (bjk * math.comb(k, l)) * gp[j + 2 * l - k] * k_pow[2 * l - k + j] * d2[l] * rvals[k - 2 * l + j]
                total += -t if k % 2 else t
                absum += abs(t)
        pre = m_ ** m_ / gmpy2.gamma(m_) * K_ ** j / gmpy2.factorial(j)
        return float(total * pre), float(absum * pre)


_WEIGHT_TABLE: dict = {}
_WEIGHT_DIGITS: dict = {}


def _weights_upto(m, K, delta, n_terms):
    """Mixture weights for j = 0..n_terms, memoised per parameter triple."""
    key = (m, K, delta)
    table = _WEIGHT_TABLE.setdefault(key, [])
    digits = _WEIGHT_DIGITS.setdefault(key, [0.0])
    if K == 0:
        w = np.zeros(n_terms + 1)
        w[0] = 1.0
        return w
    if (K * delta / (m + K)) ** 2 > 0.999:
        raise ValueError("R-function argument too close to 1; series unreliable")
    while len(table) <= n_terms:
        j = len(table)
        if len(digits) == 1:
            w, ratio, _ = _weight_double(m, K, delta, j)
        if len(digits) > 1 or not np.isfinite(w) or ratio > 1e4:
            # target ~1e-20 absolute error; guess the cancellation from term j-1, redo if short
            guess = digits[-1] + max(digits[-1] - (digits[-2] if len(digits) > 1 else 0.0), 1.0) + 2.0
            dps = int(25 + guess)
            w, absum = _weight_mp(m, K, delta, j, dps)
            need = 25 + max(math.log10(absum), 0.0)
            if need > dps:
                w, absum = _weight_mp(m, K, delta, j, int(need) + 5)
            digits.append(max(math.log10(absum), 0.0))
        table.append(w)
    return np.asarray(table[: n_terms + 1])


def ftr_coefficients(p: FtrParams, m_terms: int) -> FtrCoefficients:
    """alpha_0..alpha_M and the normalised mixture weights."""
    if m_terms < 0:
        raise ValueError("m_terms must be nonnegative")
    w = _weights_upto(float(p.m), float(p.k_ratio), float(p.delta), int(m_terms))
    residual = 1.0 - float(np.sum(w))
    if residual < -1e-9:
        raise CoefficientInstability(f"negative residual {residual:.3e}")
    if p.k_ratio == 0:
        alpha = w.copy()
    else:
        j = np.arange(m_terms + 1)
        alpha = w * np.exp(special.gammaln(j + 1) - j * math.log(p.k_ratio) - p.m * math.log(p.m) + special.gammaln(p.m))
    return FtrCoefficients(alpha, w, int(m_terms), max(residual, 0.0))


def residual_sequence(p: FtrParams, m_max: int) -> np.ndarray:
    w = ftr_coefficients(p, m_max).weights
    return 1.0 - np.cumsum(w)


def select_truncation(p: FtrParams, tol: float, cap: int = HARD_CAP) -> int:
    """Smallest M whose weight deficit is below tol."""
    if not 0 < tol < 1:
        raise ValueError("tol must lie in (0, 1)")
    if p.k_ratio == 0:
        return 0
    total = 0.0
    for M in range(cap + 1):
        total += float(_weights_upto(float(p.m), float(p.k_ratio), float(p.delta), M)[M])
        if 1.0 - total < tol:
            return M
    raise TruncationCapExceeded(f"residual {1.0 - total:.3e} still above {tol} at M={cap}")


@lru_cache(maxsize=256)
def default_truncation(p: FtrParams, tol: float = 1e-6) -> int:
    return select_truncation(p, tol)


# ---------------------------------------------------------------------------
# densities


def ftr_pdf(p: FtrParams, x, M: int):
    w = ftr_coefficients(p, M).weights
    x = np.asarray(x, dtype=float)
    y = x / (2 * p.sigma2)
    j = np.arange(M + 1)
    with np.errstate(divide="ignore", invalid="ignore"):
        logt = j[:, None] * np.log(y.ravel()[None, :]) - y.ravel()[None, :] - special.gammaln(j + 1)[:, None]
        terms = np.where(y.ravel()[None, :] > 0, np.exp(logt), (j[:, None] == 0) * 1.0)
    out = (w @ terms) / (2 * p.sigma2)
    out = np.where(x.ravel() < 0, 0.0, out)
    return out.reshape(x.shape) if x.ndim else float(out[0])


def ftr_cdf(p: FtrParams, x, M: int):
    w = ftr_coefficients(p, M).weights
    x = np.asarray(x, dtype=float)
    y = np.maximum(x.ravel(), 0.0) / (2 * p.sigma2)
    j = np.arange(M + 1)
    out = w @ special.gammainc(j[:, None] + 1, y[None, :])
    return out.reshape(x.shape) if x.ndim else float(out[0])


def f_pdf(p: FisherFParams, z):
    mf, ms, zb = p.m_f, p.m_s, p.z_bar
    z = np.asarray(z, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        lg = (mf * math.log(mf) + ms * math.log(ms - 1) + ms * math.log(zb) + (mf - 1) * np.log(z)
              - special.betaln(mf, ms) - (mf + ms) * np.log(mf * z + (ms - 1) * zb))
        at_zero = 0.0 if mf > 1 else (np.inf if mf < 1 else 1.0 / (special.beta(mf, ms) * (ms - 1) * zb))
        out = np.where(z > 0, np.exp(lg), at_zero)
    return out if out.ndim else float(out)


def f_cdf(p: FisherFParams, z):
    """Closed form with the 2F1 at argument -m_f z / ((m_s - 1) z_bar)."""
    mf, ms, zb = p.m_f, p.m_s, p.z_bar
    z_arr = np.asarray(z, dtype=float)
    flat = []
    for zz in z_arr.ravel():
        if zz <= 0:
            flat.append(0.0)
            continue
        if np.isinf(zz):
            flat.append(1.0)
            continue
        lead = ((mf - 1) * math.log(mf) + mf * math.log(zz) - special.betaln(mf, ms)
                - mf * math.log(ms - 1) - mf * math.log(zb))
        val = math.exp(lead) * gauss_2f1(mf, mf + ms, mf + 1, -mf * zz / ((ms - 1) * zb))
        flat.append(min(max(val, 0.0), 1.0))
    out = np.asarray(flat).reshape(z_arr.shape)
    return out if out.ndim else float(out)


def f_cdf_beta(p: FisherFParams, z):
    """Same CDF through the regularised incomplete beta function."""
    z = np.asarray(z, dtype=float)
    u = p.m_f * z / (p.m_f * z + (p.m_s - 1) * p.z_bar)
    out = special.betainc(p.m_f, p.m_s, np.clip(u, 0.0, 1.0))
    return out if out.ndim else float(out)


# ---------------------------------------------------------------------------
# samplers


def specular_amplitudes(p: FtrParams):
    power = 2 * p.sigma2 * p.k_ratio
    root = math.sqrt(power) / 2
    return root * (math.sqrt(1 + p.delta) + math.sqrt(1 - p.delta)), root * (math.sqrt(1 + p.delta) - math.sqrt(1 - p.delta))


def sample_ftr(p: FtrParams, stream: np.random.Generator, size=None):
    v1, v2 = specular_amplitudes(p)
    zeta = stream.gamma(p.m, 1.0 / p.m, size=size)
    phi1 = stream.uniform(0, 2 * np.pi, size=size)
    phi2 = stream.uniform(0, 2 * np.pi, size=size)
    sd = math.sqrt(p.sigma2)
    diffuse = stream.normal(0, sd, size=size) + 1j * stream.normal(0, sd, size=size)
    spec = np.sqrt(zeta) * (v1 * np.exp(1j * phi1) + v2 * np.exp(1j * phi2))
    return np.abs(spec + diffuse) ** 2


def sample_f(p: FisherFParams, stream: np.random.Generator, size=None):
    g_f = stream.gamma(p.m_f, 1.0, size=size)
    g_s = stream.gamma(p.m_s, 1.0, size=size)
    return p.scale * g_f / g_s
