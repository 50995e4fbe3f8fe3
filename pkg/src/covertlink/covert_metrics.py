"""Warden detection error, covert rate and the t^A (B-t)^C e^{-Dt} integral family."""
from __future__ import annotations

import cmath
import dataclasses
import logging
import math
from dataclasses import dataclass
from typing import NamedTuple

import mpmath
import numpy as np
from scipy import integrate, optimize, special

from .fading import f_cdf
from .semi_analytic import detection_error_curve, false_alarm_quad, missed_detection_quad
from .sinr_stats import UserChannel, rate_mellin
from .special_fn import ContourPolicy, ConvergenceError, FoxHSpec, GammaFactor, fox_h_bivariate, fox_h_series, kummer_1f1

log = logging.getLogger(__name__)

RATE_CROSSCHECK = 0.01


class WardenChannel(UserChannel):
    """Same fields as UserChannel, read from the warden's side (C1w, C2w, Omega_w)."""

    @property
    def ftr_w(self):
        return self.ftr

    @property
    def fisher_w(self):
        return self.fisher

    @property
    def link_w(self):
        return self.link


def _g(offset, c1=0.0, c2=0.0):
    return GammaFactor(offset, (c1, c2))


# ---------------------------------------------------------------------------
# detection error probability


def false_alarm_prob(w: WardenChannel, epsilon: float) -> float:
    e = float(epsilon) - w.link.kappa2
    if e <= 0:
        return 1.0
    if w.link.c2 <= 0:
        return 0.0
    if math.isinf(e):
        return 0.0
    return float(1.0 - f_cdf(w.fisher, e / w.link.c2))


def missed_detection_spec(j: int, m_f: float, m_s: float) -> FoxHSpec:
    """Gamma(v) Gamma(j+1-v) Gamma(t) Gamma(p-t) Gamma(q+t) / Gamma(1+v+t), signs (-1, -1)."""
    p, q = m_f, m_s
    return FoxHSpec(
        2,
        denominator_joint=(_g(1, 1, 1),),
        numerator_per_var=(_g(0, 1), _g(1 + j, -1), _g(0, 0, 1), _g(p, 0, -1), _g(q, 0, 1)),
        sign_convention=(-1, -1),
    )


def missed_detection_prob(w: WardenChannel, epsilon: float) -> float:
    """Pr(C1w X + kappa2 + C2w Z < epsilon) from the double Mellin-Barnes layout."""
    e = float(epsilon) - w.link.kappa2
    if e <= 0:
        return 0.0
    if math.isinf(e):
        return 1.0
    c1, c2 = w.link.c1, w.link.c2
    if c1 <= 0:
        return float(f_cdf(w.fisher, e / c2)) if c2 > 0 else 1.0
    wts = w.weights
    if c2 <= 0:
        j = np.arange(wts.size)
        return float(wts @ special.gammainc(j + 1, e / (2 * w.ftr.sigma2 * c1)))
    p, q = w.fisher.m_f, w.fisher.m_s
    j = np.arange(wts.size)
    pref = wts * np.exp(-special.gammaln(j + 1) - special.gammaln(p) - special.gammaln(q))
    terms = [(pref[k], missed_detection_spec(k, p, q)) for k in range(wts.size)]
    x_v = 2 * w.ftr.sigma2 * c1 / e
    x_t = w.link.omega / (p * e)
    if max(x_v, x_t) < 1e-6:
        # both contours become highly oscillatory this deep in the tail; the
        # one-dimensional route stays exact there
        return min(max(detection_error_fast(w, epsilon) - false_alarm_prob(w, epsilon), 0.0), 1.0)
    val = fox_h_series(terms, (x_v, x_t), w.policy).value
    return min(max(val, 0.0), 1.0)


def detection_error_probability(w: WardenChannel, epsilon: float) -> float:
    return false_alarm_prob(w, epsilon) + missed_detection_prob(w, epsilon)


def detection_error_fast(w: WardenChannel, epsilon: float, nodes: int = 96) -> float:
    """Same quantity through one-dimensional Gauss-Jacobi quadrature (optimiser path)."""
    f = w.fisher
    pfa = false_alarm_quad(f.m_f, f.m_s, f.z_bar, w.link.c2, w.link.kappa2, epsilon)
    pmd = missed_detection_quad(w.weights, w.ftr.sigma2, f.m_f, f.m_s, f.z_bar, w.link.c1, w.link.c2,
                                w.link.kappa2, epsilon, nodes=nodes)
    return pfa + pmd


class WardenResponse(NamedTuple):
    epsilon: float
    xi: float


def dep_curve(w: WardenChannel, epsilon, nodes: int = 96) -> np.ndarray:
    """detection_error_fast over an array of thresholds in one pass."""
    f = w.fisher
    return detection_error_curve(w.weights, w.ftr.sigma2, f.m_f, f.m_s, f.z_bar, w.link.c1, w.link.c2,
                                 w.link.kappa2, epsilon, nodes=nodes)


def threshold_box(w: WardenChannel) -> tuple[float, float]:
    """Search interval for the warden threshold: (kappa2, kappa2 + 10 E[C1w X + C2w Z])."""
    k2 = w.link.kappa2
    spread = w.link.c1 * w.ftr.mean + w.link.c2 * w.fisher.z_bar
    return k2, k2 + 10.0 * max(spread, 1e-12 * k2)


def warden_best_response(w: WardenChannel, fast: bool = True, bracket_hint: float | None = None,
                         scan: int = 41) -> WardenResponse:
    """Minimise xi over epsilon: log-spaced scan of epsilon - kappa2, then bounded Brent.

    bracket_hint, when given, narrows the scan around a previous optimum.
    """
    k2 = w.link.kappa2
    if w.link.c1 <= 0:
        return WardenResponse(k2 * (1 + 1e-9), 1.0)
    lo_e, hi_e = threshold_box(w)
    lo, hi = math.log((hi_e - k2) * 1e-9), math.log(hi_e - k2)
    if bracket_hint is not None and bracket_hint > k2:
        c = math.log(bracket_hint - k2)
        lo, hi = max(lo, c - 3.0), min(hi, c + 3.0)
        if hi <= lo:
            lo, hi = c - 3.0, c + 3.0
    grid = np.linspace(lo, hi, scan)
    if fast:
        vals = dep_curve(w, k2 + np.exp(grid))
        fn = lambda u: float(dep_curve(w, k2 + math.exp(u))[0])
    else:
        vals = np.array([detection_error_probability(w, k2 + math.exp(u)) for u in grid])
        fn = lambda u: detection_error_probability(w, k2 + math.exp(u))
    i = int(np.argmin(vals))
    a, b = grid[max(i - 1, 0)], grid[min(i + 1, grid.size - 1)]
    res = optimize.minimize_scalar(fn, bounds=(a, b), method="bounded", options={"xatol": 1e-7})
    if res.fun <= vals[i]:
        return WardenResponse(k2 + math.exp(res.x), float(res.fun))
    return WardenResponse(k2 + math.exp(grid[i]), float(vals[i]))


# ---------------------------------------------------------------------------
# covert rate


def covert_rate(ch: UserChannel, check: bool = True, form: str = "auto") -> float:
    """Ergodic rate in bits/s/Hz; Mellin-Barnes value cross-checked against the CDF integral."""
    if ch.link.c1 <= 0:
        return 0.0
    value = rate_mellin(ch, form=form)
    if check:
        ref = ch.quadrature().rate_definition()
        if not math.isfinite(value) or abs(value - ref) > RATE_CROSSCHECK * abs(ref):
            log.warning("Mellin-Barnes rate %.6g disagrees with quadrature %.6g; using quadrature", value, ref)
            return ref
    if not (value >= 0 and math.isfinite(value)):
        raise ArithmeticError(f"rate {value} is not a finite nonnegative number")
    return value


def covert_rate_fast(ch: UserChannel) -> float:
    return ch.quadrature().rate_mgf()


# ---------------------------------------------------------------------------
# int_{T1}^{T2} t^A (B - t)^C e^{-D t} dt


@dataclass(frozen=True)
class LemmaIntegralCase:
    t1: float
    t2: float
    a: float
    b: float
    c: float
    d: float

    def __post_init__(self):
        t1, t2 = self.t1, self.t2
        if not (self.b > 0 and self.d > 0):
            raise ValueError("B and D must be positive")
        if self.a <= -1:
            raise ValueError("A must exceed -1")
        if t1 == 0 and t2 == self.b:
            if self.c <= -1:
                raise ValueError("C must exceed -1 on (0, B)")
        elif t1 == 0 and math.isinf(t2):
            if self.c <= -1:
                raise ValueError("C must exceed -1 on (0, inf)")
        elif t1 == 0 and 0 < t2 < math.inf:
            if self.c <= -1:
                raise ValueError("C must exceed -1")
        elif t1 > 0 and math.isinf(t2):
            if self.c <= -1 and t1 <= self.b:
                raise ValueError("C must exceed -1 when the interval contains B")
        else:
            raise ValueError("interval must be (0,T), (T,inf), (0,inf) or (0,B)")
        if abs(self.c - round(self.c)) < 1e-12 and self.c < 0:
            raise ValueError("C must not be a negative integer")

    @property
    def kind(self) -> str:
        if self.t1 == 0 and self.t2 == self.b:
            return "0B"
        if self.t1 == 0 and math.isinf(self.t2):
            return "0inf"
        if self.t1 == 0:
            return "0T"
        return "Tinf"


def _over_0b(A, B, C, D) -> float:
    """B^{1+A+C} B(1+A, 1+C) 1F1(1+A; 2+A+C; -BD)."""
    try:
        lead = (1 + A + C) * math.log(B) + special.betaln(1 + A, 1 + C)
        return math.exp(lead) * kummer_1f1(1 + A, 2 + A + C, -B * D)
    except (ConvergenceError, ArithmeticError):
        # large BD: the double series cancels, mpmath switches to asymptotics
        with mpmath.workdps(30):
            return float(mpmath.power(B, 1 + A + C) * mpmath.beta(1 + A, 1 + C)
                         * mpmath.hyp1f1(1 + A, 2 + A + C, -B * D))


def _beyond_b(A, B, C, D) -> float:
    """int_B^inf t^A (t-B)^C e^{-Dt} dt = e^{-DB} Gamma(1+C) B^{1+A+C} U(1+C, 2+A+C, BD)."""
    with mpmath.workdps(30):
        return float(mpmath.exp(-D * B + (1 + A + C) * mpmath.log(B)) * mpmath.gamma(1 + C)
                     * mpmath.hyperu(1 + C, 2 + A + C, B * D))


def _series_sum(term, limit=4000):
    total = mpmath.mpf(0)
    n = 0
    while True:
        t = term(n)
        total += t
        if n > 4 and abs(t) <= 1e-22 * abs(total):
            return total
        n += 1
        if n > limit:
            raise ArithmeticError("segment series did not converge")


def _segment_below(A, B, C, D, ta, tb) -> float:
    """int_ta^tb t^A (B - t)^C e^{-Dt} dt for 0 <= ta < tb <= B.

    Split at B/2: (B - t)^C expanded in t/B on the left half, t^A expanded
    in (B - t)/B on the right half, so both series contract at least by 1/2.
    """
    if tb <= ta:
        return 0.0
    half = B / 2
    with mpmath.workdps(30):
        A_, B_, C_, D_ = (mpmath.mpf(v) for v in (A, B, C, D))
        total = mpmath.mpf(0)
        lo, hi = ta, min(tb, half)
        if hi > lo:
            total += mpmath.power(B_, C_) * _series_sum(
                lambda n: mpmath.binomial(C_, n) * (-1 / B_) ** n * mpmath.power(D_, -(A_ + n + 1))
                * mpmath.gammainc(A_ + n + 1, D_ * lo, D_ * hi))
        lo, hi = max(ta, half), tb
        if hi > lo:
            # u = B - t runs over [B - hi, B - lo]
            u1, u2 = B_ - hi, B_ - lo

            def prim(k, u):
                if u == 0:
                    return mpmath.mpf(0)
                return mpmath.power(u, k + 1) / (k + 1) * mpmath.hyp1f1(k + 1, k + 2, D_ * u)

            total += mpmath.e ** (-D_ * B_) * mpmath.power(B_, A_) * _series_sum(
                lambda n: mpmath.binomial(A_, n) * (-1 / B_) ** n * (prim(C_ + n, u2) - prim(C_ + n, u1)))
        return float(total)


def _segment_above(A, B, C, D, ta, tb) -> float:
    """int_ta^tb t^A (t - B)^C e^{-Dt} dt for B <= ta < tb <= inf, split at 1.6 B."""
    if tb <= ta:
        return 0.0
    knee = 1.6 * B
    with mpmath.workdps(30):
        A_, B_, C_, D_ = (mpmath.mpf(v) for v in (A, B, C, D))
        total = mpmath.mpf(0)
        lo, hi = ta, min(tb, knee)
        if hi > lo:
            # (B + u)^A = B^A sum binom(A, n) (u/B)^n with u/B <= 0.6
            total += mpmath.e ** (-D_ * B_) * mpmath.power(B_, A_) * _series_sum(
                lambda n: mpmath.binomial(A_, n) * B_ ** (-n) * mpmath.power(D_, -(C_ + n + 1))
                * mpmath.gammainc(C_ + n + 1, D_ * (lo - B_), D_ * (hi - B_)))
        lo, hi = max(ta, knee), tb
        if hi > lo:
            upper = mpmath.inf if math.isinf(hi) else D_ * hi
            # (t - B)^C = t^C sum binom(C, n) (-B/t)^n with B/t <= 0.625
            total += _series_sum(
                lambda n: mpmath.binomial(C_, n) * (-B_) ** n * mpmath.power(D_, -(A_ + C_ - n + 1))
                * mpmath.gammainc(A_ + C_ - n + 1, D_ * lo, upper))
        return float(total)


def below_t_spec(A: float, C: float) -> FoxHSpec:
    """Gamma(-s)Gamma(-v)Gamma(2+A+C+s+v)Gamma(1+A+s+v) / (Gamma(2+A+C+s)Gamma(2+A+s+v)), signs (+1, +1)."""
    return FoxHSpec(
        2,
        numerator_joint=(_g(2 + A + C, 1, 1), _g(1 + A, 1, 1)),
        denominator_joint=(_g(2 + A, 1, 1),),
        numerator_per_var=(_g(0, -1), _g(0, 0, -1)),
        denominator_per_var=(_g(2 + A + C, 1),),
        sign_convention=(1, 1),
    )


def _below_t_mellin(A, B, C, D, T, policy: ContourPolicy | None = None) -> float:
    """int_0^T for T < B as B^C tau^{1+A} H(D tau, T/(B-T)), tau = TB/(B-T)."""
    tau = T * B / (B - T)
    x = T / (B - T)
    if policy is None:
        # equal distance to the Gamma(-s), Gamma(-v) poles and the Gamma(1+A+s+v) line
        c = -min(0.5, (1 + A) / 4)
        policy = ContourPolicy(abscissa=(c, c), tol=1e-10)
    res = fox_h_bivariate(below_t_spec(A, C), D * tau, x, policy)
    return math.exp(C * math.log(B) + (1 + A) * math.log(tau)) * res.value


def _mellin_well_conditioned(A, B, D, T) -> bool:
    # for A < 0 the Gamma(1+A+s+v) line crowds the contour and the trapezoid
    # rule stalls around 1e-5; arguments far from 1 make x^s oscillate too fast
    tau = T * B / (B - T)
    x = T / (B - T)
    return A >= 0.2 and 1e-3 <= D * tau <= 1e3 and 1e-3 <= x <= 1e3


def _zero_inf(A, B, C, D, phase) -> complex:
    return _over_0b(A, B, C, D) + phase * _beyond_b(A, B, C, D)


def lemma_integral(case: LemmaIntegralCase, approximate: bool = False, method: str = "auto",
                   policy: ContourPolicy | None = None) -> complex:
    """Principal-branch value of int t^A (B - t)^C e^{-Dt} dt over the case interval.

    Beyond t = B the factor (B - t)^C is taken as e^{i pi C} (t - B)^C, so the
    result is complex once the interval passes B.  With approximate=True the
    (0, inf) case switches to the asymptotic forms when |BD| > 50 or < 0.02.

    method="mellin" forces the two-variable Mellin-Barnes route for T < B
    ((T, inf) then follows by subtraction from (0, inf)); "series" uses the
    convergent segment expansions; "auto" takes the Mellin-Barnes route where
    the contour engine resolves it and the subtraction is harmless.
    """
    if method not in ("auto", "mellin", "series"):
        raise ValueError(f"unknown method {method!r}")
    A, B, C, D = case.a, case.b, case.c, case.d
    phase = cmath.exp(1j * math.pi * C)
    kind = case.kind
    if kind == "0B":
        return complex(_over_0b(A, B, C, D))
    if kind == "0inf":
        if approximate and (B * D > 50 or B * D < 0.02):
            return lemma_zero_inf_approx(A, B, C, D).conjugate()
        return _zero_inf(A, B, C, D, phase)
    T = case.t2 if kind == "0T" else case.t1
    if T >= B:
        if kind == "Tinf":
            return phase * _segment_above(A, B, C, D, T, math.inf)
        return _over_0b(A, B, C, D) + phase * _segment_above(A, B, C, D, B, T)
    use_mellin = method == "mellin" or (method == "auto" and _mellin_well_conditioned(A, B, D, T))
    if kind == "0T":
        if use_mellin:
            return complex(_below_t_mellin(A, B, C, D, T, policy))
        return complex(_segment_below(A, B, C, D, 0.0, T))
    if method == "mellin":
        return _zero_inf(A, B, C, D, phase) - _below_t_mellin(A, B, C, D, T, policy)
    return _segment_below(A, B, C, D, T, B) + phase * _beyond_b(A, B, C, D)


def lemma_zero_inf_approx(A, B, C, D) -> complex:
    """Large/small BD forms of Gamma(1+A) B^C (-B)^{1+A} U(1+A, 2+A+C, -BD).

    Principal branches throughout, so the result is the complex conjugate of
    lemma_integral's convention; real parts coincide.
    """
    bd = B * D
    if bd > 50:
        return complex(math.exp(special.gammaln(1 + A) + C * math.log(B) - (1 + A) * math.log(D)))
    pref = cmath.exp(special.gammaln(1 + A) + C * math.log(B)) * cmath.exp((1 + A) * cmath.log(-B + 0j))
    u_small = (special.gamma(-1 - A - C) / special.gamma(-C)
               + math.exp(special.gammaln(1 + A + C) - special.gammaln(1 + A))
               * cmath.exp(-(1 + A + C) * cmath.log(-bd + 0j)))
    return pref * u_small


def lemma_integral_quadrature(case: LemmaIntegralCase) -> complex:
    """Adaptive quadrature oracle with the same branch convention."""
    A, B, C, D = case.a, case.b, case.c, case.d
    phase = cmath.exp(1j * math.pi * C)
    lo, hi = case.t1, case.t2

    def below(x):
        return x ** A * (B - x) ** C * math.exp(-D * x)

    def above(x):
        return x ** A * (x - B) ** C * math.exp(-D * x)

    def piece(f, a, b, **kw):
        if b <= a:
            return 0.0
        kw.setdefault("limit", 400)
        val, _ = integrate.quad(f, a, b, epsabs=0, epsrel=1e-12, **kw)
        return val

    total = 0j
    if lo < B:
        # algebraic end-point weights keep quad accurate near t = 0 and t = B
        top = min(hi, B)
        if top == B:
            val, _ = integrate.quad(lambda x: math.exp(-D * x), lo, B, weight="alg", wvar=(A, C),
                                    epsabs=0, epsrel=1e-12, limit=400) if lo == 0 else (piece(below, lo, B), 0)
            total += val
        else:
            if lo == 0:
                val, _ = integrate.quad(lambda x: (B - x) ** C * math.exp(-D * x), 0, top, weight="alg",
                                        wvar=(A, 0.0), epsabs=0, epsrel=1e-12, limit=400)
            else:
                val = piece(below, lo, top)
            total += val
    if hi > B:
        start = max(lo, B)
        if start == B:
            mid = min(B + max(1.0, B), hi)
            val, _ = integrate.quad(lambda x: (x + B) ** A * math.exp(-D * (x + B)), 0, mid - B, weight="alg",
                                    wvar=(C, 0.0), epsabs=0, epsrel=1e-12, limit=400)
            rest = piece(above, mid, hi)
            total += phase * (val + rest)
        else:
            total += phase * piece(above, start, hi)
    return total


# ---------------------------------------------------------------------------
# probes


@dataclass
class ConvexityReport:
    epsilon: np.ndarray
    xi: np.ndarray
    second_differences: np.ndarray
    min_value: float
    argmin: float


def dep_threshold_convexity_probe(w: WardenChannel, epsilon_grid, fast: bool = False) -> ConvexityReport:
    eps = np.asarray(epsilon_grid, dtype=float)
    if eps.size < 3:
        raise ValueError("need at least three thresholds")
    if np.any(np.diff(eps) <= 0):
        raise ValueError("grid must be increasing")
    dep = detection_error_fast if fast else detection_error_probability
    xi = np.array([dep(w, e) for e in eps])
    d2 = xi[2:] - 2 * xi[1:-1] + xi[:-2]
    k = int(np.argmin(d2))
    return ConvexityReport(eps, xi, d2, float(d2[k]), float(eps[k + 1]))


@dataclass
class HessianReport:
    c1: np.ndarray
    c2: np.ndarray
    d11: np.ndarray
    d22: np.ndarray
    d12: np.ndarray
    determinant: np.ndarray
    epsilon: np.ndarray


def _xi_at(w: WardenChannel, c1, c2, eps, fast):
    ww = w.with_link(c1=c1, c2=c2)
    return (detection_error_fast if fast else detection_error_probability)(ww, eps)


def _second_partials(w, c1, c2, eps, rel, fast):
    h1, h2 = rel * c1, rel * c2
    f = lambda a, b: _xi_at(w, c1 + a, c2 + b, eps, fast)
    f0 = f(0, 0)
    d11 = (f(h1, 0) - 2 * f0 + f(-h1, 0)) / h1 ** 2
    d22 = (f(0, h2) - 2 * f0 + f(0, -h2)) / h2 ** 2
    d12 = (f(h1, h2) - f(h1, -h2) - f(-h1, h2) + f(-h1, -h2)) / (4 * h1 * h2)
    return np.array([d11, d22, d12])


def dep_hessian_probe(w: WardenChannel, c1_grid, c2_grid, rel_step: float = 1e-3, fast: bool = True) -> HessianReport:
    """Finite-difference Hessian of xi in (C1w, C2w) with epsilon held at the per-point optimum.

    One Richardson step: (4 D(h/2) - D(h)) / 3.
    """
    c1g = np.asarray(c1_grid, dtype=float)
    c2g = np.asarray(c2_grid, dtype=float)
    if np.any(c1g <= 0) or np.any(c2g <= 0):
        raise ValueError("zero-power corner: C1w and C2w must be positive")
    shape = (c1g.size, c2g.size)
    out = {k: np.zeros(shape) for k in ("d11", "d22", "d12", "eps")}
    for i, c1 in enumerate(c1g):
        for k, c2 in enumerate(c2g):
            ww = w.with_link(c1=c1, c2=c2)
            eps = warden_best_response(ww, fast=fast).epsilon
            coarse = _second_partials(w, c1, c2, eps, rel_step, fast)
            fine = _second_partials(w, c1, c2, eps, rel_step / 2, fast)
            d11, d22, d12 = (4 * fine - coarse) / 3
            out["d11"][i, k], out["d22"][i, k], out["d12"][i, k] = d11, d22, d12
            out["eps"][i, k] = eps
    det = out["d11"] * out["d22"] - out["d12"] ** 2
    return HessianReport(c1g, c2g, out["d11"], out["d22"], out["d12"], det, out["eps"])
