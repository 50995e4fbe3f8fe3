"""Distribution of the per-user SINR gamma = C1 X / (kappa2 + C2 Z).

X is the FTR power (series of gammas) and Z the Fisher-Snedecor power.
Two Mellin-Barnes layouts are provided:

* ``compact``: the Fox H layout whose second argument is
  Omega / (m_f kappa2 - Omega); only defined while Omega < m_f kappa2.
* ``general``: no-jamming FTR CDF plus a jamming correction, with the
  second argument a = Omega / (m_f kappa2). Valid for every a > 0 and
  free of cancellation when the CDF is small.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy import special

from .fading import FisherFParams, FtrParams, default_truncation, ftr_coefficients
from .semi_analytic import SinrQuadrature, series_cdf, series_pdf
from .special_fn import ContourPolicy, FoxHSpec, GammaFactor, fox_h_series, gauss_2f1, kummer_1f1

# a above this uses the general layout in "auto" mode
COMPACT_FORM_LIMIT = 0.9
# below this the a^-m_f prefactor of the compact layout cancels badly
COMPACT_FORM_FLOOR = 1e-6
SINGULAR_GUARD = 1e-9


@dataclass(frozen=True)
class LinkCoefficients:
    c1: float
    c2: float
    kappa2: float
    shadow_scale: float = 0.0  # (m_s - 1) * z_bar of the interfering link

    def __post_init__(self):
        if self.c1 < 0 or self.c2 < 0:
            raise ValueError("link coefficients must be nonnegative")
        if not self.kappa2 > 0:
            raise ValueError("kappa2 must be positive")

    @property
    def omega(self) -> float:
        return self.shadow_scale * self.c2

    @classmethod
    def from_fisher(cls, c1, c2, kappa2, fisher: FisherFParams):
        return cls(float(c1), float(c2), float(kappa2), (fisher.m_s - 1.0) * fisher.z_bar)


@dataclass(frozen=True)
class UserChannel:
    ftr: FtrParams
    fisher: FisherFParams
    link: LinkCoefficients
    truncation: int | None = None
    tol: float = 1e-6
    policy: ContourPolicy = field(default_factory=ContourPolicy)

    def __post_init__(self):
        if self.truncation is None:
            object.__setattr__(self, "truncation", default_truncation(self.ftr, self.tol))
        expected = (self.fisher.m_s - 1.0) * self.fisher.z_bar
        if self.link.shadow_scale != expected:
            object.__setattr__(self, "link", dataclasses.replace(self.link, shadow_scale=expected))

    @property
    def weights(self) -> np.ndarray:
        return ftr_coefficients(self.ftr, self.truncation).weights

    @property
    def jamming_ratio(self) -> float:
        """a = Omega / (m_f kappa2)."""
        return self.link.omega / (self.fisher.m_f * self.link.kappa2)

    def signal_argument(self, gamma: float) -> float:
        """kappa2 gamma / (2 sigma2 C1)."""
        return self.link.kappa2 * gamma / (2 * self.ftr.sigma2 * self.link.c1)

    def with_link(self, c1=None, c2=None) -> "UserChannel":
        link = dataclasses.replace(self.link, c1=self.link.c1 if c1 is None else c1,
                                   c2=self.link.c2 if c2 is None else c2)
        return dataclasses.replace(self, link=link)

    def quadrature(self, nodes: int = 192) -> SinrQuadrature:
        f = self.fisher
        return SinrQuadrature(self.weights, self.ftr.sigma2, f.m_f, f.m_s, f.z_bar,
                              self.link.c1, self.link.c2, self.link.kappa2, nodes=nodes)


class ApproxResult(NamedTuple):
    value: float
    jamming_ratio: float
    signal_argument: float


# ---------------------------------------------------------------------------
# kernels


def _g(offset, c1=0.0, c2=0.0):
    return GammaFactor(offset, (c1, c2))


def compact_cdf_spec(j: int, m_f: float, m_s: float) -> FoxHSpec:
    p, q = m_f, m_s
    return FoxHSpec(
        2,
        denominator_joint=(_g(p + q, -1, -1),),
        numerator_per_var=(_g(1 + j, -1), _g(q, -1), _g(0, 1), _g(p, 0, -1), _g(p + q, 0, -1), _g(0, 0, 1)),
        denominator_per_var=(_g(1, 1),),
        sign_convention=(1, 1),
    )


def compact_pdf_spec(j: int, m_f: float, m_s: float) -> FoxHSpec:
    p, q = m_f, m_s
    return FoxHSpec(
        2,
        denominator_joint=(_g(p + q, 1, 1),),
        numerator_per_var=(_g(1 + j, 1), _g(q, 1), _g(p, 0, 1), _g(p + q, 0, 1), _g(0, 0, -1)),
        sign_convention=(-1, -1),
    )


def compact_rate_spec(j: int, m_f: float, m_s: float) -> FoxHSpec:
    # pdf kernel times Gamma(s)^2 Gamma(1-s) / Gamma(1+s), the Mellin transform of log(1+g)/g
    p, q = m_f, m_s
    return FoxHSpec(
        2,
        denominator_joint=(_g(p + q, 1, 1),),
        numerator_per_var=(_g(1 + j, 1), _g(q, 1), _g(0, 1), _g(0, 1), _g(1, -1),
                           _g(p, 0, 1), _g(p + q, 0, 1), _g(0, 0, -1)),
        denominator_per_var=(_g(1, 1),),
        sign_convention=(-1, -1),
    )


def general_spec(j: int, m_f: float, m_s: float, kind: str) -> FoxHSpec:
    """Gamma(j+1+s) Gamma(s-t) Gamma(t) Gamma(p-t) Gamma(q+t) / D(s), variables (s, t), signs (-1, -1).

    kind: "cdf" (D = Gamma(1+s)), "pdf" (D = Gamma(s)),
    "rate" (extra Gamma(s) Gamma(1-s) over Gamma(1+s)).
    """
    p, q = m_f, m_s
    num = [_g(1 + j, 1), _g(0, 0, 1), _g(p, 0, -1), _g(q, 0, 1)]
    den = []
    if kind == "cdf":
        den.append(_g(1, 1))
    elif kind == "pdf":
        den.append(_g(0, 1))
    elif kind == "rate":
        num += [_g(0, 1), _g(1, -1)]
        den.append(_g(1, 1))
    else:
        raise ValueError(kind)
    return FoxHSpec(2, numerator_joint=(_g(0, 1, -1),), numerator_per_var=tuple(num),
                    denominator_per_var=tuple(den), sign_convention=(-1, -1))


def _general_abscissa(ch: UserChannel, kind: str, shifted: bool = False):
    p, q = ch.fisher.m_f, ch.fisher.m_s
    if shifted:
        # -min(q, 1) < Re t < Re s < 0: the Gamma(t) residue at 0 (the no-jamming term) is split off
        t = -0.8 * min(q, 1.0)
        return (0.75 * t, t)
    # Re s > Re t > 0, Re t < p; the rate also needs Re s < 1
    t = min(0.3, 0.5 * p)
    return (0.5 * (1.0 + t), t) if kind == "rate" else (t + 0.5, t)


def _prefactors(ch: UserChannel) -> np.ndarray:
    w = ch.weights
    j = np.arange(w.size)
    p, q = ch.fisher.m_f, ch.fisher.m_s
    return w * np.exp(-special.gammaln(j + 1) - special.gammaln(p) - special.gammaln(q))


def _guarded_ratio(ch: UserChannel) -> float:
    mk = ch.fisher.m_f * ch.link.kappa2
    omega = ch.link.omega
    if abs(mk - omega) < SINGULAR_GUARD * mk:
        omega = omega * (1.0 - 1e-6)
    return omega / mk


def _pick_form(ch: UserChannel, form: str) -> str:
    if form not in ("auto", "compact", "general"):
        raise ValueError(f"unknown form {form!r}")
    if form == "auto":
        return "compact" if COMPACT_FORM_FLOOR <= _guarded_ratio(ch) < COMPACT_FORM_LIMIT else "general"
    if form == "compact" and _guarded_ratio(ch) >= 1.0:
        raise ValueError("compact layout needs Omega < m_f kappa2")
    return form


def _compact_terms(ch: UserChannel, builder):
    a = _guarded_ratio(ch)
    pref = _prefactors(ch) * a ** (-ch.fisher.m_f)
    return [(pref[j], builder(j, ch.fisher.m_f, ch.fisher.m_s)) for j in range(pref.size)], a / (1.0 - a)


def _general_terms(ch: UserChannel, kind: str):
    pref = _prefactors(ch)
    return [(pref[j], general_spec(j, ch.fisher.m_f, ch.fisher.m_s, kind)) for j in range(pref.size)]


def _general_policy(ch: UserChannel, kind: str, shifted: bool = False) -> ContourPolicy:
    return dataclasses.replace(ch.policy, abscissa=_general_abscissa(ch, kind, shifted))


# ---------------------------------------------------------------------------
# public evaluators


def _scalar(fn, ch, gamma, **kw):
    g = np.asarray(gamma, dtype=float)
    out = np.array([fn(ch, float(x), **kw) for x in g.ravel()]).reshape(g.shape)
    return float(out) if out.ndim == 0 else out


def _cdf_one(ch: UserChannel, gamma: float, form: str = "auto", with_error: bool = False):
    if gamma <= 0:
        return (0.0, 0.0) if with_error else 0.0
    if math.isinf(gamma):
        return (1.0, 0.0) if with_error else 1.0
    if ch.link.c1 <= 0:
        return (1.0, 0.0) if with_error else 1.0
    x1 = ch.signal_argument(gamma)
    base = float(series_cdf(ch.weights, 1.0, np.array(x1 * 2.0)))  # no-jamming FTR CDF at kappa2 gamma / C1
    if ch.link.c2 <= 0 or ch.link.omega <= 0:
        return (base, 0.0) if with_error else base
    form = _pick_form(ch, form)
    if form == "compact":
        terms, x2 = _compact_terms(ch, compact_cdf_spec)
        res = fox_h_series(terms, (x1, x2), ch.policy)
        raw, err = res.value, res.error
    else:
        shifted = base < 0.5
        res = fox_h_series(_general_terms(ch, "cdf"), (x1, ch.jamming_ratio), _general_policy(ch, "cdf", shifted))
        raw = (base if shifted else float(np.sum(ch.weights))) - res.value
        err = res.error
    if raw < -1e-6 or raw > 1 + 1e-6:
        raise ArithmeticError(f"SINR CDF {raw:.6g} outside [0, 1] at gamma={gamma}")
    val = min(max(raw, 0.0), 1.0)
    return (val, err) if with_error else val


def sinr_cdf(ch: UserChannel, gamma, form: str = "auto"):
    return _scalar(_cdf_one, ch, gamma, form=form)


def sinr_cdf_with_error(ch: UserChannel, gamma: float, form: str = "auto"):
    return _cdf_one(ch, float(gamma), form=form, with_error=True)


def _pdf_one(ch: UserChannel, gamma: float, form: str = "auto"):
    if gamma <= 0 or ch.link.c1 <= 0:
        return 0.0
    x1 = ch.signal_argument(gamma)
    scale = ch.link.kappa2 / ch.link.c1
    base = float(series_pdf(ch.weights, ch.ftr.sigma2, np.array(scale * gamma))) * scale
    if ch.link.c2 <= 0 or ch.link.omega <= 0:
        return base
    form = _pick_form(ch, form)
    if form == "compact":
        terms, x2 = _compact_terms(ch, compact_pdf_spec)
        val = fox_h_series(terms, (x1, x2), ch.policy).value / gamma
    else:
        shifted = float(series_cdf(ch.weights, 1.0, np.array(x1 * 2.0))) < 0.5
        res = fox_h_series(_general_terms(ch, "pdf"), (x1, ch.jamming_ratio), _general_policy(ch, "pdf", shifted))
        val = (base if shifted else 0.0) + res.value / gamma
    return max(val, 0.0)


def sinr_pdf(ch: UserChannel, gamma, form: str = "auto"):
    return _scalar(_pdf_one, ch, gamma, form=form)


def outage_probability(ch: UserChannel, gamma_th: float, form: str = "auto") -> float:
    return sinr_cdf(ch, gamma_th, form=form)


# ---------------------------------------------------------------------------
# regime approximations


def sinr_cdf_low_jamming(ch: UserChannel, gamma: float) -> ApproxResult:
    """Leading residue in the jamming variable; a -> 0."""
    a = _guarded_ratio(ch)
    x1 = ch.signal_argument(gamma)
    w = ch.weights
    total = 0.0
    for j in range(w.size):
        total += w[j] * math.exp((1 + j) * math.log(x1) - special.gammaln(j + 2)) * kummer_1f1(1 + j, 2 + j, -x1)
    return ApproxResult(total * (1.0 - a) ** (-ch.fisher.m_f), a, x1)


def _js_split(m_s: float):
    """(j_s, integer?) with j_s + 1 < m_s < j_s + 2, or j_s = m_s - 1 for integer m_s."""
    if abs(m_s - round(m_s)) < 1e-12:
        return int(round(m_s)) - 1, True
    return int(math.floor(m_s)) - 1, False


def sinr_cdf_high_power(ch: UserChannel, gamma: float) -> ApproxResult:
    """Leading residues in the signal variable; C1 -> infinity."""
    p, q = ch.fisher.m_f, ch.fisher.m_s
    a = _guarded_ratio(ch)
    x1 = ch.signal_argument(gamma)
    w = ch.weights
    j_s, integer = _js_split(q)
    # residues at s = m_s for j > j_s
    first = 0.0
    for j in range(j_s + 1, w.size):
        first += w[j] * math.exp(special.gammaln(1 + j - q) - special.gammaln(j + 1))
    # (Omega / m_f)(gamma / (2 sigma2 C1)) equals a * x1
    first *= math.exp(q * math.log(a * x1) - math.log(q) - special.betaln(q, p))
    second = 0.0
    z = 1.0 - 1.0 / a
    for j in range(0, min(j_s, w.size - 1) + 1):
        if integer and j == j_s:
            xi = 1.0
        else:
            xi = math.gamma(q - 1 - j)
        # w_j j! recovers m^m/Gamma(m) K^j alpha_j
        term = (xi * w[j] * math.exp(special.gammaln(j + 1) - special.betaln(p + q - j - 1, j + 1)
                                     - special.gammaln(j + 2) + (j + 1) * math.log(x1)))
        second += term * gauss_2f1(p, q + p, p + q - j - 1, z)
    second *= a ** (-p) / math.gamma(q)
    return ApproxResult(first + second, a, x1)


def sinr_cdf_high_power_low_jamming(ch: UserChannel, gamma: float) -> ApproxResult:
    a = _guarded_ratio(ch)
    x1 = ch.signal_argument(gamma)
    w = ch.weights
    j = np.arange(w.size)
    total = float(np.sum(w * np.exp((1 + j) * math.log(x1) - special.gammaln(j + 2))))
    return ApproxResult(total * (1.0 - a) ** (-ch.fisher.m_f), a, x1)


# ---------------------------------------------------------------------------
# rate on the user side (used by covert_metrics)


def rate_mellin(ch: UserChannel, form: str = "auto") -> float:
    """Ergodic rate log2(1 + gamma) in bits/s/Hz from the double Mellin-Barnes layout."""
    if ch.link.c1 <= 0:
        return 0.0
    x1 = ch.link.kappa2 / (2 * ch.ftr.sigma2 * ch.link.c1)
    if ch.link.c2 <= 0 or ch.link.omega <= 0:
        # one-variable version: sum_j w_j/Gamma(j+1) * MB of Gamma(j+1+s) Gamma(s) Gamma(1-s)/s
        return _rate_no_jamming(ch, x1)
    form = _pick_form(ch, form)
    if form == "compact":
        terms, x2 = _compact_terms(ch, compact_rate_spec)
        pol = dataclasses.replace(ch.policy, abscissa=(0.5, _compact_t_abscissa(ch)))
        val = fox_h_series(terms, (x1, x2), pol).value
    else:
        val = fox_h_series(_general_terms(ch, "rate"), (x1, ch.jamming_ratio), _general_policy(ch, "rate")).value
    return val / math.log(2.0)


def _compact_t_abscissa(ch: UserChannel) -> float:
    return -0.5 * ch.fisher.m_f


def _rate_no_jamming(ch: UserChannel, x1: float) -> float:
    w = ch.weights
    j = np.arange(w.size)
    sp = [FoxHSpec(1, numerator_per_var=(GammaFactor(1 + jj, (1,)), GammaFactor(0, (1,)), GammaFactor(1, (-1,))),
                   denominator_per_var=(GammaFactor(1, (1,)),), sign_convention=(-1,)) for jj in j]
    pref = w * np.exp(-special.gammaln(j + 1))
    pol = dataclasses.replace(ch.policy, abscissa=(0.5,))
    return fox_h_series(list(zip(pref, sp)), (x1,), pol).value / math.log(2.0)
