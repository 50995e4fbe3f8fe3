"""Special functions used by the closed-form metrics.

Hypergeometric helpers work on real arguments. The Fox H engine evaluates
one- and two-variable Mellin-Barnes integrals with a trapezoidal rule along
vertical contours, with a residue-series fallback for tiny arguments.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
from scipy import integrate, special
from scipy.optimize import linprog


class PoleError(ValueError):
    """Raised when a gamma function is evaluated at one of its poles."""


class PoleSeparationError(ValueError):
    """No vertical contour separates the left and right pole families."""


class DivergentKernelError(RuntimeError):
    """The Mellin-Barnes kernel does not decay within the allowed window."""


class ConvergenceError(RuntimeError):
    pass


def _is_nonpositive_int(x, tol=1e-12) -> bool:
    return x <= tol and abs(x - round(x)) < tol


# --------------------------------------------------------------------------
# log-gamma


def ln_gamma_complex(z):
    """Principal branch of log Gamma(z) for complex z."""
    z = complex(z)
    if z.imag == 0.0 and z.real <= 0.0 and z.real == round(z.real):
        raise PoleError(f"gamma pole at z={z.real}")
    return complex(special.loggamma(z))


def _loggamma_array(z: np.ndarray) -> np.ndarray:
    return special.loggamma(z)


# --------------------------------------------------------------------------
# Gauss hypergeometric 2F1


def _series_2f1(a, b, c, z, max_terms=20000, rtol=1e-16):
    term = 1.0
    total = 1.0
    for n in range(max_terms):
        term *= (a + n) * (b + n) / ((c + n) * (n + 1)) * z
        total += term
        if term == 0.0:
            return total
        if abs(term) < rtol * abs(total) and n > 2:
            return total
    raise ConvergenceError(f"2F1({a},{b};{c};{z}) series did not converge")


def gauss_2f1(a: float, b: float, c: float, z: float) -> float:
    """Real 2F1(a, b; c; z) for z < 1.

    Arguments below -1 go through the Pfaff transformation
    2F1(a,b;c;z) = (1-z)^-a 2F1(a, c-b; c; z/(z-1)).
    """
    if _is_nonpositive_int(c):
        raise ValueError(f"2F1 undefined for c={c}")
    if z >= 1.0:
        raise ValueError("2F1 requires z < 1")
    if z == 0.0:
        return 1.0
    if z < -1.0:
        w = z / (z - 1.0)
        # pick whichever Pfaff form terminates or has the smaller first parameter
        if _is_nonpositive_int(c - b) or (not _is_nonpositive_int(c - a) and abs(c - b) <= abs(c - a)):
            return (1.0 - z) ** (-a) * _unit_2f1(a, c - b, c, w)
        return (1.0 - z) ** (-b) * _unit_2f1(c - a, b, c, w)
    return _unit_2f1(a, b, c, z)


def _unit_2f1(a, b, c, z):
    if abs(z) <= 0.9 or _is_nonpositive_int(a) or _is_nonpositive_int(b):
        return _series_2f1(a, b, c, z)
    return float(special.hyp2f1(a, b, c, z))


# --------------------------------------------------------------------------
# Kummer 1F1 and Tricomi U


def _series_1f1(a, b, z, max_terms=20000):
    term = 1.0
    total = 1.0
    for n in range(max_terms):
        term *= (a + n) / ((b + n) * (n + 1)) * z
        total += term
        if term == 0.0 or (abs(term) < 1e-17 * abs(total) and n > abs(z)):
            return total
    raise ConvergenceError(f"1F1({a};{b};{z}) series did not converge")


def kummer_1f1(a: float, b: float, z: float) -> float:
    """Real 1F1(a; b; z); negative z uses Kummer's transformation."""
    if _is_nonpositive_int(b):
        raise ValueError(f"1F1 undefined for b={b}")
    if z == 0.0:
        return 1.0
    if z < 0.0 and not _is_nonpositive_int(a):
        return math.exp(z) * _series_1f1(b - a, b, -z)
    return _series_1f1(a, b, z)


def tricomi_u(a: float, b: float, z: float) -> float:
    """Tricomi confluent hypergeometric U(a, b, z) for z > 0.

    Small z with non-integer b uses the 1F1 combination. Otherwise the
    Laplace-type integral representation (a > 0) or scipy's hyperu is used.
    """
    if z <= 0.0:
        raise ValueError("tricomi_u needs z > 0")
    b_int = abs(b - round(b)) < 1e-12
    if not b_int and z <= 2.0:
        t1 = special.gamma(1 - b) / special.gamma(a - b + 1) * kummer_1f1(a, b, z)
        t2 = special.gamma(b - 1) / special.gamma(a) * z ** (1 - b) * kummer_1f1(a - b + 1, 2 - b, z)
        val = t1 + t2
        if np.isfinite(val) and abs(val) > 1e-8 * (abs(t1) + abs(t2)):
            return float(val)
    if a > 0:
        lg = special.gammaln(a)

        def f(t):
            return math.exp(-z * t + (a - 1) * math.log(t) + (b - a - 1) * math.log1p(t) - lg) if t > 0 else 0.0

        scale = 1.0 / z
        val, _ = integrate.quad(f, 0, scale, epsrel=1e-13, epsabs=0, limit=200)
        tail, _ = integrate.quad(f, scale, np.inf, epsrel=1e-13, epsabs=0, limit=200)
        return val + tail
    return float(special.hyperu(a, b, z))


def tricomi_u_large(a: float, b: float, z: float) -> float:
    """Leading large-argument behaviour U ~ z^-a."""
    return z ** (-a)


def tricomi_u_small(a: float, b: float, z):
    """Two-term small-argument behaviour of U (b not an integer)."""
    return special.gamma(1 - b) / special.gamma(a - b + 1) + special.gamma(b - 1) / special.gamma(a) * z ** (1 - b)


# --------------------------------------------------------------------------
# Fox H engine


@dataclass(frozen=True)
class GammaFactor:
    """Gamma(offset + sum_i coefficients[i] * s_i)."""

    offset: float
    coefficients: tuple

    def __post_init__(self):
        object.__setattr__(self, "offset", float(self.offset))
        object.__setattr__(self, "coefficients", tuple(float(c) for c in self.coefficients))

    def nonzero(self):
        return [i for i, c in enumerate(self.coefficients) if c != 0.0]


@dataclass(frozen=True)
class FoxHSpec:
    """Gamma-ratio kernel times prod_i x_i^(sign_i * s_i)."""

    arity: int
    numerator_joint: tuple = ()
    denominator_joint: tuple = ()
    numerator_per_var: tuple = ()
    denominator_per_var: tuple = ()
    sign_convention: tuple = (1, 1)

    def __post_init__(self):
        if self.arity not in (1, 2):
            raise ValueError("arity must be 1 or 2")
        for name in ("numerator_joint", "denominator_joint", "numerator_per_var", "denominator_per_var"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        object.__setattr__(self, "sign_convention", tuple(int(s) for s in self.sign_convention[: self.arity]))
        for g in self.numerator_joint + self.denominator_joint + self.numerator_per_var + self.denominator_per_var:
            if len(g.coefficients) != self.arity:
                raise ValueError("gamma factor arity mismatch")
        for g in self.numerator_per_var + self.denominator_per_var:
            if len(g.nonzero()) != 1:
                raise ValueError("per-variable factor must involve exactly one variable")

    def per_var(self, i, numerator=True):
        pool = self.numerator_per_var if numerator else self.denominator_per_var
        return tuple(g for g in pool if g.nonzero()[0] == i)

    def joint_key(self):
        return (self.numerator_joint, self.denominator_joint, self.sign_convention)


def separable_spec(factors_1: Sequence[GammaFactor], factors_2: Sequence[GammaFactor], signs=(1, 1)) -> FoxHSpec:
    """Helper for kernels that factor into two one-variable blocks (numerators only)."""
    num = [GammaFactor(g.offset, (g.coefficients[0], 0.0)) for g in factors_1]
    num += [GammaFactor(g.offset, (0.0, g.coefficients[0])) for g in factors_2]
    return FoxHSpec(2, numerator_per_var=tuple(num), sign_convention=signs)


@dataclass(frozen=True)
class ContourPolicy:
    abscissa: tuple | None = None
    half_length: float = 24.0
    nodes: int = 128
    pole_margin: float = 1e-3
    tol: float = 1e-6
    max_evaluations: int = 2 ** 20
    residue_threshold: float = 1e-3
    residue_terms: int = 40
    max_half_length: float = 400.0

    def __post_init__(self):
        if self.nodes < 64:
            raise ValueError("nodes must be >= 64")
        if self.half_length <= 0:
            raise ValueError("half_length must be positive")


class HResult(NamedTuple):
    value: float
    error: float


def _var_bounds(spec: FoxHSpec, i: int):
    lo, hi = -np.inf, np.inf
    for g in spec.per_var(i, True):
        c = g.coefficients[i]
        edge = -g.offset / c
        if c > 0:
            lo = max(lo, edge)
        else:
            hi = min(hi, edge)
    return lo, hi


def choose_abscissa(specs: Sequence[FoxHSpec], policy: ContourPolicy) -> np.ndarray:
    """Midpoint of the gap between the left and right pole families.

    A missing family is replaced by a bound two units away from the other one.
    Joint numerator factors are then enforced with a small max-margin LP.
    """
    arity = specs[0].arity
    if policy.abscissa is not None:
        return np.asarray(policy.abscissa[:arity], dtype=float)
    lo = np.full(arity, -np.inf)
    hi = np.full(arity, np.inf)
    for sp in specs:
        for i in range(arity):
            a, b = _var_bounds(sp, i)
            lo[i] = max(lo[i], a)
            hi[i] = min(hi[i], b)
    for i in range(arity):
        if np.isinf(lo[i]) and np.isinf(hi[i]):
            lo[i], hi[i] = -1.0, 1.0
        elif np.isinf(lo[i]):
            lo[i] = hi[i] - 2.0
        elif np.isinf(hi[i]):
            hi[i] = lo[i] + 2.0
        if hi[i] - lo[i] < 2 * policy.pole_margin:
            raise PoleSeparationError(f"variable {i}: pole gap {hi[i] - lo[i]:.3g} too narrow")
    c = 0.5 * (lo + hi)
    joint = [g for sp in specs for g in sp.numerator_joint]
    if all(g.offset + np.dot(g.coefficients, c) >= policy.pole_margin for g in joint):
        return c
    # maximise the smallest distance to any pole line inside the box
    A, bvec = [], []
    for g in joint:
        A.append(list(-np.asarray(g.coefficients)) + [1.0])
        bvec.append(g.offset)
    for i in range(arity):
        row = [0.0] * (arity + 1)
        row[i] = 1.0
        row[-1] = 1.0
        A.append(row)
        bvec.append(hi[i])
        row = [0.0] * (arity + 1)
        row[i] = -1.0
        row[-1] = 1.0
        A.append(row)
        bvec.append(-lo[i])
    cost = [0.0] * arity + [-1.0]
    res = linprog(cost, A_ub=A, b_ub=bvec, bounds=[(None, None)] * arity + [(None, 1.0)], method="highs")
    if not res.success or res.x[-1] < policy.pole_margin:
        raise PoleSeparationError("no contour separates the joint pole families")
    return np.asarray(res.x[:arity])


def _log_factors(factors, s_list):
    """Sum of loggamma over factors evaluated at complex points s_list[i]."""
    total = 0.0
    for g in factors:
        arg = g.offset
        for i, c in enumerate(g.coefficients):
            if c != 0.0:
                arg = arg + c * s_list[i]
        total = total + _loggamma_array(arg)
    return total


def _grid_integral(terms, xs, c, h, T):
    """Trapezoidal sum of sum_k w_k kernel_k on the square grid."""
    arity = len(c)
    n = int(round(T / h))
    t = h * np.arange(-n, n + 1)
    s = [c[i] + 1j * t for i in range(arity)]
    logx = [math.log(x) for x in xs]
    spec0 = terms[0][1]
    if arity == 1:
        acc = np.zeros_like(t, dtype=complex)
        for w, sp in terms:
            lv = _log_factors(sp.numerator_per_var, s) - _log_factors(sp.denominator_per_var, s)
            lv = lv + sp.sign_convention[0] * s[0] * logx[0]
            acc += w * np.exp(lv)
        edge = max(abs(acc[0]), abs(acc[-1]))
        total = acc.sum() * h / (2 * math.pi)
        l1 = np.abs(acc).sum() * h / (2 * math.pi)
        return total.real, edge, np.abs(acc).max(), l1, t.size
    # two variables: joint part on the grid, per-variable parts as outer products
    S1, S2 = np.meshgrid(s[0], s[1], indexing="ij")
    lj = _log_factors(spec0.numerator_joint, [S1, S2]) - _log_factors(spec0.denominator_joint, [S1, S2])
    shift_j = np.max(lj.real)
    ej = np.exp(lj - shift_j)
    rows1, rows2, weights, shifts = [], [], [], []
    for w, sp in terms:
        l1v = _log_factors(sp.per_var(0, True), [s[0], None]) - _log_factors(sp.per_var(0, False), [s[0], None])
        l2v = _log_factors(sp.per_var(1, True), [None, s[1]]) - _log_factors(sp.per_var(1, False), [None, s[1]])
        l1v = l1v + sp.sign_convention[0] * s[0] * logx[0]
        l2v = l2v + sp.sign_convention[1] * s[1] * logx[1]
        l1v = np.broadcast_to(l1v, s[0].shape)
        l2v = np.broadcast_to(l2v, s[1].shape)
        m1, m2 = np.max(l1v.real), np.max(l2v.real)
        rows1.append(np.exp(l1v - m1))
        rows2.append(np.exp(l2v - m2))
        weights.append(w)
        shifts.append(m1 + m2)
    shifts = np.asarray(shifts)
    smax = shifts.max()
    wv = np.asarray(weights, dtype=float) * np.exp(shifts - smax)
    E1 = np.asarray(rows1) * wv[:, None]
    E2 = np.asarray(rows2)
    acc = (E1.T @ E2) * ej
    scale = math.exp(smax + shift_j)
    edge = max(np.abs(acc[0, :]).max(), np.abs(acc[-1, :]).max(), np.abs(acc[:, 0]).max(), np.abs(acc[:, -1]).max())
    total = acc.sum().real * h * h / (2 * math.pi) ** 2 * scale
    l1 = np.abs(acc).sum() * h * h / (2 * math.pi) ** 2 * scale
    return total, edge * scale, np.abs(acc).max() * scale, l1, t.size ** 2


def _trapezoid_series(terms, xs, policy: ContourPolicy, c) -> HResult:
    T = policy.half_length
    arity = len(c)
    # pick the base step so the oscillation of x^s is resolved
    freq = max([abs(math.log(x)) for x in xs] + [1.0])
    h = min(2 * T / (policy.nodes - 1), 1.0 / freq)
    evals = 0
    prev = None
    while True:
        val, edge, peak, l1, n_eval = _grid_integral(terms, xs, c, h, T)
        evals += n_eval
        if peak > 0 and edge > 1e-3 * policy.tol * peak:
            if 2 * T > policy.max_half_length:
                raise DivergentKernelError("kernel not decaying within half_length")
            T *= 2
            prev = None
            continue
        if prev is not None:
            diff = abs(val - prev)
            floor = 1e-14 * l1
            if diff <= policy.tol * abs(val) or diff <= floor:
                return HResult(val, diff + edge * (2 * T) ** arity)
        n_next = (2 * int(round(T / (h / 2))) + 1) ** arity
        if evals + n_next > policy.max_evaluations:
            err = abs(val - prev) if prev is not None else abs(val)
            return HResult(val, err)
        prev = val
        h /= 2


def _poles_for(spec: FoxHSpec, i: int, direction: int, count: int):
    """Poles of variable i lying on the side `direction` (+1 right, -1 left)."""
    poles = []
    for g in spec.per_var(i, True):
        coef = g.coefficients[i]
        if np.sign(coef) == -direction:
            for n in range(count + 2):
                poles.append((-n - g.offset) / coef)
    poles.sort(key=lambda p: direction * p)
    merged = []
    for p in poles:
        if merged and abs(p - merged[-1][0]) < 1e-8:
            merged[-1][1] += 1
        else:
            merged.append([p, 1])
    return merged[:count]


def _residue_series(terms, xs, policy: ContourPolicy, c, var: int) -> HResult:
    """Close the contour of variable `var` and sum residues; trapezoid on the other."""
    arity = len(c)
    other = 1 - var
    sign = terms[0][1].sign_convention[var]
    direction = 1 if sign > 0 else -1
    logx = [math.log(x) for x in xs]
    n_circle = 24

    def inner(t_other):
        total = np.zeros_like(t_other, dtype=complex) if t_other is not None else 0j
        s_other = c[other] + 1j * t_other if t_other is not None else None
        last = 0.0
        theta = 2 * math.pi * (np.arange(n_circle) + 0.5) / n_circle
        joint_cache: dict = {}
        other_cache: dict = {}
        spec0 = terms[0][1]
        for w, sp in terms:
            poles = _poles_for(sp, var, direction, policy.residue_terms)
            dists = np.diff([p for p, _ in poles]) if len(poles) > 1 else [1.0]
            radius = min(0.25, 0.4 * float(np.min(np.abs(dists)))) if len(poles) > 1 else 0.25
            if arity == 2:
                key = (sp.per_var(other, True), sp.per_var(other, False))
                if key not in other_cache:
                    so = [None, None]
                    so[other] = s_other
                    lo = _log_factors(key[0], so) - _log_factors(key[1], so)
                    other_cache[key] = lo + sp.sign_convention[other] * s_other * logx[other]
                l_other = other_cache[key]
            contrib_last = 0.0
            running = 0.0
            for idx, (p, mult) in enumerate(poles):
                pts = p + radius * np.exp(1j * theta)
                sv = [None, None]
                sv[var] = pts
                lk = _log_factors(sp.per_var(var, True), sv[:arity]) - _log_factors(sp.per_var(var, False), sv[:arity])
                lk = lk + sp.sign_convention[var] * pts * logx[var]
                wts = radius * np.exp(1j * theta)
                if arity == 2:
                    jkey = (round(p, 10), radius)
                    if jkey not in joint_cache:
                        sl = [None, None]
                        sl[var] = pts[:, None]
                        sl[other] = s_other[None, :]
                        joint_cache[jkey] = (_log_factors(spec0.numerator_joint, sl)
                                             - _log_factors(spec0.denominator_joint, sl))
                    lj = joint_cache[jkey]
                    vals = np.exp(lk[:, None] + lj + l_other[None, :])
                    res = (vals * wts[:, None]).mean(axis=0)
                else:
                    res = (np.exp(lk) * wts).mean()
                contrib = -direction * res
                total = total + w * contrib
                contrib_last = np.max(np.abs(w * contrib))
                running = max(running, float(np.max(np.abs(total))))
                # residues shrink geometrically once past the leading poles
                if idx >= 2 and contrib_last <= 1e-17 * running:
                    break
            last = max(last, contrib_last)
        return total, last

    if arity == 1:
        val, last = inner(None)
        return HResult(float(np.real(val)), float(last))
    T = policy.half_length
    freq = max(abs(logx[other]), 1.0)
    h = min(2 * T / (policy.nodes - 1), 1.0 / freq)
    prev = None
    while True:
        n = int(round(T / h))
        t = h * np.arange(-n, n + 1)
        vals, last = inner(t)
        edge = max(abs(vals[0]), abs(vals[-1]))
        peak = np.abs(vals).max()
        if peak > 0 and edge > 1e-3 * policy.tol * peak and 2 * T <= policy.max_half_length:
            T *= 2
            prev = None
            continue
        val = float(np.real(vals.sum()) * h / (2 * math.pi))
        l1 = float(np.abs(vals).sum() * h / (2 * math.pi))
        if prev is not None:
            diff = abs(val - prev)
            if diff <= policy.tol * abs(val) or diff <= 1e-14 * l1 or h < 1e-3:
                return HResult(val, diff + last * h * t.size)
        prev = val
        h /= 2


def _has_joint_poles(spec: FoxHSpec, var: int) -> bool:
    return any(g.coefficients[var] != 0.0 for g in spec.numerator_joint)


def fox_h_series(terms: Sequence[tuple], xs: Sequence[float], policy: ContourPolicy | None = None) -> HResult:
    """Evaluate sum_k w_k H_k(xs) where all specs share joint factors and signs.

    terms : sequence of (weight, FoxHSpec)
    """
    policy = policy or ContourPolicy()
    terms = [(float(w), sp) for w, sp in terms if w != 0.0]
    if not terms:
        return HResult(0.0, 0.0)
    specs = [sp for _, sp in terms]
    arity = specs[0].arity
    if any(sp.arity != arity or sp.joint_key() != specs[0].joint_key() for sp in specs):
        # group by joint structure and add the groups
        groups: dict = {}
        for w, sp in terms:
            groups.setdefault(sp.joint_key(), []).append((w, sp))
        parts = [fox_h_series(g, xs, policy) for g in groups.values()]
        return HResult(sum(p.value for p in parts), sum(p.error for p in parts))
    xs = [float(x) for x in xs][:arity]
    if any(x <= 0 for x in xs):
        raise ValueError("H-function arguments must be positive")
    c = choose_abscissa(specs, policy)
    small = [i for i in range(arity) if xs[i] < policy.residue_threshold and not any(_has_joint_poles(sp, i) for sp in specs)]
    if small:
        var = min(small, key=lambda i: xs[i])
        return _residue_series(terms, xs, policy, c, var)
    return _trapezoid_series(terms, xs, policy, c)


def fox_h_bivariate(spec: FoxHSpec, x1: float, x2: float, policy: ContourPolicy | None = None) -> HResult:
    """Double Mellin-Barnes integral (1/2 pi i)^2 int int kernel ds1 ds2."""
    if spec.arity != 2:
        raise ValueError("fox_h_bivariate needs an arity-2 spec")
    return fox_h_series([(1.0, spec)], (x1, x2), policy)


def fox_h_univariate(spec: FoxHSpec, x: float, policy: ContourPolicy | None = None) -> HResult:
    if spec.arity != 1:
        raise ValueError("fox_h_univariate needs an arity-1 spec")
    return fox_h_series([(1.0, spec)], (x,), policy)
