"""Scenario files: geometry and fading in, link coefficients and experiment CSVs out.

Power-like fields may be given in dB (``*_db`` / ``*_dbw``) or linear units
(same name without the suffix), never both.  Conversion happens once, here.
"""
from __future__ import annotations

import csv
import dataclasses
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .covert_metrics import WardenChannel, dep_curve, threshold_box
from .fading import FisherFParams, FtrParams, TruncationCapExceeded, ftr_coefficients, select_truncation
from .optimize import (GameSpec, NoFeasiblePoint, PowerAllocation, PsoConfig, feasibility_check, jtpa_allocate, ppa_allocate,
                       grid_optimal_threshold, warden_channel_at)
from .sinr_stats import (LinkCoefficients, UserChannel, outage_probability, sinr_cdf_high_power,
                         sinr_cdf_high_power_low_jamming, sinr_cdf_low_jamming)

log = logging.getLogger(__name__)

EXPERIMENTS = ("table2", "fig2", "fig5", "fig6", "fig7", "fig8")


class ScenarioError(ValueError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


def db_to_linear(x: float) -> float:
    return 10.0 ** (x / 10.0)


@dataclass(frozen=True)
class EvalPolicy:
    truncation_tol: float = 1e-6
    mc_samples: int = 200_000
    seed: int = 0
    pso: PsoConfig = field(default_factory=lambda: PsoConfig(swarm_size=20, max_iters=30, patience=8))
    rho: float = 1e-3
    max_rounds: int = 20


@dataclass(frozen=True)
class Scenario:
    name: str
    kappa2: float
    users: np.ndarray  # (K, 3)
    uav: np.ndarray
    jammer: np.ndarray
    warden: np.ndarray
    alpha_uav_user: np.ndarray
    alpha_jammer_user: np.ndarray
    alpha_uav_warden: float
    alpha_jammer_warden: float
    user_ftr: tuple
    user_fisher: tuple
    warden_ftr: FtrParams
    warden_fisher: FisherFParams
    p_total: float
    j_total: float
    r_th: np.ndarray
    xi_th: np.ndarray
    policy: EvalPolicy = field(default_factory=EvalPolicy)
    sweeps: dict = field(default_factory=dict)

    @property
    def k(self) -> int:
        return self.users.shape[0]

    def with_(self, **changes) -> "Scenario":
        return dataclasses.replace(self, **changes)


# ---------------------------------------------------------------------------
# loading


def _take(doc: dict, path: str, allowed: set, required: set):
    if not isinstance(doc, dict):
        raise ScenarioError(path, "expected an object")
    unknown = set(doc) - allowed
    if unknown:
        raise ScenarioError(path, f"unknown keys {sorted(unknown)}")
    missing = required - set(doc)
    if missing:
        raise ScenarioError(path, f"missing keys {sorted(missing)}")
    return doc


def _num(v, path):
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ScenarioError(path, "expected a finite number")
    return float(v)


def _vec(v, path, n=None):
    if not isinstance(v, list):
        raise ScenarioError(path, "expected a list")
    out = np.array([_num(x, f"{path}[{i}]") for i, x in enumerate(v)])
    if n is not None and out.size != n:
        raise ScenarioError(path, f"expected {n} entries")
    return out


def _power(doc: dict, path: str, key: str, db_suffix: str):
    lin, db = key, key + db_suffix
    if (lin in doc) == (db in doc):
        raise ScenarioError(path, f"give exactly one of {lin!r} or {db!r}")
    if lin in doc:
        val = _num(doc[lin], f"{path}.{lin}")
        if val < 0:
            raise ScenarioError(f"{path}.{lin}", "must be nonnegative")
        return val
    return db_to_linear(_num(doc[db], f"{path}.{db}"))


def _ftr(doc, path) -> FtrParams:
    _take(doc, path, {"m", "k", "delta", "mean", "mean_db"}, {"m", "k", "delta"})
    mean = _power(doc, path, "mean", "_db")
    try:
        return FtrParams.from_mean(_num(doc["m"], path + ".m"), _num(doc["k"], path + ".k"),
                                   _num(doc["delta"], path + ".delta"), mean)
    except ValueError as exc:
        raise ScenarioError(path, str(exc)) from None


def _fisher(doc, path) -> FisherFParams:
    _take(doc, path, {"m_f", "m_s", "z_bar", "z_bar_db"}, {"m_f", "m_s"})
    m_s = _num(doc["m_s"], path + ".m_s")
    if m_s <= 1:
        raise ScenarioError(path + ".m_s", "m_s must exceed 1 (finite mean)")
    try:
        return FisherFParams(_num(doc["m_f"], path + ".m_f"), m_s, _power(doc, path, "z_bar", "_db"))
    except ValueError as exc:
        raise ScenarioError(path, str(exc)) from None


def _policy(doc, path) -> EvalPolicy:
    _take(doc, path, {"truncation_tol", "mc_samples", "seed", "pso", "rho", "max_rounds"}, set())
    base = EvalPolicy()
    pso = base.pso
    if "pso" in doc:
        p = _take(doc["pso"], path + ".pso", {f.name for f in dataclasses.fields(PsoConfig)}, set())
        try:
            pso = dataclasses.replace(pso, **{k: (int(v) if k in ("swarm_size", "max_iters", "seed", "patience")
                                                  and v is not None else v) for k, v in p.items()})
        except (TypeError, ValueError) as exc:
            raise ScenarioError(path + ".pso", str(exc)) from None
    out = EvalPolicy(
        truncation_tol=_num(doc.get("truncation_tol", base.truncation_tol), path + ".truncation_tol"),
        mc_samples=int(_num(doc.get("mc_samples", base.mc_samples), path + ".mc_samples")),
        seed=int(_num(doc.get("seed", base.seed), path + ".seed")),
        pso=pso,
        rho=_num(doc.get("rho", base.rho), path + ".rho"),
        max_rounds=int(_num(doc.get("max_rounds", base.max_rounds), path + ".max_rounds")),
    )
    if not 0 < out.truncation_tol < 1:
        raise ScenarioError(path + ".truncation_tol", "must lie in (0, 1)")
    if out.mc_samples < 1:
        raise ScenarioError(path + ".mc_samples", "must be positive")
    return out


def load_scenario(document) -> Scenario:
    """Parse and validate a scenario (JSON text, bytes, or an already-decoded dict)."""
    if isinstance(document, (str, bytes)):
        try:
            document = json.loads(document)
        except json.JSONDecodeError as exc:
            raise ScenarioError("$", f"invalid JSON: {exc}") from None
    doc = _take(document, "$", {"name", "noise_kappa2", "noise_kappa2_db", "positions", "path_loss", "fading",
                                "budgets", "game", "eval_policy", "sweeps"},
                {"positions", "path_loss", "fading", "budgets", "game"})
    kappa2 = _power(doc, "$", "noise_kappa2", "_db")
    if kappa2 <= 0:
        raise ScenarioError("$.noise_kappa2", "must be positive")

    pos = _take(doc["positions"], "$.positions", {"users", "uav", "jammer", "warden"},
                {"users", "uav", "jammer", "warden"})
    if not isinstance(pos["users"], list) or not pos["users"]:
        raise ScenarioError("$.positions.users", "expected a nonempty list")
    users = np.array([_vec(u, f"$.positions.users[{i}]", 3) for i, u in enumerate(pos["users"])])
    k = users.shape[0]
    uav = _vec(pos["uav"], "$.positions.uav", 3)
    jammer = _vec(pos["jammer"], "$.positions.jammer", 3)
    warden = _vec(pos["warden"], "$.positions.warden", 3)

    pl = _take(doc["path_loss"], "$.path_loss", {"uav_user", "jammer_user", "uav_warden", "jammer_warden"},
               {"uav_user", "jammer_user", "uav_warden", "jammer_warden"})
    a_au = _vec(pl["uav_user"], "$.path_loss.uav_user", k)
    a_ju = _vec(pl["jammer_user"], "$.path_loss.jammer_user", k)

    fad = _take(doc["fading"], "$.fading", {"users", "warden"}, {"users", "warden"})
    if not isinstance(fad["users"], list) or len(fad["users"]) != k:
        raise ScenarioError("$.fading.users", f"expected {k} entries")
    u_ftr, u_fis = [], []
    for i, u in enumerate(fad["users"]):
        p = f"$.fading.users[{i}]"
        _take(u, p, {"ftr", "fisher"}, {"ftr", "fisher"})
        u_ftr.append(_ftr(u["ftr"], p + ".ftr"))
        u_fis.append(_fisher(u["fisher"], p + ".fisher"))
    _take(fad["warden"], "$.fading.warden", {"ftr", "fisher"}, {"ftr", "fisher"})
    w_ftr = _ftr(fad["warden"]["ftr"], "$.fading.warden.ftr")
    w_fis = _fisher(fad["warden"]["fisher"], "$.fading.warden.fisher")

    bud = _take(doc["budgets"], "$.budgets", {"p_t", "p_t_dbw", "p_j", "p_j_dbw"}, set())
    p_t = _power(bud, "$.budgets", "p_t", "_dbw")
    p_j = _power(bud, "$.budgets", "p_j", "_dbw")

    game = _take(doc["game"], "$.game", {"r_th", "xi_th"}, {"r_th", "xi_th"})
    r_th = _vec(game["r_th"], "$.game.r_th", k)
    xi_th = _vec(game["xi_th"], "$.game.xi_th", k)
    if np.any(r_th < 0):
        raise ScenarioError("$.game.r_th", "must be nonnegative")
    if np.any((xi_th < 0) | (xi_th >= 1)):
        raise ScenarioError("$.game.xi_th", "must lie in [0, 1)")

    policy = _policy(doc.get("eval_policy", {}), "$.eval_policy")
    sweeps = doc.get("sweeps", {})
    _take(sweeps, "$.sweeps", set(EXPERIMENTS), set())

    s = Scenario(str(doc.get("name", "scenario")), kappa2, users, uav, jammer, warden, a_au, a_ju,
                 _num(pl["uav_warden"], "$.path_loss.uav_warden"), _num(pl["jammer_warden"], "$.path_loss.jammer_warden"),
                 tuple(u_ftr), tuple(u_fis), w_ftr, w_fis, p_t, p_j, r_th, xi_th, policy, sweeps)
    _check_distances(s)
    return s


def _check_distances(s: Scenario):
    pairs = [(f"users[{i}]-uav", s.users[i], s.uav) for i in range(s.k)]
    pairs += [(f"users[{i}]-jammer", s.users[i], s.jammer) for i in range(s.k)]
    pairs += [("warden-uav", s.warden, s.uav), ("warden-jammer", s.warden, s.jammer)]
    for name, a, b in pairs:
        d = float(np.linalg.norm(a - b))
        if d <= 0:
            raise ScenarioError(f"$.positions ({name})", "distance must be positive")
        if d < 1:
            log.warning("distance %s = %.3g m is below 1 m; path loss amplifies", name, d)


def dump_scenario(s: Scenario) -> dict:
    """Linear-unit document that load_scenario reads back to identical values."""
    ftr = lambda p: {"m": p.m, "k": p.k_ratio, "delta": p.delta, "mean": p.mean}
    fis = lambda p: {"m_f": p.m_f, "m_s": p.m_s, "z_bar": p.z_bar}
    pso = dataclasses.asdict(s.policy.pso)
    return {
        "name": s.name,
        "noise_kappa2": s.kappa2,
        "positions": {"users": s.users.tolist(), "uav": s.uav.tolist(), "jammer": s.jammer.tolist(),
                      "warden": s.warden.tolist()},
        "path_loss": {"uav_user": s.alpha_uav_user.tolist(), "jammer_user": s.alpha_jammer_user.tolist(),
                      "uav_warden": s.alpha_uav_warden, "jammer_warden": s.alpha_jammer_warden},
        "fading": {"users": [{"ftr": ftr(a), "fisher": fis(b)} for a, b in zip(s.user_ftr, s.user_fisher)],
                   "warden": {"ftr": ftr(s.warden_ftr), "fisher": fis(s.warden_fisher)}},
        "budgets": {"p_t": s.p_total, "p_j": s.j_total},
        "game": {"r_th": s.r_th.tolist(), "xi_th": s.xi_th.tolist()},
        "eval_policy": {"truncation_tol": s.policy.truncation_tol, "mc_samples": s.policy.mc_samples,
                        "seed": s.policy.seed, "pso": pso, "rho": s.policy.rho, "max_rounds": s.policy.max_rounds},
        "sweeps": s.sweeps,
    }


# ---------------------------------------------------------------------------
# link budget


def path_gain(a, b, alpha: float) -> float:
    return float(np.linalg.norm(np.asarray(a) - np.asarray(b))) ** (-alpha)


def link_budget(s: Scenario, link, alloc: PowerAllocation) -> LinkCoefficients:
    """C1 = D_a^-alpha_a P_a, C2 = D_j^-alpha_j P_j for a user index or "warden:k"."""
    if isinstance(link, str) and link.startswith("warden"):
        k = int(link.split(":")[1]) if ":" in link else 0
        g_a = path_gain(s.uav, s.warden, s.alpha_uav_warden)
        g_j = path_gain(s.jammer, s.warden, s.alpha_jammer_warden)
        return LinkCoefficients.from_fisher(g_a * alloc.p_a[k], g_j * alloc.p_j[k], s.kappa2, s.warden_fisher)
    k = int(link)
    g_a = path_gain(s.uav, s.users[k], s.alpha_uav_user[k])
    g_j = path_gain(s.jammer, s.users[k], s.alpha_jammer_user[k])
    return LinkCoefficients.from_fisher(g_a * alloc.p_a[k], g_j * alloc.p_j[k], s.kappa2, s.user_fisher[k])


def user_channel(s: Scenario, k: int, alloc: PowerAllocation) -> UserChannel:
    return UserChannel(s.user_ftr[k], s.user_fisher[k], link_budget(s, k, alloc), tol=s.policy.truncation_tol)


def warden_channel(s: Scenario, k: int, alloc: PowerAllocation) -> WardenChannel:
    return WardenChannel(s.warden_ftr, s.warden_fisher, link_budget(s, f"warden:{k}", alloc),
                         tol=s.policy.truncation_tol)


def build_game(s: Scenario, p_total: float | None = None, j_total: float | None = None,
               xi_th=None) -> GameSpec:
    ones = PowerAllocation(np.ones(s.k), np.ones(s.k))
    users = [user_channel(s, k, ones) for k in range(s.k)]
    wardens = [warden_channel(s, k, ones) for k in range(s.k)]
    xi = s.xi_th if xi_th is None else np.broadcast_to(np.asarray(xi_th, dtype=float), (s.k,))
    return GameSpec(users, wardens, s.r_th, xi, s.p_total if p_total is None else p_total,
                    s.j_total if j_total is None else j_total)


# ---------------------------------------------------------------------------
# experiments


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _write(path: Path, header, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])
    return path


def _sweep(s: Scenario, name: str, key: str, default):
    return s.sweeps.get(name, {}).get(key, default)


def run_table2(s: Scenario, out: Path, tol: float | None = None):
    rows_cfg = _sweep(s, "table2", "rows", [
        {"m": 4, "sigma2": 0.2}, {"m": 5, "sigma2": 0.5}, {"m": 7, "sigma2": 0.3}, {"m": 2, "sigma2": 0.7}])
    k_ratio = _sweep(s, "table2", "k", 10.0)
    delta = _sweep(s, "table2", "delta", 0.3)
    tol = _sweep(s, "table2", "tol", 1e-5) if tol is None else tol
    rows = []
    for i, r in enumerate(rows_cfg):
        p = FtrParams(r["m"], k_ratio, r["sigma2"], delta)
        try:
            m = select_truncation(p, tol)
            resid = ftr_coefficients(p, m).residual
            capped = False
        except TruncationCapExceeded:
            m, resid, capped = -1, float("nan"), True
        rows.append((i + 1, r["m"], r["sigma2"], k_ratio, delta, tol, m, resid, capped))
    return [_write(out / "table2.csv", ["row", "m", "sigma2", "k", "delta", "tol", "terms", "residual", "capped"], rows)]


def run_fig2(s: Scenario, out: Path, samples: int | None = None, seed: int | None = None):
    from .montecarlo import McConfig, estimate_sinr_cdf

    p_a_db = _sweep(s, "fig2", "p_a_dbw", list(range(0, 51, 5)))
    p_j_db = _sweep(s, "fig2", "p_j_dbw", [10, 20, 30])
    gamma_th = _sweep(s, "fig2", "gamma_th", 1.0)
    samples = s.policy.mc_samples if samples is None else samples
    seed = s.policy.seed if seed is None else seed
    rows = []
    for j_db in p_j_db:
        for i, a_db in enumerate(p_a_db):
            alloc = PowerAllocation(np.array([db_to_linear(a_db)]), np.array([db_to_linear(j_db)]))
            ch = user_channel(s, 0, alloc)
            exact = outage_probability(ch, gamma_th)
            p1 = sinr_cdf_low_jamming(ch, gamma_th).value
            p2 = sinr_cdf_high_power(ch, gamma_th).value
            p3 = sinr_cdf_high_power_low_jamming(ch, gamma_th).value
            mc = estimate_sinr_cdf(ch, [gamma_th], McConfig(samples, seed + 1000 * i + int(j_db)))
            rows.append((a_db, j_db, exact, p1, p2, p3, float(mc.value[0]), float(mc.stderr[0])))
    return [_write(out / "fig2.csv", ["p_a_dbw", "p_j_dbw", "op_exact", "op_low_jamming", "op_high_power",
                                      "op_high_power_low_jamming", "op_mc", "op_mc_se"], rows)]


def _percent(after, before):
    return 100.0 * (after - before) / before


def run_fig5(s: Scenario, out: Path, seed: int | None = None):
    points = _sweep(s, "fig5", "points", 200)
    seed = s.policy.seed if seed is None else seed
    g = build_game(s)
    base = PowerAllocation.equal_split(s.k, s.p_total, s.j_total)
    cfg = dataclasses.replace(s.policy.pso, seed=seed)
    res = jtpa_allocate(g, cfg, rho=s.policy.rho, max_rounds=s.policy.max_rounds)
    after = res.allocation
    w0 = [warden_channel_at(g, k, base.p_a[k], base.p_j[k]) for k in range(s.k)]
    w1 = [warden_channel_at(g, k, after.p_a[k], after.p_j[k]) for k in range(s.k)]
    hi = max(max(threshold_box(w)[1] for w in w0), max(threshold_box(w)[1] for w in w1))
    eps = np.linspace(s.kappa2, hi, points + 1)[1:]
    curves = [(dep_curve(a, eps), dep_curve(b, eps)) for a, b in zip(w0, w1)]
    rows = []
    for i, e in enumerate(eps):
        rows.append([e] + [v for c in curves for v in (c[0][i], c[1][i])])
    header = ["epsilon"] + [f"{t}_u{k + 1}" for k in range(s.k) for t in ("xi_baseline", "xi_jtpa")]
    summary = []
    for k in range(s.k):
        e0, x0 = grid_optimal_threshold(w0[k])
        e1, x1 = grid_optimal_threshold(w1[k])
        summary.append((k + 1, after.p_a[k], after.p_j[k], e0, x0, e1, x1, _percent(x1, x0), x1 >= s.xi_th[k]))
    return [_write(out / "fig5.csv", header, rows),
            _write(out / "fig5_summary.csv", ["user", "p_a", "p_j", "eps_star_baseline", "xi_star_baseline",
                                              "eps_star_jtpa", "xi_star_jtpa", "increase_percent", "covert"],
                   summary)]


def _utility_row(g: GameSpec, res):
    if res is None:
        return 0.0, -math.inf, False
    rep = feasibility_check(g, res.allocation)
    product = float(np.prod(rep.rate_slack))
    return product, res.value, bool(rep.feasible)


def _solve(g: GameSpec, s: Scenario, method: str, seed: int):
    """None when no allocation meets the covertness floors (e.g. no jammer: the warden's noise is known)."""
    cfg = dataclasses.replace(s.policy.pso, seed=seed)
    try:
        if method == "ppa":
            return ppa_allocate(g, cfg)
        return jtpa_allocate(g, cfg, rho=s.policy.rho, max_rounds=s.policy.max_rounds)
    except NoFeasiblePoint as exc:
        log.warning("%s: %s", method, exc)
        return None


def run_fig6(s: Scenario, out: Path, seed: int | None = None):
    p_j_db = _sweep(s, "fig6", "p_j_dbw", [10, 15, 20, 25, 30])
    xi_list = _sweep(s, "fig6", "xi_th", [0.5, 0.75, 0.9])
    p_t_db = _sweep(s, "fig6", "p_t_dbw", 30)
    methods = _sweep(s, "fig6", "methods", ["jtpa"])
    seed = s.policy.seed if seed is None else seed
    rows = []
    for j_db in p_j_db:
        for xi in xi_list:
            g = build_game(s, db_to_linear(p_t_db), db_to_linear(j_db), xi)
            for method in methods:
                res = _solve(g, s, method, seed)
                rows.append((j_db, xi, method, *_utility_row(g, res)))
    return [_write(out / "fig6.csv", ["p_j_dbw", "xi_th", "method", "utility", "log_utility", "feasible"], rows)]


def run_fig7(s: Scenario, out: Path, seed: int | None = None):
    p_t_db = _sweep(s, "fig7", "p_t_dbw", [0, 10, 20, 30, 40])
    p_j_db = _sweep(s, "fig7", "p_j_dbw", [10, 20, None])
    xi = _sweep(s, "fig7", "xi_th", 0.9)
    seed = s.policy.seed if seed is None else seed
    rows = []
    for t_db in p_t_db:
        for j_db in p_j_db:
            j_lin = 0.0 if j_db is None else db_to_linear(j_db)
            g = build_game(s, db_to_linear(t_db), j_lin, xi)
            res = _solve(g, s, "jtpa", seed)
            rows.append((t_db, "none" if j_db is None else j_db, *_utility_row(g, res)))
    return [_write(out / "fig7.csv", ["p_t_dbw", "p_j_dbw", "utility", "log_utility", "feasible"], rows)]


def run_fig8(s: Scenario, out: Path, seed: int | None = None):
    xs = _sweep(s, "fig8", "x", [0, 5, 10])
    ys = _sweep(s, "fig8", "y", [5, 13, 21])
    users = _sweep(s, "fig8", "users", None)
    seed = s.policy.seed if seed is None else seed
    base = s if users is None else s.with_(users=np.asarray(users, dtype=float))
    rows = []
    for x in xs:
        for y in ys:
            sc = base.with_(uav=np.array([x, y, base.uav[2]], dtype=float))
            g = build_game(sc)
            res = _solve(g, sc, "jtpa", seed)
            rows.append((x, y, *_utility_row(g, res)))
    return [_write(out / "fig8.csv", ["uav_x", "uav_y", "utility", "log_utility", "feasible"], rows)]


def run_experiment(name: str, s: Scenario, out, seed: int | None = None, samples: int | None = None,
                   tol: float | None = None):
    """Run one named experiment and return the list of CSV paths written."""
    out = Path(out)
    if tol is not None:
        s = s.with_(policy=dataclasses.replace(s.policy, truncation_tol=tol))
    if name == "table2":
        return run_table2(s, out, tol)
    if name == "fig2":
        return run_fig2(s, out, samples, seed)
    if name == "fig5":
        return run_fig5(s, out, seed)
    if name == "fig6":
        return run_fig6(s, out, seed)
    if name == "fig7":
        return run_fig7(s, out, seed)
    if name == "fig8":
        return run_fig8(s, out, seed)
    raise ValueError(f"unknown experiment {name!r}; choose from {', '.join(EXPERIMENTS)}")
