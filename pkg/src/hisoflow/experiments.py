"""
Seeded reproductions of the centralized quartic comparison and the
distributed logistic regression comparison.

All randomness in a run comes from ``numpy.random.default_rng(cfg.seed)``:
cost data is drawn first, then initial conditions.
"""

from dataclasses import dataclass, field, replace
import logging

import numpy as np

from . import central, costs as costlib, dhiso
from .graph import build_graph, named_graph

log = logging.getLogger(__name__)

GAP_THRESHOLDS = (1e-2, 1e-4, 1e-6)


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    name: str = "experiment"
    kind: str = "central"  # central | distributed
    seed: int = 1
    # graph: a built-in name or an explicit (n_nodes, edges) pair
    graph: object = "fig1"
    n_agents: int = 10
    cost: str = "quartic"  # quartic | logistic | quadratic
    # quartic
    coef_low: float = 0.01
    coef_high: float = 0.1
    wide_coef_range: bool = False  # sample in [0, 0.1] instead
    quartic_radius: float = 2.0
    # logistic
    p: int = 5
    samples: int = 10
    regularization: float = 2.0
    separation: float = 1.0
    # quadratic
    dim: int = 1
    # solver
    x0: object = 2.0  # number, array, or "gaussian" (distributed: N(0, I) per agent)
    step_policy: str = "grid"  # grid | fixed
    step: float = 1e-3
    grid: object = None  # None -> 40 geometric points on [1e-4, 10]
    gains: object = "unit"  # unit | normalized | positive float
    horizon: float = 50.0
    stop_gap: float = 1e-6
    epsilon: float = 0.0
    variants: bool = True
    oracle_tol: float = 1e-10
    record_every: int = 1
    out: str = None

    def validate(self):
        if self.kind not in ("central", "distributed"):
            raise ConfigError(f"kind must be 'central' or 'distributed', got {self.kind!r}")
        if self.cost not in ("quartic", "logistic", "quadratic"):
            raise ConfigError(f"unknown cost family {self.cost!r}")
        if self.step_policy not in ("grid", "fixed"):
            raise ConfigError(f"step_policy must be 'grid' or 'fixed', got {self.step_policy!r}")
        if not self.horizon > 0:
            raise ConfigError("horizon must be positive")
        if not self.step > 0:
            raise ConfigError("step must be positive")
        if self.epsilon < 0:
            raise ConfigError("epsilon must be non-negative")
        if isinstance(self.gains, str) and self.gains not in ("unit", "normalized"):
            raise ConfigError(f"gains must be 'unit', 'normalized' or a number, got {self.gains!r}")
        if not isinstance(self.gains, str) and not float(self.gains) > 0:
            raise ConfigError("explicit gain must be positive")
        if self.kind == "distributed":
            resolve_graph(self)
        return self


def quartic_config(**overrides):
    base = ExperimentConfig(name="quartic", kind="central", seed=1, n_agents=10,
                            cost="quartic", x0=2.0, horizon=50.0, stop_gap=1e-6)
    return replace(base, **overrides).validate()


def logreg_config(**overrides):
    base = ExperimentConfig(name="logreg", kind="distributed", seed=7, graph="fig1",
                            n_agents=5, cost="logistic", p=5, samples=10,
                            regularization=2.0, x0="gaussian", step_policy="fixed",
                            step=1e-3, horizon=60.0, epsilon=0.0)
    return replace(base, **overrides).validate()


def resolve_graph(cfg):
    try:
        if isinstance(cfg.graph, str):
            g = named_graph(cfg.graph)
        else:
            n, edges = cfg.graph
            g = build_graph(n, edges)
    except ValueError as e:
        raise ConfigError(str(e)) from e
    if cfg.kind == "distributed" and g.n_nodes != cfg.n_agents:
        raise ConfigError(f"graph has {g.n_nodes} nodes but n_agents = {cfg.n_agents}")
    return g


def build_costs(cfg, rng):
    if cfg.cost == "quartic":
        low, high = (0.0, 0.1) if cfg.wide_coef_range else (cfg.coef_low, cfg.coef_high)
        a, b = costlib.random_quartic_coefficients(rng, cfg.n_agents, low, high)
        try:
            return costlib.quartic_ensemble(a, b, cfg.quartic_radius)
        except costlib.AssumptionError as e:
            raise ConfigError(str(e)) from e
    if cfg.cost == "logistic":
        data = costlib.generate_logreg_data(cfg.seed, cfg.n_agents, cfg.p, cfg.samples,
                                            cfg.separation, cfg.regularization, rng=rng)
        return costlib.logistic_ensemble(data)
    centers = rng.standard_normal((cfg.n_agents, cfg.dim))
    return costlib.CostEnsemble(costlib.quadratic_cost(c) for c in centers)


@dataclass
class Assertion:
    name: str
    lhs_label: str
    lhs: object
    relation: str  # "<", "<=", ">", "==~"
    rhs_label: str
    rhs: object
    passed: bool

    def line(self):
        status = "PASS" if self.passed else "FAIL"
        return (f"[{status}] {self.name}: {self.lhs_label} = {_fmt(self.lhs)} "
                f"{self.relation} {self.rhs_label} = {_fmt(self.rhs)}")


def _fmt(v):
    if v is None:
        return "never"
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def compare(name, lhs_label, lhs, relation, rhs_label, rhs):
    """Build an Assertion; ``None`` stands for 'never reached' (infinitely slow)."""
    a = np.inf if lhs is None else lhs
    b = np.inf if rhs is None else rhs
    ops = {"<": a < b, "<=": a <= b, ">": a > b, ">=": a >= b}
    return Assertion(name, lhs_label, lhs, relation, rhs_label, rhs, bool(ops[relation]))


@dataclass
class ExperimentReport:
    config: ExperimentConfig
    traces: dict = field(default_factory=dict)
    steps: dict = field(default_factory=dict)
    gains: dict = field(default_factory=dict)
    iterations: dict = field(default_factory=dict)  # name -> {gap: iterations or None}
    times: dict = field(default_factory=dict)  # name -> {gap: simulated time or None}
    assertions: list = field(default_factory=list)
    info: dict = field(default_factory=dict)
    costs: object = field(default=None, repr=False)
    graph: object = field(default=None, repr=False)

    @property
    def passed(self):
        return all(a.passed for a in self.assertions)

    def summary_lines(self):
        lines = [f"experiment {self.config.name} (seed {self.config.seed})"]
        for name in self.traces:
            its = self.iterations.get(name, {})
            ts = self.times.get(name, {})
            cols = ", ".join(
                f"gap<={g:g}: {_fmt(its.get(g))} it / t={_fmt(ts.get(g))}" for g in GAP_THRESHOLDS)
            step = self.steps.get(name)
            gain = self.gains.get(name)
            lines.append(f"  {name:<18} step={_fmt(step)} gain={_fmt(gain)}  {cols}")
        for k, v in self.info.items():
            lines.append(f"  {k}: {v}")
        lines.extend("  " + a.line() for a in self.assertions)
        return lines


def _record_counts(report, name, trace):
    report.traces[name] = trace
    report.steps[name] = float(trace.step)
    report.iterations[name] = {g: trace.iterations_to(g) for g in GAP_THRESHOLDS}
    report.times[name] = {g: trace.time_to(g) for g in GAP_THRESHOLDS}


def _central_case(report, costs, x0, x_star, name, kind, gain, cfg):
    fld = central.FlowField(kind, gain)
    if cfg.step_policy == "grid":
        step, _ = central.grid_search_stepsize(fld, costs, x0, cfg.grid, cfg.stop_gap,
                                               cfg.horizon, x_star)
    else:
        step = cfg.step
    trace = central.euler_run(fld, costs, x0, step, cfg.horizon, cfg.stop_gap, x_star)
    trace.label = name
    report.gains[name] = float(gain)
    _record_counts(report, name, trace)
    return trace


def run_central(cfg):
    """GD, NR and HISO (plus effort-normalized variants) on one ensemble."""
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    costs = build_costs(cfg, rng)
    x0 = np.broadcast_to(np.asarray(cfg.x0, dtype=float), (costs.dim,)).copy()
    x_star = central.newton_oracle(costs, x0, cfg.oracle_tol)
    report = ExperimentReport(cfg, costs=costs)
    report.info["x_star"] = x_star.tolist()

    gain_gd, gain_nr = central.normalize_effort(costs, x0)
    report.info["normalized_gains"] = {"GD": gain_gd, "NR": gain_nr, "HISO": 1.0}
    if cfg.gains == "unit":
        gains = {"GD": 1.0, "NR": 1.0, "HISO": 1.0}
    elif cfg.gains == "normalized":
        gains = {"GD": gain_gd, "NR": gain_nr, "HISO": 1.0}
    else:
        gains = dict.fromkeys(("GD", "NR", "HISO"), float(cfg.gains))

    for kind in central.FLOW_KINDS:
        _central_case(report, costs, x0, x_star, kind, kind, gains[kind], cfg)
    if cfg.variants:
        _central_case(report, costs, x0, x_star, "GD (normalized)", "GD", gain_gd, cfg)
        _central_case(report, costs, x0, x_star, "NR (normalized)", "NR", gain_nr, cfg)
        _central_case(report, costs, x0, x_star, "GD (alpha=5)", "GD", 5.0, cfg)

    for name, tr in report.traces.items():
        report.info.setdefault("initial_effort", {})[name] = float(tr.field_norm[0])
    return report


def run_quartic(cfg=None):
    """
    Centralized comparison on ``sum_i a_i x^2 + b_i x^4`` with the orderings
    checked at gap ``cfg.stop_gap``.
    """
    cfg = quartic_config() if cfg is None else cfg
    report = run_central(cfg)
    gap = cfg.stop_gap
    it = {name: tr.iterations_to(gap) for name, tr in report.traces.items()}
    hiso, nr, gd = it["HISO"], it["NR"], it["GD"]
    A = report.assertions
    A.append(compare("HISO no slower than GD", "iters(HISO)", hiso, "<=", "iters(GD)", gd))
    A.append(compare("NR no slower than GD", "iters(NR)", nr, "<=", "iters(GD)", gd))
    A.append(compare("HISO and NR comparable", "|iters(HISO)-iters(NR)|",
                     None if hiso is None or nr is None else abs(hiso - nr), "<=",
                     "max(iters(HISO), iters(NR))",
                     None if hiso is None or nr is None else max(hiso, nr)))
    if cfg.variants:
        A.append(compare("GD with gain 5 slower than HISO", "iters(GD alpha=5)",
                         it["GD (alpha=5)"], ">", "iters(HISO)", hiso))
        A.append(compare("effort-normalized GD slower than HISO", "iters(GD normalized)",
                         it["GD (normalized)"], ">", "iters(HISO)", hiso))
    for name, tr in report.traces.items():
        rises = np.diff(tr.f_gap[1:])
        worst = float(rises.max()) if rises.size else 0.0
        A.append(compare(f"monotone descent {name}", f"max increase of f_gap ({name})",
                         worst, "<=", "roundoff", 1e-12 * max(1.0, float(tr.f_gap[0]))))
    for a in A:
        log.info(a.line())
    return report


def _x0_distributed(cfg, rng, dim):
    if isinstance(cfg.x0, str):
        if cfg.x0 != "gaussian":
            raise ConfigError(f"x0 must be 'gaussian' or numeric, got {cfg.x0!r}")
        return rng.standard_normal((cfg.n_agents, dim))
    x0 = np.asarray(cfg.x0, dtype=float)
    if x0.ndim == 0:
        return np.full((cfg.n_agents, dim), float(x0))
    if x0.shape != (cfg.n_agents, dim):
        raise ConfigError(f"x0 must have shape {(cfg.n_agents, dim)}")
    return x0


def run_distributed(cfg, keep_states=False):
    """DHISO and DGD2 from identical data and initial conditions."""
    cfg.validate()
    g = resolve_graph(cfg)
    rng = np.random.default_rng(cfg.seed)
    costs = build_costs(cfg, rng)
    x0 = _x0_distributed(cfg, rng, costs.dim)
    x_star = central.newton_oracle(costs, x0.mean(axis=0), cfg.oracle_tol)
    report = ExperimentReport(cfg)
    report.info["x_star"] = x_star.tolist()
    report.info["grad_norm_at_x_star"] = float(np.linalg.norm(costs.gradient(x_star)))
    report.info["floats_per_agent_per_step"] = dhiso.message_floats_per_step(g, costs.dim).tolist()

    for use_h in (True, False):
        tr = dhiso.dhiso_run(g, costs, x0, cfg.step, cfg.horizon, cfg.epsilon, x_star,
                             use_hessian=use_h, record_every=cfg.record_every,
                             keep_states=keep_states)
        _record_counts(report, tr.label, tr)
        report.gains[tr.label] = 1.0
    report.info["t_pred"] = report.traces[dhiso.DHISO].t_pred
    report.info["chattering_band"] = float(dhiso.chattering_band(g, costs.dim, cfg.step))
    report.costs, report.graph = costs, g
    return report


def _invariant_assertions(report, g, n_agents, d):
    for name, tr in report.traces.items():
        cons = dhiso.check_conservation(tr, n_agents)
        report.assertions.append(compare(
            f"{name} conserves sum v", "max_t ||sum v||", cons["max_sum_v"], "<=", "tol", 1e-8))
        report.assertions.append(Assertion(
            f"{name} sum z = sum g", "max_t ||sum z - sum g||", cons["max_sum_mismatch"],
            "<=", "roundoff", "1e-10 (1 + N max|g,v|)", cons["identity_ok"]))
        if name != dhiso.DHISO:
            # with H replaced by I the sum of z no longer obeys d/dt sum z = -sum z
            continue
        decay = dhiso.check_sum_decay(tr)
        report.assertions.append(Assertion(
            f"{name} sum z decay", "max_t ||sum z(t)|| / bound", decay["worst_ratio"], "<=",
            "1 (bound ||sum z(0)|| (1-delta)^(t/delta) (1+10 delta))", 1.0, decay["ok"]))
        report.info[f"{name} sum z decay"] = {k: v for k, v in decay.items() if k != "ok"}
        early = dhiso.check_sum_decay_window(tr)
        report.assertions.append(Assertion(
            f"{name} sum z decay on [0, 10]", "max ||sum z(t)|| / (||sum z(0)|| e^(-0.9t) + 1e-8)",
            early["worst_ratio"], "<=", "1", 1.0, early["ok"]))
    ft = dhiso.check_finite_time_consensus(report.traces[dhiso.DHISO], g, d)
    report.assertions.append(compare(
        "DHISO z-consensus after 1.5 T_pred", "max cons_z(t >= 1.5 T_pred)", ft["worst_after"],
        "<=", "delta * max_degree * sqrt(N d)", ft["band"]))


def run_logreg(cfg=None, keep_states=False):
    """
    Distributed logistic regression: DHISO against DGD2 on the same data.
    """
    cfg = logreg_config() if cfg is None else cfg
    report = run_distributed(cfg, keep_states=keep_states)
    costs, g = report.costs, report.graph
    dh, dg = report.traces[dhiso.DHISO], report.traces[dhiso.DGD2]
    A = report.assertions
    A.append(compare("DHISO reaches gap 1e-2 before DGD2", "t(DHISO, gap<=1e-2)",
                     dh.time_to(1e-2), "<", "t(DGD2, gap<=1e-2)", dg.time_to(1e-2)))
    A.append(compare("DHISO agents near the optimum at T", "max_i ||x^i(T) - x*||",
                     float(dh.max_opt_err[-1]), "<=", "tol", 1e-3))
    _invariant_assertions(report, g, costs.n_agents, costs.dim)
    for a in A:
        log.info(a.line())
    return report


def run_identity_sanity(seed=3, n_agents=5, dim=2, step=1e-3, horizon=5.0, graph="fig1"):
    """DHISO and DGD2 on quadratics with identity Hessians; they must coincide."""
    cfg = ExperimentConfig(name="identity", kind="distributed", seed=seed, graph=graph,
                           n_agents=n_agents, cost="quadratic", dim=dim, x0="gaussian",
                           step_policy="fixed", step=step, horizon=horizon).validate()
    report = run_distributed(cfg, keep_states=True)
    dh, dg = report.traces[dhiso.DHISO], report.traces[dhiso.DGD2]
    diff = float(np.abs(dh.x_history - dg.x_history).max())
    report.info["max_trajectory_difference"] = diff
    report.assertions.append(compare("DHISO and DGD2 coincide", "max_k |x_DHISO - x_DGD2|",
                                     diff, "<=", "tol", 1e-12))
    return report


def run_experiment(cfg):
    """Dispatch a parsed config to the matching experiment."""
    cfg.validate()
    if cfg.kind == "central":
        return run_quartic(cfg) if cfg.cost == "quartic" else _run_plain_central(cfg)
    if cfg.cost == "logistic":
        return run_logreg(cfg)
    report = run_distributed(cfg)
    costs, g = report.costs, report.graph
    _invariant_assertions(report, g, costs.n_agents, costs.dim)
    return report


def _run_plain_central(cfg):
    report = run_central(cfg)
    for name, tr in report.traces.items():
        report.assertions.append(compare(f"{name} converged", "final f_gap",
                                         float(tr.f_gap[-1]), "<=", "stop_gap", cfg.stop_gap))
    return report
