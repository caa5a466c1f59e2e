"""
Centralized continuous-time optimization flows and their Euler discretization.

Three vector fields are provided, each a descent direction for the total
cost ``f = sum_i f^i``:

* GD:    ``-sum_i g^i(x)``
* NR:    ``-(sum_i H^i(x))^{-1} sum_i g^i(x)``
* HISO:  ``-(1/N sum_i H^i(x)^{-1}) sum_i g^i(x)``

Hessians are only ever used through Cholesky solves.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve

from .costs import CostEnsemble, quadratic_cost

GD, NR, HISO = "GD", "NR", "HISO"
FLOW_KINDS = (GD, NR, HISO)

DEFAULT_GRID = np.geomspace(1e-4, 1e1, 40)
DIVERGENCE_FACTOR = 1e6


class NotPositiveDefiniteError(np.linalg.LinAlgError):
    def __init__(self, message, agent=None):
        super().__init__(message)
        self.agent = agent


class DivergenceError(RuntimeError):
    pass


class NoAdmissibleStepError(RuntimeError):
    pass


def spd_factor(H, agent=None):
    """Lower Cholesky factor; raises NotPositiveDefiniteError if H is not PD."""
    try:
        c = np.linalg.cholesky(H)
    except np.linalg.LinAlgError:
        who = "aggregate Hessian" if agent is None else f"Hessian of agent {agent}"
        raise NotPositiveDefiniteError(f"{who} is not positive definite", agent) from None
    if not np.all(np.isfinite(c)):
        raise NotPositiveDefiniteError(f"non-finite Cholesky factor (agent {agent})", agent)
    return c


def spd_solve(H, b, agent=None):
    return cho_solve((spd_factor(H, agent), True), b)


def spd_inverse(H, agent=None):
    return spd_solve(H, np.eye(H.shape[0]), agent)


@dataclass(frozen=True)
class FlowField:
    kind: str
    gain: float = 1.0

    def __post_init__(self):
        if self.kind not in FLOW_KINDS:
            raise ValueError(f"unknown flow kind {self.kind!r}")
        if not self.gain > 0:
            raise ValueError(f"gain must be positive, got {self.gain}")

    def __call__(self, costs, x):
        return self.gain * FIELDS[self.kind](costs, x)


def gd_field(costs, x):
    return -costs.gradient(x)


def nr_field(costs, x):
    g = costs.gradient(x)
    return -spd_solve(costs.hessians(x).sum(axis=0), g)


def hiso_field(costs, x):
    g = costs.gradient(x)
    step = np.zeros_like(g)
    for i, agent in enumerate(costs):
        step += spd_solve(agent.hessian(x), g, agent=i + 1)
    return -step / costs.n_agents


FIELDS = {GD: gd_field, NR: nr_field, HISO: hiso_field}


def hessian_inverse_mean(costs, x):
    """``1/N sum_i H^i(x)^{-1}`` as an explicit matrix."""
    return sum(spd_inverse(a.hessian(x), agent=i + 1) for i, a in enumerate(costs)) / costs.n_agents


def normalize_effort(costs, x0):
    """
    Gains that bring the GD and NR effort bounds in line with HISO at ``x0``.

    Returns
    -------
    gain_gd, gain_nr : float
        ``||1/N sum H^{-1}||`` and ``||sum H|| * ||1/N sum H^{-1}||``
        (spectral norms); HISO keeps unit gain.
    """
    inv_mean = np.linalg.norm(hessian_inverse_mean(costs, x0), 2)
    hess_sum = np.linalg.norm(costs.hessians(x0).sum(axis=0), 2)
    return float(inv_mean), float(hess_sum * inv_mean)


@dataclass
class FlowTrace:
    t: np.ndarray
    x: np.ndarray
    f_gap: np.ndarray
    field_norm: np.ndarray
    grad_norm: np.ndarray
    step: float
    converged: bool
    x_star: np.ndarray = field(default=None, repr=False)
    label: str = ""

    @property
    def iterations(self):
        return len(self.t) - 1

    def iterations_to(self, gap):
        """First step index with ``f_gap <= gap``, or None."""
        hit = np.flatnonzero(self.f_gap <= gap)
        return int(hit[0]) if hit.size else None

    def time_to(self, gap):
        k = self.iterations_to(gap)
        return None if k is None else float(self.t[k])


def euler_run(field, costs, x0, step, horizon=50.0, stop_gap=1e-8, x_star=None,
              f_star=None, max_steps=None):
    """
    Forward Euler on ``x' = alpha u(x)``.

    Stops at ``f(x) - f(x*) <= stop_gap``, at ``t >= horizon`` or after
    ``max_steps`` steps. ``field_norm[k]`` is the effort ``||alpha u(x_k)||``
    applied at step k (zero on the final row).

    Raises
    ------
    DivergenceError
        If the gap exceeds ``1e6`` times its initial value or becomes non-finite.
    """
    if not step > 0 or not horizon > 0:
        raise ValueError("step and horizon must be positive")
    if x_star is None:
        x_star = newton_oracle(costs, x0)
    if f_star is None:
        f_star = costs.value(x_star)

    n_steps = int(np.floor(horizon / step + 1e-9))
    if max_steps is not None:
        n_steps = min(n_steps, max_steps)

    x = np.array(x0, dtype=float).reshape(-1)
    xs, gaps, norms = [x.copy()], [costs.value(x) - f_star], []
    grads = [float(np.linalg.norm(costs.gradient(x)))]
    limit = DIVERGENCE_FACTOR * max(abs(gaps[0]), np.finfo(float).tiny)
    converged = gaps[0] <= stop_gap
    k = 0
    while not converged and k < n_steps:
        u = field(costs, x)
        norms.append(float(np.linalg.norm(u)))
        x = x + step * u
        k += 1
        gap = costs.value(x) - f_star
        if not np.isfinite(gap) or gap > limit:
            raise DivergenceError(
                f"{field.kind} flow diverged at step {k} (delta={step:g}, gap={gap:.3g})")
        xs.append(x.copy())
        gaps.append(gap)
        grads.append(float(np.linalg.norm(costs.gradient(x))))
        converged = gap <= stop_gap
    norms.append(0.0)
    return FlowTrace(
        t=step * np.arange(len(gaps)),
        x=np.array(xs),
        f_gap=np.array(gaps),
        field_norm=np.array(norms),
        grad_norm=np.array(grads),
        step=step,
        converged=bool(converged),
        x_star=np.asarray(x_star),
        label=field.kind,
    )


def grid_search_stepsize(field, costs, x0, grid=None, target_gap=1e-6, horizon=50.0,
                         x_star=None):
    """
    Pick the stepsize on ``grid`` that reaches ``target_gap`` in fewest steps.

    Diverging or non-converging stepsizes count as infinitely slow. Ties go
    to the run with the smaller final gap.

    Returns
    -------
    step, iterations : float, int
    """
    grid = DEFAULT_GRID if grid is None else np.asarray(grid, dtype=float)
    if grid.size == 0:
        raise ValueError("empty stepsize grid")
    if x_star is None:
        x_star = newton_oracle(costs, x0)
    f_star = costs.value(x_star)

    best = None  # (iterations, final gap, step)
    # large steps first so the running best prunes the slow small-step runs
    for step in sorted(grid, reverse=True):
        cap = None if best is None else best[0]
        try:
            tr = euler_run(field, costs, x0, step, horizon, target_gap, x_star, f_star,
                           max_steps=cap)
        except DivergenceError:
            continue
        if not tr.converged:
            continue
        cand = (tr.iterations, tr.f_gap[-1], float(step))
        if best is None or cand[:2] < best[:2]:
            best = cand
    if best is None:
        raise NoAdmissibleStepError(
            f"no stepsize on the grid reaches gap {target_gap:g} for {field.kind}")
    return best[2], best[0]


def newton_oracle(costs, x0, tol=1e-10, max_iter=100):
    """
    Damped Newton with Armijo backtracking; stops at ``||sum g|| <= tol``.
    """
    x = np.array(x0, dtype=float).reshape(-1)
    fx = costs.value(x)
    for _ in range(max_iter):
        g = costs.gradient(x)
        if np.linalg.norm(g) <= tol:
            return x
        p = -spd_solve(costs.hessians(x).sum(axis=0), g)
        slope = float(g @ p)
        t = 1.0
        while t >= 1e-10:
            x_new = x + t * p
            f_new = costs.value(x_new)
            if f_new <= fx + 1e-4 * t * slope:
                break
            t *= 0.5
        else:
            # f is flat to roundoff here; the gradient test decides below
            break
        x, fx = x_new, f_new
    g = costs.gradient(x)
    if np.linalg.norm(g) <= tol:
        return x
    raise RuntimeError(
        f"Newton oracle did not reach ||grad|| <= {tol:g} in {max_iter} iterations "
        f"(||grad|| = {np.linalg.norm(g):.3g})")


def random_spd(rng, d, low=0.1, high=10.0):
    """``Q diag(w) Q^T`` with Haar-random Q and eigenvalues uniform in [low, high]."""
    Q, R = np.linalg.qr(rng.standard_normal((d, d)))
    Q = Q * np.sign(np.diag(R))
    w = rng.uniform(low, high, d)
    return (Q * w) @ Q.T


def inverse_sum_gap(hessians):
    """Minimum eigenvalue of ``1/N sum H_i^{-1} - (sum H_i)^{-1}``."""
    inv_mean = sum(spd_inverse(H) for H in hessians) / len(hessians)
    inv_sum = spd_inverse(sum(hessians))
    D = inv_mean - inv_sum
    return float(np.linalg.eigvalsh(0.5 * (D + D.T))[0])


def inverse_sum_suite(instances=1000, seed=0, n_range=(2, 8), d_range=(1, 6), tol=1e-9):
    """
    Check ``(sum H)^{-1} <= 1/N sum H^{-1}`` on random SPD ensembles.

    Returns a dict with the minimum eigenvalue seen and the failure count.
    """
    rng = np.random.default_rng(seed)
    worst = np.inf
    failures = 0
    for _ in range(instances):
        n = rng.integers(n_range[0], n_range[1] + 1)
        d = rng.integers(d_range[0], d_range[1] + 1)
        gap = inverse_sum_gap([random_spd(rng, d) for _ in range(n)])
        worst = min(worst, gap)
        failures += gap < -tol
    return {"instances": instances, "min_eigenvalue": worst, "failures": int(failures),
            "tolerance": tol}


def random_quadratic_ensemble(rng, n, d):
    return CostEnsemble(quadratic_cost(rng.standard_normal(d) * 3.0, random_spd(rng, d))
                        for _ in range(n))


def rate_dominance_suite(instances=200, seed=0, n_range=(2, 8), d_range=(1, 6), tol=1e-9):
    """
    Compare the Lyapunov decrease of the HISO and NR flows at random points.

    Each instance draws a random ensemble of quadratic costs (random SPD
    curvatures) and a random point ``x``, and checks
    ``-grad^T hiso_field >= -grad^T nr_field - tol``.
    """
    rng = np.random.default_rng(seed)
    worst = np.inf
    failures = 0
    for _ in range(instances):
        n = rng.integers(n_range[0], n_range[1] + 1)
        d = rng.integers(d_range[0], d_range[1] + 1)
        costs = random_quadratic_ensemble(rng, n, d)
        x = rng.standard_normal(d) * 5.0
        g = costs.gradient(x)
        margin = float(-g @ hiso_field(costs, x)) - float(-g @ nr_field(costs, x))
        worst = min(worst, margin)
        failures += margin < -tol
    return {"instances": instances, "min_margin": worst, "failures": int(failures),
            "tolerance": tol}
