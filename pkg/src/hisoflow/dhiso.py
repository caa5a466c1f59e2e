"""
Distributed HISO: every agent runs a local Newton-like step driven by a
finite-time dynamic average consensus estimate of the gradient sum.

Agent ``i`` keeps ``(x^i, v^i)`` and forms ``z^i = g^i(x^i) + v^i``. With
``a_ij`` the adjacency weights::

    v^i' = -sum_j a_ij sgn(z^i - z^j) + sum_j a_ij (x^i - x^j)
    x^i' = -H^i(x^i)^{-1} (z^i + sum_j a_ij (x^i - x^j))

``z`` is recomputed from ``(x, v)`` at every step instead of being
integrated, which keeps ``sum z = sum g`` exact under discretization.
Replacing every ``H^i`` with the identity gives DGD2.
"""

from dataclasses import dataclass, field

import numpy as np

from .central import (DIVERGENCE_FACTOR, DivergenceError, NotPositiveDefiniteError,
                      newton_oracle, spd_solve)
from .graph import matrices

DHISO, DGD2 = "DHISO", "DGD2"


def sgn(u, epsilon=0.0):
    """
    Componentwise sign with ``sgn(0) = 0``; for ``epsilon > 0`` the
    saturated linear surrogate ``u / max(|u|, epsilon)``.
    """
    u = np.asarray(u, dtype=float)
    if epsilon < 0:
        raise ValueError("epsilon must be non-negative")
    if epsilon == 0:
        return np.sign(u)
    return u / np.maximum(np.abs(u), epsilon)


@dataclass
class NetworkState:
    x: np.ndarray
    v: np.ndarray
    t: float = 0.0

    @classmethod
    def initial(cls, x0, v0=None):
        x0 = np.array(x0, dtype=float)
        if x0.ndim == 1:
            x0 = x0[:, None]
        v0 = np.zeros_like(x0) if v0 is None else np.array(v0, dtype=float).reshape(x0.shape)
        return cls(x0, v0, 0.0)

    def z(self, costs):
        return costs.local_gradients(self.x) + self.v


@dataclass(frozen=True)
class ConsensusDiagnostics:
    cons_x: float
    cons_z: float
    sum_z: float
    sum_v: float
    grad_sum: float
    sum_mismatch: float  # ||sum z - sum g||, roundoff only


def _disagreement(M):
    return float(np.linalg.norm(M - M.mean(axis=0)))


def diagnostics(state, g, costs):
    G = costs.local_gradients(state.x)
    Z = G + state.v
    return ConsensusDiagnostics(
        cons_x=_disagreement(state.x),
        cons_z=_disagreement(Z),
        sum_z=float(np.linalg.norm(Z.sum(axis=0))),
        sum_v=float(np.linalg.norm(state.v.sum(axis=0))),
        grad_sum=float(np.linalg.norm(G.sum(axis=0))),
        sum_mismatch=float(np.linalg.norm(Z.sum(axis=0) - G.sum(axis=0))),
    )


def hat_variables(state, g, costs):
    """Edge-space disagreements ``(B^T Pi z, B^T Pi x)``, each (M, d)."""
    gm = matrices(g)
    Z = state.z(costs)
    Bt = gm.incidence.T
    return Bt @ (gm.projection @ Z), Bt @ (gm.projection @ state.x)


def _local_solves(H, q, use_hessian):
    if not use_hessian:
        return q
    try:
        c = np.linalg.cholesky(H)
    except np.linalg.LinAlgError:
        bad = next(i for i in range(H.shape[0])
                   if np.any(np.linalg.eigvalsh(H[i]) <= 0) or not np.all(np.isfinite(H[i])))
        raise NotPositiveDefiniteError(
            f"Hessian of agent {bad + 1} is not positive definite", bad + 1) from None
    y = np.linalg.solve(c, q[..., None])
    return np.linalg.solve(np.swapaxes(c, -1, -2), y)[..., 0]


def dhiso_rhs(state, g, costs, epsilon=0.0, use_hessian=True, gradients=None):
    """
    Right-hand side of the distributed protocol.

    Returns
    -------
    dv, dx : ndarray, shape (N, d)
    """
    X, V = state.x, state.v
    G = costs.local_gradients(X) if gradients is None else gradients
    Z = G + V
    B = g.incidence
    s = sgn(B.T @ Z, epsilon)  # one row per edge: sgn(z^i - z^j), i < j
    lap_x = B @ (B.T @ X)
    dv = -(B @ s) + lap_x
    q = Z + lap_x
    H = costs.local_hessians(X) if use_hessian else None
    dx = -_local_solves(H, q, use_hessian)
    return dv, dx


def agent_rhs(i, g, x_i, z_i, neighbor_x, neighbor_z, cost_i, epsilon=0.0, use_hessian=True):
    """
    One agent's update from its own ``(x^i, z^i)`` and its neighbours' values.

    ``neighbor_x`` and ``neighbor_z`` map neighbour index to that agent's
    latest ``x^j`` and ``z^j``; nothing else about the network is read.
    """
    nbrs = g.neighbors(i)
    if set(neighbor_x) != set(nbrs) or set(neighbor_z) != set(nbrs):
        raise ValueError(f"agent {i + 1} needs exactly its neighbours {list(nbrs + 1)}")
    lap = sum((x_i - neighbor_x[j] for j in nbrs), np.zeros_like(x_i))
    sign_sum = sum((sgn(z_i - neighbor_z[j], epsilon) for j in nbrs), np.zeros_like(z_i))
    dv = -sign_sum + lap
    q = z_i + lap
    dx = -(spd_solve(cost_i.hessian(x_i), q, agent=i + 1) if use_hessian else q)
    return dv, dx


def message_floats_per_step(g, d):
    """Floats each agent receives per step: ``x^j`` and ``z^j`` from every neighbour."""
    return 2 * d * g.degrees


def finite_time_bound(g, state0, costs=None):
    """
    Predicted time for the z-disagreement to vanish: ``2 sqrt(lambda_bar) ||Pi z(0)||``.

    ``state0`` is a NetworkState (then ``costs`` is required) or an (N, d)
    array of initial ``z`` values.
    """
    Z0 = state0.z(costs) if isinstance(state0, NetworkState) else np.asarray(state0, dtype=float)
    if Z0.ndim == 1:
        Z0 = Z0[:, None]
    return 2.0 * np.sqrt(matrices(g).lambda_bar) * _disagreement(Z0)


@dataclass
class DistTrace:
    label: str
    step: float
    t: np.ndarray
    f_gap: np.ndarray
    max_opt_err: np.ndarray
    cons_x: np.ndarray
    cons_z: np.ndarray
    sum_z: np.ndarray
    sum_v: np.ndarray
    grad_sum: np.ndarray
    sum_mismatch: np.ndarray
    max_field_norm: np.ndarray
    z_bound: np.ndarray  # max |entry| scale used by roundoff checks
    x_final: np.ndarray = field(repr=False)
    v_final: np.ndarray = field(repr=False)
    z0: np.ndarray = field(repr=False)
    x_star: np.ndarray = field(repr=False)
    t_pred: float = 0.0
    x_history: np.ndarray = field(default=None, repr=False)

    def time_to(self, gap):
        hit = np.flatnonzero(self.f_gap <= gap)
        return float(self.t[hit[0]]) if hit.size else None

    def iterations_to(self, gap):
        hit = np.flatnonzero(self.f_gap <= gap)
        return int(round(self.t[hit[0]] / self.step)) if hit.size else None


def dhiso_run(g, costs, x0, step, horizon, epsilon=0.0, x_star=None, v0=None,
              use_hessian=True, record_every=1, label=None, keep_states=False):
    """
    Forward-Euler simulation of the synchronous distributed protocol.

    Parameters
    ----------
    g : Graph
    costs : CostEnsemble
        One local cost per node.
    x0 : array (N, d)
        Initial decisions; ``v`` starts at zero unless ``v0`` is given
        (``v0`` must sum to zero over agents for the method to converge).
    step, horizon : float
        Euler stepsize and final simulated time.
    epsilon : float
        Boundary-layer width of the sign; 0 is the exact sign.
    x_star : array (d,), optional
        Reference minimizer; computed with the Newton oracle when omitted.
    use_hessian : bool
        False gives DGD2.
    record_every : int
        Diagnostics are stored every this many steps and at the final step.
    keep_states : bool
        Also store the recorded decisions as ``x_history`` (n_rec, N, d).

    Raises
    ------
    DivergenceError
        If the gap at the agent average exceeds ``1e6 max(gap(0), 1)`` or some
        agent drifts ``1e6`` times farther from ``x*`` than at the start.
    """
    if not step > 0 or not horizon > 0:
        raise ValueError("step and horizon must be positive")
    if g.n_nodes != costs.n_agents:
        raise ValueError(f"graph has {g.n_nodes} nodes but there are {costs.n_agents} costs")
    state = NetworkState.initial(x0, v0)
    if state.x.shape != (costs.n_agents, costs.dim):
        raise ValueError(f"x0 must have shape {(costs.n_agents, costs.dim)}")
    if x_star is None:
        x_star = newton_oracle(costs, state.x.mean(axis=0))
    x_star = np.asarray(x_star, dtype=float).reshape(-1)
    f_star = costs.value(x_star)
    label = label or (DHISO if use_hessian else DGD2)

    n_steps = int(round(horizon / step))
    rec = {k: [] for k in ("t", "f_gap", "max_opt_err", "cons_x", "cons_z", "sum_z",
                           "sum_v", "grad_sum", "sum_mismatch", "max_field_norm", "z_bound")}
    z0 = None
    limit = None
    history = []
    for k in range(n_steps + 1):
        X, V = state.x, state.v
        G = costs.local_gradients(X)
        Z = G + V
        if z0 is None:
            z0 = Z.copy()
        f_gap = costs.value(X.mean(axis=0)) - f_star
        opt_err = float(np.linalg.norm(X - x_star, axis=1).max())
        if limit is None:
            # floors at 1 so a run started at the optimum is not flagged at once
            limit = DIVERGENCE_FACTOR * max(abs(f_gap), 1.0)
            err_limit = DIVERGENCE_FACTOR * max(opt_err, 1.0)
        # the average can stay put while agents blow up in opposite directions
        if not (np.isfinite(f_gap) and np.isfinite(opt_err)) or f_gap > limit \
                or opt_err > err_limit:
            raise DivergenceError(
                f"{label} diverged at t={state.t:g} (delta={step:g}, gap={f_gap:.3g}, "
                f"max ||x^i - x*|| = {opt_err:.3g})")
        last = k == n_steps
        if last:
            dx = np.zeros_like(X)
        else:
            dv, dx = dhiso_rhs(state, g, costs, epsilon, use_hessian, gradients=G)
        if k % record_every == 0 or last:
            sg, sz = G.sum(axis=0), Z.sum(axis=0)
            rec["t"].append(k * step)
            rec["f_gap"].append(f_gap)
            rec["max_opt_err"].append(opt_err)
            rec["cons_x"].append(_disagreement(X))
            rec["cons_z"].append(_disagreement(Z))
            rec["sum_z"].append(float(np.linalg.norm(sz)))
            rec["sum_v"].append(float(np.linalg.norm(V.sum(axis=0))))
            rec["grad_sum"].append(float(np.linalg.norm(sg)))
            rec["sum_mismatch"].append(float(np.linalg.norm(sz - sg)))
            rec["max_field_norm"].append(float(np.linalg.norm(dx, axis=1).max()))
            rec["z_bound"].append(float(max(np.abs(G).max(), np.abs(V).max())))
            if keep_states:
                history.append(X.copy())
        if last:
            break
        state = NetworkState(X + step * dx, V + step * dv, (k + 1) * step)

    arrays = {k: np.asarray(v) for k, v in rec.items()}
    return DistTrace(
        label=label,
        step=step,
        x_final=state.x,
        v_final=state.v,
        z0=z0,
        x_star=x_star,
        t_pred=finite_time_bound(g, z0),
        x_history=np.array(history) if keep_states else None,
        **arrays,
    )


def dgd2_run(g, costs, x0, step, horizon, epsilon=0.0, x_star=None, v0=None,
             record_every=1, keep_states=False):
    """DGD2: the distributed protocol with every local Hessian replaced by I."""
    return dhiso_run(g, costs, x0, step, horizon, epsilon, x_star, v0, use_hessian=False,
                     record_every=record_every, keep_states=keep_states)


def chattering_band(g, d, step):
    """Width ``delta * max_degree * sqrt(N d)`` treated as z-agreement."""
    return step * g.max_degree * np.sqrt(g.n_nodes * d)


def check_conservation(trace, n_agents, tol=1e-8):
    """``max_t ||sum v||`` and whether ``sum z = sum g`` holds to roundoff at every row."""
    roundoff = 1e-10 * (1.0 + n_agents * trace.z_bound)
    return {
        "max_sum_v": float(trace.sum_v.max()),
        "sum_v_ok": bool(trace.sum_v.max() <= tol),
        "max_sum_mismatch": float(trace.sum_mismatch.max()),
        "identity_ok": bool(np.all(trace.sum_mismatch <= roundoff)),
    }


def check_sum_decay(trace, slack=None, floor=0.0, t_max=None):
    """
    Compare ``||sum z(t)||`` with ``||sum z(0)|| (1 - delta)^(t/delta) (1 + slack) + floor``.

    ``slack`` defaults to ``10 delta``. Returns the worst ratio of observed to
    bound and the first time the bound is exceeded (None if never).
    """
    delta = trace.step
    slack = 10 * delta if slack is None else slack
    t = trace.t
    sel = np.ones_like(t, dtype=bool) if t_max is None else t <= t_max
    k = np.rint(t[sel] / delta)
    bound = trace.sum_z[0] * np.exp(k * np.log1p(-delta)) * (1 + slack) + floor
    obs = trace.sum_z[sel]
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(bound > 0, obs / bound, np.where(obs > 0, np.inf, 0.0))
    bad = np.flatnonzero(obs > bound)
    return {
        "ok": bool(bad.size == 0),
        "worst_ratio": float(ratio.max()),
        "first_violation_t": float(t[sel][bad[0]]) if bad.size else None,
        "final_sum_z": float(obs[-1]),
        "final_bound": float(bound[-1]),
    }


def check_sum_decay_window(trace, rate=0.9, floor=1e-8, t_max=10.0):
    """
    Looser decay check ``||sum z(t)|| <= ||sum z(0)|| e^(-rate t) + floor`` on ``[0, t_max]``.
    """
    t = trace.t
    sel = t <= t_max
    bound = trace.sum_z[0] * np.exp(-rate * t[sel]) + floor
    obs = trace.sum_z[sel]
    ratio = obs / bound
    bad = np.flatnonzero(obs > bound)
    return {
        "ok": bool(bad.size == 0),
        "worst_ratio": float(ratio.max()),
        "first_violation_t": float(t[sel][bad[0]]) if bad.size else None,
    }


def check_finite_time_consensus(trace, g, d, factor=1.5):
    """``cons_z(t) <= band`` for every recorded ``t >= factor * T_pred``."""
    band = chattering_band(g, d, trace.step)
    after = trace.t >= factor * trace.t_pred
    worst = float(trace.cons_z[after].max()) if after.any() else 0.0
    return {"ok": bool(worst <= band), "band": float(band), "t_pred": float(trace.t_pred),
            "worst_after": worst, "checked_rows": int(after.sum())}
