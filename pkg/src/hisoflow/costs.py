"""
Per-agent smooth convex cost oracles.

Every cost exposes ``value``, ``gradient`` and ``hessian`` for a point of
dimension ``dim`` together with declared Hessian bounds ``m_lower`` and
``m_upper``.
"""

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit


class AssumptionError(ValueError):
    """Cost parameters that cannot satisfy the strong convexity requirement."""


class AgentCost:
    dim: int
    m_lower: float
    m_upper: float

    def value(self, x):
        raise NotImplementedError

    def gradient(self, x):
        raise NotImplementedError

    def hessian(self, x):
        raise NotImplementedError


@dataclass(frozen=True)
class QuadraticCost(AgentCost):
    """``0.5 (x - center)^T Q (x - center)`` with SPD ``Q``."""

    center: np.ndarray
    curvature: np.ndarray

    def __post_init__(self):
        w = np.linalg.eigvalsh(self.curvature)
        if w[0] <= 0:
            raise AssumptionError("quadratic curvature must be positive definite")
        object.__setattr__(self, "m_lower", float(w[0]))
        object.__setattr__(self, "m_upper", float(w[-1]))

    @property
    def dim(self):
        return self.center.shape[0]

    def value(self, x):
        r = np.asarray(x, dtype=float) - self.center
        return 0.5 * float(r @ self.curvature @ r)

    def gradient(self, x):
        return self.curvature @ (np.asarray(x, dtype=float) - self.center)

    def hessian(self, x):
        return self.curvature.copy()


def quadratic_cost(center, curvature=None):
    center = np.atleast_1d(np.asarray(center, dtype=float))
    if curvature is None:
        curvature = np.eye(center.shape[0])
    curvature = np.atleast_2d(np.asarray(curvature, dtype=float))
    return QuadraticCost(center, curvature)


@dataclass(frozen=True)
class QuarticCost(AgentCost):
    """Scalar ``a x^2 + b x^4``; ``m_upper`` holds on the box ``|x| <= radius``."""

    a: float
    b: float
    radius: float = 1.0
    dim: int = field(default=1, init=False)

    @property
    def m_lower(self):
        return 2.0 * self.a

    @property
    def m_upper(self):
        return 2.0 * self.a + 12.0 * self.b * self.radius ** 2

    def value(self, x):
        x = float(np.asarray(x).reshape(-1)[0])
        return self.a * x ** 2 + self.b * x ** 4

    def gradient(self, x):
        x = float(np.asarray(x).reshape(-1)[0])
        return np.array([2.0 * self.a * x + 4.0 * self.b * x ** 3])

    def hessian(self, x):
        x = float(np.asarray(x).reshape(-1)[0])
        return np.array([[2.0 * self.a + 12.0 * self.b * x ** 2]])


def quartic_cost(a, b, radius=1.0):
    if a <= 0:
        raise AssumptionError(f"quartic coefficient a must be positive, got {a}")
    if b < 0:
        raise AssumptionError(f"quartic coefficient b must be non-negative, got {b}")
    return QuarticCost(float(a), float(b), float(radius))


def random_quartic_coefficients(rng, n_agents, low=0.01, high=0.1):
    a = rng.uniform(low, high, n_agents)
    b = rng.uniform(low, high, n_agents)
    return a, b


@dataclass(frozen=True)
class LogRegData:
    """
    Labelled samples split across agents.

    ``features[i]`` is an ``(s_i, p)`` array and ``labels[i]`` the matching
    +/-1 vector for agent ``i`` (0-based).
    """

    features: tuple
    labels: tuple
    regularization: float

    def __post_init__(self):
        if len(self.features) != len(self.labels):
            raise ValueError("features and labels must cover the same agents")
        for c, y in zip(self.features, self.labels):
            if c.shape[0] != y.shape[0]:
                raise ValueError("sample count mismatch between features and labels")
            if not np.all(np.isin(y, (-1.0, 1.0))):
                raise ValueError("labels must be -1 or +1")

    @property
    def n_agents(self):
        return len(self.features)

    @property
    def p(self):
        return self.features[0].shape[1]

    @property
    def dim(self):
        return self.p + 1

    def sample_counts(self):
        return [c.shape[0] for c in self.features]


def generate_logreg_data(seed, n_agents, p, samples_per_agent, separation=1.0,
                         regularization=2.0, rng=None):
    """
    Two Gaussian classes with means ``+separation * 1`` and ``-separation * 1``.

    Labels alternate +1, -1 within each agent, so each agent is balanced up
    to parity. Pass ``rng`` to continue drawing from an existing generator.
    """
    if p < 1 or samples_per_agent < 1:
        raise ValueError("p and samples_per_agent must be >= 1")
    if rng is None:
        rng = np.random.default_rng(seed)
    features, labels = [], []
    base = np.where(np.arange(samples_per_agent) % 2 == 0, 1.0, -1.0)
    for _ in range(n_agents):
        c = rng.standard_normal((samples_per_agent, p)) + separation * base[:, None]
        features.append(c)
        labels.append(base.copy())
    return LogRegData(tuple(features), tuple(labels), float(regularization))


class LogisticCost(AgentCost):
    """
    Regularized logistic loss of one agent in the variable ``x = (w, b)``.

    Only the weights are regularized, so the Hessian lower bound
    ``m_lower = lambda / N`` holds on the weight block; the bias direction
    has curvature ``sum sigma (1 - sigma)`` which can approach zero.
    """

    def __init__(self, features, labels, regularization, n_agents):
        self.features = np.asarray(features, dtype=float)
        self.labels = np.asarray(labels, dtype=float)
        s, p = self.features.shape
        self._aug = np.hstack([self.features, np.ones((s, 1))])
        self._ya = self.labels[:, None] * self._aug
        self.dim = p + 1
        self.reg = float(regularization) / n_agents
        self._reg_diag = np.r_[np.full(p, self.reg), 0.0]
        self.m_lower = self.reg
        self.m_upper = 0.25 * float(np.linalg.eigvalsh(self._aug.T @ self._aug)[-1]) + self.reg
        self.strongly_convex_in_bias = False

    def _margins(self, x):
        return self._ya @ np.asarray(x, dtype=float)

    def value(self, x):
        x = np.asarray(x, dtype=float)
        w = x[:-1]
        return float(np.logaddexp(0.0, -self._margins(x)).sum() + 0.5 * self.reg * (w @ w))

    def gradient(self, x):
        x = np.asarray(x, dtype=float)
        q = expit(-self._margins(x))
        return -(self._ya.T @ q) + self._reg_diag * x

    def hessian(self, x):
        q = expit(-self._margins(x))
        wts = q * (1.0 - q)
        return (self._aug.T * wts) @ self._aug + np.diag(self._reg_diag)


def logistic_cost(data, agent, n_agents=None):
    n = data.n_agents if n_agents is None else n_agents
    return LogisticCost(data.features[agent], data.labels[agent], data.regularization, n)


class CostEnsemble:
    """The N local costs of a network, all of the same dimension."""

    def __init__(self, agents):
        agents = tuple(agents)
        if not agents:
            raise ValueError("ensemble needs at least one agent")
        dims = {a.dim for a in agents}
        if len(dims) != 1:
            raise ValueError(f"agents disagree on dimension: {sorted(dims)}")
        self.agents = agents
        self.dim = dims.pop()
        self.m_lower = min(a.m_lower for a in agents)
        self.m_upper = max(a.m_upper for a in agents)
        if self.m_lower <= 0:
            raise AssumptionError("ensemble m_lower must be positive")

    def __len__(self):
        return len(self.agents)

    def __iter__(self):
        return iter(self.agents)

    def __getitem__(self, i):
        return self.agents[i]

    @property
    def n_agents(self):
        return len(self.agents)

    def value(self, x):
        return sum(a.value(x) for a in self.agents)

    def gradient(self, x):
        return sum(a.gradient(x) for a in self.agents)

    def hessians(self, x):
        """(N, d, d) stack of local Hessians at a common point."""
        return np.stack([a.hessian(x) for a in self.agents])

    def local_gradients(self, X):
        """(N, d) gradients with agent i evaluated at its own row X[i]."""
        return np.stack([a.gradient(X[i]) for i, a in enumerate(self.agents)])

    def local_hessians(self, X):
        return np.stack([a.hessian(X[i]) for i, a in enumerate(self.agents)])


def quartic_ensemble(a, b, radius=1.0):
    return CostEnsemble(quartic_cost(ai, bi, radius) for ai, bi in zip(a, b))


class LogisticEnsemble(CostEnsemble):
    """Logistic costs with batched per-agent evaluation (equal sample counts)."""

    def __init__(self, data):
        super().__init__(logistic_cost(data, i) for i in range(data.n_agents))
        self._ya = np.stack([a._ya for a in self.agents])  # (N, s, d)
        self._aug = np.stack([a._aug for a in self.agents])
        self._reg_diag = self.agents[0]._reg_diag
        self._reg_mat = np.diag(self._reg_diag)

    def value(self, x):
        x = np.asarray(x, dtype=float)
        m = self._ya @ x
        return float(np.logaddexp(0.0, -m).sum()
                     + 0.5 * self.n_agents * self.agents[0].reg * (x[:-1] @ x[:-1]))

    def local_gradients(self, X):
        m = np.einsum("isk,ik->is", self._ya, X)
        q = expit(-m)
        return -np.einsum("isk,is->ik", self._ya, q) + self._reg_diag * X

    def local_hessians(self, X):
        m = np.einsum("isk,ik->is", self._ya, X)
        q = expit(-m)
        w = q * (1.0 - q)
        return np.einsum("isk,is,isl->ikl", self._aug, w, self._aug) + self._reg_mat


def logistic_ensemble(data):
    if len(set(data.sample_counts())) == 1:
        return LogisticEnsemble(data)
    return CostEnsemble(logistic_cost(data, i) for i in range(data.n_agents))


def fd_check(cost, x, h=1e-5):
    """
    Compare analytic derivatives against central finite differences.

    Errors are ``||analytic - fd|| / max(||analytic||, 1)``, relative for
    large derivatives and absolute near stationary points.

    Returns
    -------
    grad_rel_err, hess_rel_err : float
    """
    if h <= 0:
        raise ValueError("h must be positive")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    d = x.shape[0]
    g = np.asarray(cost.gradient(x), dtype=float)
    H = np.asarray(cost.hessian(x), dtype=float)
    g_fd = np.empty(d)
    H_fd = np.empty((d, d))
    for k in range(d):
        e = np.zeros(d)
        e[k] = h
        g_fd[k] = (cost.value(x + e) - cost.value(x - e)) / (2 * h)
        H_fd[:, k] = (cost.gradient(x + e) - cost.gradient(x - e)) / (2 * h)
    grad_err = np.linalg.norm(g - g_fd) / max(np.linalg.norm(g), 1.0)
    hess_err = np.linalg.norm(H - H_fd) / max(np.linalg.norm(H), 1.0)
    return float(grad_err), float(hess_err)


def save_logreg_csv(data, path):
    """Write samples as rows ``agent,label,f1..fp`` (agent is 1-based)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["agent", "label"] + [f"f{k + 1}" for k in range(data.p)])
        for i, (c, y) in enumerate(zip(data.features, data.labels)):
            for row, label in zip(c, y):
                w.writerow([i + 1, int(label)] + [repr(float(v)) for v in row])


def load_logreg_csv(path, regularization):
    rows = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[:2] != ["agent", "label"]:
            raise ValueError(f"{path}: unexpected header {header}")
        for rec in reader:
            agent = int(rec[0])
            rows.setdefault(agent, []).append((float(rec[1]), [float(v) for v in rec[2:]]))
    agents = sorted(rows)
    if agents != list(range(1, len(agents) + 1)):
        raise ValueError(f"{path}: agents must be numbered 1..N, got {agents}")
    features = tuple(np.array([r[1] for r in rows[a]]) for a in agents)
    labels = tuple(np.array([r[0] for r in rows[a]]) for a in agents)
    return LogRegData(features, labels, float(regularization))
