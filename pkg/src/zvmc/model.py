"""Finite absorbing Markov reward models.

A model is a row-stochastic matrix ``P`` on states ``0..n-1``, an absorbing
set ``K``, per-transition rewards ``s(x, y) >= 0`` and per-transition
discounts ``beta(x, y) > 0``.  The quantity of interest is

    mu(x) = E_x[ sum_{i=1}^{tau} s(X_{i-1}, X_i) * prod_{j<=i} beta(X_{j-1}, X_j) ]

with ``tau`` the first entry time into ``K``.  Value functions (``mu`` and
the tilting functions ``nu``) are plain arrays indexed by the transient
states in increasing order, see :attr:`MarkovRewardModel.transient`.
"""

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import AssumptionError, ModelError

STOCHASTIC_TOL = 1e-12
KAPPA_CAP = 1.0 - 1e-12


@dataclass(frozen=True, eq=False)
class MarkovRewardModel:
    """Absorbing Markov reward model on a finite state space.

    Parameters
    ----------
    P : (n, n) array_like
        Row-stochastic transition matrix.
    absorbing : iterable of int
        Indices of the absorbing set ``K``.
    s : (n, n) array_like
        Nonnegative transition rewards; rows of absorbing states must be zero.
    beta : (n, n) array_like
        Strictly positive transition discounts.

    Construction does not validate; call :func:`validate_model` or
    :meth:`check`.
    """

    P: np.ndarray
    absorbing: tuple
    s: np.ndarray
    beta: np.ndarray
    transient: np.ndarray = field(init=False, repr=False)
    is_absorbing: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        P = np.array(self.P, dtype=float)
        s = np.array(self.s, dtype=float)
        beta = np.array(self.beta, dtype=float)
        n = P.shape[0]
        absorbing = tuple(sorted({int(k) for k in self.absorbing}))
        mask = np.zeros(n, dtype=bool)
        mask[[k for k in absorbing if 0 <= k < n]] = True
        for name, arr in (("P", P), ("s", s), ("beta", beta), ("is_absorbing", mask)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "absorbing", absorbing)
        transient = np.flatnonzero(~mask)
        transient.setflags(write=False)
        object.__setattr__(self, "transient", transient)

    @property
    def n_states(self):
        return self.P.shape[0]

    @property
    def n_transient(self):
        return self.transient.size

    def position(self, x):
        """Index of transient state ``x`` within value-function arrays."""
        pos = np.searchsorted(self.transient, x)
        if pos >= self.transient.size or self.transient[pos] != x:
            raise ModelError(f"state {x} is not transient")
        return int(pos)

    def extend(self, values):
        """Embed a value function over the transient states into all states (zero on K)."""
        values = np.asarray(values, dtype=float)
        if values.shape != (self.n_transient,):
            raise ModelError(
                f"value function has shape {values.shape}, expected ({self.n_transient},)"
            )
        full = np.zeros(self.n_states)
        full[self.transient] = values
        return full

    def discounted(self):
        """The beta-weighted kernel P_beta = beta * P."""
        return self.beta * self.P

    def check(self):
        problems = validate_model(self)
        if problems:
            raise ModelError("invalid model: " + "; ".join(problems))
        return self

    def to_dict(self):
        return {
            "n_states": self.n_states,
            "absorbing": list(self.absorbing),
            "P": self.P.tolist(),
            "s": self.s.tolist(),
            "beta": self.beta.tolist(),
        }


@dataclass(frozen=True)
class StructuralConstants:
    """Bounds that control likelihood ratios and absorption times over the box B."""

    M_s: float
    M_beta: float
    m_beta: float
    mu_min: float
    mu_max: float
    m: int
    gamma: float
    nu_min: float
    nu_max: float
    kappa: float
    H: float
    pi_G: float

    @property
    def block_escape(self):
        """Lower bound ``kappa**m * gamma`` on absorbing within ``m`` steps under any Q_nu."""
        return self.kappa ** self.m * self.gamma

    def survival_bound(self, k):
        """Upper bound on Q_nu(tau > k) from m-step blocks: (1 - kappa^m gamma)^floor(k/m)."""
        k = np.asarray(k)
        return (1.0 - min(self.block_escape, 1.0)) ** (k // self.m)

    def to_dict(self):
        return dict(self.__dict__)


def _reachable_to(targets, adjacency):
    """Boolean mask of states from which some state in ``targets`` is reachable."""
    reach = targets.copy()
    while True:
        grown = reach | (adjacency[:, reach].any(axis=1))
        if (grown == reach).all():
            return reach
        reach = grown


def validate_model(model):
    """Return a list of human-readable invariant violations (empty when valid)."""
    P, s, beta = model.P, model.s, model.beta
    n = P.shape[0]
    problems = []
    if P.ndim != 2 or P.shape != (n, n):
        return [f"P must be square, got shape {P.shape}"]
    for name, arr in (("s", s), ("beta", beta)):
        if arr.shape != (n, n):
            problems.append(f"{name} has shape {arr.shape}, expected {(n, n)}")
    if problems:
        return problems
    bad = [k for k in model.absorbing if not 0 <= k < n]
    if bad:
        problems.append(f"absorbing indices out of range: {bad}")
    for name, arr in (("P", P), ("s", s), ("beta", beta)):
        if not np.isfinite(arr).all():
            problems.append(f"{name} has non-finite entries")
    if problems:
        return problems

    for i, j in zip(*np.nonzero((P < 0) | (P > 1))):
        problems.append(f"P[{i}][{j}]={P[i, j]!r} outside [0, 1]")
    sums = P.sum(axis=1)
    for i in np.flatnonzero(np.abs(sums - 1.0) > STOCHASTIC_TOL):
        problems.append(f"P[{i}] row not stochastic (sum={sums[i]!r})")
    for i, j in zip(*np.nonzero(s < 0)):
        problems.append(f"s[{i}][{j}]={s[i, j]!r} negative")
    for k in model.absorbing:
        if np.any(s[k] != 0):
            problems.append(f"s[{k}] nonzero on absorbing state")
    for i, j in zip(*np.nonzero(beta <= 0)):
        problems.append(f"beta[{i}][{j}]={beta[i, j]!r} beta not strictly positive")

    if model.n_transient == 0:
        problems.append("no transient states (A is empty)")
    elif not model.absorbing:
        problems.append("absorbing set K is empty")
    else:
        reach = _reachable_to(model.is_absorbing, P > 0)
        for x in model.transient[~reach[model.transient]]:
            problems.append(f"K unreachable from state {x}")
    return problems


def dp_gamma(model, m):
    """Worst-case expected terminal reward collected within ``m`` steps.

    Computes ``min_{x in A} E_x[s(X_{tau-1}, X_tau); tau <= m]`` under ``P`` by
    backward recursion over the horizon.
    """
    if m < 1:
        raise ModelError("horizon m must be >= 1")
    A = model.transient
    K = model.is_absorbing
    P_AA = model.P[np.ix_(A, A)]
    exit_reward = (model.P[A][:, K] * model.s[A][:, K]).sum(axis=1)
    v = np.zeros(A.size)
    for _ in range(m):
        v = exit_reward + P_AA @ v
    return float(v.min())


def compute_constants(model, mu, nu_min, nu_max, m_max=None):
    """Structural constants for tilting functions in the box [nu_min, nu_max].

    Parameters
    ----------
    model : MarkovRewardModel
    mu : (|A|,) ndarray
        Exact value function (see :func:`zvmc.exact.solve_mu`).
    nu_min, nu_max : float
        Box bounds with ``0 < nu_min <= min(mu)`` and ``max(mu) <= nu_max``.
    m_max : int, optional
        Largest horizon searched for a positive ``gamma``; defaults to ``10 * n_states``.

    Returns
    -------
    StructuralConstants
    """
    mu = np.asarray(mu, dtype=float)
    mu_min, mu_max = float(mu.min()), float(mu.max())
    if not 0 < nu_min <= mu_min or not mu_max <= nu_max:
        raise ModelError(
            f"box [{nu_min}, {nu_max}] must satisfy 0 < nu_min <= {mu_min} and nu_max >= {mu_max}"
        )
    if m_max is None:
        m_max = 10 * model.n_states
    A = model.transient
    M_s = float(model.s[A].max())
    M_beta = float(model.beta[A].max())
    m_beta = float(model.beta[A].min())

    m, gamma = None, 0.0
    for horizon in range(1, m_max + 1):
        gamma = dp_gamma(model, horizon)
        if gamma > 0:
            m = horizon
            break
    if m is None:
        raise AssumptionError(f"absorption condition fails: no horizon m <= {m_max} with gamma > 0")

    kappa = min(KAPPA_CAP, m_beta * min(nu_min, 1.0) / ((M_s + nu_max) * M_beta))
    H = max(1.0, (M_s + nu_max) * M_beta * mu_max / (nu_min * mu_min))
    escape = min(kappa ** m * gamma, 1.0)
    pi_G = 1.0 - (1.0 - escape) ** (1.0 / m)
    return StructuralConstants(
        M_s=M_s, M_beta=M_beta, m_beta=m_beta, mu_min=mu_min, mu_max=mu_max,
        m=m, gamma=gamma, nu_min=float(nu_min), nu_max=float(nu_max),
        kappa=kappa, H=H, pi_G=pi_G,
    )


def default_max_steps(constants):
    """Simulation cap ``ceil(50 / pi_G)``; censoring beyond it has probability <= e^-50."""
    return int(math.ceil(50.0 / constants.pi_G))


# -- construction helpers ---------------------------------------------------

def two_state_model():
    """Three states, K = {0}; each transient state is absorbed or swaps with probability 1/2.

    Unit rewards and no discounting, so ``mu = (2, 2)``.
    """
    P = np.array([[1.0, 0.0, 0.0], [0.5, 0.0, 0.5], [0.5, 0.5, 0.0]])
    s = np.ones((3, 3))
    s[0] = 0.0
    return MarkovRewardModel(P=P, absorbing=(0,), s=s, beta=np.ones((3, 3)))


def random_model(n_states, rng, n_absorbing=1, exit_mass=(0.1, 0.4), beta_range=(0.8, 1.1),
                 density=1.0):
    """Random valid model with every transient row leaving to K with mass in ``exit_mass``.

    Discounts are drawn in ``beta_range`` and rescaled on each transient row so
    that ``sum_y beta P`` over transient targets stays below one, which keeps
    ``mu`` finite.
    """
    if not 1 <= n_absorbing < n_states:
        raise ModelError("need 1 <= n_absorbing < n_states")
    n = n_states
    K = np.arange(n_absorbing)
    A = np.arange(n_absorbing, n)
    P = np.zeros((n, n))
    P[K, K] = 1.0
    for x in A:
        exit_p = rng.uniform(*exit_mass)
        to_k = rng.dirichlet(np.ones(n_absorbing)) * exit_p
        w = rng.uniform(size=A.size) * (rng.uniform(size=A.size) < density)
        if w.sum() == 0:
            w[rng.integers(A.size)] = 1.0
        P[x, K] = to_k
        P[x, A] = w / w.sum() * (1.0 - exit_p)
    s = rng.uniform(0.2, 1.0, size=(n, n))
    s[K] = 0.0
    beta = rng.uniform(*beta_range, size=(n, n))
    # keep the discounted transient block strictly substochastic
    for x in A:
        row = beta[x, A] @ P[x, A]
        if row >= 0.98:
            beta[x] *= 0.95 / row
    return MarkovRewardModel(P=P, absorbing=tuple(K), s=s, beta=beta)


# -- JSON model files -------------------------------------------------------

def model_from_dict(doc):
    """Build a model from a JSON-style mapping; errors name the JSON path."""
    if not isinstance(doc, dict):
        raise ModelError("$: model document must be an object")
    for key in ("n_states", "absorbing", "P", "s", "beta"):
        if key not in doc:
            raise ModelError(f"$.{key}: missing required field")
    n = doc["n_states"]
    if not isinstance(n, int) or isinstance(n, bool) or n < 1:
        raise ModelError("$.n_states: must be a positive integer")
    absorbing = doc["absorbing"]
    if not isinstance(absorbing, list) or not all(
        isinstance(k, int) and not isinstance(k, bool) for k in absorbing
    ):
        raise ModelError("$.absorbing: must be an array of integers")
    mats = {}
    for key in ("P", "s", "beta"):
        rows = doc[key]
        if not isinstance(rows, list) or len(rows) != n:
            raise ModelError(f"$.{key}: expected an array of {n} rows")
        for i, row in enumerate(rows):
            if not isinstance(row, list) or len(row) != n:
                raise ModelError(f"$.{key}[{i}]: expected {n} reals")
            for j, v in enumerate(row):
                if not isinstance(v, (int, float)) or isinstance(v, bool):
                    raise ModelError(f"$.{key}[{i}][{j}]: not a number")
        mats[key] = np.array(rows, dtype=float)
    model = MarkovRewardModel(P=mats["P"], absorbing=tuple(absorbing), s=mats["s"],
                              beta=mats["beta"])
    problems = validate_model(model)
    if problems:
        raise ModelError("$: " + "; ".join(problems))
    return model


def load_model(path):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ModelError(f"{path}: cannot read model file ({exc.strerror})") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from exc
    return model_from_dict(doc)


def save_model(model, path):
    Path(path).write_text(json.dumps(model.to_dict(), indent=2) + "\n")
