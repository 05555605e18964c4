"""Adaptive importance sampling for the Perron-Frobenius eigenvalue.

For an irreducible substochastic matrix ``P`` on ``0..d`` (row defects go to
a cemetery ``Delta``), the target is ``alpha*`` with ``mu_0(alpha*) = 1`` where

    mu_x(alpha) = E_x[exp(alpha * sigma); sigma < tau_Delta],  sigma = first return to 0,

so that ``exp(-alpha*)`` is the PF eigenvalue and ``mu(alpha*)`` its eigenvector.

For fixed ``alpha`` this is an absorbing reward problem with ``K = {0, Delta}``,
``s(x, y) = 1{y = 0}`` and ``beta = exp(alpha)``.  It is embedded here as a
:class:`~zvmc.model.MarkovRewardModel` with ``d + 3`` states:

* ``0``: return state (absorbing)
* ``1..d``: the other labels (transient)
* ``d + 1``: cemetery (absorbing)
* ``d + 2``: a transient copy of state 0 that starts regeneration cycles

The tilted kernel does not depend on ``alpha`` (the constant discount cancels)
and is computed from the alpha-free formula, so one batch of regeneration
cycles serves the whole root search for ``alpha``.
"""

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _rng
from .errors import CensoredError, EstimationError, ModelError, NumericalError
from .exact import spectral_radius
from .model import MarkovRewardModel
from .sampling import estimate_mu, simulate_batch
from .tilting import TiltedModel

REGEN_TAG = 4
EIGEN_TAG = 5


def _closure(adjacency):
    reach = adjacency | np.eye(adjacency.shape[0], dtype=bool)
    while True:
        grown = reach | ((reach.astype(np.int64) @ reach.astype(np.int64)) > 0)
        if (grown == reach).all():
            return reach
        reach = grown


@dataclass(frozen=True, eq=False)
class EigenModel:
    """Irreducible substochastic matrix with return state 0."""

    P: np.ndarray

    def __post_init__(self):
        P = np.array(self.P, dtype=float)
        P.setflags(write=False)
        object.__setattr__(self, "P", P)

    @property
    def d(self):
        return self.P.shape[0] - 1

    @property
    def P0(self):
        """``P`` without row and column 0."""
        return self.P[1:, 1:]

    def check(self):
        problems = validate_eigen_model(self)
        if problems:
            raise ModelError("invalid eigen model: " + "; ".join(problems))
        return self

    def alpha_limit(self, margin=1e-3):
        """``-log(rho(P0)) - margin``; ``mu(alpha)`` stays finite below it."""
        rho0 = spectral_radius(self.P0) if self.d > 0 else 0.0
        if rho0 <= 0:
            return math.inf
        return -math.log(rho0) - margin

    def framework(self, alpha=0.0):
        """Embedding as an absorbing reward model with discount ``exp(alpha)``."""
        d = self.d
        n = d + 3
        cem, start = d + 1, d + 2
        Pe = np.zeros((n, n))
        Pe[: d + 1, : d + 1] = self.P
        Pe[: d + 1, cem] = np.clip(1.0 - self.P.sum(axis=1), 0.0, None)
        Pe[start] = Pe[0]
        Pe[0] = 0.0
        Pe[0, 0] = 1.0
        Pe[cem, cem] = 1.0
        s = np.zeros((n, n))
        s[1: d + 1, 0] = 1.0
        s[start, 0] = 1.0
        beta = np.full((n, n), math.exp(alpha))
        return MarkovRewardModel(P=Pe, absorbing=(0, cem), s=s, beta=beta)

    def to_dict(self):
        return {"d": self.d, "P": self.P.tolist()}


def validate_eigen_model(model):
    P = model.P
    if P.ndim != 2 or P.shape[0] != P.shape[1] or P.shape[0] < 1:
        return [f"P must be a nonempty square matrix, got shape {P.shape}"]
    problems = []
    if not np.isfinite(P).all():
        return ["P has non-finite entries"]
    for i, j in zip(*np.nonzero(P < 0)):
        problems.append(f"P[{i}][{j}]={P[i, j]!r} negative")
    sums = P.sum(axis=1)
    for i in np.flatnonzero(sums > 1 + 1e-12):
        problems.append(f"P[{i}] row sum {sums[i]!r} exceeds 1")
    if not _closure(P > 0).all():
        problems.append("P is reducible")
    elif model.d > 0:
        rho, rho0 = spectral_radius(P), spectral_radius(model.P0)
        if not rho0 < rho:
            problems.append(f"spectral radius of P0 ({rho0:.6g}) not below that of P ({rho:.6g})")
    return problems


@dataclass(frozen=True)
class EigenOracle:
    lambda_pf: float
    alpha_star: float
    mu_star: np.ndarray
    residual: float
    iterations: int


def eigen_oracle(model, tol=1e-12, max_iter=100_000):
    """PF eigenvalue and eigenvector by power iteration on the lazy matrix ``(P + I) / 2``.

    The eigenvector is scaled so that its component 0 equals 1.  Iteration
    stops once ``||exp(alpha*) P mu* - mu*||_inf <= tol``.
    """
    problems = validate_eigen_model(model)
    if problems:
        raise ModelError("; ".join(problems))
    P = model.P
    n = P.shape[0]
    lazy = 0.5 * (P + np.eye(n))
    v = np.ones(n)
    for it in range(1, max_iter + 1):
        Pv = P @ v
        lam = Pv.sum() / v.sum()
        residual = float(np.abs(Pv / lam - v).max())
        if residual <= tol:
            return EigenOracle(lambda_pf=float(lam), alpha_star=-math.log(lam), mu_star=v,
                               residual=residual, iterations=it)
        w = lazy @ v
        v = w / w[0]
    raise NumericalError(f"power iteration did not converge in {max_iter} iterations")


def build_eigen_tilted(model, nu, alpha=0.0):
    """Tilted kernel for the eigen problem from the alpha-free formula.

    ``nu`` has one positive entry per state ``1..d``.  ``Q`` and ``l`` are
    bit-identical for every ``alpha``; only the attached base model (and the
    normaliser ``g``) carry the discount.
    """
    d = model.d
    nu = np.array(nu, dtype=float).reshape(d)
    if not np.all(nu > 0):
        raise ModelError("nu must be strictly positive on states 1..d")
    base = model.framework(alpha)
    n = d + 3
    cem, start = d + 1, d + 2
    # target weights delta_{y,0} + nu(y); cemetery and start copy carry none
    target = np.zeros(n)
    target[0] = 1.0
    target[1: d + 1] = nu
    rows = np.r_[1: d + 1, start]
    Prow = base.P[rows]
    norm = Prow @ target
    Q = base.P.copy()
    Q[rows] = Prow * target[None, :] / norm[:, None]
    l = np.ones((n, n))
    with np.errstate(divide="ignore"):
        l[rows] = norm[:, None] / target[None, :]
    nu_full = np.r_[nu, 1.0]
    g = math.exp(alpha) * norm
    for arr in (nu_full, g, Q, l):
        arr.setflags(write=False)
    return TiltedModel(base=base, nu=nu_full, g=g, Q=Q, l=l)


@dataclass(frozen=True)
class RegenerationSample:
    """Return times and log likelihood ratios of R regeneration cycles from state 0."""

    tau: np.ndarray
    log_L: np.ndarray

    def mu0_hat(self, alpha):
        """``(1/R) sum_i exp(alpha tau_i + log L_i)``."""
        return float(np.mean(np.exp(alpha * self.tau + self.log_L)))


def simulate_regeneration(tilted, R, seed, max_steps=100_000, stream=(), threads=1):
    """Simulate ``R`` cycles from the start copy of state 0 until the first entry to K.

    Every cycle must end at state 0: the cemetery has zero tilted mass, so an
    absorption there indicates an inconsistent kernel.  Censored cycles raise
    :class:`CensoredError`.
    """
    base = tilted.base
    d = base.n_states - 3
    start, cem = d + 2, d + 1
    key = _rng.stream_key(seed, REGEN_TAG, *stream)
    b = simulate_batch(tilted, start, np.arange(R), key, max_steps, threads=threads)
    n_cens = int(b.censored.sum())
    if n_cens:
        raise CensoredError(f"{n_cens} of {R} regeneration cycles censored at {max_steps}", n_cens)
    if np.any(b.final_state == cem):
        raise NumericalError("regeneration cycle absorbed in the cemetery under Q_nu")
    return RegenerationSample(tau=b.tau.astype(float), log_L=b.log_L)


def _log_mu0(tau, log_L, alpha):
    z = alpha * tau + log_L
    top = z.max()
    return top + math.log(np.mean(np.exp(z - top)))


def alpha_root(sample):
    """Unique root of ``mu0_hat(alpha) = 1`` by bracket doubling and bisection."""
    tau = np.asarray(sample.tau, dtype=float)
    log_L = np.asarray(sample.log_L, dtype=float)
    if tau.size == 0:
        raise EstimationError("empty regeneration sample")
    if np.any(tau < 1):
        raise EstimationError("return times must be >= 1")
    f = lambda a: _log_mu0(tau, log_L, a)  # noqa: E731
    lo, hi = -1.0, 1.0
    while f(lo) > 0:
        lo *= 2.0
    while f(hi) < 0:
        hi *= 2.0
    for _ in range(2000):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        val = f(mid)
        if val == 0.0:
            return mid
        if val < 0:
            lo = mid
        else:
            hi = mid
    return lo if abs(f(lo)) <= abs(f(hi)) else hi


def solve_alpha(sample, alpha_max=math.inf):
    """Root of ``mu0_hat(alpha) = 1`` clamped to ``[0, alpha_max]``."""
    return float(min(max(alpha_root(sample), 0.0), alpha_max))


@dataclass
class EigenTrace:
    alpha_hat: list = field(default_factory=list)
    nu: list = field(default_factory=list)
    alpha_err: list = field(default_factory=list)
    nu_sup_err: list = field(default_factory=list)
    bias: list = field(default_factory=list)
    censored: list = field(default_factory=list)
    oracle: EigenOracle = None
    config: dict = field(default_factory=dict)


def run_eigen_adaptive(model, init_nu=None, R=10_000, n_iters=10, seed=0, alpha_max=None,
                       clamp=None, max_steps=100_000, threads=1, oracle=None):
    """Alternate the alpha root step and the value-function step for ``n_iters`` iterations.

    Step 1 simulates regeneration cycles from state 0 under ``Q_nu`` and sets
    ``alpha_hat`` to the root of ``mu0_hat = 1``.  Step 2 estimates
    ``mu_x(alpha_hat)`` for ``x = 1..d`` with ``R`` replications each and
    clamps the means into ``clamp`` to form the next ``nu``.  ``bias`` records
    the mean signed error of those estimates against ``mu*``.
    """
    model.check()
    if oracle is None:
        oracle = eigen_oracle(model)
    d = model.d
    mu_star = oracle.mu_star[1:]
    if alpha_max is None:
        alpha_max = model.alpha_limit()
    nu = np.ones(d) if init_nu is None else np.array(init_nu, dtype=float).reshape(d)
    if clamp is None:
        clamp = (0.5 * mu_star.min(), 2.0 * mu_star.max()) if d else (1.0, 1.0)
    trace = EigenTrace(oracle=oracle, config={
        "R": R, "n_iters": n_iters, "seed": seed, "alpha_max": alpha_max,
        "clamp": [float(c) for c in clamp], "max_steps": max_steps})
    for n in range(n_iters):
        tilted = build_eigen_tilted(model, nu)
        sample = simulate_regeneration(tilted, R, seed, max_steps, stream=(n,), threads=threads)
        alpha_hat = solve_alpha(sample, alpha_max)
        censored = 0
        if d:
            tilted = build_eigen_tilted(model, nu, alpha_hat)
            ests = [estimate_mu(tilted, x, R, seed, max_steps=max_steps, stream=(EIGEN_TAG, n),
                                threads=threads)
                    for x in range(1, d + 1)]
            ybar = np.array([e.mean for e in ests])
            censored = sum(e.censored for e in ests)
            trace.bias.append(float(np.mean(ybar - mu_star)))
            nu = np.clip(ybar, *clamp)
        else:
            trace.bias.append(0.0)
        trace.alpha_hat.append(alpha_hat)
        trace.nu.append(nu.copy())
        trace.alpha_err.append(abs(alpha_hat - oracle.alpha_star))
        trace.nu_sup_err.append(float(np.abs(nu - mu_star).max()) if d else 0.0)
        trace.censored.append(censored)
    return trace


def load_eigen_model(path):
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ModelError(f"{path}: cannot read eigen model file ({exc.strerror})") from exc
    except json.JSONDecodeError as exc:
        raise ModelError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from exc
    return eigen_model_from_dict(doc)


def eigen_model_from_dict(doc):
    if not isinstance(doc, dict) or "P" not in doc or "d" not in doc:
        raise ModelError("$: eigen model needs fields d and P")
    d = doc["d"]
    if not isinstance(d, int) or isinstance(d, bool) or d < 0:
        raise ModelError("$.d: must be a nonnegative integer")
    rows = doc["P"]
    if not isinstance(rows, list) or len(rows) != d + 1:
        raise ModelError(f"$.P: expected {d + 1} rows")
    for i, row in enumerate(rows):
        if not isinstance(row, list) or len(row) != d + 1:
            raise ModelError(f"$.P[{i}]: expected {d + 1} reals")
        for j, v in enumerate(row):
            if not isinstance(v, (int, float)) or isinstance(v, bool):
                raise ModelError(f"$.P[{i}][{j}]: not a number")
    model = EigenModel(P=np.array(rows, dtype=float))
    problems = validate_eigen_model(model)
    if problems:
        raise ModelError("$.P: " + "; ".join(problems))
    return model


def write_eigen_trace_csv(trace, path):
    """Trace CSV: iter, alpha_hat, alpha_err, nu_sup_err, censored."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iter", "alpha_hat", "alpha_err", "nu_sup_err", "censored"])
        for n in range(len(trace.alpha_hat)):
            w.writerow([n + 1, repr(trace.alpha_hat[n]), repr(trace.alpha_err[n]),
                        repr(trace.nu_sup_err[n]), trace.censored[n]])
