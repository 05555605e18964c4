"""The adaptive importance-sampling iteration and its convergence diagnostics.

One iteration simulates ``R`` replications of the filtered estimator under
the current tilted kernel from every design state, fits the value-function
model to the sample means, and uses the fitted (clamped) function as the
next tilting function.
"""

import csv
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import EstimationError, ModelError
from .exact import exact_moments, solve_mu
from .model import compute_constants, default_max_steps
from .sampling import estimate_mu
from .tilting import build_tilted

ADAPT_TAG = 1
CONTRACTION_TAG = 2
TWO_STEP_TAG = 3
ERROR_FLOOR = 1e-12
RATE_FLOOR = 1e-14


@dataclass(frozen=True, eq=False)
class BasisModel:
    """Linear model ``nu(x) = b0(x) + B(x) @ alpha`` fitted on design states.

    Parameters
    ----------
    design : sequence of int
        Design states (a subset of the transient states).
    b0 : (|A|,) ndarray
        Offset over the transient states.
    B : (|A|, p) ndarray
        Basis functions over the transient states, one per column.
    positions : sequence of int
        Rows of ``b0`` / ``B`` belonging to the design states.
    tabular : bool
        Marks the identity model (every transient state is a design state).
    """

    design: np.ndarray
    b0: np.ndarray
    B: np.ndarray
    positions: np.ndarray
    tabular: bool = False

    @classmethod
    def for_model(cls, model, design, b0, B):
        design = np.asarray(design, dtype=np.int64)
        positions = np.array([model.position(x) for x in design], dtype=np.int64)
        b0 = np.asarray(b0, dtype=float)
        B = np.asarray(B, dtype=float)
        if B.ndim == 1:
            B = B[:, None]
        n_A = model.n_transient
        if b0.shape != (n_A,) or B.shape[0] != n_A:
            raise ModelError(f"basis must have {n_A} rows (one per transient state)")
        p = B.shape[1]
        if p > design.size:
            raise EstimationError(f"{p} basis functions but only {design.size} design states")
        if np.linalg.matrix_rank(B[positions]) < p:
            raise EstimationError("rank-deficient design: basis columns dependent on D")
        return cls(design=design, b0=b0, B=B, positions=positions)

    @classmethod
    def tabular_for(cls, model):
        n_A = model.n_transient
        return cls(design=model.transient.copy(), b0=np.zeros(n_A), B=np.eye(n_A),
                   positions=np.arange(n_A), tabular=True)

    @property
    def p(self):
        return self.B.shape[1]

    def operator(self):
        """Matrix ``F`` with ``nu = b0 + F @ (ybar - b0[D])`` before clamping."""
        if self.tabular:
            return np.eye(self.b0.size)
        X = self.B[self.positions]
        return self.B @ np.linalg.pinv(X)


def fit_values(ybar, basis, clamp):
    """Least-squares fit of the basis model to design-state means, clamped pointwise.

    >>> fit_values([0.0, 5.0], BasisModel(np.array([1, 2]), np.zeros(2), np.eye(2),
    ...            np.arange(2), tabular=True), (0.5, 4.0))
    array([0.5, 4. ])
    """
    lo, hi = clamp
    if not 0 < lo <= hi:
        raise ModelError(f"clamp bounds must satisfy 0 < lo <= hi, got {clamp}")
    ybar = np.asarray(ybar, dtype=float)
    if not np.isfinite(ybar).all():
        raise EstimationError("non-finite sample means")
    if basis.tabular:
        return np.clip(ybar, lo, hi)
    X = basis.B[basis.positions]
    if np.linalg.matrix_rank(X) < basis.p:
        raise EstimationError("rank-deficient design: basis columns dependent on D")
    alpha, *_ = np.linalg.lstsq(X, ybar - basis.b0[basis.positions], rcond=None)
    return np.clip(basis.b0 + basis.B @ alpha, lo, hi)


@dataclass
class AdaptiveTrace:
    """Iterates of one adaptive run and their errors against the exact value function.

    ``sup_errors[n]`` belongs to ``iterates[n]``; ``sample_vars``,
    ``censored``, ``flagged`` and ``wall_ms`` have one entry per update, so
    entry ``n`` describes the step producing ``iterates[n + 1]``.
    """

    iterates: list
    sup_errors: list
    sample_vars: list = field(default_factory=list)
    censored: list = field(default_factory=list)
    flagged: list = field(default_factory=list)
    wall_ms: list = field(default_factory=list)
    config: dict = field(default_factory=dict)
    theta_hat: float = None

    @property
    def final_error(self):
        return self.sup_errors[-1]


def default_clamp(mu):
    return 0.5 * float(np.min(mu)), 2.0 * float(np.max(mu))


def _box_max_steps(model, mu, lo, hi):
    lo = min(lo, float(mu.min()))
    hi = max(hi, float(mu.max()))
    return default_max_steps(compute_constants(model, mu, lo, hi))


def _update(model, nu, basis, R, seed, stream, clamp, max_steps, threads):
    tilted = build_tilted(model, nu)
    ests = [estimate_mu(tilted, int(x), R, seed, max_steps=max_steps, stream=stream,
                        threads=threads)
            for x in basis.design]
    ybar = np.array([e.mean for e in ests])
    censored = sum(e.censored for e in ests)
    all_censored = censored == R * len(ests)
    new = nu if all_censored else fit_values(ybar, basis, clamp)
    max_var = max(e.variance / R for e in ests)
    return new, max_var, censored, all_censored


def run_adaptive(model, basis=None, init=None, R=1000, n_iters=20, seed=0, max_steps=None,
                 clamp=None, threads=1, mu=None):
    """Run the adaptive iteration from ``init``.

    Parameters
    ----------
    model : MarkovRewardModel
    basis : BasisModel, optional
        Defaults to the tabular model.
    init : (|A|,) array_like
        Strictly positive initial tilting function; defaults to all ones.
    R : int
        Replications per design state and iteration.
    n_iters : int
        Maximum number of updates; the run stops early once the sup error
        drops to 1e-12.
    seed : int
        Iteration ``n`` draws from streams ``(seed, n, x, rep)``.
    max_steps : int, optional
        Simulation cap; defaults to ``ceil(50 / pi_G)`` for the clamp box.
    clamp : (float, float), optional
        Pointwise bounds on iterates; defaults to ``(mu_min / 2, 2 mu_max)``.
    threads : int
        Worker cap; does not change results.
    mu : ndarray, optional
        Exact value function, computed if omitted.

    Returns
    -------
    AdaptiveTrace
    """
    if R < 1 or n_iters < 0:
        raise ModelError("R must be >= 1 and n_iters >= 0")
    if mu is None:
        mu = solve_mu(model)
    basis = basis or BasisModel.tabular_for(model)
    nu = np.ones(model.n_transient) if init is None else np.array(init, dtype=float)
    if not np.all(nu > 0):
        raise ModelError("init must be strictly positive")
    clamp = tuple(clamp) if clamp is not None else default_clamp(mu)
    if max_steps is None:
        max_steps = _box_max_steps(model, mu, min(clamp[0], nu.min()), max(clamp[1], nu.max()))

    trace = AdaptiveTrace(
        iterates=[nu], sup_errors=[float(np.abs(nu - mu).max())],
        config={"R": R, "n_iters": n_iters, "seed": seed, "clamp": list(clamp),
                "max_steps": max_steps, "mode": "tabular" if basis.tabular else "basis"},
    )
    for n in range(n_iters):
        if trace.sup_errors[-1] <= ERROR_FLOOR:
            break
        t0 = time.perf_counter()
        nu, max_var, censored, flagged = _update(model, nu, basis, R, seed, (ADAPT_TAG, n),
                                                 clamp, max_steps, threads)
        trace.iterates.append(nu)
        trace.sup_errors.append(float(np.abs(nu - mu).max()))
        trace.sample_vars.append(max_var)
        trace.censored.append(censored)
        trace.flagged.append(flagged)
        trace.wall_ms.append(1e3 * (time.perf_counter() - t0))
    return trace


def estimate_rate(errors, burn_in=0, floor=RATE_FLOOR):
    """Fitted geometric rate ``theta`` with ``error_n ~ C * theta**-n``.

    Ordinary least squares of ``log(error)`` on the iteration index over the
    post-burn-in window; the window ends before the first error at or below
    ``floor``.  Accepts an :class:`AdaptiveTrace` or a sequence of errors.
    """
    if isinstance(errors, AdaptiveTrace):
        errors = errors.sup_errors
    errors = np.asarray(errors, dtype=float)[burn_in:]
    below = np.flatnonzero(errors <= floor)
    if below.size:
        errors = errors[: below[0]]
    if errors.size < 4:
        raise EstimationError(f"need >= 4 errors above {floor} after burn-in, got {errors.size}")
    n = np.arange(errors.size, dtype=float)
    slope = np.polyfit(n, np.log(errors), 1)[0]
    return float(np.exp(-slope))


@dataclass(frozen=True)
class Contraction:
    """Measured one-step contraction ``E||mu1 - mu||^2 / ||nu - mu||^2`` and its variance bound."""

    ratio: float
    bound: float
    distance: float
    squared_errors: np.ndarray


def contraction_diagnostic(model, nu, R, trials, seed, basis=None, clamp=None, max_steps=None,
                           threads=1, mu=None):
    """Monte Carlo estimate of the one-step contraction factor at ``nu``.

    ``bound`` is ``||F||_inf^2 * d * max_x Var_nu(Y_x) / (R ||nu - mu||^2)``,
    with exact variances and ``F`` the linear fit operator; clamping onto a
    box containing ``mu`` can only shrink the error, so the measured ratio
    should not exceed it beyond Monte Carlo noise.
    """
    if mu is None:
        mu = solve_mu(model)
    basis = basis or BasisModel.tabular_for(model)
    nu = np.asarray(nu, dtype=float)
    clamp = tuple(clamp) if clamp is not None else default_clamp(mu)
    dist = float(np.abs(nu - mu).max())
    if dist == 0.0:
        return Contraction(ratio=0.0, bound=0.0, distance=0.0, squared_errors=np.zeros(trials))
    if max_steps is None:
        max_steps = _box_max_steps(model, mu, min(clamp[0], nu.min()), max(clamp[1], nu.max()))
    sq = np.empty(trials)
    for t in range(trials):
        new, *_ = _update(model, nu, basis, R, seed, (CONTRACTION_TAG, t), clamp, max_steps,
                          threads)
        sq[t] = np.abs(new - mu).max() ** 2
    var = exact_moments(model, nu).variance[basis.positions]
    F = np.abs(basis.operator()).sum(axis=1).max()
    bound = F ** 2 * basis.design.size * float(var.max()) / (R * dist ** 2)
    return Contraction(ratio=float(sq.mean() / dist ** 2), bound=float(bound), distance=dist,
                       squared_errors=sq)


def two_step_hit_frequency(model, nu, R, trials, eps, seed, basis=None, clamp=None,
                           max_steps=None, mu=None):
    """Fraction of independent two-update runs from ``nu`` ending within ``eps`` of ``mu``."""
    if mu is None:
        mu = solve_mu(model)
    basis = basis or BasisModel.tabular_for(model)
    nu = np.asarray(nu, dtype=float)
    clamp = tuple(clamp) if clamp is not None else default_clamp(mu)
    if max_steps is None:
        max_steps = _box_max_steps(model, mu, min(clamp[0], nu.min()), max(clamp[1], nu.max()))
    hits = 0
    for t in range(trials):
        cur = nu
        for step in range(2):
            cur, *_ = _update(model, cur, basis, R, seed, (TWO_STEP_TAG, t, step), clamp,
                              max_steps, 1)
        hits += np.abs(cur - mu).max() < eps
    return hits / trials


def write_trace_csv(trace, path):
    """Trace CSV: iter, sup_error, max_sample_var, censored_total.

    Wall times are kept out of the CSV so identical runs give identical bytes.
    """
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iter", "sup_error", "max_sample_var", "censored_total"])
        w.writerow([0, repr(trace.sup_errors[0]), "", 0])
        for n in range(len(trace.sample_vars)):
            w.writerow([n + 1, repr(trace.sup_errors[n + 1]), repr(trace.sample_vars[n]),
                        trace.censored[n]])
