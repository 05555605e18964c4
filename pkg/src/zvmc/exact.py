"""Exact ground truth by linear algebra and path enumeration.

The value function solves ``u = h + P_beta u`` on the transient states, with
``h(x) = sum_y beta(x,y) s(x,y) P(x,y)``.

Moments of the filtered estimator under a tilted kernel follow from
conditioning on the first transition.  Write ``a(x,y) = l_nu(x,y) beta(x,y)``
for the per-step weight.  Starting from ``x`` and stepping to ``y``, the
estimator factorises as

    Y_x = a(x,y) * (s(x,y) + 1{y in A} Y'_y)

where ``Y'_y`` is an independent copy started at ``y`` (the running products
B and L restart multiplicatively).  Taking expectations under Q_nu gives two
linear systems over A::

    m(x) = sum_y Q(x,y) a(x,y)   (s(x,y) + 1{y in A} m(y))
    w(x) = sum_y Q(x,y) a(x,y)^2 (s(x,y)^2 + 1{y in A} (2 s(x,y) m(y) + w(y)))

Since ``Q a = P beta`` wherever ``Q > 0``, the first system is the same as
the one for ``mu``; that is the unbiasedness identity.  The second one has
iteration matrix ``Q a^2`` restricted to A, whose spectral radius decides
whether the variance is finite.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DivergenceError, ModelError, NumericalError, ZeroValueWarning
from .tilting import build_tilted

DIVERGENCE_THRESHOLD = 1.0 - 1e-9


def spectral_radius(M, squarings=8):
    """Spectral radius estimate of a nonnegative matrix.

    Power iteration on the lazy matrix ``(M + I) / 2``, which has the same
    Perron vector but no periodic eigenvalues on the spectral circle.  The
    ``2**squarings`` power steps are taken by repeated squaring (rescaled to
    avoid underflow), and the estimate is the Rayleigh quotient of ``M`` at
    the resulting vector.
    """
    M = np.asarray(M, dtype=float)
    n = M.shape[0]
    if n == 0:
        return 0.0
    W = 0.5 * (M + np.eye(n))
    for _ in range(squarings):
        W = W @ W
        W /= W.max()
    v = W.sum(axis=1)
    return float(v @ (M @ v) / (v @ v))


def _system(model):
    A = model.transient
    Pb = model.discounted()
    h = (Pb[A] * model.s[A]).sum(axis=1)
    return Pb[np.ix_(A, A)], h


def solve_mu(model):
    """Exact value function over the transient states.

    Raises
    ------
    DivergenceError
        If the discounted transient kernel has spectral radius >= 1 - 1e-9.
    NumericalError
        If the linear system is singular.
    """
    M, h = _system(model)
    rho = spectral_radius(M)
    if rho >= DIVERGENCE_THRESHOLD:
        raise DivergenceError(
            f"mu diverges: spectral radius of P_beta on A is {rho:.6g}"
        )
    try:
        u = np.linalg.solve(np.eye(M.shape[0]) - M, h)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"singular system for mu: {exc}") from exc
    if not np.isfinite(u).all() or np.any(u < -1e-12 * max(1.0, np.abs(u).max())):
        raise DivergenceError("mu diverges: linear solve produced negative or infinite values")
    u = np.maximum(u, 0.0)
    zero = model.transient[u <= 0]
    if zero.size:
        warnings.warn(
            f"states {zero.tolist()} have mu = 0; by convention they belong to K",
            ZeroValueWarning, stacklevel=2,
        )
    return u


def truncated_series_mu(model, N):
    """Partial sum ``sum_{n=0}^{N} P_beta^n h`` restricted to A."""
    if N < 0:
        raise ModelError("N must be >= 0")
    M, h = _system(model)
    term = h.copy()
    total = h.copy()
    for _ in range(N):
        term = M @ term
        total += term
    return total


@dataclass(frozen=True)
class Moments:
    mean: np.ndarray
    second_moment: np.ndarray

    @property
    def variance(self):
        return np.maximum(self.second_moment - self.mean ** 2, 0.0)


def _weights(tilted):
    model = tilted.base
    A = model.transient
    Q = tilted.Q[A]
    with np.errstate(invalid="ignore"):
        a = tilted.l[A] * model.beta[A]
    sampled = Q > 0
    Qa = np.where(sampled, Q * a, 0.0)
    Qa2 = np.where(sampled, Q * a * a, 0.0)
    return Qa, Qa2


def exact_moments(model, nu):
    """Mean and second moment of the filtered estimator under Q_nu, per transient start state.

    An infinite second moment (iteration matrix with spectral radius >= 1) is
    reported as ``inf`` entries together with a ``RuntimeWarning``.
    """
    tilted = build_tilted(model, nu)
    A = model.transient
    sA = model.s[A]
    Qa, Qa2 = _weights(tilted)
    I = np.eye(A.size)
    mean = np.linalg.solve(I - Qa[:, A], (Qa * sA).sum(axis=1))
    M2 = Qa2[:, A]
    rhs = (Qa2 * sA ** 2).sum(axis=1) + 2.0 * (M2 * sA[:, A]) @ mean
    # a positive solution of (I - M2) w = rhs with rhs > 0 certifies rho(M2) < 1
    second = None
    try:
        second = np.linalg.solve(I - M2, rhs)
    except np.linalg.LinAlgError:
        pass
    certified = second is not None and np.all(rhs > 0) and np.all(second > 0)
    if not certified and (second is None or spectral_radius(M2) >= DIVERGENCE_THRESHOLD):
        warnings.warn("infinite variance under this nu", RuntimeWarning, stacklevel=2)
        return Moments(mean=mean, second_moment=np.full(A.size, np.inf))
    return Moments(mean=mean, second_moment=second)


@dataclass(frozen=True)
class EnumeratedMoments:
    mean: np.ndarray
    second_moment: np.ndarray
    tail_mass: np.ndarray


def brute_force_moments(model, nu, horizon, budget=10 ** 7):
    """Moments of the filtered estimator by enumerating every Q_nu-path of length <= ``horizon``.

    Only absorbed paths contribute to ``mean`` and ``second_moment``; the
    probability of the paths still in A after ``horizon`` steps is returned as
    ``tail_mass``.  Raises ``ModelError`` when more than ``budget`` path
    prefixes would have to be enumerated.
    """
    tilted = build_tilted(model, nu)
    A = model.transient
    Q = tilted.Q
    with np.errstate(invalid="ignore"):
        a = tilted.l * model.beta
    absorbing = model.is_absorbing
    n_A = A.size
    mean = np.zeros(n_A)
    second = np.zeros(n_A)
    tail = np.zeros(n_A)
    enumerated = 0
    for i, x in enumerate(A):
        state = np.array([x])
        prob = np.array([1.0])
        weight = np.array([1.0])
        partial = np.array([0.0])
        for _ in range(horizon):
            if state.size == 0:
                break
            rows, nxt = np.nonzero(Q[state] > 0)
            enumerated += rows.size
            if enumerated > budget:
                raise ModelError(f"enumeration budget of {budget} path prefixes exceeded")
            cur = state[rows]
            prob = prob[rows] * Q[cur, nxt]
            weight = weight[rows] * a[cur, nxt]
            partial = partial[rows] + model.s[cur, nxt] * weight
            done = absorbing[nxt]
            mean[i] += prob[done] @ partial[done]
            second[i] += prob[done] @ partial[done] ** 2
            keep = ~done
            state, prob, weight, partial = nxt[keep], prob[keep], weight[keep], partial[keep]
        tail[i] = prob.sum()
    return EnumeratedMoments(mean=mean, second_moment=second, tail_mass=tail)


def exact_survival(tilted, x0, k_max):
    """Exact ``Q_nu(tau > k)`` for ``k = 0..k_max`` from transient state ``x0``."""
    model = tilted.base
    A = model.transient
    Q_AA = tilted.Q[np.ix_(A, A)]
    v = np.zeros(A.size)
    v[model.position(x0)] = 1.0
    out = np.empty(k_max + 1)
    for k in range(k_max + 1):
        out[k] = v.sum()
        v = v @ Q_AA
    return out
