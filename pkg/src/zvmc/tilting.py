"""Tilted transition kernels Q_nu and their likelihood ratios."""

from dataclasses import dataclass

import numpy as np

from .errors import AssumptionError, NumericalError


@dataclass(frozen=True, eq=False)
class TiltedModel:
    """Importance kernel built from a positive tilting function.

    Attributes
    ----------
    base : MarkovRewardModel
    nu : (|A|,) ndarray
        Tilting function over the transient states.
    g : (|A|,) ndarray
        Row normalisers ``g(x) = h(x) + (P_beta nu)(x)``.
    Q : (n, n) ndarray
        Tilted kernel; rows of absorbing states equal those of ``P``.
    l : (n, n) ndarray
        Likelihood ratio ``dP/dQ`` per transition.  Transitions with
        ``s(x, y) + nu(y) = 0`` carry ``+inf`` and are never sampled; rows of
        absorbing states are 1.
    """

    base: object
    nu: np.ndarray
    g: np.ndarray
    Q: np.ndarray
    l: np.ndarray

    @property
    def log_l(self):
        with np.errstate(divide="ignore"):
            return np.log(self.l)

    def cumulative(self):
        """Inverse-CDF table: row ``x`` holds cumulative Q with the last positive entry set past 1.

        Sampling picks the first ``y`` with ``u < cum[x, y]``; zero-mass
        transitions can never be selected under that rule.
        """
        cum = np.cumsum(self.Q, axis=1)
        for x in range(cum.shape[0]):
            last = np.flatnonzero(self.Q[x] > 0)[-1]
            cum[x, last:] = 2.0
        return cum


def build_tilted(model, nu):
    """Tilted kernel ``Q_nu(x, y) = [s(x,y) + nu(y)] beta(x,y) P(x,y) / g(x)`` for ``x`` in A."""
    nu = np.array(nu, dtype=float)
    if nu.shape != (model.n_transient,):
        raise AssumptionError(f"nu has shape {nu.shape}, expected ({model.n_transient},)")
    if not np.all(nu > 0) or not np.isfinite(nu).all():
        bad = model.transient[~(nu > 0)].tolist()
        raise AssumptionError(f"nu must be strictly positive on transient states (violated at {bad})")
    nu_full = model.extend(nu)
    A = model.transient
    weight = (model.s[A] + nu_full[None, :]) * model.beta[A] * model.P[A]
    g = weight.sum(axis=1)
    if not np.all(g > 0):
        raise NumericalError(f"non-positive normaliser g at states {A[g <= 0].tolist()}")

    Q = model.P.copy()
    Q[A] = weight / g[:, None]
    l = np.ones_like(Q)
    with np.errstate(divide="ignore"):
        l[A] = g[:, None] / ((model.s[A] + nu_full[None, :]) * model.beta[A])
    for arr in (nu, g, Q, l):
        arr.setflags(write=False)
    return TiltedModel(base=model, nu=nu, g=g, Q=Q, l=l)
