"""Simulation of the filtered importance-sampling estimator under Q_nu.

Paths are advanced in lockstep over a batch of replications.  Replication
``i`` draws its step-``t`` uniform from a counter-based stream addressed by
``(key, i, t)``, so any partition of the batch (threads, chunks, a single
path) reproduces the same trajectories bit for bit.  Running products of
likelihood ratios and discounts are accumulated in log space; each reward
term ``s * B_i * L_i`` is exponentiated as it is added.
"""

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import _rng
from .errors import ModelError
from .exact import solve_mu
from .model import compute_constants, default_max_steps

SIMULATE_TAG = 0
CHUNK = 1 << 16


@dataclass(frozen=True)
class Batch:
    """Per-replication outcome of a batch simulation.

    ``tau`` is the absorption step, or ``-1`` when the path was censored at
    ``max_steps``.  With ``record=True`` the visited states and running
    ``log L`` are kept as ``(R, T + 1)`` arrays padded with ``-1`` / ``nan``.
    """

    reps: np.ndarray
    tau: np.ndarray
    y: np.ndarray
    log_L: np.ndarray
    log_B: np.ndarray
    final_state: np.ndarray
    terminal_reward: np.ndarray
    states: np.ndarray = None
    log_L_path: np.ndarray = None

    @property
    def censored(self):
        return self.tau < 0


def _simulate_chunk(tilted, cum, x0, key, reps, max_steps, record):
    model = tilted.base
    log_l = tilted.log_l
    log_beta = np.log(model.beta)
    s = model.s
    absorbing = model.is_absorbing

    R = reps.size
    streams = _rng.rep_states(key, reps)
    state = np.full(R, x0, dtype=np.int64)
    log_L = np.zeros(R)
    log_B = np.zeros(R)
    y = np.zeros(R)
    tau = np.full(R, -1, dtype=np.int64)
    terminal = np.zeros(R)
    alive = np.arange(R)
    hist_states = [state.copy()] if record else None
    hist_logL = [log_L.copy()] if record else None

    for step in range(max_steps):
        if alive.size == 0:
            break
        cur = state[alive]
        u = _rng.uniforms(streams[alive], step)
        nxt = (u[:, None] < cum[cur]).argmax(axis=1)
        log_L[alive] += log_l[cur, nxt]
        log_B[alive] += log_beta[cur, nxt]
        reward = s[cur, nxt]
        hit = reward > 0
        idx = alive[hit]
        y[idx] += reward[hit] * np.exp(log_B[idx] + log_L[idx])
        state[alive] = nxt
        done = absorbing[nxt]
        tau[alive[done]] = step + 1
        terminal[alive[done]] = reward[done]
        alive = alive[~done]
        if record:
            hist_states.append(state.copy())
            hist_logL.append(log_L.copy())

    states = log_L_path = None
    if record:
        states = np.stack(hist_states, axis=1)
        log_L_path = np.stack(hist_logL, axis=1)
        steps = np.arange(states.shape[1])[None, :]
        last = np.where(tau < 0, max_steps, tau)[:, None]
        states = np.where(steps <= last, states, -1)
        log_L_path = np.where(steps <= last, log_L_path, np.nan)
    return Batch(reps=reps, tau=tau, y=y, log_L=log_L, log_B=log_B, final_state=state,
                 terminal_reward=terminal, states=states, log_L_path=log_L_path)


def _concat(parts):
    fields = {}
    for name in Batch.__dataclass_fields__:
        vals = [getattr(p, name) for p in parts]
        if vals[0] is None:
            fields[name] = None
        elif name in ("states", "log_L_path"):
            width = max(v.shape[1] for v in vals)
            fill = -1 if name == "states" else np.nan
            padded = [np.pad(v, ((0, 0), (0, width - v.shape[1])), constant_values=fill)
                      for v in vals]
            fields[name] = np.concatenate(padded)
        else:
            fields[name] = np.concatenate(vals)
    return Batch(**fields)


def simulate_batch(tilted, x0, reps, key, max_steps, record=False, threads=1):
    """Simulate the replications with indices ``reps`` from ``x0`` under ``tilted``.

    Results are identical for any ``threads`` value.
    """
    model = tilted.base
    if model.is_absorbing[x0]:
        raise ModelError(f"start state {x0} is absorbing")
    if max_steps < 1:
        raise ModelError("max_steps must be >= 1")
    reps = np.asarray(reps, dtype=np.int64)
    cum = tilted.cumulative()
    n_chunks = max(1, min(int(threads), math.ceil(reps.size / 1024)), math.ceil(reps.size / CHUNK))
    chunks = np.array_split(reps, n_chunks)

    def work(chunk):
        return _simulate_chunk(tilted, cum, x0, key, chunk, max_steps, record)

    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=int(threads)) as pool:
            parts = list(pool.map(work, chunks))
    else:
        parts = [work(c) for c in chunks]
    return parts[0] if len(parts) == 1 else _concat(parts)


def resolve_max_steps(tilted, max_steps=None):
    """``max_steps`` or, when None, ``ceil(50 / pi_G)`` for the box spanned by nu and mu."""
    if max_steps is not None:
        return int(max_steps)
    model = tilted.base
    mu = solve_mu(model)
    lo = min(float(tilted.nu.min()), float(mu.min()))
    hi = max(float(tilted.nu.max()), float(mu.max()))
    return default_max_steps(compute_constants(model, mu, lo, hi))


@dataclass(frozen=True)
class Trajectory:
    """A single simulated path.

    ``log_L[i]`` is the log likelihood ratio after ``i`` steps, so
    ``log_L[0] == 0``.  ``tau`` is None for a censored path.
    """

    states: np.ndarray
    tau: int
    log_L: np.ndarray
    y_value: float
    terminal_reward: float

    @property
    def censored(self):
        return self.tau is None


def simulate_one(tilted, x0, seed, rep=0, max_steps=None, stream=()):
    """Replication ``rep`` of the stream ``(seed, *stream, x0)``.

    Identical to the corresponding entry of :func:`estimate_mu` with the same
    arguments.
    """
    max_steps = resolve_max_steps(tilted, max_steps)
    key = _rng.stream_key(seed, SIMULATE_TAG, *stream, x0)
    b = simulate_batch(tilted, x0, [rep], key, max_steps, record=True)
    n = max_steps if b.tau[0] < 0 else int(b.tau[0])
    return Trajectory(
        states=b.states[0, : n + 1].copy(),
        tau=None if b.tau[0] < 0 else int(b.tau[0]),
        log_L=b.log_L_path[0, : n + 1].copy(),
        y_value=float(b.y[0]),
        terminal_reward=float(b.terminal_reward[0]),
    )


@dataclass(frozen=True)
class Estimate:
    """Sample mean and variance of R replications of the filtered estimator."""

    x0: int
    mean: float
    variance: float
    censored: int
    values: np.ndarray
    tau: np.ndarray
    log_L: np.ndarray

    @property
    def R(self):
        return self.values.size

    @property
    def insufficient(self):
        """True when R = 1 and the variance is reported as 0."""
        return self.values.size < 2


def estimate_mu(tilted, x0, R, seed, max_steps=None, stream=(), threads=1):
    """Estimate ``mu(x0)`` from ``R`` independent replications under ``tilted``.

    Replication ``i`` uses the stream addressed by ``(seed, *stream, x0, i)``;
    ``stream`` lets callers (the adaptive loop) carve out disjoint families of
    streams from one seed.
    """
    if R < 1:
        raise ModelError("R must be >= 1")
    max_steps = resolve_max_steps(tilted, max_steps)
    key = _rng.stream_key(seed, SIMULATE_TAG, *stream, x0)
    b = simulate_batch(tilted, x0, np.arange(R), key, max_steps, threads=threads)
    mean = float(np.mean(b.y))
    var = float(np.var(b.y, ddof=1)) if R > 1 else 0.0
    return Estimate(x0=int(x0), mean=mean, variance=var, censored=int(b.censored.sum()),
                    values=b.y, tau=b.tau, log_L=b.log_L)


def tail_survival(tilted, x0, R, seed, k_max, threads=1):
    """Empirical ``Q_nu(tau > k)`` for ``k = 0..k_max`` from ``R`` paths."""
    if R < 100:
        raise ModelError("tail_survival needs R >= 100")
    key = _rng.stream_key(seed, SIMULATE_TAG, x0)
    b = simulate_batch(tilted, x0, np.arange(R), key, k_max + 1, threads=threads)
    tau = np.where(b.tau < 0, k_max + 2, b.tau)
    k = np.arange(k_max + 1)
    return (tau[None, :] > k[:, None]).mean(axis=1)


def binomial_slack(p, R, sigmas=4.0):
    """``sigmas`` binomial standard deviations of an empirical frequency, floored at one count."""
    p = np.clip(np.asarray(p, dtype=float), 0.0, 1.0)
    return np.maximum(sigmas * np.sqrt(p * (1 - p) / R), 1.0 / R)


def write_replications_csv(estimates, path):
    """Dump per-replication results: rep_index, x0, tau, y_value, log_L_tau, censored."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["rep_index", "x0", "tau", "y_value", "log_L_tau", "censored"])
        for est in estimates:
            for i in range(est.R):
                cens = int(est.tau[i] < 0)
                w.writerow([i, est.x0, "" if cens else int(est.tau[i]),
                            repr(float(est.values[i])), repr(float(est.log_L[i])), cens])
