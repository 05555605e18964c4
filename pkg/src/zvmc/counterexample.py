"""The halving chain: a weakly continuous kernel that need not converge to its fixed point.

On ``[0, inf)`` the chain jumps to 1 with probability ``p(x)`` and otherwise
moves to ``x / 2``.  Started at ``x = 1`` it only visits dyadic points, so the
state is stored as the integer level ``j`` with ``x = 2**-j`` and level 0
meaning ``x = 1``.  Returns to 1 recur forever when ``sum_j p(2**-j)`` diverges
and stop after finitely many steps when ``sum_j p(2**-j) (1 + eps)**j`` is
finite for some ``eps > 0``.  Runs are finite, so "infinitely often" is
replaced by visit counts over a fixed horizon.
"""

import csv
import json
from dataclasses import dataclass

import numpy as np

from . import _rng
from .errors import ModelError

HALVING_TAG = 6
HORIZON_NOTE = (
    "finite-horizon visit counts stand in for 'infinitely often'; "
    "separation is judged at the configured number of steps"
)


@dataclass(frozen=True)
class HalvingChainSpec:
    """Jump probabilities by level.

    ``p`` maps an integer array of levels to probabilities in ``[0, 1]``.
    """

    p: object
    label: str = "custom"

    def probabilities(self, levels):
        prob = np.asarray(self.p(np.asarray(levels, dtype=np.int64)), dtype=float)
        if np.any((prob < 0) | (prob > 1)):
            raise ModelError(f"jump probabilities of spec {self.label!r} leave [0, 1]")
        return np.broadcast_to(prob, np.shape(levels))


def divergent_spec():
    """``p(2**-j) = 1 / (j + 2)``: harmonic tail, so returns to 1 recur."""
    return HalvingChainSpec(p=lambda j: 1.0 / (j + 2.0), label="divergent")


def summable_spec():
    """``p(2**-j) = 0.1 * 4**-j``: weighted sum finite for any eps < 3."""
    return HalvingChainSpec(p=lambda j: 0.1 * np.power(4.0, -j.astype(float)), label="summable")


def constant_spec(value):
    return HalvingChainSpec(p=lambda j: np.full(np.shape(j), float(value)),
                            label=f"constant({value})")


@dataclass(frozen=True)
class HalvingRun:
    """Outcome of one run.

    ``min_level`` is the level of the smallest state reached, i.e. the
    deepest level (``x_min = 2**-min_level``).
    """

    visits_to_one: int
    final_level: int
    visit_times: np.ndarray
    min_level: int


def _simulate_runs(spec, steps, key, runs, block=1024):
    runs = np.asarray(runs, dtype=np.int64)
    streams = _rng.rep_states(key, runs)
    level = np.zeros(runs.size, dtype=np.int64)
    deepest = np.zeros(runs.size, dtype=np.int64)
    visits = np.zeros(runs.size, dtype=np.int64)
    hit_runs, hit_times = [], []
    p = spec.p
    for t0 in range(0, steps, block):
        u = _rng.uniform_block(streams, t0, min(block, steps - t0))
        for k in range(u.shape[1]):
            prob = p(level)
            jump = u[:, k] < prob
            level += 1
            if jump.any():
                idx = np.flatnonzero(jump)
                deepest[idx] = np.maximum(deepest[idx], level[idx] - 1)
                level[idx] = 0
                visits[idx] += 1
                hit_runs.append(idx)
                hit_times.append(np.full(idx.size, t0 + k + 1))
        spec.probabilities(level)
    np.maximum(deepest, level, out=deepest)
    if hit_runs:
        hr, ht = np.concatenate(hit_runs), np.concatenate(hit_times)
    else:
        hr = ht = np.zeros(0, dtype=np.int64)
    order = np.argsort(hr, kind="stable")
    times = np.split(ht[order], np.cumsum(visits)[:-1])
    return [
        HalvingRun(visits_to_one=int(visits[i]), final_level=int(level[i]),
                   visit_times=times[i], min_level=int(deepest[i]))
        for i in range(runs.size)
    ]


def simulate_halving(spec, steps, seed, run=0):
    """Simulate ``steps`` transitions from ``x = 1``; identical to run ``run`` of a batch."""
    if steps < 1:
        raise ModelError("steps must be >= 1")
    key = _rng.stream_key(seed, HALVING_TAG)
    return _simulate_runs(spec, steps, key, [run])[0]


@dataclass(frozen=True)
class HalvingSummary:
    label: str
    steps: int
    n_runs: int
    runs: list

    @property
    def visits(self):
        return np.array([r.visits_to_one for r in self.runs])

    @property
    def final_levels(self):
        return np.array([r.final_level for r in self.runs])

    def fraction_at_least(self, k):
        return float(np.mean(self.visits >= k))

    def fraction_at_most(self, k):
        return float(np.mean(self.visits <= k))

    def to_dict(self):
        fl = self.final_levels
        return {
            "label": self.label,
            "steps": self.steps,
            "n_runs": self.n_runs,
            "mean_visits": float(self.visits.mean()),
            "fraction_visits_ge_5": self.fraction_at_least(5),
            "fraction_visits_le_3": self.fraction_at_most(3),
            "median_final_level": float(np.median(fl)),
            "final_level_quantiles": {q: float(np.quantile(fl, float(q)))
                                      for q in ("0.1", "0.25", "0.5", "0.75", "0.9")},
            "note": HORIZON_NOTE,
        }


def classify_experiment(spec, steps, n_runs, seed):
    """Run ``n_runs`` independent chains (run ``i`` uses stream ``(seed, i)``)."""
    if n_runs < 1 or steps < 1:
        raise ModelError("n_runs and steps must be >= 1")
    key = _rng.stream_key(seed, HALVING_TAG)
    runs = _simulate_runs(spec, steps, key, np.arange(n_runs))
    return HalvingSummary(label=spec.label, steps=steps, n_runs=n_runs, runs=runs)


def write_runs_csv(summary, path):
    """CSV: run_index, visits_to_one, min_level, final_level."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["run_index", "visits_to_one", "min_level", "final_level"])
        for i, r in enumerate(summary.runs):
            w.writerow([i, r.visits_to_one, r.min_level, r.final_level])


def write_summary_json(summary, path):
    with open(path, "w") as fh:
        json.dump(summary.to_dict(), fh, indent=2)
        fh.write("\n")
