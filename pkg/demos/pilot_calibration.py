"""Pilot runs that calibrate the finite-scale pass thresholds of the acceptance suite.

Each block repeats an experiment over 20 (or 100) seeds and prints the
statistic the acceptance test thresholds, so the margins can be read off
directly.  Output is saved to ``pilot_results.txt`` next to this script.

    python3 demos/pilot_calibration.py
"""

import time
from pathlib import Path

import numpy as np

from zvmc import (
    BasisModel, EigenModel, classify_experiment, divergent_spec, estimate_rate, run_adaptive,
    run_eigen_adaptive, solve_mu, summable_spec, two_state_model,
)
from zvmc.errors import EstimationError
from zvmc.model import random_model

SEEDS = range(20)


def five_state_case():
    """The 5-state model and 2-function basis used by the acceptance suite."""
    model = random_model(5, np.random.default_rng(20240601))
    mu = solve_mu(model)
    cols = np.column_stack([np.ones(mu.size), mu - mu.mean()])
    basis = BasisModel.for_model(model, model.transient[:3], np.zeros(mu.size), cols)
    return model, basis, mu


def adaptive_block(label, model, basis, R, lines):
    finals, thetas = [], []
    t0 = time.perf_counter()
    for seed in SEEDS:
        trace = run_adaptive(model, basis=basis, R=R, n_iters=20, seed=seed)
        finals.append(trace.final_error)
        try:
            thetas.append(estimate_rate(trace))
        except EstimationError:
            thetas.append(float("nan"))
    finals, thetas = np.array(finals), np.array(thetas)
    ok = (finals < 1e-2) & (thetas > 1)
    lines += [
        f"[{label}] R={R}, 20 iterations, init 1, 20 seeds ({time.perf_counter() - t0:.1f} s)",
        f"  final sup error: max {finals.max():.3e}, median {np.median(finals):.3e}",
        f"  theta_hat: min {np.nanmin(thetas):.3g}, median {np.nanmedian(thetas):.3g}",
        f"  seeds passing (error < 1e-2 and theta_hat > 1): {ok.sum()}/20",
    ]


def main():
    lines = []
    adaptive_block("two-state, tabular", two_state_model(), None, 1000, lines)
    model, basis, _ = five_state_case()
    adaptive_block("five-state, basis p=2", model, basis, 4000, lines)

    eig = EigenModel(P=np.array([[0.3, 0.4], [0.5, 0.2]]))
    errs = []
    t0 = time.perf_counter()
    for seed in SEEDS:
        trace = run_eigen_adaptive(eig, init_nu=[0.5], R=10_000, n_iters=10, seed=seed)
        errs.append(trace.alpha_err[-1])
    errs = np.array(errs)
    lines += [
        f"[eigen 2x2] R=1e4, 10 iterations, init 0.5, 20 seeds ({time.perf_counter() - t0:.1f} s)",
        f"  |alpha_hat - alpha*|: max {errs.max():.3e}, median {np.median(errs):.3e}",
        f"  seeds within 5e-3: {(errs <= 5e-3).sum()}/20",
    ]

    for spec in (divergent_spec(), summable_spec()):
        t0 = time.perf_counter()
        s = classify_experiment(spec, 100_000, 100, seed=0)
        v, fl = s.visits, s.final_levels
        lines += [
            f"[halving, {spec.label}] 1e5 steps, 100 runs ({time.perf_counter() - t0:.1f} s)",
            f"  visits: min {v.min()}, median {np.median(v):.0f}, max {v.max()}",
            f"  fraction >= 5 visits: {s.fraction_at_least(5):.2f}; "
            f"fraction <= 3 visits: {s.fraction_at_most(3):.2f}",
            f"  final level: min {fl.min()}, median {np.median(fl):.0f}",
        ]

    text = "\n".join(lines) + "\n"
    print(text, end="")
    (Path(__file__).parent / "pilot_results.txt").write_text(text)


if __name__ == "__main__":
    main()
