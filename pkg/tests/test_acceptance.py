"""Acceptance suite: ten end-to-end criteria at their stated tolerances.

Each test prints one ``PASS``/``FAIL`` line.  Run on its own with

    pytest tests/test_acceptance.py -v

or ``python3 tests/test_acceptance.py`` for just the summary lines.
Runtime limits use the best of several ``perf_counter`` timings for the
sub-millisecond checks and a single wall-clock measurement otherwise.
"""

import json
import math
import sys
import time
import warnings
from pathlib import Path

import numpy as np
import pytest

from zvmc import _rng
from zvmc.adaptive import BasisModel, estimate_rate, run_adaptive
from zvmc.cli import main as cli_main
from zvmc.counterexample import classify_experiment, divergent_spec, summable_spec
from zvmc.eigen import (
    EigenModel, build_eigen_tilted, eigen_oracle, run_eigen_adaptive, simulate_regeneration,
)
from zvmc.errors import EstimationError
from zvmc.exact import exact_moments, solve_mu, truncated_series_mu
from zvmc.model import compute_constants, random_model, save_model, two_state_model
from zvmc.sampling import SIMULATE_TAG, binomial_slack, estimate_mu, simulate_batch, tail_survival
from zvmc.tilting import build_tilted

SEEDS = range(20)


def _report(number, ok, detail, capsys=None):
    line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}"
    if capsys is None:
        print(line)
    else:
        with capsys.disabled():
            print("\n" + line)
    return ok


def _best_ms(fn, repeat=100):
    best = math.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return 1e3 * best


def five_state_case():
    """5-state model (4 transient) with a 2-function basis fitted on 3 design states."""
    model = random_model(5, np.random.default_rng(20240601))
    mu = solve_mu(model)
    cols = np.column_stack([np.ones(mu.size), mu - mu.mean()])
    basis = BasisModel.for_model(model, model.transient[:3], np.zeros(mu.size), cols)
    return model, basis


# -- criteria -------------------------------------------------------------------------

def criterion_1():
    model = two_state_model()
    mu = solve_mu(model)
    err_mu = float(np.abs(mu - 2.0).max())
    err_series = float(np.abs(truncated_series_mu(model, 60) - mu).max())
    ms = _best_ms(lambda: solve_mu(model))
    ok = err_mu <= 1e-12 and err_series <= 1e-10 and ms < 1.0
    return ok, f"|mu-(2,2)|={err_mu:.1e}, |series60-mu|={err_series:.1e}, solve {ms:.3f} ms"


def criterion_2():
    rng = np.random.default_rng(2)
    sizes = (4, 8, 12, 16, 20)
    models = [random_model(n, rng, n_absorbing=1 + n // 8, density=0.5) for n in sizes]
    worst, count = 0.0, 0
    t0 = time.perf_counter()
    for model in models:
        mu = solve_mu(model)
        lo, hi = 0.5 * mu.min(), 2.0 * mu.max()
        for _ in range(100):
            nu = rng.uniform(lo, hi, size=mu.size)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                mean = exact_moments(model, nu).mean
            worst = max(worst, float(np.abs(mean - mu).max()))
            count += 1
    secs = time.perf_counter() - t0
    ok = worst <= 1e-10 and secs < 1.0
    return ok, f"{count} nu draws on models n={sizes}: max |mean-mu|={worst:.1e}, {secs:.2f} s"


def criterion_3():
    cases = [two_state_model(), random_model(6, np.random.default_rng(3), n_absorbing=2)]
    worst_rel, worst_var = 0.0, 0.0
    t0 = time.perf_counter()
    for model in cases:
        mu = solve_mu(model)
        tilted = build_tilted(model, mu)
        for i, x in enumerate(model.transient):
            est = estimate_mu(tilted, int(x), 10_000, seed=3)
            worst_rel = max(worst_rel, float(np.abs(est.values - mu[i]).max() / mu[i]))
            worst_var = max(worst_var, est.variance)
    secs = time.perf_counter() - t0
    ok = worst_rel <= 1e-9 and worst_var <= 1e-18 and secs < 1.0
    return ok, f"max |Y-mu|/mu={worst_rel:.1e}, max var={worst_var:.1e}, {secs:.2f} s"


def _bound_violations(tilted, consts, x0, R, seed, max_steps=400):
    key = _rng.stream_key(seed, SIMULATE_TAG, x0)
    b = simulate_batch(tilted, x0, np.arange(R), key, max_steps, record=True)
    inv = -b.log_L_path
    n = np.arange(inv.shape[1])[None, :]
    tau = np.where(b.tau < 0, max_steps + 1, b.tau)[:, None]
    factor = np.minimum(1.0, b.terminal_reward)[:, None]
    with np.errstate(divide="ignore"):
        lower = n * math.log(consts.kappa) + np.where(n >= tau, np.log(factor), 0.0)
    upper = n * math.log(consts.H)
    valid = ~np.isnan(inv)
    tol = 1e-12 * np.maximum(1.0, np.abs(inv))
    bad = valid & ((inv < lower - tol) | (inv > upper + tol))
    return int(bad.sum()), int(valid.sum())


def criterion_4():
    rng = np.random.default_rng(4)
    models = [two_state_model()] + [random_model(n, rng, n_absorbing=k)
                                    for n, k in ((4, 1), (6, 2))]
    violations = prefixes = pairs = 0
    for model in models:
        mu = solve_mu(model)
        lo, hi = 0.5 * mu.min(), 2.0 * mu.max()
        consts = compute_constants(model, mu, lo, hi)
        for j in range(3):
            nu = rng.uniform(lo, hi, size=mu.size)
            tilted = build_tilted(model, nu)
            x0 = int(model.transient[j % model.n_transient])
            v, p = _bound_violations(tilted, consts, x0, 10_000, seed=j)
            violations += v
            prefixes += p
            pairs += 1
    ok = violations == 0
    return ok, f"{pairs} (model, nu) pairs x 1e4 paths, {prefixes} prefixes, {violations} violations"


def criterion_5():
    model = two_state_model()
    mu = solve_mu(model)
    lo, hi = 1.0, 4.0
    consts = compute_constants(model, mu, lo, hi)
    k = np.arange(51)
    bound = (1.0 - consts.pi_G) ** (k // consts.m)
    rng = np.random.default_rng(5)
    R = 100_000
    worst = -math.inf
    t0 = time.perf_counter()
    for i in range(10):
        nu = rng.uniform(lo, hi, size=mu.size)
        surv = tail_survival(build_tilted(model, nu), 1, R, seed=i, k_max=50)
        worst = max(worst, float(np.max(surv - bound - binomial_slack(bound, R))))
    secs = time.perf_counter() - t0
    ok = worst <= 0 and secs < 10.0
    return ok, (f"pi_G={consts.pi_G:.3g}, m={consts.m}: max(survival - bound - 4 sigma)="
                f"{worst:.3g} over 10 nu, k<=50, R=1e5; {secs:.2f} s")


def criterion_6():
    model = two_state_model()
    mu = solve_mu(model)
    delta = np.array([1.0, -0.5])

    def ratios():
        var = {t: exact_moments(model, mu + t * delta).variance.max()
               for t in (0.2, 0.1, 0.05, 0.025)}
        return [var[t / 2] / var[t] for t in (0.2, 0.1, 0.05)]

    r = ratios()
    ms = _best_ms(ratios)
    ok = all(0.15 <= x <= 0.35 for x in r) and ms < 1.0
    return ok, f"Var(t/2)/Var(t) = {', '.join(f'{x:.4f}' for x in r)}; {ms:.3f} ms"


def _adaptive_pass_rate(model, basis, R):
    passed = 0
    for seed in SEEDS:
        trace = run_adaptive(model, basis=basis, R=R, n_iters=20, seed=seed)
        try:
            theta = estimate_rate(trace)
        except EstimationError:
            theta = 0.0
        passed += trace.final_error < 1e-2 and theta > 1
    return passed / len(SEEDS)


def criterion_7():
    t0 = time.perf_counter()
    two = _adaptive_pass_rate(two_state_model(), None, 1000)
    model, basis = five_state_case()
    five = _adaptive_pass_rate(model, basis, 4000)
    secs = time.perf_counter() - t0
    ok = two >= 0.95 and five >= 0.95 and secs < 30.0
    return ok, f"pass rate two-state {two:.2f}, five-state basis p=2 {five:.2f}; {secs:.1f} s"


def criterion_8():
    model = EigenModel(P=np.array([[0.3, 0.4], [0.5, 0.2]]))
    target = -math.log(0.7)
    t0 = time.perf_counter()
    oracle = eigen_oracle(model)
    P = model.P
    residual = float(np.abs(math.exp(oracle.alpha_star) * P @ oracle.mu_star
                            - oracle.mu_star).max())
    sample = simulate_regeneration(build_eigen_tilted(model, oracle.mu_star[1:]), 10_000, seed=8)
    identity = float(np.abs(sample.log_L + oracle.alpha_star * sample.tau).max())
    hits = 0
    for seed in SEEDS:
        trace = run_eigen_adaptive(model, init_nu=[0.5], R=10_000, n_iters=10, seed=seed,
                                   oracle=oracle)
        hits += abs(trace.alpha_hat[-1] - target) <= 5e-3
    secs = time.perf_counter() - t0
    frac = hits / len(SEEDS)
    ok = frac >= 0.9 and residual <= 1e-10 and identity <= 1e-10 and secs < 20.0
    return ok, (f"{frac:.2f} of seeds within 5e-3; oracle residual {residual:.1e}; "
                f"max |log L + alpha* tau| {identity:.1e}; {secs:.1f} s")


def criterion_9():
    t0 = time.perf_counter()
    div = classify_experiment(divergent_spec(), 100_000, 100, seed=9)
    summ = classify_experiment(summable_spec(), 100_000, 100, seed=9)
    secs = time.perf_counter() - t0
    f_div = div.fraction_at_least(5)
    few = summ.visits <= 3
    f_sum = float(np.mean(few))
    median_level = float(np.median(summ.final_levels))
    ok = f_div >= 0.9 and f_sum >= 0.9 and median_level >= 5e4 and secs < 10.0
    return ok, (f"divergent >=5 visits {f_div:.2f}; summable <=3 visits {f_sum:.2f}, "
                f"median final level {median_level:.0f}; {secs:.1f} s")


def criterion_10(workdir):
    workdir = Path(workdir)
    save_model(two_state_model(), workdir / "two.json")
    (workdir / "eig.json").write_text(json.dumps({"d": 1, "P": [[0.3, 0.4], [0.5, 0.2]]}))
    model, _ = five_state_case()
    save_model(model, workdir / "five.json")
    configs = {
        "simulate": ({"mode": "simulate", "model_path": "five.json", "R": 2000, "seed": 10},
                     "replications.csv"),
        "adapt": ({"mode": "adapt", "model_path": "two.json", "R": 1000, "n_iters": 8,
                   "seed": 10}, "trace.csv"),
        "eigen": ({"mode": "eigen", "model_path": "eig.json", "R": 5000, "n_iters": 4,
                   "seed": 10, "init": [0.5]}, "eigen_trace.csv"),
        "counterexample": ({"mode": "counterexample", "spec": "divergent", "steps": 5000,
                            "n_runs": 20, "seed": 10}, "runs.csv"),
    }
    mismatched = []
    for mode, (doc, name) in configs.items():
        cfg = workdir / f"{mode}.json"
        cfg.write_text(json.dumps(doc))
        blobs = []
        for i, threads in enumerate((1, 4, 2)):
            out = workdir / f"{mode}_{i}"
            code = cli_main(["--config", str(cfg), "--out", str(out), "--threads", str(threads)])
            blobs.append((out / name).read_bytes() if code == 0 else None)
        if blobs[0] is None or len(set(blobs)) != 1:
            mismatched.append(mode)
    ok = not mismatched
    detail = "all modes byte-identical across --threads 1/4/2" if ok else \
        f"differences in {', '.join(mismatched)}"
    return ok, detail


# -- pytest wrappers ---------------------------------------------------------------

@pytest.mark.parametrize("number", range(1, 10))
def test_criterion(number, capsys):
    ok, detail = globals()[f"criterion_{number}"]()
    assert _report(number, ok, detail, capsys), detail


def test_criterion_10(tmp_path, capsys):
    ok, detail = criterion_10(tmp_path)
    assert _report(10, ok, detail, capsys), detail


if __name__ == "__main__":
    import tempfile

    results = []
    for number in range(1, 10):
        results.append(_report(number, *globals()[f"criterion_{number}"]()))
    with tempfile.TemporaryDirectory() as tmp:
        results.append(_report(10, *criterion_10(tmp)))
    sys.exit(0 if all(results) else 1)
