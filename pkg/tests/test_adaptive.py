import numpy as np
import pytest

from zvmc.adaptive import (
    AdaptiveTrace, BasisModel, contraction_diagnostic, default_clamp, estimate_rate, fit_values,
    run_adaptive, two_step_hit_frequency, write_trace_csv,
)
from zvmc.errors import EstimationError, ModelError
from zvmc.exact import solve_mu
from zvmc.model import random_model


def test_fit_tabular_inside_bounds(two_state):
    basis = BasisModel.tabular_for(two_state)
    np.testing.assert_array_equal(fit_values([2.1, 1.9], basis, (0.1, 4.0)), [2.1, 1.9])


def test_fit_constant_regressor(two_state):
    basis = BasisModel.for_model(two_state, [1, 2], np.zeros(2), np.ones((2, 1)))
    np.testing.assert_allclose(fit_values([2.1, 1.9], basis, (0.1, 4.0)), [2.0, 2.0],
                               atol=1e-15)


def test_fit_both_clamps_active(two_state):
    basis = BasisModel.tabular_for(two_state)
    np.testing.assert_array_equal(fit_values([0.0, 5.0], basis, (0.5, 4.0)), [0.5, 4.0])


def test_fit_errors(two_state):
    with pytest.raises(EstimationError, match="rank-deficient"):
        BasisModel.for_model(two_state, [1, 2], np.zeros(2), np.array([[1.0, 2.0], [1.0, 2.0]]))
    with pytest.raises(EstimationError):
        BasisModel.for_model(two_state, [1], np.zeros(2), np.eye(2))
    basis = BasisModel.tabular_for(two_state)
    with pytest.raises(ModelError):
        fit_values([1.0, 1.0], basis, (2.0, 1.0))
    with pytest.raises(EstimationError):
        fit_values([np.nan, 1.0], basis, (0.5, 4.0))


def test_fit_offset_and_extrapolation():
    model = random_model(5, np.random.default_rng(0))
    b0 = np.array([0.5, 0.0, 0.0, 1.0])
    B = np.array([[1.0], [2.0], [3.0], [4.0]])
    basis = BasisModel.for_model(model, model.transient[1:3], b0, B)
    # design rows 2 and 3 (b0 = 0): y = 2a, 3a with y = (2, 3) gives a = 1
    np.testing.assert_allclose(fit_values([2.0, 3.0], basis, (0.01, 100.0)), b0 + B[:, 0])


@pytest.mark.parametrize("errors, theta", [
    ((1.0, 0.1, 0.01, 0.001), 10.0),
    ((0.5, 0.5, 0.5, 0.5), 1.0),
])
def test_rate_examples(errors, theta):
    assert estimate_rate(errors) == pytest.approx(theta, abs=1e-9)


def test_rate_window_rules():
    with pytest.raises(EstimationError):
        estimate_rate([1.0, 0.1, 0.01])
    with pytest.raises(EstimationError):
        estimate_rate([1.0, 0.1, 0.01, 0.001], burn_in=1)
    # an error at the floor truncates the window
    assert estimate_rate([1.0, 0.5, 0.25, 0.125, 0.0, 7.0]) == pytest.approx(2.0, abs=1e-9)


def test_fixed_point(two_state):
    trace = run_adaptive(two_state, init=[2.0, 2.0], R=100, n_iters=5, seed=1)
    assert all(e <= 1e-9 for e in trace.sup_errors)


def test_fixed_point_runs_all_iterations_when_not_exact():
    model = random_model(4, np.random.default_rng(1))
    mu = solve_mu(model)
    trace = run_adaptive(model, init=mu * (1 + 1e-15), R=50, n_iters=3, seed=0)
    assert max(trace.sup_errors) <= 1e-9


def test_two_state_converges(two_state):
    trace = run_adaptive(two_state, R=1000, n_iters=20, seed=3)
    assert trace.final_error < 1e-2
    assert estimate_rate(trace) > 1
    assert len(trace.iterates) == len(trace.sup_errors)
    assert trace.config["mode"] == "tabular"


def test_iterates_clamped(two_state):
    clamp = (1.5, 2.2)
    trace = run_adaptive(two_state, R=3, n_iters=10, seed=4, clamp=clamp)
    for nu in trace.iterates[1:]:
        assert np.all((nu >= clamp[0]) & (nu <= clamp[1]))


def test_single_replication_trace(two_state):
    trace = run_adaptive(two_state, R=1, n_iters=6, seed=0)
    assert len(trace.sup_errors) >= 2
    assert all(np.isfinite(trace.sup_errors)) and min(trace.sup_errors) >= 0


def test_reproducible(two_state):
    a = run_adaptive(two_state, R=200, n_iters=4, seed=12)
    b = run_adaptive(two_state, R=200, n_iters=4, seed=12, threads=3)
    assert a.sup_errors == b.sup_errors and a.sample_vars == b.sample_vars
    c = run_adaptive(two_state, R=200, n_iters=4, seed=13)
    assert a.sup_errors != c.sup_errors


def test_more_replications_help():
    model = random_model(5, np.random.default_rng(8))

    def mean_error(R):
        return np.mean([run_adaptive(model, R=R, n_iters=1, seed=s).final_error
                        for s in range(20)])

    assert mean_error(4000) <= mean_error(1000)


def test_init_validation(two_state):
    with pytest.raises(ModelError):
        run_adaptive(two_state, init=[0.0, 1.0])
    with pytest.raises(ModelError):
        run_adaptive(two_state, R=0)


def test_all_censored_iteration_flagged():
    # state 1 always moves to 2 first, so with one step every design path is censored
    from zvmc.model import MarkovRewardModel
    P = np.array([[1.0, 0.0, 0.0], [0.0, 0.0, 1.0], [0.5, 0.5, 0.0]])
    s = np.ones((3, 3))
    s[0] = 0.0
    model = MarkovRewardModel(P=P, absorbing=(0,), s=s, beta=np.ones((3, 3)))
    basis = BasisModel.for_model(model, [1], np.zeros(2), np.ones((2, 1)))
    trace = run_adaptive(model, basis=basis, init=[1.0, 1.0], R=20, n_iters=2, seed=0,
                         max_steps=1)
    assert trace.flagged == [True, True]
    assert trace.censored == [20, 20]
    for nu in trace.iterates:
        np.testing.assert_array_equal(nu, [1.0, 1.0])


def test_contraction_at_fixed_point(two_state):
    c = contraction_diagnostic(two_state, [2.0, 2.0], R=100, trials=5, seed=0)
    assert c.ratio == 0.0


@pytest.mark.slow
def test_contraction_ratio_and_scale_invariance(two_state):
    mu = solve_mu(two_state)
    a = contraction_diagnostic(two_state, mu + 0.1, R=10_000, trials=200, seed=1)
    b = contraction_diagnostic(two_state, mu + 0.05, R=10_000, trials=200, seed=1)
    assert a.ratio < 1 and b.ratio < 1
    assert 0.5 <= a.ratio / b.ratio <= 2.0
    assert a.ratio <= 1.5 * a.bound


def test_two_step_hits(two_state):
    freq = two_step_hit_frequency(two_state, [1.0, 1.0], R=500, trials=10, eps=0.05, seed=0)
    assert freq == 1.0


def test_trace_csv(tmp_path, two_state):
    trace = run_adaptive(two_state, R=100, n_iters=3, seed=0)
    path = tmp_path / "trace.csv"
    write_trace_csv(trace, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "iter,sup_error,max_sample_var,censored_total"
    assert len(lines) == len(trace.sup_errors) + 1
    assert float(lines[-1].split(",")[1]) == trace.final_error


def test_default_clamp():
    assert default_clamp(np.array([1.0, 3.0])) == (0.5, 6.0)
    assert isinstance(AdaptiveTrace(iterates=[], sup_errors=[1.0]).final_error, float)
