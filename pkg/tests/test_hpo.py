import json
import math
from collections import Counter, defaultdict

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad
from scipy.stats import norm

from forecast_hpo.hpo import (
    Dimension,
    GpModel,
    SearchSpace,
    TrialOutcome,
    TunerSettings,
    TuningError,
    expected_improvement,
    gp_fit,
    hyperband_schedule,
    read_trial_log,
    run_bayesian,
    run_hyperband,
    run_random,
    sample_configuration,
    schedule_trials,
    se_kernel,
    top_k,
    write_trial_log,
)
from forecast_hpo.hpo.hyperband import s_max_for

LR_SPACE = SearchSpace.from_dict({"learning_rate": ["log-uniform", 1e-4, 1e-1]})


# ---------------------------------------------------------------- search space


def test_integer_dimension_with_equal_bounds():
    space = SearchSpace.from_dict({"layers": ["integer", 2, 2]})
    rng = np.random.default_rng(0)
    assert {sample_configuration(space, rng)["layers"] for _ in range(20)} == {2}


def test_log_uniform_median():
    rng = np.random.default_rng(0)
    draws = [sample_configuration(LR_SPACE, rng)["learning_rate"] for _ in range(10_000)]
    # the median of log-uniform(1e-4, 1e-1) is 10**-2.5 ~ 3.16e-3
    assert 2.5e-3 <= np.median(draws) <= 4.5e-3
    assert min(draws) >= 1e-4 and max(draws) <= 1e-1


def test_sampling_reproducible():
    space = SearchSpace.from_dict({"a": ["uniform", 0, 1], "b": ["integer", 1, 9]})
    a = [sample_configuration(space, np.random.default_rng(5)).values for _ in range(3)]
    assert a[0] == a[1] == a[2]


def test_dimension_validation():
    with pytest.raises(ValueError):
        Dimension("x", "normal", 0, 1)
    with pytest.raises(ValueError):
        Dimension("x", "uniform", 2, 1)
    with pytest.raises(ValueError):
        Dimension("x", "log-uniform", 0, 1)
    with pytest.raises(ValueError):
        SearchSpace((Dimension("x", "uniform", 0, 1), Dimension("x", "uniform", 0, 1)))


@settings(max_examples=100, deadline=None)
@given(st.floats(0.0, 1.0), st.sampled_from(["uniform", "log-uniform"]))
def test_unit_cube_round_trip(u, kind):
    d = Dimension("x", kind, 1e-3, 10.0)
    assert d.to_unit(d.from_unit(u)) == pytest.approx(u, abs=1e-9)


# ---------------------------------------------------------------- Hyperband schedule


def test_schedule_R81_eta3():
    brackets = hyperband_schedule(81, 3)
    assert [b.s for b in brackets] == [4, 3, 2, 1, 0]
    assert [b.n for b in brackets] == [81, 34, 15, 8, 5]
    assert [b.r for b in brackets] == [1, 3, 9, 27, 81]
    assert [n for n, _ in brackets[0].rungs] == [81, 27, 9, 3, 1]
    assert [r for _, r in brackets[0].rungs] == [1, 3, 9, 27, 81]


def test_schedule_R1_is_single_bracket():
    (b,) = hyperband_schedule(1, 3)
    assert (b.s, b.n, b.r) == (0, 1, 1)


def test_schedule_rejects_bad_arguments():
    with pytest.raises(ValueError):
        hyperband_schedule(0.5, 3)
    with pytest.raises(ValueError):
        hyperband_schedule(9, 1)


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 500), st.sampled_from([2, 3, 4]))
def test_schedule_budget_slack(R, eta):
    s_max = s_max_for(R, eta)
    B = (s_max + 1) * R
    for b in hyperband_schedule(R, eta):
        ns = [n for n, _ in b.rungs]
        rs = [r for _, r in b.rungs]
        assert ns == sorted(ns, reverse=True) and rs == sorted(rs)
        assert rs[-1] == pytest.approx(R)
        # each rung spends at most B/(s+1) plus one config's worth of rounding
        assert b.total_resource <= B + (b.s + 1) * b.r + 1e-9


def test_top_k_examples():
    assert top_k(["a", "b", "c"], [3.0, 1.0, 2.0], 2) == ["b", "c"]
    assert top_k(["a", "b", "c"], [1.0, 1.0, 0.5], 2) == ["c", "a"]  # tie keeps sample order
    assert top_k(["a"], [1.0], 0) == []
    with pytest.raises(ValueError):
        top_k(["a"], [1.0], 2)
    with pytest.raises(ValueError):
        top_k(["a"], [1.0], -1)


# ---------------------------------------------------------------- Hyperband runs


def quadratic(values, resource, state):
    return (values["learning_rate"] - 0.01) ** 2


def test_hyperband_best_is_min_of_log():
    res = run_hyperband(LR_SPACE, TunerSettings("hyperband", 15, 5, R=9), quadratic)
    assert res.best_loss == min(t.loss for t in res.trials)
    assert res.best_config.values == min(res.trials, key=lambda t: t.loss).config.values


def test_hyperband_survivor_counts():
    res = run_hyperband(LR_SPACE, TunerSettings("hyperband", 15, 5, R=27), quadratic)
    per_rung = Counter(t.rung for t in res.trials)
    assert [per_rung[i] for i in range(3)] == [15, 5, 1]
    assert len({t.config.to_json() for t in res.trials}) == 15
    assert sorted({t.resource for t in res.trials}) == [1, 3, 9]


def test_hyperband_resources_increase_and_state_resumes():
    seen = defaultdict(list)

    def objective(values, resource, state):
        key = json.dumps(values, sort_keys=True)
        seen[key].append((resource, state))
        return TrialOutcome((values["learning_rate"] - 0.01) ** 2, state=resource)

    run_hyperband(LR_SPACE, TunerSettings("hyperband", 15, 5, R=27), objective)
    for calls in seen.values():
        resources = [r for r, _ in calls]
        assert resources == sorted(set(resources))
        assert calls[0][1] is None
        assert [s for _, s in calls[1:]] == resources[:-1]


def test_hyperband_degenerate_space():
    space = SearchSpace.from_dict({"learning_rate": ["log-uniform", 1e-3, 1e-3]})
    res = run_hyperband(space, TunerSettings("hyperband", 5, 5, R=9), quadratic)
    assert res.best_config["learning_rate"] == pytest.approx(1e-3)


def test_hyperband_all_failures():
    def boom(values, resource, state):
        raise RuntimeError("diverged")

    with pytest.raises(TuningError, match="no successful trial"):
        run_hyperband(LR_SPACE, TunerSettings("hyperband", 5, 5, R=9), boom)


def test_hyperband_skips_failed_configs():
    def flaky(values, resource, state):
        return math.nan if values["learning_rate"] > 0.01 else values["learning_rate"]

    res = run_hyperband(LR_SPACE, TunerSettings("hyperband", 15, 5, R=9), flaky)
    assert math.isfinite(res.best_loss)
    promoted = [t for t in res.trials if t.rung and t.rung > 0]
    assert all(not t.failed for t in promoted)


def test_hyperband_deterministic():
    s = TunerSettings("hyperband", 15, 5, R=27, seed=3)
    a = run_hyperband(LR_SPACE, s, quadratic)
    b = run_hyperband(LR_SPACE, s, quadratic)
    assert [t.config.values for t in a.trials] == [t.config.values for t in b.trials]


def test_hyperband_latency_uses_rung_barriers():
    def timed(values, resource, state):
        return TrialOutcome(values["learning_rate"], duration_s=float(resource))

    res = run_hyperband(LR_SPACE, TunerSettings("hyperband", 15, 5, R=27), timed)
    # rung 0: 15 one-second jobs on 5 workers; rung 1: 5 three-second jobs; rung 2: one nine-second job
    assert res.latency_s == pytest.approx(3 + 3 + 9)
    assert res.cost_s == pytest.approx(15 + 15 + 9)


# ---------------------------------------------------------------- Gaussian process


def test_gp_interpolates_single_point():
    gp = gp_fit([[0.3]], [2.0], ell=0.2, sf=1.0, sn=1e-4)
    mu, var = gp.predict([[0.3]])
    assert mu[0] == pytest.approx(2.0, abs=1e-6)
    assert var[0] < 1e-6


def test_gp_matches_dense_oracle():
    rng = np.random.default_rng(0)
    X, y = rng.uniform(size=(8, 2)), rng.normal(size=8)
    Xs = rng.uniform(size=(5, 2))
    gp = gp_fit(X, y, ell=0.3, sf=1.5, sn=0.1)
    ys = (y - y.mean()) / y.std()

    def k(A, B):
        d = ((A[:, None, :] - B[None, :, :]) ** 2).sum(-1)
        return 1.5**2 * np.exp(-0.5 * d / 0.3**2)

    K = k(X, X) + 0.01 * np.eye(8)
    Ks = k(Xs, X)
    mu = y.mean() + y.std() * Ks @ np.linalg.solve(K, ys)
    cov = (k(Xs, Xs) - Ks @ np.linalg.solve(K, Ks.T)) * y.std() ** 2
    m, v = gp.predict(Xs)
    np.testing.assert_allclose(m, mu, atol=1e-8)
    np.testing.assert_allclose(v, np.diag(cov), atol=1e-8)
    np.testing.assert_allclose(gp.posterior_cov(Xs), cov, atol=1e-8)


def test_gp_reverts_to_prior_far_away():
    X, y = np.array([[0.0], [0.05]]), np.array([1.0, 3.0])
    gp = gp_fit(X, y, ell=0.05, sf=1.0, sn=1e-2)
    mu, var = gp.predict([[1.0]])
    assert mu[0] == pytest.approx(y.mean(), abs=1e-6)
    assert var[0] >= 0.99 * gp.sf**2 * gp.y_std**2


def test_gp_posterior_covariance_is_psd():
    rng = np.random.default_rng(4)
    gp = gp_fit(rng.uniform(size=(6, 3)), rng.normal(size=6))
    cov = gp.posterior_cov(rng.uniform(size=(10, 3)))
    np.testing.assert_allclose(cov, cov.T, atol=1e-12)
    assert np.linalg.eigvalsh(cov).min() > -1e-8


def test_gp_grid_choice_maximises_marginal_likelihood():
    rng = np.random.default_rng(1)
    X, y = rng.uniform(size=(10, 1)), rng.normal(size=10)
    gp = gp_fit(X, y)
    for ell in (0.05, 0.1, 0.2, 0.5, 1.0):
        assert gp_fit(X, y, ell=ell).log_marginal <= gp.log_marginal + 1e-12


def test_gp_constant_targets():
    gp = gp_fit([[0.1], [0.9]], [4.0, 4.0])
    assert isinstance(gp, GpModel)
    np.testing.assert_allclose(gp.predict([[0.5]])[0], 4.0)


def test_se_kernel_diagonal():
    A = np.random.default_rng(0).uniform(size=(4, 2))
    np.testing.assert_allclose(np.diag(se_kernel(A, A, 0.3, 2.0)), 4.0)


# ---------------------------------------------------------------- expected improvement


def test_ei_examples():
    assert expected_improvement(0.0, 1.0, 0.0) == pytest.approx(0.3989423, abs=1e-6)
    assert expected_improvement(2.0, 0.0, 1.0) == 0.0
    assert expected_improvement(0.5, 0.0, 1.0) == 0.5
    with pytest.raises(ValueError):
        expected_improvement(0.0, -1.0, 0.0)


@pytest.mark.parametrize("mu,sigma,best", [(0.3, 0.5, 0.1), (-1.0, 2.0, 0.0), (1.0, 0.1, 1.2)])
def test_ei_matches_integral(mu, sigma, best):
    oracle, _ = quad(lambda z: max(best - z, 0.0) * norm.pdf(z, mu, sigma), mu - 12 * sigma, mu + 12 * sigma)
    assert expected_improvement(mu, sigma, best) == pytest.approx(oracle, abs=1e-8)


@settings(max_examples=100, deadline=None)
@given(st.floats(-5, 5), st.floats(0.01, 5), st.floats(-5, 5))
def test_ei_non_negative_and_at_least_plain_improvement(mu, sigma, best):
    ei = expected_improvement(mu, sigma, best)
    assert ei >= max(best - mu, 0.0) - 1e-12


# ---------------------------------------------------------------- Bayesian and random


def test_bayesian_finds_1d_minimum():
    space = SearchSpace.from_dict({"x": ["uniform", 0.0, 1.0]})
    res = run_bayesian(space, TunerSettings("bayesian", 15, 5, seed=0), lambda v, r, s: (v["x"] - 0.37) ** 2)
    assert abs(res.best_config["x"] - 0.37) <= 0.1


def test_bayesian_with_single_batch_is_random_search():
    s = TunerSettings("bayesian", 5, 5, seed=2)
    a = run_bayesian(LR_SPACE, s, quadratic)
    b = run_random(LR_SPACE, TunerSettings("random", 5, 5, seed=2), quadratic)
    assert [t.config.values for t in a.trials] == [t.config.values for t in b.trials]


def test_bayesian_best_and_batches():
    res = run_bayesian(LR_SPACE, TunerSettings("bayesian", 12, 5), quadratic)
    assert res.best_loss == min(t.loss for t in res.trials)
    assert [Counter(t.rung for t in res.trials)[i] for i in range(3)] == [5, 5, 2]
    assert all(t.resource == 27 for t in res.trials)


def test_bayesian_latency_sums_batch_makespans():
    def timed(values, resource, state):
        return TrialOutcome(quadratic(values, resource, state), duration_s=2.0)

    res = run_bayesian(LR_SPACE, TunerSettings("bayesian", 15, 5), timed)
    assert res.latency_s == pytest.approx(6.0)
    assert res.cost_s == pytest.approx(30.0)


def test_random_search_latency():
    res = run_random(
        LR_SPACE, TunerSettings("random", 6, 3), lambda v, r, s: TrialOutcome(1.0, duration_s=1.0)
    )
    assert res.latency_s == 2.0 and res.cost_s == 6.0


# ---------------------------------------------------------------- scheduler


def test_schedule_example():
    sched = schedule_trials([3, 1, 2], 2)
    assert sched.cost == 6
    assert sched.latency == 3
    assert sched.starts == (0, 0, 1)


def test_schedule_equal_trials_full_parallelism():
    sched = schedule_trials([1.0] * 15, 15)
    assert sched.cost / sched.latency == 15


def test_schedule_single_trial():
    sched = schedule_trials([4.2], 5)
    assert sched.cost == sched.latency == 4.2


def test_schedule_validation():
    with pytest.raises(ValueError):
        schedule_trials([1.0], 0)
    with pytest.raises(ValueError):
        schedule_trials([-1.0], 1)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0.0, 100.0), min_size=1, max_size=30), st.integers(1, 8))
def test_schedule_properties(durations, P):
    sched = schedule_trials(durations, P)
    assert sched.latency <= sched.cost + 1e-9
    assert sched.latency >= max(durations) - 1e-9
    assert sched.latency >= sched.cost / P - 1e-9
    assert sched.max_in_flight <= P


# ---------------------------------------------------------------- logs and settings


def test_trial_log_round_trip(tmp_path):
    res = run_hyperband(LR_SPACE, TunerSettings("hyperband", 6, 3, R=9), quadratic)
    path = tmp_path / "trials.csv"
    write_trial_log(path, res.trials)
    back = read_trial_log(path)
    assert [t.loss for t in back] == [t.loss for t in res.trials]
    assert [t.config.values for t in back] == [dict(t.config.values) for t in res.trials]
    assert [(t.bracket, t.rung, t.resource) for t in back] == [(t.bracket, t.rung, t.resource) for t in res.trials]


def test_trial_log_rejects_bad_header(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("id,loss\n1,0.5\n")
    with pytest.raises(ValueError, match="header"):
        read_trial_log(path)


def test_settings_json_round_trip_and_validation():
    s = TunerSettings("bayesian", 20, 10, R=9, eta=2.0, seed=4)
    assert TunerSettings.from_json(s.to_json()) == s
    assert s.label == "bayesian_20;10"
    for bad in (
        dict(strategy="grid"),
        dict(max_training_jobs=0),
        dict(max_training_jobs=3, max_parallel_jobs=5),
        dict(eta=1.0),
        dict(R=0),
    ):
        with pytest.raises(ValueError):
            TunerSettings(**bad)
