import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from forecast_hpo.ensemble import (
    EnsembleParams,
    ErrorMatrix,
    basin_hopping,
    compute_error_matrix,
    ensemble_forecast,
    fit_ensemble,
    pooled_avg_wql,
    select_members,
)
from forecast_hpo.metrics import eval_wql
from forecast_hpo.quantiles import QuantileForecast

TAUS = (0.1, 0.5, 0.9)


def matrix(values, algs=None, items=None):
    values = np.asarray(values, dtype=float)
    algs = algs or tuple("ABCDEFG"[: values.shape[0]])
    items = items or tuple(f"i{j}" for j in range(values.shape[1]))
    return ErrorMatrix(algs, items, values)


# ---------------------------------------------------------------- member selection


def test_hand_built_two_by_two():
    errors = matrix([[1.0, 2.0], [1.05, 1.0]])
    a = select_members(errors, EnsembleParams(p_local=0.1))
    assert a.modes == {"i0": "local", "i1": "local"}
    assert a.members == {"i0": ("A", "B"), "i1": ("B",)}


def test_zero_thresholds_pick_per_item_best():
    errors = matrix([[1.0, 3.0, 2.0], [2.0, 1.0, 2.0]])
    a = select_members(errors, EnsembleParams())
    assert a.members == {"i0": ("A",), "i1": ("B",), "i2": ("A", "B")}


def test_full_combination_threshold_forces_global_mode():
    errors = matrix([[1.0, 3.0], [2.0, 1.0], [5.0, 5.0]])
    a = select_members(errors, EnsembleParams(p_comb=1.0))
    assert set(a.modes.values()) == {"global"}
    # global errors 2, 1.5, 5; only B is within a factor 1 of the best
    assert a.members == {"i0": ("B",), "i1": ("B",)}
    wide = select_members(errors, EnsembleParams(p_global=1.0, p_comb=1.0))
    assert wide.members["i0"] == ("A", "B")


def test_params_validation():
    with pytest.raises(ValueError):
        EnsembleParams(p_local=1.5)
    with pytest.raises(ValueError):
        EnsembleParams(p_comb=-0.1)
    assert EnsembleParams.from_array([2.0, -1.0, 0.5]) == EnsembleParams(1.0, 0.0, 0.5)


def test_error_matrix_validation():
    with pytest.raises(ValueError):
        matrix([[1.0, np.nan]])
    with pytest.raises(ValueError):
        ErrorMatrix(("A",), ("i0",), np.ones((2, 1)))


error_values = st.integers(1, 5).flatmap(
    lambda a: st.integers(1, 6).flatmap(lambda n: arrays(np.float64, (a, n), elements=st.floats(0.0, 10.0, allow_subnormal=False)))
)
unit = st.floats(0.0, 1.0)


@settings(max_examples=150, deadline=None)
@given(error_values, unit, unit, unit, unit)
def test_members_grow_with_thresholds(values, pl, pg, pc, extra):
    errors = matrix(values)
    base = select_members(errors, EnsembleParams(pl, pg, pc))
    wider_local = select_members(errors, EnsembleParams(min(pl + extra, 1.0), pg, pc))
    for item in errors.items:
        assert base.members[item]  # never empty
        if base.modes[item] == "local":
            assert set(base.members[item]) <= set(wider_local.members[item])
    wider_global = select_members(errors, EnsembleParams(pl, min(pg + extra, 1.0), 1.0))
    narrow_global = select_members(errors, EnsembleParams(pl, pg, 1.0))
    for item in errors.items:
        if narrow_global.modes[item] == wider_global.modes[item] == "global":
            assert set(narrow_global.members[item]) <= set(wider_global.members[item])


@settings(max_examples=150, deadline=None)
@given(error_values, unit, unit, unit, st.sampled_from([0.25, 2.0, 8.0]))
def test_selection_is_scale_invariant(values, pl, pg, pc, c):
    errors = matrix(values)
    p = EnsembleParams(pl, pg, pc)
    assert select_members(errors, p) == select_members(errors.scaled(c), p)


# ---------------------------------------------------------------- combination


def fc(item, m):
    return QuantileForecast(item, TAUS, np.asarray(m, dtype=float))


def test_single_member_is_identity():
    M = np.array([[1.0, 2.0], [2.0, 3.0], [3.0, 4.0]])
    a = select_members(matrix([[1.0]], items=("x",)), EnsembleParams())
    out = ensemble_forecast(a, {"A": {"x": fc("x", M)}})
    np.testing.assert_array_equal(out["x"].matrix, M)


def test_mean_of_two_members():
    M = np.array([[1.0, 2.0], [2.0, 3.0], [3.0, 4.0]])
    a = select_members(matrix([[1.0], [1.0]], items=("x",)), EnsembleParams())
    out = ensemble_forecast(a, {"A": {"x": fc("x", M)}, "B": {"x": fc("x", M + 2)}})
    np.testing.assert_allclose(out["x"].matrix, M + 1)


def test_three_member_hand_case():
    mats = [np.array([[0.0], [3.0], [6.0]]), np.array([[3.0], [3.0], [3.0]]), np.array([[0.0], [0.0], [9.0]])]
    a = select_members(matrix([[1.0], [1.0], [1.0]], items=("x",)), EnsembleParams())
    out = ensemble_forecast(a, {alg: {"x": fc("x", m)} for alg, m in zip("ABC", mats)})
    np.testing.assert_allclose(out["x"].matrix[:, 0], [1.0, 2.0, 6.0])


def test_members_must_share_quantile_levels():
    a = select_members(matrix([[1.0], [1.0]], items=("x",)), EnsembleParams())
    forecasts = {"A": {"x": fc("x", np.zeros((3, 1)))}, "B": {"x": QuantileForecast("x", (0.5,), np.zeros((1, 1)))}}
    with pytest.raises(ValueError, match="quantile levels"):
        ensemble_forecast(a, forecasts)


# ---------------------------------------------------------------- error matrix


def test_compute_error_matrix_oracle():
    actuals = {"x": [1.0, 2.0], "y": [4.0, 4.0]}
    forecasts = {
        "A": {"x": fc("x", [[0.0, 1.0], [1.0, 2.0], [2.0, 3.0]]), "y": fc("y", [[3.0, 3.0], [4.0, 5.0], [6.0, 6.0]])}
    }
    em = compute_error_matrix(forecasts, actuals)
    for j, item in enumerate(("x", "y")):
        m = forecasts["A"][item].matrix
        oracle = np.mean([eval_wql(actuals[item], m[q], t) for q, t in enumerate(TAUS)])
        assert em.values[0, j] == pytest.approx(oracle)


def test_compute_error_matrix_missing_forecast():
    with pytest.raises(KeyError, match="'B'.*'y'"):
        compute_error_matrix({"B": {"x": fc("x", np.zeros((3, 1)))}}, {"x": [1.0], "y": [1.0]})


# ---------------------------------------------------------------- basin hopping


def test_basin_hopping_quadratic():
    target = np.array([0.3, 0.5, 0.2])
    res = basin_hopping(lambda p: float(np.sum((p.as_array() - target) ** 2)), iterations=20, seed=0)
    np.testing.assert_allclose(res.params.as_array(), target, atol=0.05)
    assert res.history == sorted(res.history, reverse=True)


def test_basin_hopping_constant_objective():
    res = basin_hopping(lambda p: 1.0, iterations=5)
    assert res.value == 1.0
    assert res.params == EnsembleParams(0.0, 0.0, 0.0)


def test_basin_hopping_reproducible():
    def bumpy(p):
        x = p.as_array()
        return float(np.sum(np.sin(9 * x) + x))

    a = basin_hopping(bumpy, iterations=10, seed=7)
    b = basin_hopping(bumpy, iterations=10, seed=7)
    assert a.params == b.params and a.history == b.history


# ---------------------------------------------------------------- full fit


def two_regime(n_items=10, horizon=5, seed=0):
    """Algorithm A is exact on the first half of the items and B on the second."""
    rng = np.random.default_rng(seed)
    items = [f"item{j}" for j in range(n_items)]

    def window():
        actuals = {i: rng.uniform(5, 10, horizon) for i in items}
        out = {"A": {}, "B": {}}
        for j, item in enumerate(items):
            z = actuals[item]
            good = np.vstack([z - 0.5, z, z + 0.5])
            bad = good + rng.uniform(2, 4)
            out["A"][item] = fc(item, good if j < n_items // 2 else bad)
            out["B"][item] = fc(item, bad if j < n_items // 2 else good)
        return actuals, out

    test_actuals, test_fc = window()
    val_actuals, val_fc = window()
    return compute_error_matrix(test_fc, test_actuals), val_fc, val_actuals


def test_planted_regimes_beat_every_single_model():
    errors, val_fc, val_actuals = two_regime()
    fit = fit_ensemble(errors, val_fc, val_actuals, iterations=10)
    singles = {a: pooled_avg_wql(val_actuals, val_fc[a]) for a in val_fc}
    assert fit.validation_avg_wql <= min(singles.values()) + 1e-9
    assert fit.validation_avg_wql < 0.5 * min(singles.values())
    assert fit.assignment.members["item0"] == ("A",)
    assert fit.assignment.members["item9"] == ("B",)


def test_fit_no_worse_than_corner_thresholds():
    errors, val_fc, val_actuals = two_regime(seed=3)
    fit = fit_ensemble(errors, val_fc, val_actuals, iterations=5)
    for corner in (EnsembleParams(0, 0, 0), EnsembleParams(1, 1, 1)):
        score = pooled_avg_wql(val_actuals, ensemble_forecast(select_members(errors, corner), val_fc))
        assert fit.validation_avg_wql <= score + 1e-12


def test_single_algorithm_ensemble():
    errors, val_fc, val_actuals = two_regime()
    only_a = ErrorMatrix(("A",), errors.items, errors.values[:1])
    fit = fit_ensemble(only_a, {"A": val_fc["A"]}, val_actuals, iterations=3)
    assert fit.validation_avg_wql == pytest.approx(pooled_avg_wql(val_actuals, val_fc["A"]))
    assert set(fit.assignment.members.values()) == {("A",)}


def test_fit_json_carries_warning():
    errors, val_fc, val_actuals = two_regime()
    fit = fit_ensemble(errors, val_fc, val_actuals, iterations=2)
    doc = json.loads(fit.to_json())
    assert "optimistic" in doc["warning"]
    assert set(doc["params"]) == {"p_local", "p_global", "p_comb"}
