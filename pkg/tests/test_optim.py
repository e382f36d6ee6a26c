import json
import math

import numpy as np
import pytest

from launchline.calendar import regular_calendar
from launchline.mdp import N_STATES, check_normalized, extract_deterministic_policy, naive_policy
from launchline.optim import (
    AsaParams,
    LauncherEvaluator,
    MrasParams,
    asa_run,
    benchmark_setup,
    compare_capacities,
    elite_quantile,
    load_params,
    monte_carlo_costs,
    monte_carlo_eval,
    mras_run,
    quantile_index,
    threshold_I,
    trajectory_seeds,
    weighted_frequencies,
)
from launchline.simulator import SimConfig, simulate_horizon
from launchline.toy import enumerate_optimum, two_by_two


@pytest.mark.parametrize("x, out", [(5.0, 1.0), (4.0, 1.0), (7.0, 0.0), (8.0, 0.0), (6.0, 0.5)])
def test_threshold(x, out):
    assert threshold_I(x, 5.0, 2.0) == out


def test_threshold_needs_positive_epsilon():
    with pytest.raises(ValueError):
        threshold_I(1, 1, 0)


def test_elite_quantile_examples():
    assert elite_quantile([5, 4, 3, 2], 0.25, 4) == 3
    assert elite_quantile([2, 9, 4, 1], 1.0) == 9
    assert elite_quantile([7], 0.5, 1) == 7
    with pytest.raises(ValueError):
        elite_quantile([], 0.5)
    with pytest.raises(ValueError):
        elite_quantile([1, 2], 0.5, 3)


def test_quantile_index_rounding():
    # (1 - 0.25) * 100 is exact; 1.02 * 100 is not, and must not round up to 103
    assert quantile_index(0.25, 100) == 75
    assert quantile_index(1.0, 10) == 1
    from launchline.optim import _ceil
    assert _ceil(1.02 * 100) == 102


def test_params_validation():
    MrasParams().validate()
    AsaParams().validate()
    for bad in (dict(N0=1), dict(rho0=0), dict(alpha=1.0), dict(beta=1.0), dict(lam=1.0),
                dict(nu=0), dict(mu=-1), dict(epsilon=0), dict(K=-1), dict(M0=0)):
        with pytest.raises(ValueError):
            MrasParams(**bad).validate()
    with pytest.raises(ValueError):
        AsaParams(T0=0).validate()


def test_asa_schedules():
    p = AsaParams()
    assert p.temperature(0) == 2.0
    assert p.temperature(10) == pytest.approx(2 / math.log(10 + math.e))
    assert p.gain(0) == pytest.approx(100 ** -0.501)
    assert p.gain(1) == pytest.approx(100 ** -0.501)
    assert p.gain(5) == pytest.approx(104 ** -0.501)
    assert p.exploration(0) == 1.0
    assert p.exploration(4) == 0.5
    assert p.samples(0) == p.samples(1) == 5000
    assert AsaParams(M0=1).samples(100) == int(1.1 * math.log(100) ** 3)
    assert p.policies(0) == 100
    assert AsaParams(N0=1).policies(100) == int(100 ** 0.501)


def test_load_params(tmp_path):
    f = tmp_path / "p.json"
    f.write_text(json.dumps({"lambda": 0.3, "K": 7}))
    p = load_params(f, "mras")
    assert p.lam == 0.3 and p.K == 7 and p.N0 == 100
    f.write_text(json.dumps({"T0": 3}))
    assert load_params(f, "asa").T0 == 3
    f.write_text(json.dumps({"bogus": 1}))
    with pytest.raises(ValueError, match="bogus"):
        load_params(f, "asa")


def test_weighted_frequencies():
    pols = np.array([[[1, 2]], [[2, 2]]])
    P = weighted_frequencies(pols, np.array([0.25, 0.75]), 3)
    np.testing.assert_allclose(P[0, 0], [0.25, 0.75, 0])
    np.testing.assert_allclose(P[0, 1], [0, 1, 0])


# -- Monte Carlo evaluation ----------------------------------------------------

def test_single_sample_equals_trajectory():
    cal = regular_calendar(5)
    cfg = SimConfig()
    pol = naive_policy(cal)
    ev = LauncherEvaluator(cal, cfg, workers=1)
    seed = trajectory_seeds(3, (4,), 1)
    got = ev.costs(pol, seed)[0, 0]
    assert got == simulate_horizon(pol, cal, cfg, seed=int(seed[0])).total
    assert monte_carlo_eval(pol, 1, cal, cfg, seed=3).mean == monte_carlo_costs(pol, 1, ev, 3)[0]


def test_duplicated_seeds_duplicate_mean():
    cal = regular_calendar(5)
    ev = LauncherEvaluator(cal, SimConfig(), workers=1)
    pol = naive_policy(cal)
    s = trajectory_seeds(1, (2,), 50)
    a = ev.costs(pol, s).mean()
    b = ev.costs(pol, np.concatenate([s, s])).mean()
    assert a == pytest.approx(b, rel=1e-15)


def test_worker_count_does_not_change_results():
    cal = regular_calendar(6)
    pols = np.stack([naive_policy(cal)] * 3)
    pols[1, 3:] = 1
    seeds = trajectory_seeds(8, (1,), 3 * 40).reshape(3, 40)
    one = LauncherEvaluator(cal, SimConfig(), workers=1).costs(pols, seeds)
    four = LauncherEvaluator(cal, SimConfig(), workers=4).costs(pols, seeds)
    assert np.array_equal(one, four)


def test_evaluator_shape_check():
    ev = LauncherEvaluator(regular_calendar(3), SimConfig())
    with pytest.raises(ValueError):
        ev.costs(np.ones((2, N_STATES), int), trajectory_seeds(0, (0,), 2))


def test_mc_result_interval():
    r = monte_carlo_eval(naive_policy(regular_calendar(5)), 200, regular_calendar(5), SimConfig(), seed=1)
    lo, hi = r.ci95
    assert lo < r.mean < hi
    assert hi - lo == pytest.approx(2 * 1.96 * r.std / math.sqrt(200))


# -- optimizers ----------------------------------------------------------------

def test_zero_iterations_return_p0():
    toy = two_by_two()
    P0 = toy.uniform_tensor()
    for res in (mras_run(MrasParams(K=0), P0, toy, 1), asa_run(AsaParams(K=0), P0, toy, 1)):
        assert np.array_equal(res.P, P0)
        assert res.history == []


def test_mras_invariants_every_iteration():
    toy = two_by_two()
    params = MrasParams(K=60, mu=1e-3)
    seen = []
    prev = {"P": toy.uniform_tensor()}

    def check(row, P):
        check_normalized(P)
        # floor mu, then renormalization by at most 1 + A * mu
        assert P.min() >= params.mu / (1 + P.shape[-1] * params.mu) - 1e-15
        if seen:
            assert row["N"] >= seen[-1]["N"] and row["M"] >= seen[-1]["M"]
            if row["branch"] == "improve":
                assert row["gamma_bar"] <= seen[-1]["gamma_bar"] - params.epsilon
        assert np.isfinite(row["gamma_bar"])
        seen.append(row)
        prev["P"] = P

    res = mras_run(params, toy.uniform_tensor(), toy, 3, on_iteration=check)
    assert len(res.history) == 60
    assert res.history[0]["branch"] == "improve"
    assert {"fail"} <= {h["branch"] for h in res.history}


def test_asa_smoothing_is_convex():
    toy = two_by_two()
    params = AsaParams(K=40, M0=1)
    mins = [toy.uniform_tensor().min()]

    def check(row, P):
        check_normalized(P)
        assert P.min() >= (1 - row["gain"]) * mins[-1] - 1e-15
        mins.append(P.min())

    asa_run(params, toy.uniform_tensor(), toy, 0, on_iteration=check)


@pytest.mark.parametrize("run", ["mras", "asa"])
def test_two_state_toy_recovers_enumerated_optimum(run):
    toy = two_by_two()
    best, cost, runner_up = enumerate_optimum(toy)
    assert runner_up > cost
    fn = mras_run if run == "mras" else asa_run
    params = MrasParams(K=200) if run == "mras" else AsaParams(K=200)
    res = fn(params, toy.uniform_tensor(), toy, 7)
    assert np.array_equal(extract_deterministic_policy(res.P), best)
    assert res.best_cost == cost


def test_runs_are_reproducible():
    toy = two_by_two()
    a = mras_run(MrasParams(K=30), toy.uniform_tensor(), toy, 5)
    b = mras_run(MrasParams(K=30), toy.uniform_tensor(), toy, 5)
    assert np.array_equal(a.P, b.P)


def test_checkpoints_written(tmp_path):
    toy = two_by_two()
    asa_run(AsaParams(K=6), toy.uniform_tensor(), toy, 1, checkpoint_dir=tmp_path, checkpoint_every=3)
    assert sorted(p.name for p in tmp_path.iterdir()) == ["P_00003.lipt", "P_00006.lipt"]


def test_invalid_params_rejected():
    toy = two_by_two()
    with pytest.raises(ValueError):
        mras_run(MrasParams(nu=2.0), toy.uniform_tensor(), toy, 0)
    with pytest.raises(ValueError):
        asa_run(AsaParams(N0=0), toy.uniform_tensor(), toy, 0)


def test_launcher_run_is_short_and_finite():
    b = benchmark_setup()
    ev = LauncherEvaluator(b.calendar, b.config)
    res = asa_run(AsaParams(K=2, N0=4, M0=5), b.initial_tensor(), ev, 1)
    assert len(res.history) == 2 and all(np.isfinite(h["best_cost"]) for h in res.history)
    check_normalized(res.P)
    # actions outside the allowed range keep zero probability
    assert res.P[..., ~b.mask].max() == 0.0


def test_compare_capacities_table():
    cal = regular_calendar(5)
    rows = compare_capacities("asa", AsaParams(K=1, N0=3, M0=3), cal, SimConfig(), 2,
                              eval_samples=30)
    assert [(r.policy, r.srm_capacity) for r in rows] == [
        ("naive", 4), ("optimized", 4), ("naive", 8), ("optimized", 8)]
    assert all(math.isfinite(r.mean) and r.ci_low <= r.mean <= r.ci_high for r in rows)


def test_benchmark_setup():
    b = benchmark_setup()
    assert b.calendar.counts == [1, 2, 4, 11, 10, 10, 10, 10, 10, 10]
    assert b.config.srm_capacity == 8 and b.mask.sum() == 125
    from launchline.mdp import decode_action
    assert {decode_action(int(a)).as_tuple() for a in b.naive[:, 0]} == {(32, 8, 8), (44, 11, 11), (40, 10, 10)}
    assert decode_action(int(b.fixed_rate_policy(12)[6, 0])).as_tuple() == (48, 12, 12)
