import numpy as np
import pytest
from invariants import check_trace
from scipy import stats

from launchline import _kernel as K
from launchline.calendar import build_calendar, calendar_from_counts, regular_calendar
from launchline.mdp import N_STATES, aggregate, naive_policy
from launchline.simulator import (
    CostBreakdown,
    DeadlockError,
    EventKind,
    GridError,
    RatesDecision,
    SimConfig,
    advance_to_next_event,
    classify_lateness,
    lateness_cost,
    mean_production_time,
    new_state,
    operating_ticks_from_uniform,
    production_time_from_uniform,
    sample_operating_time,
    set_rates,
    simulate_horizon,
    simulate_year,
)


@pytest.mark.parametrize("rate, days", [(12, 21), (24, 10), (48, 5), (10, 26), (40, 6), (6, 43)])
def test_mean_production_time(rate, days):
    assert mean_production_time(rate) == days


def test_mean_production_time_domain():
    with pytest.raises(ValueError):
        mean_production_time(0)


@pytest.mark.parametrize("u, days", [
    (0.05, 19), (0.5, 21), (3 / 32, 20), (8 / 32 - 1e-12, 20), (8 / 32, 21),
    (24 / 32, 22), (29 / 32, 23), (0.9999, 23),
])
def test_production_time_buckets(u, days):
    assert production_time_from_uniform(21, u) == days


def test_production_time_domain():
    with pytest.raises(ValueError):
        production_time_from_uniform(2, 0.5)


def test_production_time_mean(rng):
    u = rng.random(1_000_000)
    d = np.array([K.production_days(21, x) for x in u[:200_000]])
    assert abs(d.mean() - 21) < 0.02


@pytest.mark.parametrize("shop, u, ticks", [
    ("booster", 0.3, 10), ("booster", 0.7, 11),
    ("ait", 0.1, 50), ("ait", 0.5, 51), ("ait", 0.9, 52),
    ("lp", 0.2, 20), ("lp", 0.8, 21),
])
def test_operating_times(shop, u, ticks):
    assert operating_ticks_from_uniform(shop, u) == ticks


def test_operating_time_lp_mean(rng):
    x = np.array([sample_operating_time("lp", rng) for _ in range(100_000)])
    assert abs(x.mean() - 20.5) < 0.01


def test_unknown_workshop():
    with pytest.raises(ValueError):
        operating_ticks_from_uniform("paint", 0.5)


def test_kernel_uniforms_are_uniform():
    rng = np.array([np.uint64(99)], dtype=np.uint64)
    u = np.array([K.next_uniform(rng) for _ in range(100_000)])
    assert u.min() >= 0 and u.max() < 1
    assert stats.kstest(u, "uniform").pvalue > 0.001


def test_rates_grid():
    RatesDecision(40, 10, 10)
    with pytest.raises(GridError):
        RatesDecision(25, 10, 10)
    with pytest.raises(GridError):
        RatesDecision(40, 13, 10)


@pytest.mark.parametrize("decision, taus", [((40, 10, 10), (6, 26, 26)), ((24, 6, 6), (10, 43, 43))])
def test_set_rates(decision, taus):
    st = new_state(SimConfig(), regular_calendar(2))
    set_rates(st, RatesDecision(*decision))
    assert st.taus == taus


def test_set_rates_needs_year_boundary():
    st = new_state(SimConfig(), regular_calendar(2))
    set_rates(st, RatesDecision(40, 10, 10))
    advance_to_next_event(st)
    with pytest.raises(ValueError):
        set_rates(st, RatesDecision(40, 10, 10))


def test_set_rates_off_grid():
    st = new_state(SimConfig(), regular_calendar(2))
    with pytest.raises(GridError):
        set_rates(st, (25, 10, 10))


def test_first_event_is_production():
    st = new_state(SimConfig(), regular_calendar(2), seed=3)
    set_rates(st, RatesDecision(40, 10, 10))
    timers = st.s[K.LINE_DONE:K.LINE_DONE + 3].copy()
    _, kind = advance_to_next_event(st)
    assert kind in (EventKind.IMC_PRODUCED, EventKind.LLPM_PRODUCED, EventKind.ULPM_PRODUCED)
    assert st.clock == timers.min()


def _run_until(st, pred, limit=100_000):
    for _ in range(limit):
        _, kind = advance_to_next_event(st)
        if pred(st, kind):
            return kind
        if kind == EventKind.YEAR_END:
            set_rates(st, RatesDecision(48, 12, 12))
    raise AssertionError("condition never reached")


def test_full_srm_stock_holds_booster_dock():
    # one launch far away: SRMs pile up and both docks end up holding
    cal = calendar_from_counts([1], explicit=True)
    st = new_state(SimConfig(srm_capacity=4), cal, seed=1)
    set_rates(st, RatesDecision(48, 12, 12))
    _run_until(st, lambda s, k: s.s[K.B_HELD] == 1)
    assert st.stocks["SRM"] == 4
    # B1 keeps its finished SRM and starts nothing new until the pad takes SRMs
    while st.stocks["SRM"] == 4:
        assert st.s[K.B_HELD] == 1 and st.s[K.B_DONE] == K.NEVER
        advance_to_next_event(st)
    assert st.stocks["SRM"] <= 4


def test_repair_lasts_ten_ticks():
    cal = regular_calendar(2)
    st = new_state(SimConfig(), cal, seed=4)
    set_rates(st, RatesDecision(48, 12, 12))
    _run_until(st, lambda s, k: k == EventKind.LAUNCH)
    t = st.clock
    _run_until(st, lambda s, k: k == EventKind.LP_REPAIRED)
    assert st.clock - t == 10


@pytest.mark.parametrize("start, launch, kind, days, cost", [
    (-32, 2, "unexpected", 1.0, 80.13),
    (-16, 4, "anticipated", 2.0, 90.38),
    (-30, 0, "none", 0.0, 0.0),
    (-20, 1, "unexpected", 0.5, 40.065),
    (-19, 1, "anticipated", 0.5, 22.595),
])
def test_classify_lateness(start, launch, kind, days, cost):
    sched = 1000
    k, d = classify_lateness(sched + start, sched, sched + launch)
    assert (k, d) == (kind, days)
    assert lateness_cost(k, d) == pytest.approx(cost)


def test_classify_lateness_rejects_inverted_times():
    with pytest.raises(ValueError):
        classify_lateness(10, 20, 5)


def test_no_stock_no_launch_costs_nothing():
    # before the first unit is produced nothing is stored and nothing is late
    cal = calendar_from_counts([1], explicit=True)
    st = new_state(SimConfig(), cal)
    set_rates(st, RatesDecision(24, 6, 6))
    advance_to_next_event(st)
    assert st.acc[:4].sum() == 0.0
    _, obs, costs = simulate_year(new_state(SimConfig(), cal), RatesDecision(24, 6, 6), final=True)
    assert costs.storage > 0 and costs.penalty == 0
    assert obs.launches_due == 0


def test_year_costs_nonnegative_and_sum():
    cal = build_calendar(8, np.random.default_rng(2))
    cfg = SimConfig()
    st = new_state(cfg, cal, seed=11)
    total = 0.0
    for y in range(8):
        _, obs, c = simulate_year(st, RatesDecision(40, 10, 10), final=y == 7)
        assert min(c.storage, c.anticipated_lateness, c.unexpected_lateness, c.penalty) >= 0
        total += c.total
        assert st.launches_performed + len(st.backlog) == cal.total_launches
    assert total > 0


def test_stepwise_matches_compiled_horizon():
    cal = build_calendar(6, np.random.default_rng(8))
    cfg = SimConfig(srm_capacity=4)
    pol = np.random.default_rng(0).integers(1, 344, (6, N_STATES))
    ref = simulate_horizon(pol, cal, cfg, seed=21)
    st = new_state(cfg, cal, seed=21)
    per_year = []
    from launchline.mdp import decode_action
    for y in range(6):
        a = pol[y, aggregate(st.observe(), cfg) - 1]
        _, _, c = simulate_year(st, decode_action(int(a)), final=y == 5)
        per_year.append(c)
    assert per_year == ref.per_year
    assert sum(c.total for c in per_year) == pytest.approx(ref.total, rel=1e-12)


def test_missed_launch_penalty():
    # rates too low for 12 launches in one year: the backlog is charged 1e7 each
    cal = calendar_from_counts([12], explicit=True)
    cfg = SimConfig()
    pol = np.full((1, N_STATES), 1)
    res = simulate_horizon(pol, cal, cfg, seed=0)
    missed = res.per_year[0].penalty / 1e7
    assert missed == int(missed) and missed >= 2
    st = new_state(cfg, cal, seed=0)
    simulate_year(st, RatesDecision(24, 6, 6), final=True)
    assert st.year_costs[0].penalty == 1e7 * len(st.backlog)


def test_all_launches_done_no_penalty():
    cal = regular_calendar(6)
    res = simulate_horizon(naive_policy(cal), cal, SimConfig(), seed=1)
    assert res.per_year[-1].penalty == 0


def test_determinism():
    cal = build_calendar(30, np.random.default_rng(4))
    pol = naive_policy(cal)
    a = simulate_horizon(pol, cal, SimConfig(), seed=77, trace=True)
    b = simulate_horizon(pol, cal, SimConfig(), seed=77, trace=True)
    assert a.total == b.total
    np.testing.assert_array_equal(a.trace, b.trace)
    c = simulate_horizon(pol, cal, SimConfig(), seed=78)
    assert c.total != a.total


def test_policy_shape_checked():
    cal = regular_calendar(3)
    with pytest.raises(ValueError):
        simulate_horizon(np.ones((2, N_STATES), int), cal, SimConfig())
    with pytest.raises(ValueError):
        simulate_horizon(np.zeros((3, N_STATES), int), cal, SimConfig())


def test_trace_invariants_small_sample():
    for seed in range(20):
        rng = np.random.default_rng(seed)
        cal = build_calendar(30, rng)
        cap = (4, 8)[seed % 2]
        pol = rng.integers(1, 344, (30, N_STATES))
        res = simulate_horizon(pol, cal, SimConfig(srm_capacity=cap), seed=seed, trace=True)
        assert check_trace(res.trace, 30, cal.absolute_ticks(), cap) == []


def test_trace_costs_match_totals():
    cal = build_calendar(10, np.random.default_rng(6))
    res = simulate_horizon(naive_policy(cal), cal, SimConfig(), seed=2, trace=True)
    last = res.trace[-1, K.TR_COST:K.TR_COST + 3].sum()
    non_penalty = sum(c.total - c.penalty for c in res.per_year)
    assert last == pytest.approx(non_penalty, rel=1e-12)


def test_config_round_trip_and_validation(tmp_path):
    cfg = SimConfig(srm_capacity=4)
    p = tmp_path / "cfg.json"
    cfg.save(p)
    assert SimConfig.load(p) == cfg
    with pytest.raises(ValueError):
        SimConfig(srm_capacity=6)
    with pytest.raises(ValueError):
        SimConfig(missed_launch_penalty=0)
    p.write_text('{"srm_capacity": 8, "colour": "red"}')
    with pytest.raises(ValueError):
        SimConfig.load(p)


def test_cost_breakdown_total():
    assert CostBreakdown(1, 2, 3, 4).total == 10


def test_deadlock_error_is_runtime_error():
    assert issubclass(DeadlockError, RuntimeError)
