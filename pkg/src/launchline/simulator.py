"""Event-driven simulation of the launcher integration line.

The line runs at half-day resolution. Three production lines feed the IMC,
LLPM and ULPM warehouses; two booster docks turn IMCs into SRMs; two AIT docks
turn an LLPM/ULPM pair into a central core (CC) that waits in its dock; the
launch pad integrates one CC with four SRMs and launches no earlier than the
calendar date, then spends five days in repair.

The hot loop lives in :mod:`launchline._kernel`; this module exposes typed
wrappers and the per-year / per-horizon drivers.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from enum import IntEnum
from pathlib import Path

import numpy as np

from . import _kernel as K
from .calendar import Calendar

IMC_RATES = tuple(range(24, 49, 4))
PM_RATES = tuple(range(6, 13))
TICKS_PER_DAY = 2


class EventKind(IntEnum):
    IMC_PRODUCED = K.EV_IMC
    LLPM_PRODUCED = K.EV_LLPM
    ULPM_PRODUCED = K.EV_ULPM
    SRM_PRODUCED = K.EV_SRM
    CC_PRODUCED = K.EV_CC
    LAUNCH = K.EV_LAUNCH
    LP_REPAIRED = K.EV_REPAIRED
    SRM_UNBLOCKED = K.EV_UNBLOCK
    YEAR_END = K.EV_YEAR_END
    LP_LOADED = K.EV_LP_LOAD


class DeadlockError(RuntimeError):
    pass


class GridError(ValueError):
    pass


@dataclass(frozen=True)
class RatesDecision:
    imc_rate: int
    llpm_rate: int
    ulpm_rate: int

    def __post_init__(self):
        if (
            self.imc_rate not in IMC_RATES
            or self.llpm_rate not in PM_RATES
            or self.ulpm_rate not in PM_RATES
        ):
            raise GridError(f"rates off the decision grid: {self.as_tuple()}")

    def as_tuple(self) -> tuple[int, int, int]:
        return (self.imc_rate, self.llpm_rate, self.ulpm_rate)


@dataclass
class SimConfig:
    srm_capacity: int = 8
    sub_capacity: int = 4
    workdays_per_year: int = 261
    storage_prices: dict = field(
        default_factory=lambda: {"IMC": 2.6, "LLPM": 55.94, "ULPM": 35.59, "SRM": 8.08, "CC": 100.0}
    )
    lateness_prices: dict = field(
        default_factory=lambda: {"anticipated": 45.19, "unexpected": 80.13}
    )
    lp_repair_days: float = 5
    anticipation_window_days: float = 10
    srm_block_threshold_days: float = 10
    missed_launch_penalty: float = 10_000_000.0

    def __post_init__(self):
        if self.srm_capacity not in (4, 8):
            raise ValueError(f"srm_capacity must be 4 or 8, got {self.srm_capacity}")
        prices = list(self.storage_prices.values()) + list(self.lateness_prices.values())
        if any(p <= 0 for p in prices) or self.missed_launch_penalty <= 0:
            raise ValueError("all prices must be positive")
        missing = {"IMC", "LLPM", "ULPM", "SRM", "CC"} - set(self.storage_prices)
        if missing:
            raise ValueError(f"storage_prices missing {sorted(missing)}")
        if {"anticipated", "unexpected"} - set(self.lateness_prices):
            raise ValueError("lateness_prices needs 'anticipated' and 'unexpected'")

    @property
    def year_ticks(self) -> int:
        return TICKS_PER_DAY * self.workdays_per_year

    def with_capacity(self, srm_capacity: int) -> "SimConfig":
        doc = asdict(self)
        doc["srm_capacity"] = srm_capacity
        return SimConfig(**doc)

    def int_params(self) -> np.ndarray:
        ip = np.zeros(K.NIP, np.int64)
        ip[K.IP_YEAR_TICKS] = self.year_ticks
        ip[K.IP_SUB_CAP] = self.sub_capacity
        ip[K.IP_SRM_CAP] = self.srm_capacity
        ip[K.IP_REPAIR] = round(TICKS_PER_DAY * self.lp_repair_days)
        ip[K.IP_ANTICIPATION] = round(TICKS_PER_DAY * self.anticipation_window_days)
        ip[K.IP_BLOCK] = round(TICKS_PER_DAY * self.srm_block_threshold_days)
        return ip

    def float_params(self) -> np.ndarray:
        sp = self.storage_prices
        return np.array(
            [sp["IMC"], sp["LLPM"], sp["ULPM"], sp["SRM"], sp["CC"],
             self.lateness_prices["anticipated"], self.lateness_prices["unexpected"],
             self.missed_launch_penalty],
            dtype=float,
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(asdict(self), indent=2) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "SimConfig":
        doc = json.loads(Path(path).read_text())
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown SimConfig fields: {sorted(unknown)}")
        return cls(**doc)


@dataclass(frozen=True)
class ObservedState:
    imc_stock: int
    llpm_stock: int
    ulpm_stock: int
    srm_stock: int
    cc_waiting: int
    launches_due: int


@dataclass(frozen=True)
class CostBreakdown:
    storage: float = 0.0
    anticipated_lateness: float = 0.0
    unexpected_lateness: float = 0.0
    penalty: float = 0.0

    @property
    def total(self) -> float:
        return self.storage + self.anticipated_lateness + self.unexpected_lateness + self.penalty


def mean_production_time(rate: int, workdays: int = 261) -> int:
    """Mean production time in days for a yearly target rate."""
    if rate < 1:
        raise ValueError(f"rate must be >= 1, got {rate}")
    return workdays // rate


def production_time_from_uniform(tau: int, u: float) -> int:
    if tau < 3:
        raise ValueError(f"tau must be >= 3, got {tau}")
    return int(K.production_days(tau, u))


def sample_production_time(tau: int, rng: np.random.Generator) -> int:
    return production_time_from_uniform(tau, rng.random())


_OPERATING = {"booster": K.booster_ticks, "ait": K.ait_ticks, "lp": K.lp_ticks}


def operating_ticks_from_uniform(workshop: str, u: float) -> int:
    try:
        return int(_OPERATING[workshop](u))
    except KeyError:
        raise ValueError(f"unknown workshop {workshop!r}") from None


def sample_operating_time(workshop: str, rng: np.random.Generator) -> int:
    """Operating time in half-day ticks for ``booster``, ``ait`` or ``lp``."""
    return operating_ticks_from_uniform(workshop, rng.random())


def classify_lateness(lp_start: int, scheduled: int, actual_launch: int,
                      anticipation_ticks: int = 20) -> tuple[str, float]:
    """Lateness kind and length in days; all arguments are ticks."""
    if actual_launch < lp_start:
        raise ValueError("launch cannot precede the pad start")
    if actual_launch <= scheduled:
        return "none", 0.0
    days = (actual_launch - scheduled) / TICKS_PER_DAY
    if lp_start > scheduled - anticipation_ticks:
        return "anticipated", days
    return "unexpected", days


def lateness_cost(kind: str, days: float, config: SimConfig | None = None) -> float:
    if kind == "none":
        return 0.0
    prices = (config or SimConfig()).lateness_prices
    return days * prices[kind]


def taus_table(workdays: int = 261) -> np.ndarray:
    """Mean production days per action, rows in action order (imc major)."""
    rows = [
        (workdays // a, workdays // b, workdays // c)
        for a in IMC_RATES for b in PM_RATES for c in PM_RATES
    ]
    return np.asarray(rows, dtype=np.int64)


class SimState:
    """One trajectory's mutable state: line timers, stocks, docks, pad, costs.

    The state owns its random stream, so stepping two states in any
    interleaving gives the same result as stepping each alone.
    """

    def __init__(self, config: SimConfig, calendar: Calendar, seed: int = 0,
                 trace_capacity: int = 0):
        self.config = config
        self.calendar = calendar
        self.sched = calendar.absolute_ticks(config.workdays_per_year)
        self.fp = config.float_params()
        self.ip = config.int_params()
        self.s = np.empty(K.NSLOTS, np.int64)
        K.init_state(self.s)
        self.acc = np.zeros(8)
        self.rng = np.array([np.uint64(seed)], dtype=np.uint64)
        self.trace = np.zeros((trace_capacity, K.NTRACE))
        self.year_costs: list[CostBreakdown] = []

    def copy(self) -> "SimState":
        other = object.__new__(SimState)
        other.__dict__.update(self.__dict__)
        for name in ("s", "acc", "rng", "trace"):
            setattr(other, name, getattr(self, name).copy())
        other.year_costs = list(self.year_costs)
        return other

    @property
    def clock(self) -> int:
        return int(self.s[K.CLOCK])

    @property
    def year(self) -> int:
        """0-based index of the year in progress."""
        return int(self.s[K.YEAR])

    @property
    def stocks(self) -> dict[str, int]:
        names = ("IMC", "LLPM", "ULPM", "SRM")
        return {n: int(self.s[K.STOCK + k]) for k, n in enumerate(names)}

    @property
    def taus(self) -> tuple[int, int, int]:
        return tuple(int(self.s[K.TAU + k]) for k in range(3))

    @property
    def cc_waiting(self) -> int:
        return int(K.cc_waiting(self.s))

    @property
    def launches_performed(self) -> int:
        return int(self.s[K.N_LAUNCHED])

    @property
    def backlog(self) -> np.ndarray:
        """Scheduled ticks of launches not yet performed."""
        return self.sched[self.s[K.NEXT_LAUNCH]:]

    @property
    def lp_phase(self) -> str:
        return ("idle", "busy", "repairing")[int(self.s[K.LP_PHASE])]

    @property
    def n_events(self) -> int:
        return int(self.s[K.N_EVENTS])

    def trace_rows(self) -> np.ndarray:
        return self.trace[: self.s[K.TRACE_POS]]

    def observe(self) -> ObservedState:
        st = self.stocks
        return ObservedState(
            st["IMC"], st["LLPM"], st["ULPM"], st["SRM"], self.cc_waiting,
            int(K.launches_due(self.s, self.sched, self.ip)),
        )

    def at_year_boundary(self) -> bool:
        return self.clock == self.year * self.config.year_ticks


def new_state(config: SimConfig, calendar: Calendar, seed: int = 0,
              trace_capacity: int = 0) -> SimState:
    return SimState(config, calendar, seed, trace_capacity)


def set_rates(state: SimState, decision: RatesDecision) -> SimState:
    if not isinstance(decision, RatesDecision):
        decision = RatesDecision(*decision)
    if not state.at_year_boundary():
        raise ValueError("rates may only change at a year boundary")
    w = state.config.workdays_per_year
    taus = np.array([mean_production_time(r, w) for r in decision.as_tuple()], np.int64)
    K.set_rates(state.s, taus, state.rng)
    return state


def advance_to_next_event(state: SimState) -> tuple[SimState, EventKind]:
    kind = K.step(state.s, state.acc, state.rng, state.sched, state.fp, state.ip, state.trace)
    if kind < 0:
        raise DeadlockError(f"no pending event at tick {state.clock}")
    return state, EventKind(kind)


def _year_breakdown(acc: np.ndarray) -> CostBreakdown:
    return CostBreakdown(float(acc[0]), float(acc[1]), float(acc[2]), float(acc[3]))


def simulate_year(state: SimState, decision: RatesDecision,
                  final: bool = False) -> tuple[SimState, ObservedState, CostBreakdown]:
    """Run one year under ``decision``.

    With ``final`` the missed-launch penalty for the remaining backlog is
    booked into this year.
    """
    if state.year >= state.calendar.horizon_years:
        raise ValueError("horizon already exhausted")
    set_rates(state, decision)
    rc = K.run_year(state.s, state.acc, state.rng, state.sched, state.fp, state.ip, state.trace)
    if rc < 0:
        raise DeadlockError(f"no pending event at tick {state.clock}")
    if final:
        state.acc[3] = len(state.backlog) * state.config.missed_launch_penalty
    costs = _year_breakdown(state.acc)
    state.year_costs.append(costs)
    return state, state.observe(), costs


def check_policy_shape(policy: np.ndarray, calendar: Calendar, n_states: int) -> np.ndarray:
    policy = np.asarray(policy)
    if policy.shape != (calendar.horizon_years, n_states):
        raise ValueError(
            f"policy shape {policy.shape} does not match (horizon, states) "
            f"= ({calendar.horizon_years}, {n_states})"
        )
    if policy.min() < 1 or policy.max() > len(IMC_RATES) * len(PM_RATES) ** 2:
        raise ValueError("policy entries must be action numbers in [1, 343]")
    return np.ascontiguousarray(policy, dtype=np.int64)


@dataclass
class HorizonResult:
    total: float
    per_year: list[CostBreakdown]
    trace: np.ndarray | None = None


def simulate_horizon(policy: np.ndarray, calendar: Calendar, config: SimConfig,
                     seed: int = 0, trace: bool = False) -> HorizonResult:
    """Run the full horizon, choosing each year's rates from ``policy``.

    ``policy[t, i]`` is the 1-based action number for aggregated state
    ``i + 1`` in year ``t + 1``.
    """
    from .mdp import N_STATES

    policy = check_policy_shape(policy, calendar, N_STATES)
    per_year = np.zeros((calendar.horizon_years, 4))
    tr = np.zeros((trace_capacity(calendar.horizon_years) if trace else 0, K.NTRACE))
    total = K.trajectory(
        policy, taus_table(config.workdays_per_year),
        calendar.absolute_ticks(config.workdays_per_year),
        config.float_params(), config.int_params(), np.uint64(seed), per_year, tr,
    )
    if np.isnan(total):
        raise DeadlockError("trajectory reached a state with no pending event")
    rows = [CostBreakdown(*map(float, r)) for r in per_year]
    if trace:
        tr = _trim_trace(tr)
        if np.count_nonzero(tr[:, K.TR_KIND] == K.EV_YEAR_END) != calendar.horizon_years:
            raise RuntimeError("trace buffer overflowed")
    return HorizonResult(float(total), rows, tr if trace else None)


def trace_capacity(horizon_years: int) -> int:
    # fastest lines give < 100 IMCs and 105 SRMs a year; 800 rows is ample
    return 800 * horizon_years


def _trim_trace(tr: np.ndarray) -> np.ndarray:
    # rows are written in order; the last year-end row closes the trajectory
    ends = np.flatnonzero(tr[:, K.TR_KIND] == K.EV_YEAR_END)
    return tr[: ends[-1] + 1] if len(ends) else tr[:0]


TRACE_COLUMNS = (
    "tick", "event", "year", "imc", "llpm", "ulpm", "srm", "cc_waiting",
    "launched", "aux1", "aux2", "storage_cost", "anticipated_cost", "unexpected_cost",
)
