"""Compiled event loop for the integration line.

Everything here works on flat arrays so numba can compile it:

* ``s``    int64 state vector, slots named below
* ``acc``  float64[8]: year accumulators (storage, anticipated, unexpected,
           penalty) followed by the same four quantities since process start
* ``rng``  uint64[1] splitmix64 state owned by one trajectory
* ``sched`` int64 scheduled launch ticks, sorted
* ``fp`` / ``ip`` float and integer configuration vectors

Time unit is the half-day tick.
"""

import numpy as np
from numba import njit

NEVER = np.int64(1) << np.int64(62)

# state slots
CLOCK = 0
YEAR = 1
LINE_DONE = 2  # 3 slots: IMC, LLPM, ULPM
LINE_HELD = 5
TAU = 8
STOCK = 11  # IMC, LLPM, ULPM, SRM
B_DONE = 15  # booster docks B1, B2
B_HELD = 17
A_DONE = 19  # AIT docks
A_HELD = 21
LP_PHASE = 23
LP_DONE = 24
LP_START = 25
LP_INT_END = 26
NEXT_LAUNCH = 27
N_LAUNCHED = 28
N_EVENTS = 29
TRACE_POS = 30
NSLOTS = 31

LP_IDLE = 0
LP_BUSY = 1
LP_REPAIR = 2

# integer config slots
IP_YEAR_TICKS = 0
IP_SUB_CAP = 1
IP_SRM_CAP = 2
IP_REPAIR = 3
IP_ANTICIPATION = 4
IP_BLOCK = 5
NIP = 6

# float config slots
FP_PRICE = 0  # IMC, LLPM, ULPM, SRM, CC
FP_ANTICIPATED = 5
FP_UNEXPECTED = 6
FP_PENALTY = 7
NFP = 8

# event kinds
EV_IMC = 0
EV_LLPM = 1
EV_ULPM = 2
EV_SRM = 3
EV_CC = 4
EV_LAUNCH = 5
EV_REPAIRED = 6
EV_UNBLOCK = 7
EV_YEAR_END = 8
EV_LP_LOAD = 9  # trace-only record written when the pad is loaded

# trace columns
TR_CLOCK = 0
TR_KIND = 1
TR_YEAR = 2
TR_STOCK = 3  # 4 columns
TR_CC = 7
TR_LAUNCHED = 8
TR_AUX1 = 9
TR_AUX2 = 10
TR_COST = 11  # cumulative storage, anticipated, unexpected
NTRACE = 14


@njit(cache=True, inline="always")
def next_uniform(rng):
    z = rng[0] + np.uint64(0x9E3779B97F4A7C15)
    rng[0] = z
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    z = z ^ (z >> np.uint64(31))
    return np.float64(z >> np.uint64(11)) * (1.0 / 9007199254740992.0)


@njit(cache=True, inline="always")
def production_days(tau, u):
    if u < 3.0 / 32.0:
        return tau - 2
    if u < 8.0 / 32.0:
        return tau - 1
    if u < 24.0 / 32.0:
        return tau
    if u < 29.0 / 32.0:
        return tau + 1
    return tau + 2


@njit(cache=True, inline="always")
def booster_ticks(u):
    return 10 if u < 0.5 else 11


@njit(cache=True, inline="always")
def ait_ticks(u):
    k = np.int64(u * 3.0)
    if k > 2:
        k = 2
    return 50 + k


@njit(cache=True, inline="always")
def lp_ticks(u):
    return 20 if u < 0.5 else 21


@njit(cache=True)
def init_state(s):
    s[:] = 0
    for k in range(3):
        s[LINE_DONE + k] = NEVER
    for d in range(2):
        s[B_DONE + d] = NEVER
        s[A_DONE + d] = NEVER
    s[LP_DONE] = NEVER
    s[LP_INT_END] = NEVER


@njit(cache=True)
def set_rates(s, taus, rng):
    for k in range(3):
        s[TAU + k] = taus[k]
    # only lines that have never started are idle; busy lines keep their timers
    for k in range(3):
        if s[LINE_DONE + k] == NEVER and s[LINE_HELD + k] == 0:
            s[LINE_DONE + k] = s[CLOCK] + 2 * production_days(s[TAU + k], next_uniform(rng))


@njit(cache=True, inline="always")
def cc_waiting(s):
    return s[A_HELD] + s[A_HELD + 1]


@njit(cache=True, inline="always")
def _record(trace, s, acc, kind, aux1, aux2):
    pos = s[TRACE_POS]
    if pos >= trace.shape[0]:
        return
    trace[pos, TR_CLOCK] = s[CLOCK]
    trace[pos, TR_KIND] = kind
    trace[pos, TR_YEAR] = s[YEAR]
    for k in range(4):
        trace[pos, TR_STOCK + k] = s[STOCK + k]
    trace[pos, TR_CC] = cc_waiting(s)
    trace[pos, TR_LAUNCHED] = s[N_LAUNCHED]
    trace[pos, TR_AUX1] = aux1
    trace[pos, TR_AUX2] = aux2
    for k in range(3):
        trace[pos, TR_COST + k] = acc[4 + k]
    s[TRACE_POS] = pos + 1


@njit(cache=True, inline="always")
def _transfers(s, acc, rng, sched, ip, trace):
    """Apply every enabled resource movement until nothing changes."""
    sub_cap = ip[IP_SUB_CAP]
    srm_cap = ip[IP_SRM_CAP]
    changed = True
    while changed:
        changed = False
        clock = s[CLOCK]
        nl = s[NEXT_LAUNCH]
        # launch pad: 1 CC + 4 SRMs, only once the calendar unblocks the SRM stock
        if (
            s[LP_PHASE] == LP_IDLE
            and nl < sched.shape[0]
            and sched[nl] - clock <= ip[IP_BLOCK]
            and s[STOCK + 3] >= 4
            and cc_waiting(s) > 0
        ):
            d = 0 if s[A_HELD] == 1 else 1
            s[A_HELD + d] = 0
            srm_before = s[STOCK + 3]
            s[STOCK + 3] -= 4
            s[LP_PHASE] = LP_BUSY
            s[LP_START] = clock
            s[LP_INT_END] = clock + lp_ticks(next_uniform(rng))
            s[LP_DONE] = max(s[LP_INT_END], sched[nl])
            _record(trace, s, acc, EV_LP_LOAD, sched[nl], srm_before)
            changed = True
        # finished SRMs waiting in booster docks
        for d in range(2):
            if s[B_HELD + d] == 1 and s[STOCK + 3] < srm_cap:
                s[B_HELD + d] = 0
                s[STOCK + 3] += 1
                changed = True
        for d in range(2):
            if s[B_DONE + d] == NEVER and s[B_HELD + d] == 0 and s[STOCK] > 0:
                s[STOCK] -= 1
                s[B_DONE + d] = clock + booster_ticks(next_uniform(rng))
                changed = True
        # blocked production lines resume as soon as a unit left the warehouse
        for k in range(3):
            if s[LINE_HELD + k] == 1 and s[STOCK + k] < sub_cap:
                s[LINE_HELD + k] = 0
                s[STOCK + k] += 1
                s[LINE_DONE + k] = clock + 2 * production_days(s[TAU + k], next_uniform(rng))
                changed = True
        for d in range(2):
            if (
                s[A_DONE + d] == NEVER
                and s[A_HELD + d] == 0
                and s[STOCK + 1] > 0
                and s[STOCK + 2] > 0
            ):
                s[STOCK + 1] -= 1
                s[STOCK + 2] -= 1
                s[A_DONE + d] = clock + ait_ticks(next_uniform(rng))
                changed = True


@njit(cache=True, inline="always")
def next_event_time(s, sched, ip):
    """(tick, slot) of the earliest pending timer; ties go to the lower slot."""
    best = NEVER
    which = -1
    for k in range(3):
        if s[LINE_DONE + k] < best:
            best = s[LINE_DONE + k]
            which = k
    for d in range(2):
        if s[B_DONE + d] < best:
            best = s[B_DONE + d]
            which = 3 + d
    for d in range(2):
        if s[A_DONE + d] < best:
            best = s[A_DONE + d]
            which = 5 + d
    if s[LP_DONE] < best:
        best = s[LP_DONE]
        which = 7
    nl = s[NEXT_LAUNCH]
    if nl < sched.shape[0]:
        unblock = sched[nl] - ip[IP_BLOCK]
        if unblock > s[CLOCK] and unblock < best:
            best = unblock
            which = 8
    year_end = (s[YEAR] + 1) * ip[IP_YEAR_TICKS]
    if year_end < best:
        best = year_end
        which = 9
    return best, which


@njit(cache=True, inline="always")
def step(s, acc, rng, sched, fp, ip, trace):
    """Advance to the next event, apply it, and return its kind (-1: deadlock)."""
    t, which = next_event_time(s, sched, ip)
    if which < 0:
        return -1
    dt = t - s[CLOCK]
    if dt > 0:
        rate = fp[FP_PRICE + 4] * cc_waiting(s)
        for k in range(4):
            rate += fp[FP_PRICE + k] * s[STOCK + k]
        cost = 0.5 * rate * dt
        acc[0] += cost
        acc[4] += cost
    s[CLOCK] = t
    aux1 = 0
    aux2 = 0
    if which < 3:
        kind = which
        if s[STOCK + which] < ip[IP_SUB_CAP]:
            s[STOCK + which] += 1
            s[LINE_DONE + which] = t + 2 * production_days(s[TAU + which], next_uniform(rng))
        else:
            s[LINE_HELD + which] = 1
            s[LINE_DONE + which] = NEVER
    elif which < 5:
        kind = EV_SRM
        d = which - 3
        s[B_DONE + d] = NEVER
        if s[STOCK + 3] < ip[IP_SRM_CAP]:
            s[STOCK + 3] += 1
        else:
            s[B_HELD + d] = 1
    elif which < 7:
        kind = EV_CC
        d = which - 5
        s[A_DONE + d] = NEVER
        s[A_HELD + d] = 1
    elif which == 7:
        if s[LP_PHASE] == LP_BUSY:
            kind = EV_LAUNCH
            nl = s[NEXT_LAUNCH]
            scheduled = sched[nl]
            late = t - scheduled
            aux1 = scheduled
            if late > 0:
                days = 0.5 * late
                if s[LP_START] > scheduled - ip[IP_ANTICIPATION]:
                    c = days * fp[FP_ANTICIPATED]
                    acc[1] += c
                    acc[5] += c
                    aux2 = 1
                else:
                    c = days * fp[FP_UNEXPECTED]
                    acc[2] += c
                    acc[6] += c
                    aux2 = 2
            s[NEXT_LAUNCH] = nl + 1
            s[N_LAUNCHED] += 1
            s[LP_PHASE] = LP_REPAIR
            s[LP_DONE] = t + ip[IP_REPAIR]
            s[LP_INT_END] = NEVER
        else:
            kind = EV_REPAIRED
            s[LP_PHASE] = LP_IDLE
            s[LP_DONE] = NEVER
    elif which == 8:
        kind = EV_UNBLOCK
    else:
        kind = EV_YEAR_END
    s[N_EVENTS] += 1
    _record(trace, s, acc, kind, aux1, aux2)
    if kind == EV_YEAR_END:
        s[YEAR] += 1
    else:
        _transfers(s, acc, rng, sched, ip, trace)
    return kind


@njit(cache=True, inline="always")
def run_year(s, acc, rng, sched, fp, ip, trace):
    """Run events up to and including the next year boundary."""
    for k in range(4):
        acc[k] = 0.0
    while True:
        kind = step(s, acc, rng, sched, fp, ip, trace)
        if kind == EV_YEAR_END:
            return 0
        if kind < 0:
            return -1


@njit(cache=True, inline="always")
def launches_due(s, sched, ip):
    end = (s[YEAR] + 1) * ip[IP_YEAR_TICKS]
    n = 0
    for q in range(s[NEXT_LAUNCH], sched.shape[0]):
        if sched[q] < end:
            n += 1
        else:
            break
    return n


@njit(cache=True, inline="always")
def aggregate_index(imc, llpm, ulpm, srm, cc, due, sub_cap, srm_cap):
    """0-based dense index of the coded observation (3*3*3*3*3*13 cells)."""
    code = 0
    for x in (imc, llpm, ulpm):
        if x <= 0:
            c = 0
        elif x >= sub_cap:
            c = 2
        else:
            c = 1
        code = code * 3 + c
    if srm < 4:
        c = 0
    elif srm >= srm_cap and srm_cap > 4:
        c = 2
    else:
        c = 1
    code = code * 3 + c
    code = code * 3 + min(max(cc, 0), 2)
    return code * 13 + min(due, 12)


@njit(cache=True, inline="always")
def state_index(s, sched, ip):
    return aggregate_index(
        s[STOCK], s[STOCK + 1], s[STOCK + 2], s[STOCK + 3],
        cc_waiting(s), launches_due(s, sched, ip), ip[IP_SUB_CAP], ip[IP_SRM_CAP],
    )


@njit(cache=True)
def trajectory(policy, taus_table, sched, fp, ip, seed, per_year, trace):
    """Total cost of one run; ``policy[t, i]`` holds 1-based action numbers.

    ``per_year`` (n_years x 4) and ``trace`` are filled when non-empty.
    Returns NaN on deadlock, which must never happen.
    """
    n_years = policy.shape[0]
    s = np.empty(NSLOTS, np.int64)
    init_state(s)
    acc = np.zeros(8)
    rng = np.empty(1, np.uint64)
    rng[0] = seed
    total = 0.0
    for y in range(n_years):
        i = state_index(s, sched, ip)
        a = policy[y, i] - 1
        set_rates(s, taus_table[a], rng)
        if run_year(s, acc, rng, sched, fp, ip, trace) < 0:
            return np.nan
        if y == n_years - 1:
            acc[3] = (sched.shape[0] - s[NEXT_LAUNCH]) * fp[FP_PENALTY]
        total += acc[0] + acc[1] + acc[2] + acc[3]
        if per_year.shape[0] > 0:
            for k in range(4):
                per_year[y, k] = acc[k]
    return total


@njit(cache=True, nogil=True)
def batch(policies, taus_table, sched, fp, ip, seeds, out, lo, hi):
    """Fill ``out.flat[lo:hi]`` with trajectory totals; ``out`` is (N, M)."""
    m_count = seeds.shape[1]
    empty_years = np.empty((0, 4))
    empty_trace = np.empty((0, NTRACE))
    for q in range(lo, hi):
        n = q // m_count
        m = q - n * m_count
        out[n, m] = trajectory(
            policies[n], taus_table, sched, fp, ip, seeds[n, m], empty_years, empty_trace
        )
