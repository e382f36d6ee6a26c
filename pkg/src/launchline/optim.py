"""Monte Carlo policy evaluation and the MRAS / ASA policy optimizers.

Both optimizers reshape a probability tensor ``P[t, i, j]`` over actions by
sampling whole policies, scoring them by simulation, and moving ``P`` towards
an importance-weighted empirical distribution of the sampled actions. Every
weight is handled in the log domain.

Random streams are derived from the master seed with
:class:`numpy.random.SeedSequence` and a purpose tag, so policy draws and
trajectory noise are reproducible independently of each other and of the
number of worker threads.
"""

from __future__ import annotations

import json
import logging
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Callable, Protocol

import numpy as np

from . import _kernel as K
from .calendar import STARTUP_COUNTS, Calendar, regular_calendar
from .logprob import AllZeroWeights, normalize_weights
from .mdp import (
    N_STATES,
    PolicySampler,
    action_mask,
    check_normalized,
    encode_action,
    extract_deterministic_policy,
    log_f_mix_batch,
    naive_policy,
    save_tensor,
    uniform_tensor,
    warm_start_tensor,
)
from .simulator import SimConfig, check_policy_shape, taus_table

log = logging.getLogger(__name__)

# purpose tags for seed derivation
STREAM_DRAW = 1
STREAM_EVAL = 2
STREAM_REEVAL = 3
STREAM_FINAL = 4


def _ceil(x: float) -> int:
    # 1.02 * 100 is 102.00000000000001 in binary floating point
    return math.ceil(round(x, 9))


def trajectory_seeds(master_seed: int, key: tuple[int, ...], count: int) -> np.ndarray:
    ss = np.random.SeedSequence([master_seed, *key])
    return ss.generate_state(count, np.uint64)


def stream(master_seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([master_seed, *key]))


def default_workers() -> int:
    return max(1, int(os.environ.get("LAUNCHLINE_WORKERS", "1")))


class Evaluator(Protocol):
    shape: tuple[int, int]

    def costs(self, policies: np.ndarray, seeds: np.ndarray) -> np.ndarray:
        """Trajectory costs, shape ``seeds.shape``, for ``policies[n]``."""

    def mean_costs(self, policies: np.ndarray, M: int, master_seed: int,
                   key: tuple[int, ...]) -> np.ndarray:
        """Mean of ``M`` trajectory costs per policy, seeds derived from ``key``."""


class SeededMeans:
    def mean_costs(self, policies, M, master_seed, key):
        seeds = trajectory_seeds(master_seed, key, len(policies) * M)
        return self.costs(policies, seeds.reshape(len(policies), M)).mean(axis=1)


class LauncherEvaluator(SeededMeans):
    """Runs the compiled simulator for batches of policies on a thread pool."""

    def __init__(self, calendar: Calendar, config: SimConfig, workers: int | None = None):
        self.calendar = calendar
        self.config = config
        self.workers = workers or default_workers()
        self.shape = (calendar.horizon_years, N_STATES)
        self._args = (
            taus_table(config.workdays_per_year),
            calendar.absolute_ticks(config.workdays_per_year),
            config.float_params(),
            config.int_params(),
        )

    def costs(self, policies: np.ndarray, seeds: np.ndarray) -> np.ndarray:
        policies = np.ascontiguousarray(policies, dtype=np.int64)
        seeds = np.ascontiguousarray(seeds, dtype=np.uint64)
        if policies.ndim == 2:
            policies = policies[None]
        if seeds.ndim == 1:
            seeds = seeds[None]
        if policies.shape[1:] != self.shape:
            raise ValueError(f"policies of shape {policies.shape[1:]}, expected {self.shape}")
        out = np.empty(seeds.shape)
        total = seeds.size
        if self.workers <= 1 or total < 2 * self.workers:
            K.batch(policies, *self._args, seeds, out, 0, total)
        else:
            # contiguous chunks; each slot of ``out`` is written by exactly one task
            n_chunks = 4 * self.workers
            bounds = np.linspace(0, total, n_chunks + 1).astype(int)
            with ThreadPoolExecutor(self.workers) as pool:
                jobs = [
                    pool.submit(K.batch, policies, *self._args, seeds, out, lo, hi)
                    for lo, hi in zip(bounds[:-1], bounds[1:]) if hi > lo
                ]
                for j in jobs:
                    j.result()
        if np.isnan(out).any():
            raise RuntimeError("simulator deadlocked on at least one trajectory")
        return out


@dataclass
class McResult:
    mean: float
    std: float
    samples: int

    @property
    def stderr(self) -> float:
        return self.std / math.sqrt(self.samples) if self.samples > 1 else math.inf

    @property
    def ci95(self) -> tuple[float, float]:
        h = 1.96 * self.stderr
        return (self.mean - h, self.mean + h)


def monte_carlo_costs(pi: np.ndarray, M: int, evaluator: Evaluator, master_seed: int,
                      key: tuple[int, ...] = (STREAM_FINAL,)) -> np.ndarray:
    if M < 1:
        raise ValueError("M must be >= 1")
    seeds = trajectory_seeds(master_seed, key, M)
    return evaluator.costs(pi, seeds)[0]


def monte_carlo_eval(pi: np.ndarray, M: int, calendar: Calendar, config: SimConfig,
                     seed: int, workers: int | None = None) -> McResult:
    """Mean total cost of policy ``pi`` over ``M`` independent trajectories."""
    pi = check_policy_shape(pi, calendar, N_STATES)
    ev = LauncherEvaluator(calendar, config, workers)
    c = monte_carlo_costs(pi, M, ev, seed)
    return McResult(float(c.mean()), float(c.std(ddof=1)) if M > 1 else 0.0, M)


def threshold_I(x: float, chi: float, epsilon: float) -> float:
    """1 at or below ``chi``, linear down to 0 at ``chi + epsilon``."""
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    if x <= chi:
        return 1.0
    if x >= chi + epsilon:
        return 0.0
    return (chi + epsilon - x) / epsilon


def quantile_index(rho: float, N: int) -> int:
    """1-based position ``ceil((1 - rho) N)`` in the descending order, clamped."""
    return min(max(_ceil((1.0 - rho) * N), 1), N)


def elite_quantile(costs, rho: float, N: int | None = None,
                   return_order: bool = False):
    """Cost at position ``ceil((1 - rho) N)`` of the costs sorted descending."""
    costs = np.asarray(costs, dtype=float)
    if costs.size == 0:
        raise ValueError("empty cost list")
    N = costs.size if N is None else N
    if N != costs.size:
        raise ValueError(f"N={N} but {costs.size} costs")
    order = np.argsort(-costs, kind="stable")
    value = float(costs[order[quantile_index(rho, N) - 1]])
    return (value, order) if return_order else value


# -- parameters --------------------------------------------------------------

@dataclass
class MrasParams:
    N0: int = 100
    M0: int = 1000
    rho0: float = 0.25
    epsilon: float = 1.0
    alpha: float = 1.02
    beta: float = 1.0205
    lam: float = 0.4
    nu: float = 0.5
    mu: float = 1e-8
    K: int = 100

    def validate(self) -> "MrasParams":
        problems = []
        if self.N0 < 2:
            problems.append("N0 >= 2")
        if self.M0 < 1:
            problems.append("M0 >= 1")
        if not 0 < self.rho0 <= 1:
            problems.append("rho0 in (0, 1]")
        if self.epsilon <= 0:
            problems.append("epsilon > 0")
        if self.alpha <= 1:
            problems.append("alpha > 1")
        if self.beta <= 1:
            problems.append("beta > 1")
        if not 0 < self.lam < 1:
            problems.append("lambda in (0, 1)")
        if not 0 < self.nu <= 1:
            problems.append("nu in (0, 1]")
        if self.mu < 0:
            problems.append("mu >= 0")
        if self.K < 0:
            problems.append("K >= 0")
        if problems:
            raise ValueError("invalid MRAS parameters, need: " + ", ".join(problems))
        return self


@dataclass
class AsaParams:
    N0: int = 100
    M0: int = 5000
    T0: float = 2.0
    K: int = 100
    gain_exponent: float = 0.501
    explore_exponent: float = 0.5

    def validate(self) -> "AsaParams":
        if self.N0 < 1 or self.M0 < 1 or self.T0 <= 0 or self.K < 0:
            raise ValueError("invalid ASA parameters, need N0 > 0, M0 > 0, T0 > 0, K >= 0")
        return self

    def temperature(self, k: int) -> float:
        return self.T0 / math.log(k + math.e)

    def gain(self, k: int) -> float:
        # alpha_0 = 100^-e and alpha_{k+1} = (k + 100)^-e
        return (max(k - 1, 0) + 100) ** -self.gain_exponent

    def exploration(self, k: int) -> float:
        return 1.0 if k == 0 else k ** -self.explore_exponent

    def samples(self, k: int) -> int:
        if k <= 1:
            return self.M0
        return max(self.M0, int(1.10 * math.log(k) ** 3))

    def policies(self, k: int) -> int:
        return max(self.N0, int(k ** 0.501)) if k >= 1 else self.N0


def load_params(path: str | Path | None, algo: str):
    cls = MrasParams if algo == "mras" else AsaParams
    if path is None:
        return cls()
    doc = json.loads(Path(path).read_text())
    if "lambda" in doc:
        doc["lam"] = doc.pop("lambda")
    known = {f.name for f in fields(cls)}
    unknown = set(doc) - known
    if unknown:
        raise ValueError(f"unknown {algo} parameters: {sorted(unknown)}")
    for f in fields(cls):
        if f.name in doc:
            v = doc[f.name]
            want = int if f.type in (int, "int") else float
            if isinstance(v, bool) or not isinstance(v, (int, float)) or (want is int and v != int(v)):
                raise ValueError(f"{algo} parameter {f.name} must be {want.__name__}, got {v!r}")
            doc[f.name] = want(v)
    return cls(**doc)


# -- shared machinery --------------------------------------------------------

@dataclass
class OptimResult:
    P: np.ndarray
    history: list[dict] = field(default_factory=list)
    best_policy: np.ndarray | None = None
    best_cost: float = math.inf


def _draw_batch(n: int, mix: float, rng: np.random.Generator,
                base: PolicySampler, current: PolicySampler) -> np.ndarray:
    from_base = rng.random(n) < mix
    u = rng.random((n, current.cdf.shape[0]))
    out = np.empty((n, *current.shape), np.int64)
    if from_base.any():
        out[from_base] = base.from_uniforms(u[from_base])
    if (~from_base).any():
        out[~from_base] = current.from_uniforms(u[~from_base])
    return out


def _evaluate(evaluator: Evaluator, policies: np.ndarray, M: int, master_seed: int,
              k: int) -> np.ndarray:
    return evaluator.mean_costs(policies, M, master_seed, (STREAM_EVAL, k))


def weighted_frequencies(policies: np.ndarray, weights: np.ndarray, n_actions: int) -> np.ndarray:
    """``sum_n w_n 1{policy n takes j in cell (t, i)}`` as a (T, S, A) tensor."""
    n, T, S = policies.shape
    cells = np.arange(T * S) * n_actions
    idx = (cells + policies.reshape(n, -1) - 1).ravel()
    out = np.bincount(idx, weights=np.repeat(np.asarray(weights, float), T * S),
                      minlength=T * S * n_actions)
    return out.reshape(T, S, n_actions)


def _apply_floor(P: np.ndarray, mu: float, support: np.ndarray) -> np.ndarray:
    if mu <= 0:
        return P
    np.maximum(P, mu, out=P, where=support)
    P /= P.sum(axis=-1, keepdims=True)
    return P


class _Checkpointer:
    def __init__(self, out_dir: str | Path | None, every: int):
        self.dir = Path(out_dir) if out_dir else None
        self.every = every

    def __call__(self, k: int, P: np.ndarray) -> None:
        if self.dir is None or self.every <= 0 or k % self.every:
            return
        self.dir.mkdir(parents=True, exist_ok=True)
        save_tensor(self.dir / f"P_{k:05d}.lipt", P)


def _log_mix(policies, P, P0, mix) -> np.ndarray:
    return log_f_mix_batch(policies, P, P0, mix)


# -- MRAS --------------------------------------------------------------------

def mras_run(params: MrasParams, P0: np.ndarray, evaluator: Evaluator, master_seed: int,
             *, checkpoint_dir=None, checkpoint_every: int = 0,
             on_iteration: Callable[[dict, np.ndarray], None] | None = None) -> OptimResult:
    """Model reference adaptive search over policy tensors.

    Starts from ``P0`` and runs ``params.K`` iterations. Every iteration
    draws whole policies (from ``P0`` with probability ``lam``), scores them
    with ``M_k`` trajectories, moves the elite threshold, and smooths
    ``P`` towards the threshold-filtered, importance-weighted empirical
    action frequencies.
    """
    params.validate()
    check_normalized(P0)
    P0 = np.asarray(P0, dtype=float)
    support = P0 > 0
    P = P0.copy()
    n_actions = P.shape[-1]
    base = PolicySampler(P0, check=False)
    rho, N, M = params.rho0, params.N0, params.M0
    gamma_bar = math.inf
    elite = None
    result = OptimResult(P)
    save = _Checkpointer(checkpoint_dir, checkpoint_every)
    t_start = time.perf_counter()

    for k in range(params.K):
        rng = stream(master_seed, STREAM_DRAW, k)
        policies = _draw_batch(N, params.lam, rng, base, PolicySampler(P, check=False))
        V = _evaluate(evaluator, policies, M, master_seed, k)
        if not np.all(np.isfinite(V)):
            raise RuntimeError(f"non-finite policy cost at iteration {k}")

        q = quantile_index(rho, N)
        gamma_k, order = elite_quantile(V, rho, N, return_order=True)
        target = gamma_bar - params.epsilon
        if k == 0 or gamma_k <= target:
            branch = "improve"
            gamma_bar = gamma_k
            elite = policies[order[q - 1]].copy()
        else:
            iota = next((p for p in range(q + 1, N + 1) if V[order[p - 1]] <= target), None)
            if iota is not None:
                branch = "partial"
                gamma_bar = float(V[order[iota - 1]])
                rho = 1.0 - iota / N
                elite = policies[order[iota - 1]].copy()
            else:
                branch = "fail"
                gamma_bar = float(evaluator.mean_costs(
                    elite[None], M, master_seed, (STREAM_REEVAL, k))[0])
                N = _ceil(params.alpha * N)

        indicator = np.clip((gamma_bar + params.epsilon - V) / params.epsilon, 0.0, 1.0)
        with np.errstate(divide="ignore"):
            logw = -k * V - _log_mix(policies, P, P0, params.lam) + np.log(indicator)
        try:
            w = normalize_weights(logw)
            all_zero = False
        except AllZeroWeights:
            all_zero = True
        if not all_zero:
            P_hat = weighted_frequencies(policies, w, n_actions)
            P = params.nu * P_hat + (1.0 - params.nu) * P
            P = _apply_floor(P, params.mu, support)

        best = int(np.argmin(V))
        if V[best] < result.best_cost:
            result.best_cost = float(V[best])
            result.best_policy = policies[best].copy()
        row = {
            "k": k,
            "best_cost": result.best_cost,
            "mean_cost": float(V.mean()),
            "min_cost": float(V[best]),
            "gamma_bar": gamma_bar,
            "rho": rho,
            "N": len(policies),
            "M": M,
            "branch": branch,
            "all_zero": all_zero,
            "wall_time": time.perf_counter() - t_start,
        }
        result.history.append(row)
        log.info("mras k=%d best=%.1f gamma=%.1f N=%d M=%d %s", k, result.best_cost,
                 gamma_bar, len(policies), M, branch)
        if on_iteration:
            on_iteration(row, P)
        M = _ceil(params.beta * M)
        save(k + 1, P)

    result.P = P
    return result


# -- ASA ---------------------------------------------------------------------

def asa_run(params: AsaParams, P0: np.ndarray, evaluator: Evaluator, master_seed: int,
            *, checkpoint_dir=None, checkpoint_every: int = 0,
            on_iteration: Callable[[dict, np.ndarray], None] | None = None) -> OptimResult:
    """Approximate stochastic annealing over policy tensors.

    Every sampled policy contributes with Boltzmann weight
    ``exp(-cost / T_k)`` divided by its sampling density; the gain and the
    share of policies drawn from ``P0`` both decay with ``k``.
    """
    params.validate()
    check_normalized(P0)
    P0 = np.asarray(P0, dtype=float)
    P = P0.copy()
    n_actions = P.shape[-1]
    base = PolicySampler(P0, check=False)
    N, M = params.N0, params.M0
    result = OptimResult(P)
    save = _Checkpointer(checkpoint_dir, checkpoint_every)
    t_start = time.perf_counter()

    for k in range(params.K):
        temp = params.temperature(k)
        explore = params.exploration(k)
        gain = params.gain(k)
        rng = stream(master_seed, STREAM_DRAW, k)
        policies = _draw_batch(N, explore, rng, base, PolicySampler(P, check=False))
        V = _evaluate(evaluator, policies, M, master_seed, k)
        if not np.all(np.isfinite(V)):
            raise RuntimeError(f"non-finite policy cost at iteration {k}")

        logw = -V / temp - _log_mix(policies, P, P0, explore)
        w = normalize_weights(logw)
        P_hat = weighted_frequencies(policies, w, n_actions)
        P = gain * P_hat + (1.0 - gain) * P

        best = int(np.argmin(V))
        if V[best] < result.best_cost:
            result.best_cost = float(V[best])
            result.best_policy = policies[best].copy()
        row = {
            "k": k,
            "best_cost": result.best_cost,
            "mean_cost": float(V.mean()),
            "min_cost": float(V[best]),
            "temperature": temp,
            "gain": gain,
            "exploration": explore,
            "N": N,
            "M": M,
            "wall_time": time.perf_counter() - t_start,
        }
        result.history.append(row)
        log.info("asa k=%d best=%.1f T=%.3f N=%d M=%d", k, result.best_cost, temp, N, M)
        if on_iteration:
            on_iteration(row, P)
        M = params.samples(k)
        N = params.policies(k)
        save(k + 1, P)

    result.P = P
    return result


def run_algo(algo: str, params, P0, evaluator, master_seed, **kw) -> OptimResult:
    if algo == "mras":
        return mras_run(params, P0, evaluator, master_seed, **kw)
    if algo == "asa":
        return asa_run(params, P0, evaluator, master_seed, **kw)
    raise ValueError(f"unknown algorithm {algo!r}")


def params_dict(params) -> dict:
    return asdict(params)


# -- benchmark setup and capacity comparison ---------------------------------

BENCHMARK_HORIZON = 10
BENCHMARK_RATE_RANGE = (8, 12)


@dataclass
class Setup:
    calendar: Calendar
    config: SimConfig
    mask: np.ndarray
    naive: np.ndarray

    def initial_tensor(self, warm_mass: float = 0.0) -> np.ndarray:
        if warm_mass > 0:
            return warm_start_tensor(self.naive, warm_mass, self.mask)
        return uniform_tensor(self.calendar.horizon_years, N_STATES, self.mask)

    def fixed_rate_policy(self, n: int) -> np.ndarray:
        """Naive during the startup years, then ``n`` launchers a year."""
        pol = self.naive.copy()
        pol[len(STARTUP_COUNTS):] = encode_action((4 * n, n, n))
        return pol


def make_setup(calendar: Calendar, config: SimConfig,
               rate_range: tuple[int, int] = BENCHMARK_RATE_RANGE) -> Setup:
    lo, hi = rate_range
    return Setup(calendar, config, action_mask(lo, hi), naive_policy(calendar, config, lo, hi))


def benchmark_setup(srm_capacity: int = 8) -> Setup:
    """Ten years, 10 launches a year after startup, 8 to 12 launchers a year."""
    return make_setup(regular_calendar(BENCHMARK_HORIZON, 10), SimConfig(srm_capacity=srm_capacity))


@dataclass
class CompareRow:
    policy: str
    srm_capacity: int
    mean: float
    ci_low: float
    ci_high: float
    samples: int


def compare_capacities(algo: str, params, calendar: Calendar, config: SimConfig,
                       master_seed: int, *, eval_samples: int = 100_000,
                       workers: int | None = None, warm_mass: float = 0.5,
                       rate_range: tuple[int, int] = BENCHMARK_RATE_RANGE,
                       on_iteration=None) -> list[CompareRow]:
    """Optimize for SRM capacity 4 and 8, then evaluate against the naive policy.

    All four cells share one set of evaluation seeds.
    """
    rows = []
    for cap in (4, 8):
        setup = make_setup(calendar, config.with_capacity(cap), rate_range)
        ev = LauncherEvaluator(setup.calendar, setup.config, workers)
        res = run_algo(algo, params, setup.initial_tensor(warm_mass), ev, master_seed,
                       on_iteration=on_iteration)
        for name, pol in (("naive", setup.naive),
                          ("optimized", extract_deterministic_policy(res.P))):
            c = monte_carlo_costs(pol, eval_samples, ev, master_seed)
            r = McResult(float(c.mean()), float(c.std(ddof=1)), eval_samples)
            rows.append(CompareRow(name, cap, r.mean, *r.ci95, eval_samples))
    return rows
