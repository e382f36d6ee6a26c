"""Aggregated states, action encoding, policies and probability tensors.

Conventions
-----------
* Action numbers ``j`` are 1-based, 1..343, in lexicographic order of
  (IMC rate, LLPM rate, ULPM rate).
* Aggregated state numbers ``i`` are 1-based, 1..N_STATES.
* A policy matrix is an integer array of shape ``(T, S)``:
  ``policy[t, i - 1]`` is the action number used in state ``i`` during year
  ``t + 1``.
* A probability tensor is a float array of shape ``(T, S, A)``; row
  ``P[t, i - 1]`` is the action distribution in state ``i`` at year ``t + 1``.
  This is also the on-disk order of the binary checkpoint.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np
from numba import njit

from .calendar import Calendar
from .logprob import lw_add
from .simulator import IMC_RATES, PM_RATES, ObservedState, RatesDecision, SimConfig

N_ACTIONS = len(IMC_RATES) * len(PM_RATES) ** 2
DUE_CLASSES = 13  # 0..11 launches, then "12 and more"
N_STATES = 3 ** 5 * DUE_CLASSES
ENCODING_VERSION = 1
CHECKPOINT_MAGIC = b"LIPT"
CHECKPOINT_VERSION = 1


class NormalizationError(ValueError):
    pass


def encode_action(decision: RatesDecision | tuple[int, int, int]) -> int:
    if not isinstance(decision, RatesDecision):
        decision = RatesDecision(*decision)
    a = IMC_RATES.index(decision.imc_rate)
    b = PM_RATES.index(decision.llpm_rate)
    c = PM_RATES.index(decision.ulpm_rate)
    return 49 * a + 7 * b + c + 1


def decode_action(j: int) -> RatesDecision:
    if not 1 <= j <= N_ACTIONS:
        raise ValueError(f"action number {j} outside [1, {N_ACTIONS}]")
    a, rest = divmod(j - 1, 49)
    b, c = divmod(rest, 7)
    return RatesDecision(IMC_RATES[a], PM_RATES[b], PM_RATES[c])


def stock_code(units: int, capacity: int = 4) -> int:
    """1 empty, 2 some, 3 full."""
    if not 0 <= units <= capacity:
        raise ValueError(f"stock {units} outside [0, {capacity}]")
    return 1 if units == 0 else (3 if units == capacity else 2)


def srm_code(units: int, capacity: int = 8) -> int:
    """1 below one launcher's worth, 2 enough for one, 3 full (capacity 8 only)."""
    if not 0 <= units <= capacity:
        raise ValueError(f"SRM stock {units} outside [0, {capacity}]")
    if units < 4:
        return 1
    return 3 if (units == capacity and capacity > 4) else 2


def due_class(launches_due: int) -> int:
    """0..11 map to themselves, anything above to 12 ("12 and more")."""
    if launches_due < 0:
        raise ValueError("launches_due must be >= 0")
    return min(launches_due, 12)


def aggregate(obs: ObservedState, config: SimConfig | None = None) -> int:
    config = config or SimConfig()
    codes = (
        stock_code(obs.imc_stock, config.sub_capacity),
        stock_code(obs.llpm_stock, config.sub_capacity),
        stock_code(obs.ulpm_stock, config.sub_capacity),
        srm_code(obs.srm_stock, config.srm_capacity),
    )
    if not 0 <= obs.cc_waiting <= 2:
        raise ValueError(f"cc_waiting {obs.cc_waiting} outside [0, 2]")
    cells = [c - 1 for c in codes] + [obs.cc_waiting, due_class(obs.launches_due)]
    idx = int(np.ravel_multi_index(cells, (3, 3, 3, 3, 3, DUE_CLASSES)))
    return idx + 1


def unpack_state(i: int) -> tuple[int, int, int, int, int, int]:
    """(imc, llpm, ulpm, srm codes 1..3, cc_waiting, due class) of state ``i``."""
    if not 1 <= i <= N_STATES:
        raise ValueError(f"state number {i} outside [1, {N_STATES}]")
    imc, llpm, ulpm, srm, cc, due = np.unravel_index(i - 1, (3, 3, 3, 3, 3, DUE_CLASSES))
    return int(imc) + 1, int(llpm) + 1, int(ulpm) + 1, int(srm) + 1, int(cc), int(due)


# -- action sets and tensors -------------------------------------------------

def action_mask(min_launchers: int = 6, max_launchers: int = 12) -> np.ndarray:
    """Actions whose three rates all correspond to ``min..max`` launchers a year."""
    mask = np.zeros(N_ACTIONS, dtype=bool)
    for j in range(1, N_ACTIONS + 1):
        d = decode_action(j)
        mask[j - 1] = (
            4 * min_launchers <= d.imc_rate <= 4 * max_launchers
            and min_launchers <= d.llpm_rate <= max_launchers
            and min_launchers <= d.ulpm_rate <= max_launchers
        )
    return mask


def uniform_tensor(horizon: int, n_states: int = N_STATES,
                   mask: np.ndarray | None = None) -> np.ndarray:
    row = np.ones(N_ACTIONS) if mask is None else np.asarray(mask, float)
    row = row / row.sum()
    return np.broadcast_to(row, (horizon, n_states, N_ACTIONS)).copy()


def warm_start_tensor(policy: np.ndarray, mass: float = 0.5,
                      mask: np.ndarray | None = None) -> np.ndarray:
    """``mass`` on the policy's action in every cell, the rest spread uniformly."""
    T, S = policy.shape
    P = uniform_tensor(T, S, mask) * (1.0 - mass)
    t_idx, s_idx = np.indices((T, S))
    P[t_idx, s_idx, policy - 1] += mass
    return P


def check_normalized(P: np.ndarray, tol: float = 1e-9) -> None:
    sums = P.sum(axis=-1)
    if np.any(P < 0) or not np.allclose(sums, 1.0, rtol=0, atol=tol):
        worst = float(np.max(np.abs(sums - 1.0)))
        raise NormalizationError(f"probability rows not normalized (max deviation {worst:.3g})")


@njit(cache=True)
def _draw_rows(cdf, u, out):
    rows, n = cdf.shape
    for r in range(rows):
        target = u[r] * cdf[r, n - 1]
        lo = 0
        hi = n - 1
        # first index with cdf > target
        while lo < hi:
            mid = (lo + hi) // 2
            if cdf[r, mid] > target:
                hi = mid
            else:
                lo = mid + 1
        out[r] = lo + 1


class PolicySampler:
    """Draws policies from a fixed tensor, reusing its cumulative sums."""

    def __init__(self, P: np.ndarray, check: bool = True):
        if check:
            check_normalized(P)
        self.shape = P.shape[:2]
        self.cdf = np.cumsum(P.reshape(-1, P.shape[-1]), axis=-1)

    def draw(self, rng: np.random.Generator) -> np.ndarray:
        return self.from_uniforms(rng.random(self.cdf.shape[0]))[0]

    def from_uniforms(self, u: np.ndarray) -> np.ndarray:
        """Policies for uniforms of shape ``(T*S,)`` or ``(n, T*S)``."""
        u = np.atleast_2d(u)
        out = np.empty(u.shape, np.int64)
        for q in range(len(u)):
            _draw_rows(self.cdf, u[q], out[q])
        return out.reshape(len(u), *self.shape)


def draw_policy(P: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Sample every cell independently from its row of ``P``."""
    return PolicySampler(P).draw(rng)


def log_f_batch(policies: np.ndarray, P: np.ndarray) -> np.ndarray:
    """``log_f`` for a stack of policies of shape ``(n, T, S)``."""
    T, S, A = P.shape
    flat = P.reshape(T * S, A)
    p = flat[np.arange(T * S), policies.reshape(len(policies), -1) - 1]
    with np.errstate(divide="ignore"):
        return np.log(p).sum(axis=1)


def log_f_mix_batch(policies: np.ndarray, P: np.ndarray, P0: np.ndarray,
                    lam: float) -> np.ndarray:
    if not 0.0 <= lam <= 1.0:
        raise ValueError("mixing weight must lie in [0, 1]")
    with np.errstate(divide="ignore"):
        a = np.log1p(-lam) + log_f_batch(policies, P) if lam < 1.0 else np.full(len(policies), -np.inf)
        b = np.log(lam) + log_f_batch(policies, P0) if lam > 0.0 else np.full(len(policies), -np.inf)
    return np.logaddexp(a, b)


def selected_probs(pi: np.ndarray, P: np.ndarray) -> np.ndarray:
    return np.take_along_axis(P, (pi - 1)[..., None], axis=-1)[..., 0]


def log_f(pi: np.ndarray, P: np.ndarray) -> float:
    """Log-probability of drawing policy ``pi`` from ``P``."""
    if pi.shape != P.shape[:2]:
        raise ValueError(f"policy shape {pi.shape} vs tensor {P.shape}")
    p = selected_probs(pi, P)
    if np.any(p <= 0):
        return -np.inf
    return float(np.log(p).sum())


def log_f_mix(pi: np.ndarray, P: np.ndarray, P0: np.ndarray, lam: float) -> float:
    """Log-density of the mixture ``(1 - lam) f(pi, P) + lam f(pi, P0)``."""
    if not 0.0 <= lam <= 1.0:
        raise ValueError("mixing weight must lie in [0, 1]")
    a = np.log1p(-lam) + log_f(pi, P) if lam < 1.0 else -np.inf
    b = np.log(lam) + log_f(pi, P0) if lam > 0.0 else -np.inf
    return lw_add(float(a), float(b))


def naive_action(n_launches: int, lo: int = 6, hi: int = 12) -> int:
    n = min(max(n_launches, lo), hi)
    return encode_action((4 * n, n, n))


def naive_policy(calendar: Calendar, config: SimConfig | None = None,
                 lo: int = 6, hi: int = 12, n_states: int = N_STATES) -> np.ndarray:
    """Each year, rates matching that year's launch count, whatever the stocks."""
    actions = [naive_action(n, lo, hi) for n in calendar.counts]
    return np.repeat(np.asarray(actions, np.int64)[:, None], n_states, axis=1)


def fixed_policy(horizon: int, decision, n_states: int = N_STATES) -> np.ndarray:
    return np.full((horizon, n_states), encode_action(decision), np.int64)


def extract_deterministic_policy(P: np.ndarray) -> np.ndarray:
    """Most likely action per cell; ``argmax`` keeps the smallest index on ties."""
    return np.argmax(P, axis=-1).astype(np.int64) + 1


# -- persistence -------------------------------------------------------------

def save_policy(path: str | Path, policy: np.ndarray, srm_capacity: int) -> None:
    doc = {
        "srm_capacity": srm_capacity,
        "horizon": int(policy.shape[0]),
        "state_count": int(policy.shape[1]),
        "encoding_version": ENCODING_VERSION,
        "matrix": policy.astype(int).tolist(),
    }
    Path(path).write_text(json.dumps(doc, separators=(",", ":")) + "\n")


def load_policy(path: str | Path) -> tuple[np.ndarray, dict]:
    doc = json.loads(Path(path).read_text())
    for key in ("srm_capacity", "horizon", "state_count", "encoding_version", "matrix"):
        if key not in doc:
            raise ValueError(f"{path}: policy file missing {key!r}")
    if doc["encoding_version"] != ENCODING_VERSION:
        raise ValueError(f"{path}: unsupported encoding_version {doc['encoding_version']}")
    policy = np.asarray(doc["matrix"], dtype=np.int64)
    if policy.shape != (doc["horizon"], doc["state_count"]):
        raise ValueError(f"{path}: matrix shape {policy.shape} disagrees with header")
    if policy.min() < 1 or policy.max() > N_ACTIONS:
        raise ValueError(f"{path}: action numbers outside [1, {N_ACTIONS}]")
    meta = {k: v for k, v in doc.items() if k != "matrix"}
    return policy, meta


def save_tensor(path: str | Path, P: np.ndarray) -> None:
    T, S, A = P.shape
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<IIII", CHECKPOINT_VERSION, S, A, T))
        fh.write(np.ascontiguousarray(P, dtype="<f8").tobytes())


def load_tensor(path: str | Path) -> np.ndarray:
    with open(path, "rb") as fh:
        if fh.read(4) != CHECKPOINT_MAGIC:
            raise ValueError(f"{path}: not a probability tensor checkpoint")
        version, S, A, T = struct.unpack("<IIII", fh.read(16))
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {version}")
        data = np.frombuffer(fh.read(), dtype="<f8")
    if data.size != S * A * T:
        raise ValueError(f"{path}: expected {S * A * T} values, found {data.size}")
    return data.reshape(T, S, A).astype(float)
