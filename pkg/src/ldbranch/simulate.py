"""Exact stochastic simulation of the three-population model.

Replicates are reproducible and scheduling-independent: replicate i of a
run seeded with s always uses the generator built from
SeedSequence(s).spawn(...)[i] on a counter-based (Philox) bit generator,
whether it runs on one thread or many.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.integrate import cumulative_simpson
from scipy.interpolate import PchipInterpolator

from . import _kernels as k
from .analytic import solve_targets
from .params import ModelParams, ScenarioConfig, time_scale

__all__ = [
    "FirstPassage",
    "CloneLedger",
    "EventLog",
    "PathResult",
    "DetSensitiveResult",
    "ConditionedClones",
    "ArrivalSampler",
    "simulate_path",
    "passage_batch",
    "simulate_deterministic_sensitive",
    "det_sensitive_batch",
    "simulate_conditioned_clones",
    "conditioned_clone_batch",
    "clone_size_sample",
]

EVENT_CAP = 10**8


def _generator(seed_seq: np.random.SeedSequence) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(seed_seq))


def _children(seed, count: int) -> list[np.random.SeedSequence]:
    root = seed if isinstance(seed, np.random.SeedSequence) else (
        np.random.SeedSequence(seed)
    )
    return root.spawn(count)


def _run_chunked(worker, replicates: int, threads: int) -> None:
    """Run worker(lo, hi) over [0, replicates) in deterministic chunks."""
    if threads <= 1 or replicates < 2:
        worker(0, replicates)
        return
    chunk = max(16, -(-replicates // (4 * threads)))
    spans = [
        (lo, min(lo + chunk, replicates)) for lo in range(0, replicates, chunk)
    ]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        # materialize to propagate worker exceptions
        list(pool.map(lambda span: worker(*span), spans))


@dataclass(frozen=True)
class FirstPassage:
    """Realized passage times of one path; None means censored at horizon."""

    gamma: Optional[float]
    tau: Optional[float]
    horizon: float

    @property
    def gamma_censored(self) -> bool:
        return self.gamma is None

    @property
    def tau_censored(self) -> bool:
        return self.tau is None


@dataclass
class CloneLedger:
    """Per-clone birth times and sizes at the query time.

    Size 0 marks a clone that went extinct; S + E equals the number of
    clones ever born.
    """

    birth_time: np.ndarray
    size: np.ndarray

    @property
    def total_born(self) -> int:
        return len(self.size)

    @property
    def surviving(self) -> int:
        return int((self.size > 0).sum())

    @property
    def extinct(self) -> int:
        return int((self.size == 0).sum())

    @property
    def surviving_mass(self) -> int:
        return int(self.size.sum())


@dataclass
class EventLog:
    time: np.ndarray
    kind: np.ndarray
    z0: np.ndarray
    z1: np.ndarray
    z2: np.ndarray
    clone_id: np.ndarray

    def write_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write("time,event_kind,z0,z1,z2,clone_id\n")
            for i in range(len(self.time)):
                fh.write(
                    f"{self.time[i]:.12g},{k.EVENT_NAMES[self.kind[i]]},"
                    f"{self.z0[i]},{self.z1[i]},{self.z2[i]},{self.clone_id[i]}\n"
                )


@dataclass
class PathResult:
    passage: FirstPassage
    events: int
    final_state: tuple[int, int, int]
    checkpoint_times: np.ndarray
    checkpoints: np.ndarray               # (len(checkpoint_times), 3) counts
    ledger: Optional[CloneLedger] = None
    event_log: Optional[EventLog] = None


def _cap_error(status: int, events: int) -> RuntimeError:
    return RuntimeError(
        f"event cap of {EVENT_CAP} exceeded after {events} events; "
        "the configuration is outside desk scale"
    )


def _passage(value: float) -> Optional[float]:
    return None if value < 0.0 else value


def _clone_capacity(params: ModelParams, n: int, horizon: float) -> int:
    """Generous initial ledger capacity from the expected arrival count;
    kernels signal overflow and the caller retries larger."""
    span = horizon if params.r <= 0 else min(horizon, 1.0 / params.r)
    expected = params.mu * n ** (1 - params.alpha) * span
    return int(8 * expected) + 1024


def simulate_path(
    params: ModelParams,
    scenario: ScenarioConfig,
    seed,
    ledger_on: bool = False,
    checkpoints: Sequence[float] = (),
    log_events: bool = False,
    track: Sequence[str] = ("gamma", "tau"),
    horizon: Optional[float] = None,
    event_cap: int = EVENT_CAP,
) -> PathResult:
    """Simulate one exact path; stops at the horizon or once every tracked
    passage time is recorded and every checkpoint is filled.

    Checkpoints report the piecewise-constant counts at the checkpoint
    instant (the left limit).  With ``ledger_on`` the acquired population
    is tracked clone by clone, and ``log_events`` additionally records
    every event for the CSV dump.
    """
    n = scenario.n
    x0 = params.initial_mutants(n)
    mut_rate = params.mu * n ** (-params.alpha)
    a_thresh = scenario.a * n
    if horizon is None:
        horizon = scenario.horizon_multiplier * time_scale(n, params.r)
    track_gamma = "gamma" in track
    track_tau = "tau" in track
    cp_times = np.asarray(sorted(checkpoints), dtype=np.float64)
    cp_out = np.full((len(cp_times), 3), -1, dtype=np.int64)
    gen_source = _children(seed, 1)[0]

    if not (ledger_on or log_events):
        gamma, tau, status, events, z0, z1, z2, _ = k.path_kernel(
            _generator(gen_source), n, x0, params.r0, params.d0, params.r1,
            params.d1, mut_rate, a_thresh, horizon, track_gamma, track_tau,
            cp_times, cp_out, event_cap,
        )
        if status == k.EVENT_CAP:
            raise _cap_error(status, events)
        return PathResult(
            FirstPassage(_passage(gamma), _passage(tau), horizon),
            events, (int(z0), int(z1), int(z2)), cp_times, cp_out,
        )

    if cp_times.size:
        raise ValueError("checkpoints are only supported with the ledger off")
    clone_cap = _clone_capacity(params, n, horizon)
    if log_events:
        sens_span = horizon if params.r <= 0 else min(horizon, 1.0 / params.r)
        mut_span = (
            horizon if params.lambda1 <= 0
            else min(horizon, 1.0 / params.lambda1)
        )
        log_cap = int(
            8 * ((params.r0 + params.d0 + mut_rate) * n * sens_span
                 + (params.r1 + params.d1) * max(a_thresh, n) * mut_span)
        ) + 4096
    else:
        log_cap = 0
    while True:
        clone_birth = np.zeros(clone_cap, dtype=np.float64)
        clone_size = np.zeros(clone_cap, dtype=np.int64)
        log_time = np.zeros(log_cap, dtype=np.float64)
        log_kind = np.zeros(log_cap, dtype=np.int64)
        log_z0 = np.zeros(log_cap, dtype=np.int64)
        log_z1 = np.zeros(log_cap, dtype=np.int64)
        log_z2 = np.zeros(log_cap, dtype=np.int64)
        log_clone = np.zeros(log_cap, dtype=np.int64)
        gamma, tau, status, events, n_clones, n_logged, z0, z1, z2 = (
            k.path_ledger_kernel(
                _generator(gen_source), n, x0, params.r0, params.d0,
                params.r1, params.d1, mut_rate, a_thresh, horizon,
                track_gamma, track_tau, clone_birth, clone_size,
                log_time, log_kind, log_z0, log_z1, log_z2, log_clone,
                event_cap,
            )
        )
        if status == k.EVENT_CAP:
            raise _cap_error(status, events)
        if status == k.CLONE_CAP:
            clone_cap *= 4
            continue
        if status == k.LOG_FULL:
            log_cap *= 4
            continue
        break
    ledger = CloneLedger(clone_birth[:n_clones].copy(), clone_size[:n_clones].copy())
    event_log = None
    if log_events:
        event_log = EventLog(
            log_time[:n_logged].copy(), log_kind[:n_logged].copy(),
            log_z0[:n_logged].copy(), log_z1[:n_logged].copy(),
            log_z2[:n_logged].copy(), log_clone[:n_logged].copy(),
        )
    return PathResult(
        FirstPassage(_passage(gamma), _passage(tau), horizon),
        events, (int(z0), int(z1), int(z2)), cp_times, cp_out,
        ledger=ledger, event_log=event_log,
    )


def passage_batch(
    params: ModelParams,
    scenario: ScenarioConfig,
    seed,
    replicates: int,
    track: Sequence[str] = ("gamma", "tau"),
    checkpoints: Sequence[float] = (),
    horizon: Optional[float] = None,
    threads: int = 1,
    event_cap: int = EVENT_CAP,
) -> dict:
    """Replicated aggregate-count paths.

    Returns arrays keyed 'gamma', 'tau' (nan = censored), 'events', and
    'checkpoints' with shape (replicates, n_checkpoints, 3).
    """
    n = scenario.n
    x0 = params.initial_mutants(n)
    mut_rate = params.mu * n ** (-params.alpha)
    a_thresh = scenario.a * n
    if horizon is None:
        horizon = scenario.horizon_multiplier * time_scale(n, params.r)
    track_gamma = "gamma" in track
    track_tau = "tau" in track
    cp_times = np.asarray(sorted(checkpoints), dtype=np.float64)

    gammas = np.full(replicates, np.nan)
    taus = np.full(replicates, np.nan)
    events = np.zeros(replicates, dtype=np.int64)
    cps = np.full((replicates, len(cp_times), 3), -1, dtype=np.int64)
    children = _children(seed, replicates)

    def worker(lo: int, hi: int) -> None:
        for i in range(lo, hi):
            gamma, tau, status, ev, *_ = k.path_kernel(
                _generator(children[i]), n, x0, params.r0, params.d0,
                params.r1, params.d1, mut_rate, a_thresh, horizon,
                track_gamma, track_tau, cp_times, cps[i], event_cap,
            )
            if status == k.EVENT_CAP:
                raise _cap_error(status, ev)
            if gamma >= 0.0:
                gammas[i] = gamma
            if tau >= 0.0:
                taus[i] = tau
            events[i] = ev

    _run_chunked(worker, replicates, threads)
    return {
        "gamma": gammas,
        "tau": taus,
        "events": events,
        "checkpoint_times": cp_times,
        "checkpoints": cps,
        "horizon": horizon,
    }


# ---------------------------------------------------------------------------
# Deterministic-sensitive mode (X = 0): clones are independent, sensitive
# decay is the exact exponential curve.


@dataclass
class DetSensitiveResult:
    ledger: CloneLedger
    gamma: Optional[float]
    events: int
    T: float


def _det_sensitive_once(params, scenario, seed_seq, T, a_thresh,
                        event_cap) -> DetSensitiveResult:
    n = scenario.n
    arrival_coeff = params.mu * n ** (1 - params.alpha)
    clone_cap = _clone_capacity(params, n, T)
    while True:
        clone_birth = np.zeros(clone_cap, dtype=np.float64)
        clone_size = np.zeros(clone_cap, dtype=np.int64)
        gamma, status, events, n_clones = k.det_sensitive_kernel(
            _generator(seed_seq), arrival_coeff, params.r, params.r1,
            params.d1, T, a_thresh, clone_birth, clone_size, event_cap,
        )
        if status == k.EVENT_CAP:
            raise _cap_error(status, events)
        if status == k.CLONE_CAP:
            clone_cap *= 4
            continue
        break
    return DetSensitiveResult(
        CloneLedger(clone_birth[:n_clones].copy(), clone_size[:n_clones].copy()),
        _passage(gamma), events, T,
    )


def _require_no_initial_mutants(params: ModelParams, n: int) -> None:
    if params.initial_mutants(n) != 0:
        raise ValueError(
            "deterministic-sensitive mode requires X = 0 initial mutants"
        )


def simulate_deterministic_sensitive(
    params: ModelParams,
    scenario: ScenarioConfig,
    seed,
    T: Optional[float] = None,
    event_cap: int = EVENT_CAP,
) -> DetSensitiveResult:
    """One path of the deterministic-sensitive model up to T
    (default: zeta_n(a) - y), with full clone bookkeeping."""
    _require_no_initial_mutants(params, scenario.n)
    if T is None:
        T = solve_targets(params, scenario).zeta - scenario.y
    if T < 0:
        raise ValueError(f"T must be >= 0 (got {T})")
    return _det_sensitive_once(
        params, scenario, _children(seed, 1)[0], T,
        scenario.a * scenario.n, event_cap,
    )


def det_sensitive_batch(
    params: ModelParams,
    scenario: ScenarioConfig,
    seed,
    replicates: int,
    T: Optional[float] = None,
    threads: int = 1,
    event_cap: int = EVENT_CAP,
) -> dict:
    """Replicated deterministic-sensitive paths; returns per-replicate
    surviving/extinct clone counts, masses, and recurrence flags."""
    _require_no_initial_mutants(params, scenario.n)
    if T is None:
        T = solve_targets(params, scenario).zeta - scenario.y
    a_thresh = scenario.a * scenario.n
    surviving = np.zeros(replicates, dtype=np.int64)
    extinct = np.zeros(replicates, dtype=np.int64)
    mass = np.zeros(replicates, dtype=np.int64)
    gammas = np.full(replicates, np.nan)
    children = _children(seed, replicates)

    def worker(lo: int, hi: int) -> None:
        for i in range(lo, hi):
            res = _det_sensitive_once(
                params, scenario, children[i], T, a_thresh, event_cap
            )
            surviving[i] = res.ledger.surviving
            extinct[i] = res.ledger.extinct
            mass[i] = res.ledger.surviving_mass
            if res.gamma is not None:
                gammas[i] = res.gamma

    _run_chunked(worker, replicates, threads)
    return {
        "S": surviving,
        "E": extinct,
        "mass": mass,
        "gamma": gammas,
        "T": T,
    }


# ---------------------------------------------------------------------------
# Conditioned clones: K clones born before T, all alive at T.


class ArrivalSampler:
    """Inverse-transform sampler for the arrival time of a clone that
    survives to T: density proportional to survival(T - s) e^{-r s}.

    The CDF is tabulated with composite Simpson on a uniform grid (dense
    enough for ~1e-12 absolute accuracy) and inverted with a monotone
    cubic interpolant.
    """

    def __init__(self, T: float, params: ModelParams, nodes: int = 2**15 + 1):
        if not T > 0:
            raise ValueError(f"T must be positive (got {T})")
        self.T = T
        grid = np.linspace(0.0, T, nodes)
        res = params.resistant
        pdf = (
            res.lambda1
            / (res.r1 - res.d1 * np.exp(-res.lambda1 * (T - grid)))
            * np.exp(-params.r * grid)
        )
        cdf = cumulative_simpson(pdf, x=grid, initial=0.0)
        self.norm = float(cdf[-1])
        cdf /= cdf[-1]
        self._quantile = PchipInterpolator(cdf, grid)

    def sample(self, gen: np.random.Generator, count: int) -> np.ndarray:
        return np.asarray(self._quantile(gen.random(count)), dtype=np.float64)

    def quantile(self, u) -> np.ndarray:
        return np.asarray(self._quantile(u), dtype=np.float64)


@dataclass
class ConditionedClones:
    arrivals: np.ndarray
    sizes: np.ndarray
    attempts: int

    @property
    def mass(self) -> int:
        return int(self.sizes.sum())


def _conditioned_once(gen, sampler, params, K, event_cap,
                      arrivals=None) -> ConditionedClones:
    if arrivals is None:
        arrivals = np.sort(sampler.sample(gen, K))
    sizes = np.zeros(K, dtype=np.int64)
    attempts, status = k.conditioned_clones_kernel(
        gen, params.r1, params.d1, sampler.T, arrivals, sizes, event_cap
    )
    if status == k.EVENT_CAP:
        raise _cap_error(status, attempts)
    return ConditionedClones(arrivals, sizes, int(attempts))


def simulate_conditioned_clones(
    K: int,
    T: float,
    params: ModelParams,
    seed,
    event_cap: int = EVENT_CAP,
) -> ConditionedClones:
    """K clones with arrival times drawn from the survivor density, each
    conditioned to be alive at T via rejection."""
    if K < 0:
        raise ValueError(f"K must be >= 0 (got {K})")
    sampler = ArrivalSampler(T, params)
    gen = _generator(_children(seed, 1)[0])
    if K == 0:
        return ConditionedClones(np.empty(0), np.empty(0, dtype=np.int64), 0)
    return _conditioned_once(gen, sampler, params, K, event_cap)


def conditioned_clone_batch(
    K: int,
    T: float,
    params: ModelParams,
    seed,
    replicates: int,
    threads: int = 1,
    arrivals: Optional[np.ndarray] = None,
    event_cap: int = EVENT_CAP,
) -> dict:
    """Replicated conditioned-clone draws; returns per-replicate mass and
    rejection attempts.  ``arrivals`` pins the arrival times (for
    acceptance-rate checks) instead of sampling them."""
    sampler = ArrivalSampler(T, params)
    masses = np.zeros(replicates, dtype=np.int64)
    attempts = np.zeros(replicates, dtype=np.int64)
    children = _children(seed, replicates)

    def worker(lo: int, hi: int) -> None:
        for i in range(lo, hi):
            res = _conditioned_once(
                _generator(children[i]), sampler, params, K, event_cap,
                arrivals=arrivals,
            )
            masses[i] = res.mass
            attempts[i] = res.attempts

    _run_chunked(worker, replicates, threads)
    return {"mass": masses, "attempts": attempts, "T": T}


def clone_size_sample(
    params: ModelParams,
    t: float,
    seed,
    count: int,
    threads: int = 1,
    event_cap: int = EVENT_CAP,
) -> np.ndarray:
    """Sizes at age t of independent single-cell resistant clones."""
    out = np.zeros(count, dtype=np.int64)
    chunk = 4096
    spans = [(lo, min(lo + chunk, count)) for lo in range(0, count, chunk)]
    children = _children(seed, len(spans))

    def worker(si_lo: int, si_hi: int) -> None:
        for si in range(si_lo, si_hi):
            lo, hi = spans[si]
            status = k.clone_sizes_kernel(
                _generator(children[si]), params.r1, params.d1, t,
                out[lo:hi], event_cap,
            )
            if status == k.EVENT_CAP:
                raise _cap_error(status, event_cap)

    _run_chunked(worker, len(spans), threads)
    return out
