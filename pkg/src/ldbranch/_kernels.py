"""Event-driven exact simulation kernels, JIT-compiled with numba.

Every kernel takes a ``numpy.random.Generator`` and consumes its stream
sequentially, so a replicate is a pure function of its seed.  Kernels are
compiled ``nogil`` so replicates can run on a thread pool.

Status codes: 0 ok, 1 event cap hit, 2 event-log buffer full,
3 clone-ledger capacity full.  Passage times are -1.0 when censored.
"""

import numpy as np
from numba import njit

S_BIRTH = 0
S_DEATH = 1
MUTATION = 2
M_BIRTH = 3
M_DEATH = 4

OK = 0
EVENT_CAP = 1
LOG_FULL = 2
CLONE_CAP = 3

EVENT_NAMES = ("S_BIRTH", "S_DEATH", "MUTATION", "M_BIRTH", "M_DEATH")


@njit(cache=True, nogil=True)
def path_kernel(gen, n0, x0, r0, d0, r1, d1, mut_rate, a_thresh, horizon,
                track_gamma, track_tau, cp_times, cp_out, event_cap):
    """Aggregate-count exact simulation of (Z0, Z1, Z2).

    Mutation creates one acquired mutant without depleting Z0.  Stops at
    min(horizon, all tracked passages found and all checkpoints filled).
    Returns (gamma, tau, status, events, z0, z1, z2, t_stop).
    """
    z0 = n0
    z1 = x0
    z2 = 0
    t = 0.0
    gamma = -1.0
    tau = -1.0
    got_gamma = not track_gamma
    got_tau = not track_tau
    if track_gamma and z1 + z2 > a_thresh:
        gamma = 0.0
        got_gamma = True
    if track_tau and z1 + z2 > z0:
        tau = 0.0
        got_tau = True
    n_cp = cp_times.shape[0]
    cp_i = 0
    events = 0
    # with nothing tracked and no checkpoints the only stop is the horizon
    stop_when_done = track_gamma or track_tau or n_cp > 0
    while True:
        if stop_when_done and got_gamma and got_tau and cp_i >= n_cp:
            break
        rs_b = r0 * z0
        rs_d = d0 * z0
        rs_m = mut_rate * z0
        m_tot = z1 + z2
        rm_b = r1 * m_tot
        rm_d = d1 * m_tot
        total = rs_b + rs_d + rs_m + rm_b + rm_d
        if total <= 0.0:
            t = horizon
            break
        t_next = t - np.log1p(-gen.random()) / total
        while cp_i < n_cp and cp_times[cp_i] < t_next:
            if cp_times[cp_i] > horizon:
                break
            cp_out[cp_i, 0] = z0
            cp_out[cp_i, 1] = z1
            cp_out[cp_i, 2] = z2
            cp_i += 1
        if t_next > horizon:
            t = horizon
            break
        t = t_next
        events += 1
        if events > event_cap:
            return gamma, tau, EVENT_CAP, events, z0, z1, z2, t
        w = gen.random() * total
        if w < rs_b:
            z0 += 1
        elif w < rs_b + rs_d:
            z0 -= 1
        elif w < rs_b + rs_d + rs_m:
            z2 += 1
        elif w < rs_b + rs_d + rs_m + rm_b:
            if gen.random() * m_tot < z1:
                z1 += 1
            else:
                z2 += 1
        else:
            if gen.random() * m_tot < z1:
                z1 -= 1
            else:
                z2 -= 1
        m_tot = z1 + z2
        if not got_gamma and m_tot > a_thresh:
            gamma = t
            got_gamma = True
        if not got_tau and m_tot > z0:
            tau = t
            got_tau = True
    while cp_i < n_cp and cp_times[cp_i] <= horizon:
        cp_out[cp_i, 0] = z0
        cp_out[cp_i, 1] = z1
        cp_out[cp_i, 2] = z2
        cp_i += 1
    return gamma, tau, OK, events, z0, z1, z2, t


@njit(cache=True, nogil=True)
def path_ledger_kernel(gen, n0, x0, r0, d0, r1, d1, mut_rate, a_thresh,
                       horizon, track_gamma, track_tau,
                       clone_birth, clone_size,
                       log_time, log_kind, log_z0, log_z1, log_z2, log_clone,
                       event_cap):
    """Same dynamics as ``path_kernel`` with per-clone bookkeeping of the
    acquired population and an optional event log (enabled when the log
    arrays are non-empty).

    Returns (gamma, tau, status, events, n_clones, n_logged, z0, z1, z2).
    """
    z0 = n0
    z1 = x0
    z2 = 0
    t = 0.0
    gamma = -1.0
    tau = -1.0
    got_gamma = not track_gamma
    got_tau = not track_tau
    if track_gamma and z1 + z2 > a_thresh:
        gamma = 0.0
        got_gamma = True
    if track_tau and z1 + z2 > z0:
        tau = 0.0
        got_tau = True
    n_clones = 0
    clone_cap = clone_birth.shape[0]
    log_cap = log_time.shape[0]
    n_logged = 0
    events = 0
    stop_when_done = track_gamma or track_tau
    while True:
        if stop_when_done and got_gamma and got_tau:
            break
        rs_b = r0 * z0
        rs_d = d0 * z0
        rs_m = mut_rate * z0
        m_tot = z1 + z2
        rm_b = r1 * m_tot
        rm_d = d1 * m_tot
        total = rs_b + rs_d + rs_m + rm_b + rm_d
        if total <= 0.0:
            break
        t_next = t - np.log1p(-gen.random()) / total
        if t_next > horizon:
            break
        t = t_next
        events += 1
        if events > event_cap:
            return (gamma, tau, EVENT_CAP, events, n_clones, n_logged,
                    z0, z1, z2)
        kind = -1
        clone_id = -1
        w = gen.random() * total
        if w < rs_b:
            z0 += 1
            kind = S_BIRTH
        elif w < rs_b + rs_d:
            z0 -= 1
            kind = S_DEATH
        elif w < rs_b + rs_d + rs_m:
            if n_clones >= clone_cap:
                return (gamma, tau, CLONE_CAP, events, n_clones, n_logged,
                        z0, z1, z2)
            clone_birth[n_clones] = t
            clone_size[n_clones] = 1
            clone_id = n_clones
            n_clones += 1
            z2 += 1
            kind = MUTATION
        else:
            birth = w < rs_b + rs_d + rs_m + rm_b
            kind = M_BIRTH if birth else M_DEATH
            if gen.random() * m_tot < z1:
                z1 += 1 if birth else -1
            else:
                # proportional-to-size attribution among acquired clones
                u = gen.random() * z2
                acc = 0
                for c in range(n_clones):
                    acc += clone_size[c]
                    if u < acc:
                        clone_id = c
                        break
                clone_size[clone_id] += 1 if birth else -1
                z2 += 1 if birth else -1
        if log_cap > 0:
            if n_logged >= log_cap:
                return (gamma, tau, LOG_FULL, events, n_clones, n_logged,
                        z0, z1, z2)
            log_time[n_logged] = t
            log_kind[n_logged] = kind
            log_z0[n_logged] = z0
            log_z1[n_logged] = z1
            log_z2[n_logged] = z2
            log_clone[n_logged] = clone_id
            n_logged += 1
        m_tot = z1 + z2
        if not got_gamma and m_tot > a_thresh:
            gamma = t
            got_gamma = True
        if not got_tau and m_tot > z0:
            tau = t
            got_tau = True
    return gamma, tau, OK, events, n_clones, n_logged, z0, z1, z2


@njit(cache=True, nogil=True)
def det_sensitive_kernel(gen, arrival_coeff, r, r1, d1, T, a_thresh,
                         clone_birth, clone_size, event_cap):
    """Deterministic-sensitive mode: mutations arrive as an inhomogeneous
    Poisson process with rate arrival_coeff * e^{-r t} (sampled by exact
    inversion of the cumulative rate); each clone is an independent
    birth-death process.  All clones evolve to time T.

    Returns (gamma, status, events, n_clones) with the ledger filled in
    the clone arrays (size 0 = extinct by T).
    """
    t = 0.0
    mass = 0
    n_clones = 0
    gamma = -1.0
    events = 0
    cap = clone_birth.shape[0]
    # first arrival: solve integral of the rate from t to t_arr = Exp(1)
    draw = -np.log1p(-gen.random())
    level = 1.0 - r * draw / arrival_coeff
    t_arr = -np.log(level) / r if level > 0.0 else np.inf
    while True:
        if mass > 0:
            t_bd = t - np.log1p(-gen.random()) / ((r1 + d1) * mass)
        else:
            t_bd = np.inf
        if t_arr <= t_bd:
            if t_arr > T:
                break
            t = t_arr
            if n_clones >= cap:
                return gamma, CLONE_CAP, events, n_clones
            clone_birth[n_clones] = t
            clone_size[n_clones] = 1
            n_clones += 1
            mass += 1
            events += 1
            draw = -np.log1p(-gen.random())
            level = np.exp(-r * t) - r * draw / arrival_coeff
            t_arr = -np.log(level) / r if level > 0.0 else np.inf
        else:
            if t_bd > T:
                break
            t = t_bd
            events += 1
            if events > event_cap:
                return gamma, EVENT_CAP, events, n_clones
            u = gen.random() * mass
            acc = 0
            idx = 0
            for c in range(n_clones):
                acc += clone_size[c]
                if u < acc:
                    idx = c
                    break
            if gen.random() * (r1 + d1) < r1:
                clone_size[idx] += 1
                mass += 1
            else:
                clone_size[idx] -= 1
                mass -= 1
        if gamma < 0.0 and mass > a_thresh:
            gamma = t
    return gamma, OK, events, n_clones


@njit(cache=True, nogil=True)
def _grow_clone(gen, r1, d1, duration, event_cap):
    """Size at ``duration`` of one birth-death clone started from a single
    cell.  Returns (size, events) with events < 0 when the cap was hit."""
    size = 1
    t = 0.0
    events = 0
    while size > 0:
        t -= np.log1p(-gen.random()) / ((r1 + d1) * size)
        if t > duration:
            break
        events += 1
        if events > event_cap:
            return size, -1
        if gen.random() * (r1 + d1) < r1:
            size += 1
        else:
            size -= 1
    return size, events


@njit(cache=True, nogil=True)
def clone_sizes_kernel(gen, r1, d1, duration, out, event_cap):
    """Fill ``out`` with independent single-clone sizes at ``duration``."""
    for i in range(out.shape[0]):
        size, ev = _grow_clone(gen, r1, d1, duration, event_cap)
        if ev < 0:
            return EVENT_CAP
        out[i] = size
    return OK


@njit(cache=True, nogil=True)
def conditioned_clones_kernel(gen, r1, d1, T, arrivals, out_sizes, event_cap):
    """Clones born at the given arrival times, each conditioned to be
    alive at T by rejection (extinct-by-T paths are discarded).

    Returns (attempts, status); the per-clone acceptance rate equals the
    survival probability at the clone's age T - s.
    """
    attempts = 0
    for i in range(arrivals.shape[0]):
        duration = T - arrivals[i]
        while True:
            attempts += 1
            size, ev = _grow_clone(gen, r1, d1, duration, event_cap)
            if ev < 0:
                return attempts, EVENT_CAP
            if size > 0:
                out_sizes[i] = size
                break
    return attempts, OK
