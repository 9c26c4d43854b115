"""Compiled simulation kernels for bulk Monte Carlo.

The block and trajectory kernels replay :mod:`dynperc.engine` draw for
draw (same generator, same order), only with edges packed into int64
keys and the infected set reduced to what the dynamics need: a removal
heap and a per-edge "copy 1 present" flag. Higher copy indices never
touch the environment, so their exact labels are not tracked here.

Status codes returned by kernels: 0 ok, 1 event guard hit,
2 lattice coordinate overflow, 3 monotone-coupling order violated.
"""
from __future__ import annotations

import heapq
import math

import numpy as np
from numba import njit, types
from numba.typed import Dict

OK, CENSORED, OVERFLOW, ORDER_VIOLATION = 0, 1, 2, 3

# coupling cases, numbered as in the colouring rule
CASE_OTHER, CASE_VB_OTHER, CASE_LEFT, CASE_VB_LEFT, CASE_GOOD = 1, 2, 3, 4, 5


@njit(cache=True)
def _edge_key(pos, k, d, bits, half):
    """Key of the edge at ``pos`` in direction index ``k``; -1 on overflow."""
    axis = k // 2
    key = 0
    for i in range(d):
        c = pos[i]
        if i == axis and k % 2 == 1:
            c -= 1
        if c >= half - 1 or c <= 1 - half:
            return -1
        key = key * (1 << bits) + (c + half)
    return key * 8 + axis


@njit(cache=True)
def _grow(state, det, managed, pending):
    n = state.shape[0] * 2
    s2 = np.zeros(n, np.bool_)
    d2 = np.zeros(n)
    m2 = np.zeros(n, np.bool_)
    p2 = np.zeros(n, np.bool_)
    s2[: state.shape[0]] = state
    d2[: det.shape[0]] = det
    m2[: managed.shape[0]] = managed
    p2[: pending.shape[0]] = pending
    return s2, d2, m2, p2


@njit(cache=True)
def _look(slot, t, p, mu, state, det, managed, pending, rng):
    """Examine an existing record; mirrors ``env.examine`` cases (b)-(d)."""
    if managed[slot]:
        return state[slot]
    if pending[slot]:
        state[slot] = rng.random() < p
        pending[slot] = False
    elif rng.random() >= math.exp(-mu * (t - det[slot])):
        state[slot] = rng.random() < p
    det[slot] = t
    return state[slot]


@njit(cache=True)
def _sample_dir(cdf, u):
    k = 0
    while k < cdf.shape[0] - 1 and u >= cdf[k]:
        k += 1
    return k


@njit(cache=True)
def _walk(d, p, mu, cdf, horizon, rng, max_events, pos, cnt, slots, arrs):
    """One block (``horizon < 0``) or one fixed-horizon run.

    Writes counts ``R, L, R_a, L_a, U, U_a`` into ``cnt`` and the end
    position into ``pos``; returns ``(status, end_time, arrays)``.
    """
    state, det, managed, pending = arrs
    bits = 60 // d
    half = 1 << (bits - 1)
    slots.clear()
    nslot = 0
    for i in range(d):
        pos[i] = 0
    for i in range(6):
        cnt[i] = 0
    heap = [(0.0, 0, 0, 0)]
    heap.pop()
    seq = 0
    n_events = 0
    next_attempt = rng.exponential(1.0)
    while True:
        nr = heap[0][0] if len(heap) > 0 else np.inf
        if horizon >= 0.0 and min(nr, next_attempt) > horizon:
            return OK, horizon, (state, det, managed, pending)
        n_events += 1
        if n_events > max_events:
            return CENSORED, nr, (state, det, managed, pending)
        if len(heap) > 0 and nr <= next_attempt:
            r, _, slot, c1 = heapq.heappop(heap)
            if c1 == 1:
                managed[slot] = False
                pending[slot] = True
            if horizon < 0.0 and len(heap) == 0:
                return OK, r, (state, det, managed, pending)
            continue
        t = next_attempt
        k = _sample_dir(cdf, rng.random())
        key = _edge_key(pos, k, d, bits, half)
        if key < 0:
            return OVERFLOW, t, (state, det, managed, pending)
        slot = slots[key] if key in slots else -1
        if slot < 0:
            if nslot == state.shape[0]:
                state, det, managed, pending = _grow(state, det, managed, pending)
            slot = nslot
            nslot += 1
            slots[key] = slot
            state[slot] = rng.random() < p
            det[slot] = t
            managed[slot] = False
            pending[slot] = False
            is_open = state[slot]
        else:
            is_open = _look(slot, t, p, mu, state, det, managed, pending, rng)
        axis = k // 2
        if is_open:
            pos[axis] += 1 if k % 2 == 0 else -1
            cnt[4] += 1
        cnt[5] += 1
        if k == 0:
            cnt[2] += 1
            cnt[0] += is_open
        elif k == 1:
            cnt[3] += 1
            cnt[1] += is_open
        life = rng.exponential(1.0 / mu)
        c1 = 0
        if not managed[slot]:
            managed[slot] = True
            c1 = 1
        heapq.heappush(heap, (t + life, seq, slot, c1))
        seq += 1
        next_attempt = t + rng.exponential(1.0)


def _new_arrays(cap=64):
    return (np.zeros(cap, np.bool_), np.zeros(cap), np.zeros(cap, np.bool_), np.zeros(cap, np.bool_))


@njit(cache=True)
def blocks_kernel(d, p, mu, cdf, n, rng, max_events, horizon, arrs):
    """Run ``n`` independent blocks (``horizon < 0``) or trajectories.

    Returns ``(status, tau[n], disp[n, d], counts[n, 6])``.
    """
    tau = np.zeros(n)
    disp = np.zeros((n, d), np.int64)
    counts = np.zeros((n, 6), np.int64)
    slots = Dict.empty(key_type=types.int64, value_type=types.int64)
    pos = np.zeros(d, np.int64)
    cnt = np.zeros(6, np.int64)
    for i in range(n):
        status, t_end, arrs = _walk(d, p, mu, cdf, horizon, rng, max_events, pos, cnt, slots, arrs)
        if status != OK:
            return status, tau, disp, counts
        tau[i] = t_end
        disp[i, :] = pos
        counts[i, :] = cnt
    return OK, tau, disp, counts


# ---------------------------------------------------------------------------
# skeleton: attempt times and copy lifetimes, independent of the walk
# ---------------------------------------------------------------------------


@njit(cache=True)
def _skeleton(mu, rng, max_events, times, lives):
    """Attempt times and lifetimes up to the first regeneration.

    Returns ``(status, m, tau, times, lives)``; only the first ``m``
    entries of the arrays are meaningful.
    """
    heap = [0.0]
    heap.pop()
    m = 0
    n_events = 0
    t_next = rng.exponential(1.0)
    while True:
        n_events += 1
        if n_events > max_events:
            return CENSORED, m, np.inf, times, lives
        if len(heap) > 0 and heap[0] <= t_next:
            r = heapq.heappop(heap)
            if len(heap) == 0:
                return OK, m, r, times, lives
            continue
        if m == times.shape[0]:
            t2 = np.zeros(2 * m)
            l2 = np.zeros(2 * m)
            t2[:m] = times
            l2[:m] = lives
            times, lives = t2, l2
        life = rng.exponential(1.0 / mu)
        times[m] = t_next
        lives[m] = life
        heapq.heappush(heap, t_next + life)
        m += 1
        t_next += rng.exponential(1.0)


@njit(cache=True)
def _classify(u, b1, b2, b3, b4):
    if u < b1:
        return CASE_OTHER
    if u < b2:
        return CASE_VB_OTHER
    if u < b3:
        return CASE_LEFT
    if u < b4:
        return CASE_VB_LEFT
    return CASE_GOOD


@njit(cache=True)
def _store_look(key, t, p, mu, slots, nslot, arrs, rng):
    """Examine ``key`` in a store; returns ``(open, slot, nslot, arrs)``."""
    state, det, managed, pending = arrs
    slot = slots[key] if key in slots else -1
    if slot < 0:
        if nslot == state.shape[0]:
            state, det, managed, pending = _grow(state, det, managed, pending)
        slot = nslot
        nslot += 1
        slots[key] = slot
        state[slot] = rng.random() < p
        det[slot] = t
        managed[slot] = False
        pending[slot] = False
        return state[slot], slot, nslot, (state, det, managed, pending)
    is_open = _look(slot, t, p, mu, state, det, managed, pending, rng)
    return is_open, slot, nslot, (state, det, managed, pending)


@njit(cache=True)
def coupled_kernel(d, p, mu, bounds, q_vb, n, rng, max_events, force_vb):
    """Blocks of the two-bias colouring coupling.

    ``bounds = (b1, b2, b3, b4)`` are the colouring thresholds. With
    ``force_vb`` every block is conditioned to contain a very-bad point
    and reports its probability ``w = 1 - (1 - q_vb)**m``; otherwise
    ``w`` is 1. Output columns of ``ints``: disp_lo, disp_hi,
    first very-bad index (-1 if none), case at that point, m, n_vb, and
    counts of cases 1..5.
    """
    b1, b2, b3, b4 = bounds
    bits = 60 // d
    half = 1 << (bits - 1)
    tau = np.zeros(n)
    weight = np.ones(n)
    ints = np.zeros((n, 11), np.int64)
    times = np.zeros(64)
    lives = np.zeros(64)
    slots_a = Dict.empty(key_type=types.int64, value_type=types.int64)
    slots_b = Dict.empty(key_type=types.int64, value_type=types.int64)
    arrs_a = (np.zeros(64, np.bool_), np.zeros(64), np.zeros(64, np.bool_), np.zeros(64, np.bool_))
    arrs_b = (np.zeros(64, np.bool_), np.zeros(64), np.zeros(64, np.bool_), np.zeros(64, np.bool_))
    pos_a = np.zeros(d, np.int64)
    pos_b = np.zeros(d, np.int64)
    log1m_q = math.log1p(-q_vb) if q_vb < 1.0 else -np.inf
    len_other = b2 - b1
    len_vb = (b2 - b1) + (b4 - b3)
    for i in range(n):
        status, m, t_reg, times, lives = _skeleton(mu, rng, max_events, times, lives)
        if status != OK:
            return status, tau, weight, ints
        tau[i] = t_reg
        ints[i, 4] = m
        forced = -1
        if force_vb:
            w = -math.expm1(m * log1m_q)
            weight[i] = w
            j = math.ceil(math.log1p(-rng.random() * w) / log1m_q)
            forced = min(max(int(j), 1), m) - 1
        slot_a = np.zeros(m, np.int64)
        slot_b = np.zeros(m, np.int64)
        c1_a = np.zeros(m, np.bool_)
        c1_b = np.zeros(m, np.bool_)
        order = np.argsort(times[:m] + lives[:m], kind="mergesort")
        slots_a.clear()
        nslot_a = 0
        nslot_b = 0
        pos_a[:] = 0
        pos_b[:] = 0
        split = False
        first_vb = -1
        n_vb = 0
        ri = 0
        for j in range(m + 1):
            t = times[j] if j < m else np.inf
            # removals strictly before (or tied with) this attempt
            while ri < m and times[order[ri]] + lives[order[ri]] <= t:
                c = order[ri]
                ri += 1
                if c1_a[c]:
                    arrs_a[2][slot_a[c]] = False
                    arrs_a[3][slot_a[c]] = True
                if split and c1_b[c]:
                    arrs_b[2][slot_b[c]] = False
                    arrs_b[3][slot_b[c]] = True
            if j == m:
                break
            if force_vb and j < forced:
                v = rng.random() * (1.0 - len_vb)
                if v < b1:
                    u = v
                elif v < b1 + (b3 - b2):
                    u = b2 + (v - b1)
                else:
                    u = min(b4 + (v - b1 - (b3 - b2)), np.nextafter(1.0, 0.0))
            elif force_vb and j == forced:
                v = rng.random() * len_vb
                u = b1 + v if v < len_other else b3 + (v - len_other)
                u = min(max(u, b1), np.nextafter(b4, 0.0))
                if u >= b2 and u < b3:
                    u = b1
            else:
                u = rng.random()
            case = _classify(u, b1, b2, b3, b4)
            ints[i, 5 + case] += 1
            other = 2 + int(rng.random() * (2 * d - 2)) if d > 1 else 0
            if case == CASE_OTHER:
                k_a = other
                k_b = other
            elif case == CASE_VB_OTHER:
                k_a = other
                k_b = 0
            elif case == CASE_LEFT:
                k_a = 1
                k_b = 1
            elif case == CASE_VB_LEFT:
                k_a = 1
                k_b = 0
            else:
                k_a = 0
                k_b = 0
            if case == CASE_VB_OTHER or case == CASE_VB_LEFT:
                n_vb += 1
                if first_vb < 0:
                    first_vb = j
                    ints[i, 3] = case
            if not split and k_a != k_b:
                split = True
                slots_b.clear()
                for key in slots_a:
                    slots_b[key] = slots_a[key]
                nslot_b = nslot_a
                sa, da, ma, pa = arrs_a
                if arrs_b[0].shape[0] < sa.shape[0]:
                    arrs_b = (np.zeros(sa.shape[0], np.bool_), np.zeros(sa.shape[0]),
                              np.zeros(sa.shape[0], np.bool_), np.zeros(sa.shape[0], np.bool_))
                arrs_b[0][:nslot_a] = sa[:nslot_a]
                arrs_b[1][:nslot_a] = da[:nslot_a]
                arrs_b[2][:nslot_a] = ma[:nslot_a]
                arrs_b[3][:nslot_a] = pa[:nslot_a]
            key_a = _edge_key(pos_a, k_a, d, bits, half)
            if key_a < 0:
                return OVERFLOW, tau, weight, ints
            open_a, s_a, nslot_a, arrs_a = _store_look(key_a, t, p, mu, slots_a, nslot_a, arrs_a, rng)
            slot_a[j] = s_a
            if not arrs_a[2][s_a]:
                arrs_a[2][s_a] = True
                c1_a[j] = True
            if open_a:
                pos_a[k_a // 2] += 1 if k_a % 2 == 0 else -1
            if split:
                key_b = _edge_key(pos_b, k_b, d, bits, half)
                if key_b < 0:
                    return OVERFLOW, tau, weight, ints
                open_b, s_b, nslot_b, arrs_b = _store_look(key_b, t, p, mu, slots_b, nslot_b, arrs_b, rng)
                slot_b[j] = s_b
                if not arrs_b[2][s_b]:
                    arrs_b[2][s_b] = True
                    c1_b[j] = True
                if open_b:
                    pos_b[k_b // 2] += 1 if k_b % 2 == 0 else -1
            else:
                slot_b[j] = s_a
                c1_b[j] = c1_a[j]
                pos_b[:] = pos_a
        ints[i, 0] = pos_a[0]
        ints[i, 1] = pos_b[0]
        ints[i, 2] = first_vb
        ints[i, 5] = n_vb
    return OK, tau, weight, ints


@njit(cache=True)
def monotone_pair_kernel(p, mu, a1, a2, n, rng, max_events):
    """One-dimensional co-location coupling of two biased walks.

    ``a1 < a2`` are the right-jump probabilities of the two walks.
    Returns ``(status, tau[n], ints[n, 4])`` with columns disp1, disp2,
    attempts, co-located attempts with split directions.
    """
    tau = np.zeros(n)
    ints = np.zeros((n, 4), np.int64)
    half = np.int64(1) << 59
    slots = Dict.empty(key_type=types.int64, value_type=types.int64)
    arrs = (np.zeros(64, np.bool_), np.zeros(64), np.zeros(64, np.bool_), np.zeros(64, np.bool_))
    pos = np.zeros(1, np.int64)
    for i in range(n):
        slots.clear()
        nslot = 0
        x1 = 0
        x2 = 0
        heap = [(0.0, 0, 0, 0)]
        heap.pop()
        seq = 0
        n_events = 0
        attempts = 0
        splits = 0
        t = 0.0
        next_attempt = rng.exponential(1.0)
        while True:
            n_events += 1
            if n_events > max_events:
                return CENSORED, tau, ints
            if len(heap) > 0 and heap[0][0] <= next_attempt:
                r, _, slot, c1 = heapq.heappop(heap)
                if c1 == 1:
                    arrs[2][slot] = False
                    arrs[3][slot] = True
                if len(heap) == 0:
                    tau[i] = r
                    break
                continue
            t = next_attempt
            attempts += 1
            if x1 == x2:
                u = rng.random()
                if u < a1:
                    k1, k2 = 0, 0
                elif u < a2:
                    k1, k2 = 1, 0
                    splits += 1
                else:
                    k1, k2 = 1, 1
                pos[0] = x1
                key1 = _edge_key(pos, k1, 1, 60, half)
                o1, s1, nslot, arrs = _store_look(key1, t, p, mu, slots, nslot, arrs, rng)
                c1 = 0
                if not arrs[2][s1]:
                    arrs[2][s1] = True
                    c1 = 1
                heapq.heappush(heap, (t + rng.exponential(1.0 / mu), seq, s1, c1))
                seq += 1
                if k1 == k2:
                    if o1:
                        step = 1 if k1 == 0 else -1
                        x1 += step
                        x2 += step
                else:
                    key2 = _edge_key(pos, k2, 1, 60, half)
                    o2, s2, nslot, arrs = _store_look(key2, t, p, mu, slots, nslot, arrs, rng)
                    c1 = 0
                    if not arrs[2][s2]:
                        arrs[2][s2] = True
                        c1 = 1
                    heapq.heappush(heap, (t + rng.exponential(1.0 / mu), seq, s2, c1))
                    seq += 1
                    if o1:
                        x1 -= 1
                    if o2:
                        x2 += 1
                rate = 1.0 if x1 == x2 else 2.0
            else:
                first = rng.random() < 0.5
                a = a1 if first else a2
                k = 0 if rng.random() < a else 1
                pos[0] = x1 if first else x2
                key = _edge_key(pos, k, 1, 60, half)
                o, s, nslot, arrs = _store_look(key, t, p, mu, slots, nslot, arrs, rng)
                c1 = 0
                if not arrs[2][s]:
                    arrs[2][s] = True
                    c1 = 1
                heapq.heappush(heap, (t + rng.exponential(1.0 / mu), seq, s, c1))
                seq += 1
                if o:
                    if first:
                        x1 += 1 if k == 0 else -1
                    else:
                        x2 += 1 if k == 0 else -1
                if x1 > x2:
                    return ORDER_VIOLATION, tau, ints
                rate = 1.0 if x1 == x2 else 2.0
            next_attempt = t + rng.exponential(1.0 / rate)
        ints[i, 0] = x1
        ints[i, 1] = x2
        ints[i, 2] = attempts
        ints[i, 3] = splits
    return OK, tau, ints
