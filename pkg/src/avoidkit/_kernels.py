"""Hot inner loops, written once and dispatched to numba or numpy/Python.

Every function here is a deterministic transformation of pre-generated
integer draw arrays; the backend choice cannot change results.  The
@njit variants are compiled lazily on first use and cached on disk.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import backend

_NJIT_CACHE: dict = {}


def _njit_of(fn):
    impl = _NJIT_CACHE.get(fn)
    if impl is None:
        from numba import njit
        impl = njit(cache=True)(fn)
        _NJIT_CACHE[fn] = impl
    return impl


def _loop_impl(fn):
    return _njit_of(fn) if backend.use_numba() else fn


# ---------------------------------------------------------------------------
# Base kernel table -> dense sampling plan
# ---------------------------------------------------------------------------

MAX_PLAN_CELLS = 10_000_000
MAX_PLAN_DENOM = 2**31


@dataclass
class BasePlan:
    """Dense array encoding of a kernel table for the compiled sampler."""

    n0: int
    k0: int
    denom: int
    seq0: np.ndarray          # (k0,) 0-based walker index per move position
    order_pos: np.ndarray     # (k0,) 1-based move position per walker
    pow0: np.ndarray          # (k0,) powers n0**i
    pos_offsets: np.ndarray   # (k0,) block offset per move position
    row_lookup: np.ndarray    # flat (pos, config_id, given_id) -> row index or -1
    row_start: np.ndarray     # (R+1,)
    row_targets: np.ndarray
    row_cum: np.ndarray       # scaled cumulative weights; each row ends at denom


def build_base_plan(kproc) -> BasePlan | None:
    """Flatten a KernelProcess's table into arrays; None when out of plan range."""
    table = kproc.table
    n0, k0 = table.n, table.k
    denom = kproc._denom
    if denom >= MAX_PLAN_DENOM:
        return None
    cells = sum(n0**k0 * n0**pos for pos in range(k0))
    if cells > MAX_PLAN_CELLS:
        return None
    seq = table.move_order.sequence
    pow0 = np.array([n0**i for i in range(k0)], dtype=np.int64)
    pos_offsets = np.zeros(k0, dtype=np.int64)
    off = 0
    for pos in range(k0):
        pos_offsets[pos] = off
        off += n0**k0 * n0**pos
    row_lookup = np.full(off, -1, dtype=np.int64)
    row_start = [0]
    targets: list[int] = []
    cum: list[int] = []
    pos_of_walker = {w: p for p, w in enumerate(seq)}
    for (config, walker, given), dist in sorted(table.rows.items()):
        pos = pos_of_walker[walker]
        config_id = sum((config[i] - 1) * n0**i for i in range(k0))
        given_id = sum((given[j] - 1) * n0**j for j in range(len(given)))
        idx = pos_offsets[pos] + config_id * n0**pos + given_id
        row_lookup[idx] = len(row_start) - 1
        acc = 0
        for t, w in dist:
            acc += int(w * denom)
            targets.append(t)
            cum.append(acc)
        assert acc == denom
        row_start.append(len(targets))
    return BasePlan(
        n0=n0, k0=k0, denom=denom,
        seq0=np.array([w - 1 for w in seq], dtype=np.int64),
        order_pos=np.array(table.move_order.positions, dtype=np.int64),
        pow0=pow0,
        pos_offsets=pos_offsets,
        row_lookup=row_lookup,
        row_start=np.array(row_start, dtype=np.int64),
        row_targets=np.array(targets, dtype=np.int64),
        row_cum=np.array(cum, dtype=np.int64),
    )


# ---------------------------------------------------------------------------
# Stacked extension sampler
# ---------------------------------------------------------------------------

def _sim_stack_loop(T, k0, n0, seq0, pow0, pos_offsets, row_lookup, row_start,
                    row_targets, row_cum, base_order_pos,
                    L, layer_n, layer_mode, widths, k_out,
                    levels, perms,
                    w_draws, a_draws,
                    cfg_out, ord_out, labels_out, want_labels,
                    dbg_cfg, dbg_ord, dbg_offsets, want_debug):
    """Fill rows 1..T of the output arrays; row 0 is the caller's.

    `levels` is the (L+1, k_out) current per-level walker positions and
    `perms` the (L, n_max) current image arrays; both are advanced in place.
    """
    prev = np.empty((L + 1, k_out), dtype=np.int64)
    cur_ord = np.empty((L + 1, k_out), dtype=np.int64)
    for t in range(1, T + 1):
        for lvl in range(L + 1):
            for i in range(widths[lvl]):
                prev[lvl, i] = levels[lvl, i]
        # base round: sequential kernel moves
        config_id = 0
        for i in range(k0):
            config_id += (levels[0, i] - 1) * pow0[i]
        given_id = 0
        for pos in range(k0):
            widx = seq0[pos]
            row = row_lookup[pos_offsets[pos] + config_id * pow0[pos] + given_id]
            r = w_draws[t - 1, pos]
            j = row_start[row]
            while row_cum[j] <= r:
                j += 1
            target = row_targets[j]
            levels[0, widx] = target
            given_id += (target - 1) * pow0[pos]
        for i in range(k0):
            cur_ord[0, i] = base_order_pos[i]
        # relabeling layers, innermost first
        for li in range(L):
            nl = layer_n[li]
            a = a_draws[t - 1, li]
            tmp = perms[li, a - 1]
            perms[li, a - 1] = perms[li, nl - 1]
            perms[li, nl - 1] = tmp
            w_in = widths[li]
            for i in range(w_in):
                levels[li + 1, i] = perms[li, levels[li, i] - 1]
            if layer_mode[li] == 0:  # keep walker count
                for i in range(w_in):
                    cur_ord[li + 1, i] = cur_ord[li, i]
            else:  # add one walker at image of nl
                levels[li + 1, w_in] = perms[li, nl - 1]
                b = -1
                for i in range(w_in):
                    if prev[li, i] == a:
                        b = i
                        break
                if b >= 0:
                    sb = cur_ord[li, b]
                    for i in range(w_in):
                        p = cur_ord[li, i]
                        cur_ord[li + 1, i] = p if p <= sb else p + 1
                    cur_ord[li + 1, w_in] = sb + 1
                else:
                    for i in range(w_in):
                        cur_ord[li + 1, i] = cur_ord[li, i] + 1
                    cur_ord[li + 1, w_in] = 1
        for i in range(k_out):
            cfg_out[t, i] = levels[L, i]
            ord_out[t, i] = cur_ord[L, i]
        if want_labels != 0 and L > 0:
            n_top = layer_n[L - 1]
            for v in range(n_top):
                labels_out[t, v] = perms[L - 1, v]
        if want_debug != 0:
            for lvl in range(L):
                off = dbg_offsets[lvl]
                for i in range(widths[lvl]):
                    dbg_cfg[t, off + i] = levels[lvl, i]
                    dbg_ord[t, off + i] = cur_ord[lvl, i]


def simulate_stack(plan: BasePlan, layers, T, init_cfg, init_perms,
                   w_draws, a_draws, want_labels, want_debug):
    """Run the stacked sampler; returns (configs, orders, labels, debug).

    `layers` is a list of (n, mode) with mode "keep" or "add", innermost
    first; `init_cfg` is the base configuration and `init_perms` the list
    of initial image tuples, one per layer.  Rows 1..T are simulated; the
    caller owns row 0 of `orders` (and of `labels`).
    """
    L = len(layers)
    layer_n = np.array([n for n, _ in layers], dtype=np.int64)
    layer_mode = np.array([0 if m == "keep" else 1 for _, m in layers], dtype=np.int64)
    widths = np.empty(L + 1, dtype=np.int64)
    widths[0] = plan.k0
    for i, (_, mode) in enumerate(layers):
        widths[i + 1] = widths[i] + (mode == "add")
    k_out = int(widths[L])
    n_top = int(layer_n[-1]) if L else plan.n0

    levels = np.zeros((L + 1, k_out), dtype=np.int64)
    levels[0, :plan.k0] = np.asarray(init_cfg, dtype=np.int64)
    perms = np.zeros((max(L, 1), n_top), dtype=np.int64)
    for li in range(L):
        perms[li, :layers[li][0]] = init_perms[li]
        for i in range(int(widths[li])):
            levels[li + 1, i] = perms[li, levels[li, i] - 1]
        if layers[li][1] == "add":
            levels[li + 1, int(widths[li])] = perms[li, layers[li][0] - 1]

    cfg_out = np.zeros((T + 1, k_out), dtype=np.int32)
    ord_out = np.zeros((T + 1, k_out), dtype=np.int32)
    labels_out = np.zeros((T + 1, n_top) if (want_labels and L) else (1, 1), dtype=np.int32)
    if want_debug and L:
        dbg_offsets = np.zeros(L, dtype=np.int64)
        off = 0
        for lvl in range(L):
            dbg_offsets[lvl] = off
            off += int(widths[lvl])
        dbg_cfg = np.zeros((T + 1, off), dtype=np.int32)
        dbg_ord = np.zeros((T + 1, off), dtype=np.int32)
    else:
        dbg_offsets = np.zeros(1, dtype=np.int64)
        dbg_cfg = np.zeros((1, 1), dtype=np.int32)
        dbg_ord = np.zeros((1, 1), dtype=np.int32)

    cfg_out[0, :] = levels[L, :]
    if want_debug and L:
        for lvl in range(L):
            off = int(dbg_offsets[lvl])
            dbg_cfg[0, off:off + int(widths[lvl])] = levels[lvl, :int(widths[lvl])]

    fn = _loop_impl(_sim_stack_loop)
    fn(T, plan.k0, plan.n0, plan.seq0, plan.pow0, plan.pos_offsets,
       plan.row_lookup, plan.row_start, plan.row_targets, plan.row_cum,
       plan.order_pos,
       L, layer_n, layer_mode, widths, k_out,
       levels, perms,
       w_draws, a_draws,
       cfg_out, ord_out, labels_out, 1 if (want_labels and L) else 0,
       dbg_cfg, dbg_ord, dbg_offsets, 1 if (want_debug and L) else 0)

    return (cfg_out, ord_out,
            labels_out if (want_labels and L) else None,
            (dbg_cfg, dbg_ord, dbg_offsets, widths) if (want_debug and L) else None)


# ---------------------------------------------------------------------------
# Avoidance scan
# ---------------------------------------------------------------------------

def _avoidance_loop(configs, orders, wit, cap):
    """Collect (t, i, j, kind) violations; kind 0 same-round, 1 cross-round."""
    T1, k = configs.shape
    n_same = 0
    n_cross = 0
    m = 0
    for t in range(T1):
        for i in range(k):
            for j in range(k):
                if i == j:
                    continue
                if orders[t, i] < orders[t, j]:
                    if configs[t, i] == configs[t, j]:
                        n_same += 1
                        if m < cap:
                            wit[m, 0] = t
                            wit[m, 1] = i + 1
                            wit[m, 2] = j + 1
                            wit[m, 3] = 0
                            m += 1
                    if t > 0 and configs[t, i] == configs[t - 1, j]:
                        n_cross += 1
                        if m < cap:
                            wit[m, 0] = t
                            wit[m, 1] = i + 1
                            wit[m, 2] = j + 1
                            wit[m, 3] = 1
                            m += 1
    return n_same, n_cross, m


def _avoidance_numpy(configs, orders, cap):
    T1, k = configs.shape
    rows = []
    n_same = 0
    n_cross = 0
    for i in range(k):
        for j in range(k):
            if i == j:
                continue
            earlier = orders[:, i] < orders[:, j]
            same = earlier & (configs[:, i] == configs[:, j])
            ts = np.nonzero(same)[0]
            n_same += ts.size
            for t in ts[:cap]:
                rows.append((int(t), i + 1, j + 1, 0))
            cross = earlier[1:] & (configs[1:, i] == configs[:-1, j])
            ts = np.nonzero(cross)[0] + 1
            n_cross += ts.size
            for t in ts[:cap]:
                rows.append((int(t), i + 1, j + 1, 1))
    rows.sort()
    return n_same, n_cross, rows[:cap]


def avoidance_scan(configs, orders, cap=64):
    """(same_count, cross_count, witness rows) for both avoidance clauses."""
    configs = np.ascontiguousarray(configs, dtype=np.int32)
    orders = np.ascontiguousarray(orders, dtype=np.int32)
    if backend.use_numba():
        wit = np.zeros((cap, 4), dtype=np.int64)
        n_same, n_cross, m = _njit_of(_avoidance_loop)(configs, orders, wit, cap)
        rows = sorted(tuple(int(x) for x in wit[i]) for i in range(m))
        return n_same, n_cross, rows
    return _avoidance_numpy(configs, orders, cap)


# ---------------------------------------------------------------------------
# Adversary jam-set builders
# ---------------------------------------------------------------------------

def _hist_jam_loop(freqs, n, f, exclude_current, jam):
    T = jam.shape[0]
    counts = np.zeros(n + 1, dtype=np.int64)
    counts[freqs[0]] += 1
    for t in range(1, T + 1):
        cur = freqs[t - 1]
        for slot in range(f):
            best = -1
            bestc = -1
            for v in range(1, n + 1):
                if exclude_current != 0 and v == cur:
                    continue
                taken = False
                for s in range(slot):
                    if jam[t - 1, s] == v:
                        taken = True
                        break
                if taken:
                    continue
                if counts[v] > bestc:
                    best = v
                    bestc = counts[v]
            jam[t - 1, slot] = best
        counts[freqs[t]] += 1


def _hist_jam_numpy(freqs, n, f, exclude_current, jam):
    T = jam.shape[0]
    onehot = np.zeros((T, n), dtype=np.int64)
    onehot[np.arange(T), freqs[:T] - 1] = 1
    counts = np.cumsum(onehot, axis=0)  # counts[t] = history counts before hop t+1
    work = counts.astype(np.int64)
    if exclude_current:
        work[np.arange(T), freqs[:T] - 1] = -1
    for slot in range(f):
        pick = np.argmax(work, axis=1)  # first max = lowest index on ties
        jam[:, slot] = pick + 1
        work[np.arange(T), pick] = -2
    return jam


def _recent_jam_loop(freqs, n, f, exclude_current, jam):
    T = jam.shape[0]
    last = np.full(n + 1, -1, dtype=np.int64)
    last[freqs[0]] = 0
    for t in range(1, T + 1):
        cur = freqs[t - 1]
        for slot in range(f):
            best = -1
            bestt = -2
            for v in range(1, n + 1):
                if exclude_current != 0 and v == cur:
                    continue
                taken = False
                for s in range(slot):
                    if jam[t - 1, s] == v:
                        taken = True
                        break
                if taken:
                    continue
                key = last[v] * (n + 1) - v  # recency first, then lower index
                if best == -1 or key > bestt:
                    best = v
                    bestt = key
            jam[t - 1, slot] = best
        last[freqs[t]] = t
    return jam


def _recent_jam_numpy(freqs, n, f, exclude_current, jam):
    T = jam.shape[0]
    marks = np.full((T, n), -1, dtype=np.int64)
    marks[np.arange(T), freqs[:T] - 1] = np.arange(T)
    last = np.maximum.accumulate(marks, axis=0)  # last occurrence time before hop t+1
    key = last * (n + 1) - np.arange(1, n + 1)[None, :]
    if exclude_current:
        # sentinel must stay negatable in int64 (min would overflow under -key)
        key[np.arange(T), freqs[:T] - 1] = -(1 << 62)
    picks = np.argsort(-key, axis=1, kind="stable")[:, :f]
    jam[:, :] = picks + 1
    return jam


def histogram_jam(freqs, n, f, exclude_current=True):
    """Jam the f most frequent past frequencies; ties toward lower index."""
    T = freqs.shape[0] - 1
    jam = np.zeros((T, f), dtype=np.int64)
    freqs = np.ascontiguousarray(freqs, dtype=np.int64)
    if backend.use_numba():
        _njit_of(_hist_jam_loop)(freqs, n, f, 1 if exclude_current else 0, jam)
        return jam
    return _hist_jam_numpy(freqs, n, f, exclude_current, jam)


def recency_jam(freqs, n, f, exclude_current):
    """Jam the f most recently used frequencies (unseen padded by low index)."""
    T = freqs.shape[0] - 1
    jam = np.zeros((T, f), dtype=np.int64)
    freqs = np.ascontiguousarray(freqs, dtype=np.int64)
    if backend.use_numba():
        _njit_of(_recent_jam_loop)(freqs, n, f, 1 if exclude_current else 0, jam)
        return jam
    return _recent_jam_numpy(freqs, n, f, exclude_current, jam)


def warmup():
    """Compile the @njit kernels ahead of time (no-op on the numpy backend)."""
    if not backend.use_numba():
        return
    from .base import trivial_sac
    from .extend import extend_sac, sample_trajectory
    proc = extend_sac(trivial_sac(2))
    traj = sample_trajectory(proc, 4, seed=0, labels=True, debug=True)
    avoidance_scan(traj.configs, traj.orders)
    f = np.array([1, 2, 1, 2, 1], dtype=np.int64)
    histogram_jam(f, 3, 1)
    recency_jam(f, 3, 1, True)
