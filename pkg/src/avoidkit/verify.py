"""Verification surface: exact oracles and statistical checks.

The exact oracle enumerates the joint chain with rational arithmetic and
asserts conditional next-step laws as integer identities (zero
tolerance).  Masses are carried as integers over a per-depth common
denominator; a vectorized int64 path runs when size bounds allow, with
an arbitrary-precision fallback of identical semantics otherwise.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

import numpy as np
from scipy.stats import chi2 as _chi2_dist

from ._kernels import avoidance_scan
from .base import CouplingProcess, KernelProcess
from .core import (
    BudgetExceeded,
    ParameterError,
    PartialOrder,
    Trajectory,
    UnsupportedCheck,
    format_rational,
)

INT64_MASS_LIMIT = 1 << 62
INT64_KEY_LIMIT = 1 << 62


@dataclass
class VerificationReport:
    check: str
    passed: bool
    witnesses: list = field(default_factory=list)
    stats: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"check": self.check, "pass": self.passed,
                "witnesses": self.witnesses, "stats": self.stats}


# ---------------------------------------------------------------------------
# Avoidance
# ---------------------------------------------------------------------------

def check_avoidance(traj: Trajectory, max_witnesses: int = 64) -> VerificationReport:
    """Both collision clauses on every frame pair, attributed by move order.

    For walkers with positions sigma_t(i) < sigma_t(j): same-round means
    equal vertices at t, cross-round means i's new vertex equals j's old
    one.  Total function; all violations are counted, the first
    `max_witnesses` (by time) reported.
    """
    n_same, n_cross, rows = avoidance_scan(traj.configs, traj.orders, cap=max_witnesses)
    witnesses = [
        {"t": t, "i": i, "j": j, "clause": "same-round" if kind == 0 else "cross-round"}
        for (t, i, j, kind) in rows
    ]
    return VerificationReport(
        check="avoidance",
        passed=(n_same == 0 and n_cross == 0),
        witnesses=witnesses,
        stats={"rounds": int(traj.t_max), "same_round_collisions": int(n_same),
               "cross_round_collisions": int(n_cross)},
    )


# ---------------------------------------------------------------------------
# Transition cache for the exact oracle
# ---------------------------------------------------------------------------

class TransitionCache:
    """Reachable joint states with exact, integer-scaled transition weights."""

    def __init__(self, process: CouplingProcess, budget: int):
        est = process.init_size_estimate()
        if est is not None and est > budget:
            raise BudgetExceeded(
                f"init support ({est} states) exceeds budget {budget}", estimate=est)
        init = process.init_distribution()
        if init is None:
            raise UnsupportedCheck(f"{process.name}: no exact init distribution")
        probe = process.enumerate_step(init[0][0])
        if probe is None:
            raise UnsupportedCheck(f"{process.name}: no exact step enumeration")
        self.process = process
        index: dict = {}
        states: list = []
        succs: list[list] = []

        def intern(s) -> int:
            sid = index.get(s)
            if sid is None:
                sid = len(states)
                index[s] = sid
                states.append(s)
                succs.append(None)
            return sid

        frontier = [intern(s) for s, _ in init]
        n_edges = 0
        while frontier:
            nxt = []
            for sid in frontier:
                if succs[sid] is not None:
                    continue
                out = process.enumerate_step(states[sid])
                total = Fraction(0)
                lst = []
                for s2, _order, w in out:
                    if w <= 0:
                        continue
                    total += w
                    known = s2 in index
                    sid2 = intern(s2)
                    if not known:
                        nxt.append(sid2)
                    lst.append((sid2, w))
                if total != 1:
                    raise ParameterError(
                        f"{process.name}: step weights sum to {total}, not 1")
                succs[sid] = lst
                n_edges += len(lst)
                if len(states) + n_edges > budget:
                    raise BudgetExceeded(
                        f"transition cache exceeds budget {budget}",
                        estimate=len(states) + n_edges)
            frontier = nxt

        self.states = states
        self.n_states = len(states)
        self.n_edges = n_edges
        k = process.k
        self.cfg = np.zeros((self.n_states, k), dtype=np.int32)
        for sid, s in enumerate(states):
            self.cfg[sid] = process.config_of(s)

        denom = 1
        for lst in succs:
            for _sid2, w in lst:
                denom = math.lcm(denom, w.denominator)
        self.step_denom = denom
        t_start = np.zeros(self.n_states + 1, dtype=np.int64)
        t_succ = np.zeros(n_edges, dtype=np.int64)
        t_w = np.zeros(n_edges, dtype=np.int64)
        pos = 0
        for sid, lst in enumerate(succs):
            t_start[sid] = pos
            for sid2, w in lst:
                t_succ[pos] = sid2
                t_w[pos] = w.numerator * (denom // w.denominator)
                pos += 1
        t_start[self.n_states] = pos
        self.t_start, self.t_succ, self.t_w = t_start, t_succ, t_w

        d0 = 1
        for _s, w in init:
            d0 = math.lcm(d0, w.denominator)
        self.init_denom = d0
        self.init_sids = np.array([index[s] for s, _ in init], dtype=np.int64)
        self.init_mass = np.array(
            [w.numerator * (d0 // w.denominator) for _s, w in init], dtype=np.int64)


def _csr_expand(cache: TransitionCache, sid: np.ndarray):
    """Flat transition indices for each entry, with the repeat map."""
    counts = (cache.t_start[sid + 1] - cache.t_start[sid]).astype(np.int64)
    total = int(counts.sum())
    rep = np.repeat(np.arange(sid.shape[0], dtype=np.int64), counts)
    base = np.repeat(cache.t_start[sid], counts)
    offs = np.arange(total, dtype=np.int64) - np.repeat(np.cumsum(counts) - counts, counts)
    return rep, base + offs


@dataclass
class JointDistribution:
    """Exact layer-by-layer law of the joint chain from the stationary start.

    ``layers[t]`` maps each reachable joint state to its exact mass at
    time t; every layer sums to 1 exactly.
    """

    horizon: int
    layers: list[dict]
    states: int
    edges: int

    def layer_total(self, t: int) -> Fraction:
        return sum(self.layers[t].values(), Fraction(0))


def enumerate_joint(process: CouplingProcess, horizon: int,
                    budget: int = 10_000_000) -> JointDistribution:
    """Push the exact initial law `horizon` steps through the chain."""
    cache = TransitionCache(process, budget)
    denom = cache.init_denom
    mass = {int(sid): int(m) for sid, m in zip(cache.init_sids, cache.init_mass)}
    layers = [{cache.states[sid]: Fraction(m, denom) for sid, m in mass.items()}]
    for _t in range(horizon):
        new: dict[int, int] = {}
        for sid, m in mass.items():
            for e in range(cache.t_start[sid], cache.t_start[sid + 1]):
                sid2 = int(cache.t_succ[e])
                new[sid2] = new.get(sid2, 0) + m * int(cache.t_w[e])
        mass = new
        denom *= cache.step_denom
        layers.append({cache.states[sid]: Fraction(m, denom)
                       for sid, m in mass.items()})
    return JointDistribution(horizon=horizon, layers=layers,
                             states=cache.n_states, edges=cache.n_edges)


# ---------------------------------------------------------------------------
# Exact conditional laws (the oracle)
# ---------------------------------------------------------------------------

def exact_conditional_laws(process: CouplingProcess, horizon: int,
                           budget: int = 10_000_000,
                           strong_horizon: Optional[int] = None,
                           max_witnesses: int = 16) -> VerificationReport:
    """Assert that each walker is a simple random walk, exactly.

    Builds the joint distribution from the stationary start and checks,
    for every walker, every positive-mass own-position history of length
    up to `horizon`, that the next position is uniform over the other
    N - 1 vertices (integer identity, zero tolerance).  With
    `strong_horizon` set (single relabeling layer over a kernel base
    only), also asserts the label-conditioned identities: the new
    vertex's image is uniform over the N - 1 non-previous values, and
    conditioned on it missing a target v the base walker hits the
    pulled-back vertex with probability exactly 1/(N - 2).
    """
    if horizon < 1:
        raise ParameterError(f"horizon must be >= 1, got {horizon}")
    cache = TransitionCache(process, budget)
    n = process.n
    witnesses: list[dict] = []
    stats: dict = {"horizon": horizon, "states": cache.n_states,
                   "edges": cache.n_edges, "target_law": f"1/{n - 1}",
                   "histories_checked": 0, "conditionals_checked": 0}

    use_int64 = (
        cache.init_denom * cache.step_denom**horizon < INT64_MASS_LIMIT
        and cache.n_states * (n + 1) ** (horizon + 1) < INT64_KEY_LIMIT
    )
    nodes = 0
    for j in range(process.k):
        if use_int64:
            nodes += _walker_conditionals_vec(cache, j, horizon, n, budget - nodes,
                                              witnesses, stats, max_witnesses)
        else:
            nodes += _walker_conditionals_dict(cache, j, horizon, n, budget - nodes,
                                               witnesses, stats, max_witnesses)
    stats["nodes"] = nodes

    if strong_horizon is not None:
        _strong_identities(process, strong_horizon, budget, witnesses, stats,
                           max_witnesses)

    return VerificationReport(check="exact-conditional-laws",
                              passed=not witnesses,
                              witnesses=witnesses, stats=stats)


def _decode_hist(code: int, depth: int, base: int) -> tuple[int, ...]:
    digits = []
    for _ in range(depth):
        digits.append(code % base)
        code //= base
    return tuple(reversed(digits))


_CHUNK_ROWS = 4_000_000


def _merge_keyed(parts):
    """Merge (sorted-unique keys, masses) pairs by exact integer addition."""
    if len(parts) == 1:
        return parts[0]
    keys = np.concatenate([k for k, _ in parts])
    masses = np.concatenate([m for _, m in parts])
    uk, inv = np.unique(keys, return_inverse=True)
    um = np.zeros(uk.shape[0], dtype=np.int64)
    np.add.at(um, inv, masses)
    return uk, um


def _walker_conditionals_vec(cache, j, horizon, n, budget, witnesses, stats,
                             max_witnesses) -> int:
    """Vectorized int64 forward pass for one walker; returns node count.

    Expansions run in bounded slices so peak memory stays flat however
    wide a layer gets.
    """
    nb = n + 1
    pos0 = cache.cfg[cache.init_sids, j].astype(np.int64)
    raw_keys = cache.init_sids * nb + pos0
    keys, inv = np.unique(raw_keys, return_inverse=True)
    mass = np.zeros(keys.shape[0], dtype=np.int64)
    np.add.at(mass, inv, cache.init_mass)
    nodes = 0
    h_space = nb

    for depth in range(1, horizon + 1):
        sid = keys // h_space
        hist = keys % h_space
        nodes += keys.shape[0]
        if nodes > budget:
            raise BudgetExceeded(
                f"conditional-law enumeration passed {nodes} nodes, budget {budget}",
                estimate=nodes)
        counts = (cache.t_start[sid + 1] - cache.t_start[sid]).astype(np.int64)
        cum = np.cumsum(counts)
        total_rows = int(cum[-1]) if cum.shape[0] else 0
        bounds = [0]
        if total_rows > _CHUNK_ROWS:
            marks = np.arange(_CHUNK_ROWS, total_rows, _CHUNK_ROWS)
            bounds += (np.searchsorted(cum, marks, side="left") + 1).tolist()
        bounds.append(keys.shape[0])
        cond_parts = []
        adv_parts = []
        for lo, hi in zip(bounds[:-1], bounds[1:]):
            if lo >= hi:
                continue
            rep, tix = _csr_expand(cache, sid[lo:hi])
            succ = cache.t_succ[tix]
            w = cache.t_w[tix]
            pos = cache.cfg[succ, j].astype(np.int64)
            new_hist = hist[lo:hi][rep] * nb + pos
            new_mass = mass[lo:hi][rep] * w
            ck, cinv = np.unique(new_hist, return_inverse=True)
            cm = np.zeros(ck.shape[0], dtype=np.int64)
            np.add.at(cm, cinv, new_mass)
            cond_parts.append((ck, cm))
            if depth < horizon:
                nk = succ * (h_space * nb) + new_hist
                uk, uinv = np.unique(nk, return_inverse=True)
                um = np.zeros(uk.shape[0], dtype=np.int64)
                np.add.at(um, uinv, new_mass)
                adv_parts.append((uk, um))

        # conditional check at this depth: transitions grouped by (hist, v)
        cond_keys, cond_mass = _merge_keyed(cond_parts)
        tot_keys, tot_inv = np.unique(hist, return_inverse=True)
        tot_mass = np.zeros(tot_keys.shape[0], dtype=np.int64)
        np.add.at(tot_mass, tot_inv, mass)

        hist_of_cond = cond_keys // nb
        v_of_cond = cond_keys % nb
        w_prev = hist_of_cond % nb
        tot_idx = np.searchsorted(tot_keys, hist_of_cond)
        totals = tot_mass[tot_idx] * cache.step_denom
        ok = (cond_mass * (n - 1) == totals) & (v_of_cond != w_prev)
        # every history must offer exactly n-1 targets
        per_hist = np.zeros(tot_keys.shape[0], dtype=np.int64)
        np.add.at(per_hist, tot_idx, np.ones_like(tot_idx))
        support_bad = per_hist != (n - 1)
        stats["histories_checked"] += int(tot_keys.shape[0])
        stats["conditionals_checked"] += int(cond_keys.shape[0])
        if not ok.all() or support_bad.any():
            for idx in np.nonzero(~ok)[0][:max_witnesses]:
                hist_digits = _decode_hist(int(hist_of_cond[idx]), depth, nb)
                if len(witnesses) < max_witnesses:
                    witnesses.append({
                        "kind": "conditional-law", "walker": j + 1,
                        "history": list(hist_digits), "next": int(v_of_cond[idx]),
                        "expected": f"1/{n - 1}",
                        "actual": format_rational(
                            Fraction(int(cond_mass[idx]), int(totals[idx]))),
                    })
            for idx in np.nonzero(support_bad)[0][:max_witnesses]:
                if len(witnesses) < max_witnesses:
                    witnesses.append({
                        "kind": "support", "walker": j + 1,
                        "history": list(_decode_hist(int(tot_keys[idx]), depth, nb)),
                        "targets": int(per_hist[idx]), "expected_targets": n - 1,
                    })

        if depth == horizon:
            break
        keys, mass = _merge_keyed(adv_parts)
        h_space *= nb
    return nodes


def _walker_conditionals_dict(cache, j, horizon, n, budget, witnesses, stats,
                              max_witnesses) -> int:
    """Arbitrary-precision fallback with identical semantics."""
    nb = n + 1
    entries: dict[tuple[int, tuple[int, ...]], int] = {}
    for sid, m in zip(cache.init_sids, cache.init_mass):
        key = (int(sid), (int(cache.cfg[sid, j]),))
        entries[key] = entries.get(key, 0) + int(m)
    nodes = 0
    denom_step = cache.step_denom
    t_start, t_succ, t_w = cache.t_start, cache.t_succ, cache.t_w
    for depth in range(1, horizon + 1):
        nodes += len(entries)
        if nodes > budget:
            raise BudgetExceeded(
                f"conditional-law enumeration passed {nodes} nodes, budget {budget}",
                estimate=nodes)
        cond: dict[tuple, int] = {}
        totals: dict[tuple, int] = {}
        new_entries: dict[tuple, int] = {}
        last = depth == horizon
        for (sid, hist), m in entries.items():
            totals[hist] = totals.get(hist, 0) + m
            for e in range(t_start[sid], t_start[sid + 1]):
                sid2 = int(t_succ[e])
                w = int(t_w[e])
                v = int(cache.cfg[sid2, j])
                cond_key = (hist, v)
                cond[cond_key] = cond.get(cond_key, 0) + m * w
                if not last:
                    key2 = (sid2, hist + (v,))
                    new_entries[key2] = new_entries.get(key2, 0) + m * w
        seen: dict[tuple, int] = {}
        for (hist, v), cm in cond.items():
            seen[hist] = seen.get(hist, 0) + 1
            total = totals[hist] * denom_step
            if v == hist[-1] or cm * (n - 1) != total:
                if len(witnesses) < max_witnesses:
                    witnesses.append({
                        "kind": "conditional-law", "walker": j + 1,
                        "history": list(hist), "next": v,
                        "expected": f"1/{n - 1}",
                        "actual": format_rational(Fraction(cm, total)),
                    })
        for hist, cnt in seen.items():
            if cnt != n - 1 and len(witnesses) < max_witnesses:
                witnesses.append({"kind": "support", "walker": j + 1,
                                  "history": list(hist), "targets": cnt,
                                  "expected_targets": n - 1})
        stats["histories_checked"] += len(totals)
        stats["conditionals_checked"] += len(cond)
        entries = new_entries
    return nodes


# ---------------------------------------------------------------------------
# Strong (label-conditioned) identities for one relabeling layer
# ---------------------------------------------------------------------------

def _strong_identities(process, horizon, budget, witnesses, stats, max_witnesses):
    from .extend import ExtensionProcess

    if not (isinstance(process, ExtensionProcess)
            and isinstance(process.base, KernelProcess)):
        raise UnsupportedCheck(
            "strong identities need a single relabeling layer over a kernel base")
    n = process.n
    n0 = process.base.n
    base = process.base

    perm_list = list(itertools.permutations(range(1, n + 1)))
    perm_index = {p: i for i, p in enumerate(perm_list)}
    np_perms = np.array(perm_list, dtype=np.int64)  # (P, n)
    p_count = len(perm_list)
    perm_swap = np.zeros((p_count, n - 1), dtype=np.int64)
    for i, p in enumerate(perm_list):
        for a in range(1, n):
            q = list(p)
            q[a - 1], q[n - 1] = q[n - 1], q[a - 1]
            perm_swap[i, a - 1] = perm_index[tuple(q)]

    binit = base.init_distribution()
    bstates = [s for s, _ in binit]
    bindex = {s: i for i, s in enumerate(bstates)}
    sb = len(bstates)
    bcfg = np.array(bstates, dtype=np.int64)  # (SB, k0)
    bsucc_start = [0]
    bsucc = []
    bw = []
    bden = 1
    for s in bstates:
        out = [(s2, w) for s2, _o, w in base.enumerate_step(s) if w > 0]
        for _s2, w in out:
            bden = math.lcm(bden, w.denominator)
        bsucc_start.append(bsucc_start[-1] + len(out))
        bsucc.extend(bindex[s2] for s2, _w in out)
        bw.extend(out)
    b_start = np.array(bsucc_start, dtype=np.int64)
    b_succ = np.array(bsucc, dtype=np.int64)
    b_w = np.array([w.numerator * (bden // w.denominator) for _s, w in bw],
                   dtype=np.int64)

    k0 = base.k
    nb0 = n0 + 1
    for j in range(k0):
        # dense entry mass over (p_path, u_hist, base state); the implicit
        # denominator starts at init_denom * n! and gains a factor per depth
        path_space = p_count
        u_space = nb0
        cur_perm_of_path = np.arange(p_count, dtype=np.int64)
        size = path_space * u_space * sb
        if size > budget:
            raise BudgetExceeded("strong-identity space exceeds budget", estimate=size)
        mass = np.zeros(size, dtype=np.int64)
        init_b = np.array([bindex[s] for s, _w in binit], dtype=np.int64)
        init_m = np.array([int(w * base._init_denom) for _s, w in binit], dtype=np.int64)
        for pi in range(p_count):
            u0 = bcfg[init_b, j]
            idx = (pi * u_space + u0) * sb + init_b
            mass[idx] += init_m

        for depth in range(1, horizon + 1):
            ent = np.nonzero(mass)[0]
            m = mass[ent]
            bs = ent % sb
            rest = ent // sb
            u_hist = rest % u_space
            p_path = rest // u_space
            cperm = cur_perm_of_path[p_path]
            u_prev = u_hist % nb0
            w_prev = np_perms[cperm, u_prev - 1]
            p_prev_n = np_perms[cperm, n - 1]

            # strong-history grouping key (marginalizes the hidden base state)
            histk = p_path * u_space + u_hist
            hist_space = path_space * u_space
            tot = np.zeros(hist_space, dtype=np.int64)
            np.add.at(tot, histk, m)

            # (a) image of n is uniform over the n-1 non-previous values
            acc_pn = np.zeros(hist_space * (n + 1), dtype=np.int64)
            for a in range(1, n):
                v = np_perms[cperm, a - 1]
                np.add.at(acc_pn, histk * (n + 1) + v, m * bden)
            # (b) numerator masses for the pulled-back 1/(n-2) identity
            rep, tix = _csr_expand_arrays(b_start, bs)
            if rep.shape[0] * (n - 1) + mass.shape[0] > budget * 4:
                raise BudgetExceeded("strong-identity expansion exceeds budget",
                                     estimate=rep.shape[0] * (n - 1))
            bs2 = b_succ[tix]
            wb = b_w[tix]
            u_next = bcfg[bs2, j]
            acc_num = np.zeros(hist_space * (n + 1), dtype=np.int64)
            new_mass_parts = m[rep] * wb
            for a in range(1, n):
                swapped = perm_swap[cperm[rep], a - 1]
                v_star = np_perms[swapped, u_next - 1]
                np.add.at(acc_num, histk[rep] * (n + 1) + v_star, new_mass_parts)

            hist_ids = np.nonzero(tot)[0]
            stats["strong_histories_checked"] = (
                stats.get("strong_histories_checked", 0) + int(hist_ids.shape[0]))
            hp_prev_n = np.zeros(hist_space, dtype=np.int64)
            hw_prev = np.zeros(hist_space, dtype=np.int64)
            hp_prev_n[histk] = p_prev_n
            hw_prev[histk] = w_prev
            total_next = tot * ((n - 1) * bden)
            for h in hist_ids:
                t_h = int(tot[h])
                for v in range(1, n + 1):
                    pn_mass = int(acc_pn[h * (n + 1) + v])
                    if v == int(hp_prev_n[h]):
                        okA = pn_mass == 0
                    else:
                        okA = pn_mass * (n - 1) == t_h * ((n - 1) * bden)
                    if not okA and len(witnesses) < max_witnesses:
                        witnesses.append({
                            "kind": "strong-new-vertex-law", "walker": j + 1,
                            "history_code": int(h), "v": v,
                            "expected": f"1/{n - 1}" if v != int(hp_prev_n[h]) else "0",
                            "actual": format_rational(
                                Fraction(pn_mass, t_h * (n - 1) * bden)),
                        })
                    if v == int(hp_prev_n[h]) or v == int(hw_prev[h]):
                        continue
                    denom_v = int(total_next[h]) - pn_mass
                    num_v = int(acc_num[h * (n + 1) + v])
                    if num_v * (n - 2) != denom_v and len(witnesses) < max_witnesses:
                        witnesses.append({
                            "kind": "strong-pullback-law", "walker": j + 1,
                            "history_code": int(h), "v": v,
                            "expected": f"1/{n - 2}",
                            "actual": format_rational(Fraction(num_v, denom_v))
                            if denom_v else "undefined",
                        })

            if depth == horizon:
                break
            # advance entries to the next depth
            new_path_space = path_space * (n - 1)
            new_u_space = u_space * nb0
            new_size = new_path_space * new_u_space * sb
            if new_size > budget * 8:
                raise BudgetExceeded("strong-identity space exceeds budget",
                                     estimate=new_size)
            new_mass = np.zeros(new_size, dtype=np.int64)
            for a in range(1, n):
                new_p = p_path[rep] * (n - 1) + (a - 1)
                new_u = u_hist[rep] * nb0 + u_next
                idx = (new_p * new_u_space + new_u) * sb + bs2
                np.add.at(new_mass, idx, new_mass_parts)
            new_cur = np.zeros(new_path_space, dtype=np.int64)
            for a in range(1, n):
                new_cur[np.arange(path_space) * (n - 1) + (a - 1)] = \
                    perm_swap[cur_perm_of_path, a - 1]
            cur_perm_of_path = new_cur
            path_space, u_space, mass = new_path_space, new_u_space, new_mass

    stats["strong_horizon"] = horizon


def _csr_expand_arrays(start: np.ndarray, sid: np.ndarray):
    counts = (start[sid + 1] - start[sid]).astype(np.int64)
    total = int(counts.sum())
    rep = np.repeat(np.arange(sid.shape[0], dtype=np.int64), counts)
    base = np.repeat(start[sid], counts)
    offs = np.arange(total, dtype=np.int64) - np.repeat(np.cumsum(counts) - counts, counts)
    return rep, base + offs


# ---------------------------------------------------------------------------
# Stationarity
# ---------------------------------------------------------------------------

def stationarity_check(process: CouplingProcess, steps: int,
                       budget: int = 10_000_000) -> VerificationReport:
    """Exact equality of the pushforward state law with the initial one."""
    if steps < 1:
        raise ParameterError(f"steps must be >= 1, got {steps}")
    cache = TransitionCache(process, budget)
    s = cache.n_states
    init = np.zeros(s, dtype=object)
    for sid, m in zip(cache.init_sids, cache.init_mass):
        init[sid] += int(m)
    mass = init.copy()
    scale = 1
    witnesses = []
    for step in range(1, steps + 1):
        new = np.zeros(s, dtype=object)
        for sid in range(s):
            m = mass[sid]
            if m == 0:
                continue
            for e in range(cache.t_start[sid], cache.t_start[sid + 1]):
                new[int(cache.t_succ[e])] += m * int(cache.t_w[e])
        mass = new
        scale *= cache.step_denom
        for sid in range(s):
            if mass[sid] != init[sid] * scale:
                if len(witnesses) < 16:
                    witnesses.append({
                        "step": step, "state": repr(cache.states[sid]),
                        "expected": format_rational(
                            Fraction(int(init[sid]), int(cache.init_denom))),
                        "actual": format_rational(
                            Fraction(int(mass[sid]), cache.init_denom * scale)),
                    })
    return VerificationReport(
        check="stationarity", passed=not witnesses, witnesses=witnesses,
        stats={"steps": steps, "states": cache.n_states})


# ---------------------------------------------------------------------------
# Chi-square uniformity (statistical surrogate beyond exact reach)
# ---------------------------------------------------------------------------

def chi_square_uniformity(process: CouplingProcess, samples: int,
                          history_depth: int, alpha: float = 1e-3,
                          seed: int = 0,
                          min_expected: float = 5.0) -> VerificationReport:
    """Bucketed goodness-of-fit of next-vertex counts against uniform.

    Buckets condition on each walker's own last `history_depth`
    positions.  Sparse buckets (expected per-cell count below
    `min_expected`) are skipped and reported, never pooled.  Bonferroni
    correction divides alpha by the number of tested buckets.
    """
    if samples < 100 * (process.n - 1):
        raise ParameterError(
            f"need samples >= {100 * (process.n - 1)} for n={process.n}, got {samples}")
    from .extend import sample_trajectory

    traj = sample_trajectory(process, samples + history_depth, seed)
    n = process.n
    nb = n + 1
    d = history_depth
    witnesses: list[dict] = []
    tested = 0
    skipped = 0
    min_p = 1.0
    walker_stats = []
    for j in range(process.k):
        seqj = traj.configs[:, j].astype(np.int64)
        codes = np.zeros(traj.configs.shape[0] - d, dtype=np.int64)
        for i in range(d):
            codes = codes * nb + seqj[i:i + codes.shape[0]]
        nxt = seqj[d:]
        counts = np.zeros((nb ** d, n), dtype=np.int64)
        np.add.at(counts, (codes, nxt - 1), 1)
        totals = counts.sum(axis=1)
        for bucket in np.nonzero(totals)[0]:
            w_prev = int(bucket % nb)
            row = counts[bucket]
            if row[w_prev - 1] != 0:
                witnesses.append({
                    "kind": "self-transition", "walker": j + 1,
                    "history": list(_decode_hist(int(bucket), d, nb)),
                    "count": int(row[w_prev - 1]),
                })
                continue
            total = int(totals[bucket])
            expected = total / (n - 1)
            if expected < min_expected:
                skipped += 1
                continue
            obs = np.delete(row, w_prev - 1).astype(np.float64)
            stat = float(((obs - expected) ** 2 / expected).sum())
            pval = float(_chi2_dist.sf(stat, df=n - 2))
            tested += 1
            min_p = min(min_p, pval)
            walker_stats.append((j + 1, int(bucket), total, stat, pval))
    threshold = alpha / tested if tested else alpha
    for (walker, bucket, total, stat, pval) in walker_stats:
        if pval < threshold:
            witnesses.append({
                "kind": "chi-square", "walker": walker,
                "history": list(_decode_hist(bucket, d, nb)),
                "rounds": total, "stat": round(stat, 6), "p_value": pval,
            })
    return VerificationReport(
        check="chi-square-uniformity",
        passed=not witnesses,
        witnesses=witnesses,
        stats={"samples": samples, "depth": history_depth, "alpha": alpha,
               "buckets_tested": tested, "buckets_skipped": skipped,
               "bonferroni_threshold": threshold, "min_p_value": min_p},
    )


# ---------------------------------------------------------------------------
# POSAC move orders
# ---------------------------------------------------------------------------

def partial_order_from_meta(meta: dict) -> Optional[PartialOrder]:
    """Reconstruct the walker partial order recorded in a process descriptor."""
    desc = meta.get("process")
    modes = []
    while desc is not None and desc.get("kind") == "extension":
        modes.append(desc["mode"])
        desc = desc.get("base")
    if desc is None or desc.get("kind") != "kernel":
        return None
    rel = desc.get("order_relations")
    if rel is None:
        return None
    k = int(desc["kernel"]["k"])
    order = PartialOrder(k, frozenset((int(i), int(j)) for i, j in rel))
    for mode in reversed(modes):
        if mode == "add":
            order = order.extended()
    return order


def check_posac_orders(traj: Trajectory, r: PartialOrder) -> VerificationReport:
    """Every round order respects r; with debug channels, re-derive each
    added walker's insertion position from consecutive frames."""
    if traj.orders is None:
        raise UnsupportedCheck("trajectory carries no move orders")
    if r.k != traj.k:
        raise ParameterError(f"partial order on [{r.k}] but trajectory has k={traj.k}")
    witnesses: list[dict] = []
    orders = traj.orders
    for (i, jj) in sorted(r.relations):
        bad = np.nonzero(orders[:, i - 1] >= orders[:, jj - 1])[0]
        for t in bad[:8]:
            witnesses.append({"kind": "order-violation", "t": int(t),
                              "i": i, "j": jj})
    stats: dict = {"rounds": int(traj.t_max), "relations": len(r.relations)}

    if traj.debug is not None:
        dbg = traj.debug
        layers = dbg["layers"]
        widths = dbg["widths"]
        offsets = dbg["offsets"]
        case_counts = []
        for li, (n_l, mode) in enumerate(layers):
            if mode != "add":
                continue
            w_in = int(widths[li])
            off = int(offsets[li])
            in_ord = dbg["level_orders"][:, off:off + w_in]
            if li + 1 < len(layers):
                off2 = int(offsets[li + 1])
                w_out = int(widths[li + 1])
                out_cfg = dbg["level_configs"][:, off2:off2 + w_out]
                out_ord = dbg["level_orders"][:, off2:off2 + w_out]
            else:
                out_cfg = traj.configs
                out_ord = traj.orders
            new_col = w_in  # the added walker's column at this level
            new_val = out_cfg[1:, new_col].astype(np.int64)
            prev_out = out_cfg[:-1, :w_in].astype(np.int64)
            matches = prev_out == new_val[:, None]
            n_match = matches.sum(axis=1)
            multi = np.nonzero(n_match > 1)[0]
            for t in multi[:8]:
                witnesses.append({"kind": "non-unique-vacator", "layer": li + 1,
                                  "t": int(t + 1)})
            case1 = n_match == 1
            b_idx = np.argmax(matches, axis=1)
            s = in_ord[1:].astype(np.int64)
            sig = out_ord[1:].astype(np.int64)
            t_idx = np.arange(s.shape[0])
            sb = s[t_idx, b_idx]
            exp_new = np.where(case1, sb + 1, 1)
            bad = sig[:, new_col] != exp_new
            exp_old = np.where(case1[:, None], np.where(s <= sb[:, None], s, s + 1),
                               s + 1)
            bad |= (sig[:, :w_in] != exp_old).any(axis=1)
            for t in np.nonzero(bad)[0][:8]:
                witnesses.append({
                    "kind": "insertion-rule", "layer": li + 1, "t": int(t + 1),
                    "case": "after-vacator" if case1[t] else "moves-first",
                    "order": [int(x) for x in sig[t]],
                })
            case_counts.append({"layer": li + 1,
                                "after_vacator": int(case1.sum()),
                                "moves_first": int((~case1).sum())})
        stats["insertion_cases"] = case_counts
    else:
        stats["insertion_cases"] = "skipped (no debug channels)"

    return VerificationReport(check="posac-orders", passed=not witnesses,
                              witnesses=witnesses, stats=stats)
