"""Extension operators: grow the graph by one vertex per layer.

A layer couples the base process on K_{n-1} with an independent
relabeling chain on S_n and emits the relabeled configuration.  In
"keep" mode the walker count stays fixed; in "add" mode the image of the
new vertex n becomes one more walker, moving in a round order that
inserts it directly after whichever walker vacated its target (or first
when the target was free last round).  Layers compose, so iterating
reaches any larger graph.
"""

from __future__ import annotations

import itertools
import math
from fractions import Fraction
from typing import Optional

import numpy as np

from .base import CouplingProcess, KernelProcess
from .core import ParameterError, Trajectory
from .permchain import swap_last
from .seeds import SeedStreams


def _insert_order(order_s: tuple[int, ...], b0: Optional[int]) -> tuple[int, ...]:
    """Round order with the new walker inserted after position of b (or first)."""
    if b0 is None:
        return tuple(p + 1 for p in order_s) + (1,)
    sb = order_s[b0]
    return tuple(p if p <= sb else p + 1 for p in order_s) + (sb + 1,)


class ExtensionProcess(CouplingProcess):
    """One keep- or add-layer above a base coupling process."""

    def __init__(self, base: CouplingProcess, mode: str):
        if mode not in ("keep", "add"):
            raise ParameterError(f"mode must be 'keep' or 'add', got {mode!r}")
        if mode == "add" and base.partial_order is None:
            raise ParameterError(
                "add mode needs a base with order metadata; wrap a plain coupling "
                "with .as_posac() first")
        self.base = base
        self.mode = mode
        self.n = base.n + 1
        self.k = base.k + (1 if mode == "add" else 0)
        self.depth = getattr(base, "depth", 0) + 1
        self.name = f"{base.name}+{mode}{self.n}"
        if mode == "add":
            self.partial_order = base.partial_order.extended()
        else:
            self.partial_order = base.partial_order

    def descriptor(self) -> dict:
        return {"kind": "extension", "mode": self.mode, "n": self.n,
                "base": self.base.descriptor()}

    # --- exact enumeration ---

    def init_distribution(self):
        base_init = self.base.init_distribution()
        if base_init is None:
            return None
        w_perm = Fraction(1, math.factorial(self.n))
        out = []
        for perm in itertools.permutations(range(1, self.n + 1)):
            for bs, w in base_init:
                out.append(((bs, perm), w * w_perm))
        return out

    def init_size_estimate(self):
        base = self.base.init_size_estimate()
        return None if base is None else base * math.factorial(self.n)

    def enumerate_step(self, state):
        bs, perm = state
        base_steps = self.base.enumerate_step(bs)
        if base_steps is None:
            return None
        prev_cfg = self.base.config_of(bs)
        w_a = Fraction(1, self.n - 1)
        out = []
        for a in range(1, self.n):
            perm2 = swap_last(perm, a)
            if self.mode == "add":
                b0 = next((i for i, u in enumerate(prev_cfg) if u == a), None)
            for bs2, order_s, w in base_steps:
                if self.mode == "add":
                    order = _insert_order(order_s, b0)
                else:
                    order = order_s
                out.append(((bs2, perm2), order, w * w_a))
        return out

    # --- sampling ---

    def sample_init(self, streams: SeedStreams):
        bs = self.base.sample_init(streams)
        perm = tuple(int(v) + 1 for v in streams.perm_init(self.depth).permutation(self.n))
        return (bs, perm)

    def sample_step(self, state, streams: SeedStreams):
        bs, perm = state
        prev_cfg = self.base.config_of(bs)
        bs2, order_s = self.base.sample_step(bs, streams)
        a = int(streams.perm_steps(self.depth).integers(1, self.n))
        perm2 = swap_last(perm, a)
        if self.mode == "add":
            b0 = next((i for i, u in enumerate(prev_cfg) if u == a), None)
            order = _insert_order(order_s, b0)
        else:
            order = order_s
        return (bs2, perm2), order

    # --- projections ---

    def config_of(self, state):
        bs, perm = state
        cfg = tuple(perm[u - 1] for u in self.base.config_of(bs))
        if self.mode == "add":
            cfg = cfg + (perm[self.n - 1],)
        return cfg

    def labels_of(self, state):
        return state[1]

    def frame0_order(self):
        base0 = self.base.frame0_order()
        if self.mode == "add":
            return base0 + (self.k,)
        return base0

    def stack_plan(self):
        chain: list[tuple[int, str]] = []
        proc: CouplingProcess = self
        while isinstance(proc, ExtensionProcess):
            chain.append((proc.n, proc.mode))
            proc = proc.base
        if not isinstance(proc, KernelProcess):
            return None
        inner = proc.stack_plan()
        if inner is None:
            return None
        chain.reverse()
        return (proc, inner[1], chain)


def _certify_base(base: CouplingProcess, horizon: int) -> None:
    from .verify import exact_conditional_laws
    rep = exact_conditional_laws(base, horizon)
    if not rep.passed:
        raise ParameterError(
            f"base {base.name} failed conditional-law certification at "
            f"horizon {horizon}: {rep.witnesses[:2]}")


def extend_sac(base: CouplingProcess,
               verify_horizon: Optional[int] = None) -> ExtensionProcess:
    """Same walker count on one more vertex.

    The construction assumes the base really is an avoidance coupling;
    pass `verify_horizon` to certify it with the exact oracle first
    instead of trusting the caller.
    """
    if verify_horizon is not None:
        _certify_base(base, verify_horizon)
    return ExtensionProcess(base, "keep")


def extend_posac(base: CouplingProcess,
                 verify_horizon: Optional[int] = None) -> ExtensionProcess:
    """One more walker and one more vertex; the new walker is incomparable."""
    if verify_horizon is not None:
        _certify_base(base, verify_horizon)
    return ExtensionProcess(base, "add")


def iterate_extension(base: CouplingProcess, target_n: int, mode: str) -> CouplingProcess:
    """Compose keep- or add-layers until the graph has target_n vertices."""
    if target_n <= base.n:
        raise ParameterError(f"target_n must exceed base n={base.n}, got {target_n}")
    proc = base
    for _ in range(target_n - base.n):
        proc = ExtensionProcess(proc, mode)
    return proc


def sample_trajectory(process: CouplingProcess, t_max: int, seed: int,
                      labels: bool = False, debug: bool = False) -> Trajectory:
    """Stationary-start realization over t = 0..t_max; deterministic in seed.

    The finite window reproduces the stationary law: the base starts from
    its exact stationary distribution and each relabeling layer from a
    uniform permutation.
    """
    if t_max < 1:
        raise ParameterError(f"t_max must be >= 1, got {t_max}")
    streams = SeedStreams(seed)
    meta = {"seed": int(seed), "process": process.descriptor(),
            "t0": "stationary-init", "n": process.n, "k": process.k}
    stack = process.stack_plan()
    if stack is not None:
        return _sample_stack(process, stack, t_max, streams, labels, debug, meta)

    state = process.sample_init(streams)
    k = process.k
    configs = np.zeros((t_max + 1, k), dtype=np.int32)
    orders = np.zeros((t_max + 1, k), dtype=np.int32)
    lab0 = process.labels_of(state)
    lab_arr = None
    if labels and lab0 is not None:
        lab_arr = np.zeros((t_max + 1, len(lab0)), dtype=np.int32)
        lab_arr[0] = lab0
    configs[0] = process.config_of(state)
    orders[0] = process.frame0_order()
    for t in range(1, t_max + 1):
        state, order = process.sample_step(state, streams)
        configs[t] = process.config_of(state)
        orders[t] = order
        if lab_arr is not None:
            lab_arr[t] = process.labels_of(state)
    return Trajectory(n=process.n, k=k, configs=configs, orders=orders,
                      labels=lab_arr, meta=meta)


def _sample_stack(process, stack, t_max, streams, labels, debug, meta):
    from ._kernels import simulate_stack

    base_proc, plan, layers = stack
    T = t_max
    init_cfg = base_proc.sample_init(streams)
    init_perms = []
    for li, (n_l, _) in enumerate(layers):
        perm = tuple(int(v) + 1 for v in streams.perm_init(li + 1).permutation(n_l))
        init_perms.append(perm)
    w_draws = streams.base_steps().integers(0, plan.denom, size=(T, plan.k0))
    a_draws = np.empty((T, len(layers)), dtype=np.int64)
    for li, (n_l, _) in enumerate(layers):
        a_draws[:, li] = streams.perm_steps(li + 1).integers(1, n_l, size=T)

    cfg, orders, lab_arr, dbg = simulate_stack(
        plan, layers, T, init_cfg, init_perms, w_draws, a_draws,
        want_labels=labels, want_debug=debug)
    orders[0] = process.frame0_order()
    if lab_arr is not None:
        lab_arr[0] = init_perms[-1]
    dbg_dict = None
    if dbg is not None:
        dbg_cfg, dbg_ord, dbg_offsets, widths = dbg
        for lvl in range(len(layers)):
            off = int(dbg_offsets[lvl])
            w = int(widths[lvl])
            base0 = list(range(1, w + 1))
            dbg_ord[0, off:off + w] = base0
        dbg_dict = {
            "level_configs": dbg_cfg,
            "level_orders": dbg_ord,
            "offsets": dbg_offsets,
            "widths": widths,
            "a_draws": a_draws,
            "layers": list(layers),
        }
    return Trajectory(n=process.n, k=process.k, configs=cfg, orders=orders,
                      labels=lab_arr, meta=meta, debug=dbg_dict)
