"""Base couplings on K_N exposed through a common process contract.

A *kernel table* is an explicit Markovian coupling: for every injective
configuration and every walker (taken in a fixed move order), a
distribution over target vertices with exact rational weights,
conditioned on the moves already made this round.  Legal targets avoid
the mover's own vertex, every not-yet-moved walker's current vertex, and
every already-moved walker's new vertex.

Sources provided here: the one-walker coupling (avoidance is vacuous),
a symmetric two-walker kernel family, a JSON loader, and a small search
over relabeling-equivariant kernels certified by the exact oracle.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import IO, Iterator, Optional, Sequence

import networkx as nx
import numpy as np

from .core import (
    MoveOrder,
    ParameterError,
    PartialOrder,
    format_rational,
    parse_rational,
)
from .seeds import SeedStreams

RowKey = tuple[tuple[int, ...], int, tuple[int, ...]]  # (config, walker, prior moves)
RowDist = tuple[tuple[int, Fraction], ...]


class KernelInvalid(ValueError):
    """A kernel table violates its invariants; carries the validation report."""

    def __init__(self, report: "KernelReport"):
        super().__init__(f"invalid kernel table: {len(report.violations)} violation(s)")
        self.report = report


class KernelChainError(ValueError):
    """The configuration chain has no unique stationary distribution."""

    def __init__(self, message: str, partition: list[list[tuple[int, ...]]]):
        super().__init__(message)
        self.partition = partition


def all_configurations(n: int, k: int) -> list[tuple[int, ...]]:
    """All injective placements of k walkers on [n], in lexicographic order."""
    return list(itertools.permutations(range(1, n + 1), k))


@dataclass(frozen=True)
class KernelTable:
    """Explicit per-configuration sequential move distributions."""

    n: int
    k: int
    rows: dict[RowKey, RowDist]
    move_order: MoveOrder = None  # type: ignore[assignment]
    name: str = "kernel"

    def __post_init__(self):
        if self.move_order is None:
            object.__setattr__(self, "move_order", MoveOrder.identity(self.k))

    def row(self, config: tuple[int, ...], walker: int, given: tuple[int, ...]) -> Optional[RowDist]:
        return self.rows.get((tuple(config), walker, tuple(given)))

    def weight_denominator(self) -> int:
        """LCM of all row weight denominators (scale for exact integer draws)."""
        d = 1
        for dist in self.rows.values():
            for _, w in dist:
                d = math.lcm(d, w.denominator)
        return d


@dataclass(frozen=True)
class KernelViolation:
    kind: str  # "sum" | "self" | "unmoved-current" | "moved-new" | "range" | "negative" | "missing-row"
    config: tuple[int, ...]
    walker: int
    given: tuple[int, ...]
    target: Optional[int] = None
    detail: str = ""


@dataclass(frozen=True)
class KernelReport:
    ok: bool
    violations: tuple[KernelViolation, ...] = ()


def _legal_targets(config: Sequence[int], seq: Sequence[int], pos: int, given: Sequence[int], n: int) -> set[int]:
    """Targets allowed for the mover at `pos` of the move sequence."""
    mover = seq[pos]
    blocked = {config[mover - 1]}               # simple-walk step: must move
    blocked.update(given)                       # new vertices of earlier movers
    for later in seq[pos + 1:]:
        blocked.add(config[later - 1])          # current vertices of not-yet-moved walkers
    return set(range(1, n + 1)) - blocked


def _given_combos(table: KernelTable, config: tuple[int, ...], upto_pos: int) -> Iterator[tuple[int, ...]]:
    """All prior-move tuples for position `upto_pos`, following the table's own support."""
    seq = table.move_order.sequence

    def rec(pos: int, given: tuple[int, ...]) -> Iterator[tuple[int, ...]]:
        if pos == upto_pos:
            yield given
            return
        dist = table.row(config, seq[pos], given)
        if dist is None:
            return
        for target, w in dist:
            if w > 0:
                yield from rec(pos + 1, given + (target,))

    yield from rec(0, ())


def validate_kernel(table: KernelTable) -> KernelReport:
    """Check exact row sums and both avoidance clauses; total, never raises."""
    violations: list[KernelViolation] = []
    seq = table.move_order.sequence
    for config in all_configurations(table.n, table.k):
        for pos in range(table.k):
            walker = seq[pos]
            for given in _given_combos(table, config, pos):
                dist = table.row(config, walker, given)
                if dist is None:
                    violations.append(
                        KernelViolation("missing-row", config, walker, given,
                                        detail="no distribution for a reachable context")
                    )
                    continue
                legal = _legal_targets(config, seq, pos, given, table.n)
                total = Fraction(0)
                for target, w in dist:
                    total += w
                    if w < 0:
                        violations.append(KernelViolation("negative", config, walker, given, target))
                    if not 1 <= target <= table.n:
                        violations.append(KernelViolation("range", config, walker, given, target))
                        continue
                    if w > 0 and target not in legal:
                        if target == config[walker - 1]:
                            kind = "self"
                        elif target in given:
                            kind = "moved-new"
                        else:
                            kind = "unmoved-current"
                        violations.append(KernelViolation(kind, config, walker, given, target))
                if total != 1:
                    violations.append(
                        KernelViolation("sum", config, walker, given,
                                        detail=f"row sums to {format_rational(total)}")
                    )
    return KernelReport(ok=not violations, violations=tuple(violations))


# ---------------------------------------------------------------------------
# Built-in kernel families
# ---------------------------------------------------------------------------

def trivial_kernel(n: int) -> KernelTable:
    """One walker stepping uniformly over the other n-1 vertices."""
    if n < 2:
        raise ParameterError(f"need n >= 2, got {n}")
    w = Fraction(1, n - 1)
    rows: dict[RowKey, RowDist] = {}
    for v in range(1, n + 1):
        rows[((v,), 1, ())] = tuple((u, w) for u in range(1, n + 1) if u != v)
    return KernelTable(n=n, k=1, rows=rows, name=f"trivial-k{n}")


def symmetric_pair_kernel(n: int) -> KernelTable:
    """Two walkers: the first moves uniformly, the second favors nothing.

    With the first walker gone from a to a', the second walker takes the
    vacated vertex a with probability 1/(n-1) and each other legal vertex
    with probability (1 - 1/(n-1))/(n-3).  This is the unique weight in
    the relabeling-symmetric family for which both walkers stay uniform
    given their own full histories (certified by the exact oracle, not
    assumed here).
    """
    if n < 4:
        raise ParameterError(f"need n >= 4, got {n}")
    p = Fraction(1, n - 1)
    rows: dict[RowKey, RowDist] = {}
    first_w = Fraction(1, n - 2)
    for a, b in all_configurations(n, 2):
        targets1 = [v for v in range(1, n + 1) if v not in (a, b)]
        rows[((a, b), 1, ())] = tuple((v, first_w) for v in targets1)
        for a_new in targets1:
            others = [v for v in range(1, n + 1) if v not in (a, b, a_new)]
            dist = [(a, p)] + [(v, (1 - p) / (n - 3)) for v in others]
            rows[((a, b), 2, (a_new,))] = tuple(sorted(dist))
    return KernelTable(n=n, k=2, rows=rows, name=f"pair-k{n}")


# ---------------------------------------------------------------------------
# Kernel JSON schema
# ---------------------------------------------------------------------------

def kernel_to_json(table: KernelTable, fp: IO[str]) -> None:
    rows = []
    for (config, walker, given), dist in sorted(table.rows.items()):
        rows.append({
            "config": list(config),
            "walker": walker,
            "given": list(given),
            "targets": [{"v": t, "p": format_rational(w)} for t, w in dist],
        })
    doc = {"n": table.n, "k": table.k, "order": list(table.move_order.positions),
           "name": table.name, "rows": rows}
    json.dump(doc, fp, indent=1)
    fp.write("\n")


def kernel_from_json(fp: IO[str]) -> KernelTable:
    return kernel_from_dict(json.load(fp))


def kernel_from_dict(doc: dict) -> KernelTable:
    try:
        n, k = int(doc["n"]), int(doc["k"])
        order = MoveOrder(tuple(doc.get("order", range(1, k + 1))))
        rows: dict[RowKey, RowDist] = {}
        for row in doc["rows"]:
            key = (tuple(row["config"]), int(row["walker"]), tuple(row.get("given", ())))
            dist = tuple((int(t["v"]), parse_rational(t["p"])) for t in row["targets"])
            rows[key] = dist
    except (KeyError, TypeError, ValueError) as exc:
        raise ParameterError(f"malformed kernel JSON: {exc}") from exc
    return KernelTable(n=n, k=k, rows=rows, move_order=order, name=str(doc.get("name", "kernel")))


# ---------------------------------------------------------------------------
# Exact stationary distribution of the configuration chain
# ---------------------------------------------------------------------------

def _config_transitions(table: KernelTable) -> dict[tuple[int, ...], list[tuple[tuple[int, ...], Fraction]]]:
    """Per-round transition law config -> config (exact, move order applied)."""
    seq = table.move_order.sequence
    trans: dict[tuple[int, ...], list[tuple[tuple[int, ...], Fraction]]] = {}
    for config in all_configurations(table.n, table.k):
        acc: dict[tuple[int, ...], Fraction] = {}

        def rec(pos: int, given: tuple[int, ...], weight: Fraction):
            if pos == table.k:
                new_cfg = list(config)
                for p, target in enumerate(given):
                    new_cfg[seq[p] - 1] = target
                key = tuple(new_cfg)
                acc[key] = acc.get(key, Fraction(0)) + weight
                return
            dist = table.row(config, seq[pos], given)
            if dist is None:
                raise KernelInvalid(KernelReport(False, (KernelViolation(
                    "missing-row", config, seq[pos], given),)))
            for target, w in dist:
                if w > 0:
                    rec(pos + 1, given + (target,), weight * w)

        rec(0, (), Fraction(1))
        trans[config] = sorted(acc.items())
    return trans


def _solve_balance(states: list, trans: dict) -> dict:
    """Solve pi P = pi, sum(pi) = 1 by exact Gaussian elimination."""
    m = len(states)
    index = {s: i for i, s in enumerate(states)}
    # A x = b with rows: (P^T - I) x = 0 for the first m-1 states, then sum = 1.
    a = [[Fraction(0)] * m for _ in range(m)]
    for s, succs in ((s, trans[s]) for s in states):
        i = index[s]
        for succ, w in succs:
            j = index.get(succ)
            if j is not None and j < m - 1:
                a[j][i] += w
    for j in range(m - 1):
        a[j][j] -= 1
    b = [Fraction(0)] * (m - 1) + [Fraction(1)]
    for i in range(m):
        a[m - 1][i] = Fraction(1)
    # forward elimination with partial (first nonzero) pivoting
    for col in range(m):
        pivot = next((r for r in range(col, m) if a[r][col] != 0), None)
        if pivot is None:
            raise KernelChainError("singular balance system", [])
        if pivot != col:
            a[col], a[pivot] = a[pivot], a[col]
            b[col], b[pivot] = b[pivot], b[col]
        inv = 1 / a[col][col]
        a[col] = [x * inv for x in a[col]]
        b[col] = b[col] * inv
        for r in range(m):
            if r != col and a[r][col] != 0:
                f = a[r][col]
                a[r] = [x - f * y for x, y in zip(a[r], a[col])]
                b[r] = b[r] - f * b[col]
    return {states[i]: b[i] for i in range(m)}


def stationary_distribution(table: KernelTable) -> dict[tuple[int, ...], Fraction]:
    """Exact stationary law of the configuration chain.

    Requires a unique closed communicating class; otherwise raises
    KernelChainError with the class partition as the diagnostic.
    """
    trans = _config_transitions(table)
    g = nx.DiGraph()
    g.add_nodes_from(trans)
    for s, succs in trans.items():
        for succ, w in succs:
            if w > 0:
                g.add_edge(s, succ)
    sccs = list(nx.strongly_connected_components(g))
    closed = []
    for comp in sccs:
        if all(succ in comp for s in comp for succ, w in trans[s] if w > 0):
            closed.append(sorted(comp))
    if len(closed) != 1:
        raise KernelChainError(
            f"configuration chain has {len(closed)} closed classes; no unique stationary law",
            partition=[sorted(c) for c in sccs],
        )
    support = closed[0]
    pi = _solve_balance(support, {s: trans[s] for s in support})
    if any(p < 0 for p in pi.values()):
        raise KernelChainError("balance solution not a distribution", [support])
    return pi


# ---------------------------------------------------------------------------
# The common coupling-process contract
# ---------------------------------------------------------------------------

class CouplingProcess:
    """Abstract coupled-walk process on K_n.

    Concrete processes expose sampling (`sample_init` / `sample_step`) and,
    when exact verification is possible, enumeration (`init_distribution` /
    `enumerate_step`) with weights that sum to 1 exactly.  States are opaque
    hashable values; `config_of` projects a state to walker positions.
    """

    name: str = "process"
    n: int = 0
    k: int = 0
    partial_order: Optional[PartialOrder] = None

    def descriptor(self) -> dict:
        raise NotImplementedError

    # --- exact enumeration (oracle path) ---
    def init_distribution(self) -> Optional[list[tuple[object, Fraction]]]:
        return None

    def init_size_estimate(self) -> Optional[int]:
        """Support size of the exact init, cheap to compute (None = unknown)."""
        return None

    def enumerate_step(self, state) -> Optional[list[tuple[object, tuple[int, ...], Fraction]]]:
        return None

    # --- sampling path ---
    def sample_init(self, streams: SeedStreams):
        raise NotImplementedError

    def sample_step(self, state, streams: SeedStreams):
        """Advance one round; returns (new_state, order_positions)."""
        raise NotImplementedError

    # --- projections ---
    def config_of(self, state) -> tuple[int, ...]:
        raise NotImplementedError

    def labels_of(self, state) -> Optional[tuple[int, ...]]:
        return None

    def frame0_order(self) -> tuple[int, ...]:
        from .core import linear_extension
        if self.partial_order is not None:
            return linear_extension(self.partial_order).positions
        return MoveOrder.identity(self.k).positions

    def stack_plan(self):
        """Layout for the compiled sampler, or None if unsupported."""
        return None


def _scaled_cumulative(dist: RowDist, denom: int) -> tuple[tuple[int, ...], tuple[int, ...]]:
    targets = []
    cum = []
    acc = 0
    for t, w in dist:
        frac = w * denom
        assert frac.denominator == 1
        acc += int(frac)
        targets.append(t)
        cum.append(acc)
    assert acc == denom, "row weights must sum to 1 exactly"
    return tuple(targets), tuple(cum)


class KernelProcess(CouplingProcess):
    """Markovian coupling driven by an explicit kernel table."""

    def __init__(self, table: KernelTable, pi: dict[tuple[int, ...], Fraction],
                 partial_order: Optional[PartialOrder] = None):
        self.table = table
        self.n = table.n
        self.k = table.k
        self.name = table.name
        self.partial_order = partial_order
        self._pi = pi
        self._support = sorted(s for s, w in pi.items() if w > 0)
        self._denom = table.weight_denominator()
        self._cum_rows = {key: _scaled_cumulative(dist, self._denom)
                          for key, dist in table.rows.items()}
        d_init = math.lcm(*[w.denominator for w in pi.values()]) if pi else 1
        acc = 0
        self._init_cum = []
        for s in self._support:
            acc += int(pi[s] * d_init)
            self._init_cum.append(acc)
        self._init_denom = d_init

    def descriptor(self) -> dict:
        import io
        buf = io.StringIO()
        kernel_to_json(self.table, buf)
        doc = {"kind": "kernel", "kernel": json.loads(buf.getvalue())}
        if self.partial_order is not None:
            doc["order_relations"] = sorted(self.partial_order.relations)
        return doc

    def init_distribution(self):
        return [(s, self._pi[s]) for s in self._support]

    def init_size_estimate(self):
        return len(self._support)

    def enumerate_step(self, state):
        seq = self.table.move_order.sequence
        order = self.table.move_order.positions
        out = []

        def rec(pos: int, given: tuple[int, ...], weight: Fraction):
            if pos == self.k:
                cfg = list(state)
                for p, target in enumerate(given):
                    cfg[seq[p] - 1] = target
                out.append((tuple(cfg), order, weight))
                return
            for target, w in self.table.row(state, seq[pos], given):
                if w > 0:
                    rec(pos + 1, given + (target,), weight * w)

        rec(0, (), Fraction(1))
        return out

    def sample_init(self, streams: SeedStreams):
        r = int(streams.base_init().integers(0, self._init_denom))
        idx = int(np.searchsorted(np.asarray(self._init_cum), r, side="right"))
        return self._support[idx]

    def sample_step(self, state, streams: SeedStreams):
        gen = streams.base_steps()
        seq = self.table.move_order.sequence
        cfg = list(state)
        given: tuple[int, ...] = ()
        for pos in range(self.k):
            r = int(gen.integers(0, self._denom))
            targets, cum = self._cum_rows[(state, seq[pos], given)]
            idx = 0
            while cum[idx] <= r:
                idx += 1
            cfg[seq[pos] - 1] = targets[idx]
            given = given + (targets[idx],)
        return tuple(cfg), self.table.move_order.positions

    def config_of(self, state):
        return state

    def frame0_order(self):
        return self.table.move_order.positions

    def stack_plan(self):
        from ._kernels import build_base_plan
        plan = build_base_plan(self)
        return None if plan is None else (self, plan, [])

    def as_posac(self, r: Optional[PartialOrder] = None) -> "KernelProcess":
        """View with explicit order metadata (defaults to the chain order)."""
        order = r if r is not None else PartialOrder.chain(self.k)
        if order.k != self.k:
            raise ParameterError(f"partial order on [{order.k}] but process has k={self.k}")
        from .core import order_respects
        if not order_respects(self.table.move_order, order):
            raise ParameterError("kernel move order does not respect the requested partial order")
        return KernelProcess(self.table, self._pi, partial_order=order)


def kernel_process(table: KernelTable, partial_order: Optional[PartialOrder] = None) -> KernelProcess:
    """Validate a table and wrap it as a process with exact stationary init."""
    report = validate_kernel(table)
    if not report.ok:
        raise KernelInvalid(report)
    pi = stationary_distribution(table)
    return KernelProcess(table, pi, partial_order=partial_order)


def trivial_sac(n: int) -> KernelProcess:
    """The one-walker coupling on K_n (avoidance is vacuous)."""
    return kernel_process(trivial_kernel(n))


# ---------------------------------------------------------------------------
# Equivariant kernel search
# ---------------------------------------------------------------------------

def _canonical_context(config: tuple[int, ...], given: tuple[int, ...]):
    """Relabel vertices by first appearance in (config, given)."""
    relabel: dict[int, int] = {}
    for v in config + given:
        if v not in relabel:
            relabel[v] = len(relabel) + 1
    return (tuple(relabel[v] for v in config), tuple(relabel[v] for v in given)), relabel


def _grid_fractions(max_den: int) -> list[Fraction]:
    """All p/q in [0, 1] with q <= max_den, deduplicated, ordered by (q, p)."""
    seen = set()
    out = []
    for q in range(1, max_den + 1):
        for p in range(0, q + 1):
            f = Fraction(p, q)
            if f not in seen:
                seen.add(f)
                out.append(f)
    return out


@dataclass
class SearchResult:
    table: Optional[KernelTable]
    candidates_examined: int
    free_parameters: int


def search_equivariant_kernel(n: int, k: int, horizon: int,
                              grid_denominator: int = 60,
                              max_candidates: int = 250_000,
                              budget: int = 2_000_000) -> SearchResult:
    """Grid-search relabeling-equivariant kernels certified by the exact oracle.

    Kernels are parametrized by one weight per orbit of
    (configuration, prior moves, target) under vertex relabeling; in each
    row the last orbit class is fixed by normalization.  Candidates are
    tried in a deterministic order and the first one passing
    validate_kernel plus exact conditional-law checks up to `horizon` is
    returned.
    """
    if k > 3 or n > 7:
        raise ParameterError(f"search is desk-scale only (k <= 3, n <= 7), got n={n}, k={k}")
    if n < 2 or k < 1 or k >= n:
        raise ParameterError(f"need 1 <= k < n and n >= 2, got n={n}, k={k}")
    from .verify import exact_conditional_laws  # lazy: avoids import cycle

    seq = tuple(range(1, k + 1))
    # Enumerate row contexts and their target classes (canonical form).
    # class key: vertex id in canonical context if already seen, else 0.
    contexts: dict[tuple, list[int]] = {}
    rows_meta = []  # (config, walker, given, canonical ctx, per-target class key)
    for config in all_configurations(n, k):
        def rec(pos: int, given: tuple[int, ...]):
            if pos == k:
                return
            legal = sorted(_legal_targets(config, seq, pos, given, n))
            if not legal:
                rows_meta.append((config, seq[pos], given, None, None))
                return
            (ctx, relabel) = _canonical_context(config, given)
            ctx_key = (ctx, pos)
            classes = [relabel.get(t, 0) for t in legal]
            if ctx_key not in contexts:
                contexts[ctx_key] = sorted(set(classes), key=lambda c: (c == 0, c))
            rows_meta.append((config, seq[pos], given, ctx_key, list(zip(legal, classes))))
            for t in legal:
                rec(pos + 1, given + (t,))
        rec(0, ())
    if any(ctx_key is None for (_, _, _, ctx_key, _) in rows_meta):
        return SearchResult(table=None, candidates_examined=0, free_parameters=0)

    # Per context: class sizes and the free classes (all but the last).
    # Canonical contexts label seen vertices 1.. in first-appearance order,
    # so a target's class is itself when seen and 0 ("unseen") otherwise.
    ctx_info = {}
    free_slots = []  # (ctx_key, class)
    for ctx_key, classes in sorted(contexts.items()):
        (ctx_cfg, ctx_given), pos = ctx_key
        legal = sorted(_legal_targets(ctx_cfg, seq, pos, ctx_given, n))
        seen = set(ctx_cfg) | set(ctx_given)
        sizes = {c: 0 for c in classes}
        for t in legal:
            sizes[t if t in seen else 0] += 1
        ctx_info[ctx_key] = (classes, sizes)
        for c in classes[:-1]:
            free_slots.append((ctx_key, c))

    grid = _grid_fractions(grid_denominator)
    examined = 0

    def build_candidate(assign: dict) -> Optional[KernelTable]:
        weights = {}
        for ctx_key, (classes, sizes) in ctx_info.items():
            total = Fraction(0)
            for c in classes[:-1]:
                w = assign[(ctx_key, c)]
                weights[(ctx_key, c)] = w
                total += w * sizes[c]
            rest = classes[-1]
            remainder = 1 - total
            if remainder < 0:
                return None
            w_last = remainder / sizes[rest]
            weights[(ctx_key, rest)] = w_last
        rows: dict[RowKey, RowDist] = {}
        for config, walker, given, ctx_key, legal_classes in rows_meta:
            dist = tuple((t, weights[(ctx_key, c)]) for t, c in legal_classes)
            rows[(config, walker, given)] = dist
        return KernelTable(n=n, k=k, rows=rows, name=f"search-n{n}k{k}")

    for combo in itertools.product(*(range(len(grid)) for _ in free_slots)):
        if examined >= max_candidates:
            break
        examined += 1
        assign = {slot: grid[i] for slot, i in zip(free_slots, combo)}
        table = build_candidate(assign)
        if table is None:
            continue
        if not validate_kernel(table).ok:
            continue
        try:
            proc = kernel_process(table)
        except (KernelInvalid, KernelChainError):
            continue
        ok = True
        for h in range(1, horizon + 1):
            rep = exact_conditional_laws(proc, h, budget=budget)
            if not rep.passed:
                ok = False
                break
        if ok:
            return SearchResult(table=table, candidates_examined=examined,
                                free_parameters=len(free_slots))
    return SearchResult(table=None, candidates_examined=examined,
                        free_parameters=len(free_slots))
