"""Core domain types for avoidance-coupled walks on complete graphs.

Vertices are 1-based: the complete graph K_N has vertex set {1, ..., N}.
Walkers are 1-based too, and a "configuration" is an injective placement
of k walkers on those N vertices.  Exact probabilities are
`fractions.Fraction` (stdlib keeps them in lowest terms with positive
denominator); nothing on the verification path touches floating point.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import IO, Iterator, Optional, Sequence

import numpy as np

# Exact probability type used on every verification path.
Rational = Fraction


class ParameterError(ValueError):
    """A caller-supplied parameter violates an operation's preconditions."""


class UnsupportedCheck(RuntimeError):
    """The requested verification cannot run on this process."""


class BudgetExceeded(RuntimeError):
    """Exact enumeration would exceed the configured node budget."""

    def __init__(self, message: str, estimate: int):
        super().__init__(message)
        self.estimate = estimate


def parse_rational(text: str | int) -> Fraction:
    """Parse an exact weight written as "num/den" or a bare integer."""
    if isinstance(text, int):
        return Fraction(text)
    if isinstance(text, str):
        s = text.strip()
        if "/" in s:
            num, den = s.split("/", 1)
            return Fraction(int(num), int(den))
        return Fraction(int(s))
    raise ParameterError(f"exact weight must be an int or 'num/den' string, got {text!r}")


def format_rational(q: Fraction) -> str:
    return f"{q.numerator}/{q.denominator}" if q.denominator != 1 else str(q.numerator)


@dataclass(frozen=True)
class Configuration:
    """Injective placement of k walkers on the vertices of K_N.

    ``positions[i]`` is the vertex of walker ``i + 1``.
    """

    positions: tuple[int, ...]
    ambient_n: int

    @property
    def k(self) -> int:
        return len(self.positions)

    @property
    def placement(self) -> dict[int, int]:
        return {i + 1: v for i, v in enumerate(self.positions)}

    def vertex_of(self, walker: int) -> int:
        return self.positions[walker - 1]


@dataclass(frozen=True)
class ConfigReport:
    ok: bool
    colliding_pairs: tuple[tuple[int, int], ...] = ()
    out_of_range: tuple[tuple[int, int], ...] = ()  # (walker, vertex)


def validate_configuration(config: Configuration) -> ConfigReport:
    """Check injectivity and vertex range; total, never raises."""
    colliding = []
    out_of_range = []
    pos = config.positions
    for i, v in enumerate(pos):
        if not 1 <= v <= config.ambient_n:
            out_of_range.append((i + 1, v))
    for i in range(len(pos)):
        for j in range(i + 1, len(pos)):
            if pos[i] == pos[j]:
                colliding.append((i + 1, j + 1))
    return ConfigReport(
        ok=not colliding and not out_of_range,
        colliding_pairs=tuple(colliding),
        out_of_range=tuple(out_of_range),
    )


@dataclass(frozen=True)
class MoveOrder:
    """Within-round move order: ``positions[i]`` is walker i+1's turn (1-based)."""

    positions: tuple[int, ...]

    def __post_init__(self):
        k = len(self.positions)
        if sorted(self.positions) != list(range(1, k + 1)):
            raise ParameterError(f"move order must be a permutation of 1..{k}: {self.positions}")

    @property
    def k(self) -> int:
        return len(self.positions)

    @property
    def sequence(self) -> tuple[int, ...]:
        """Walker ids in the order they move."""
        seq = [0] * self.k
        for walker0, pos in enumerate(self.positions):
            seq[pos - 1] = walker0 + 1
        return tuple(seq)

    @classmethod
    def identity(cls, k: int) -> "MoveOrder":
        return cls(tuple(range(1, k + 1)))

    @classmethod
    def from_sequence(cls, seq: Sequence[int]) -> "MoveOrder":
        positions = [0] * len(seq)
        for pos0, walker in enumerate(seq):
            positions[walker - 1] = pos0 + 1
        return cls(tuple(positions))


@dataclass(frozen=True)
class PartialOrder:
    """Strict partial order on walkers 1..k, as a set of (i, j) pairs with i before j."""

    k: int
    relations: frozenset[tuple[int, int]] = frozenset()

    def __post_init__(self):
        for i, j in self.relations:
            if i == j:
                raise ParameterError(f"partial order must be irreflexive, got ({i},{j})")
            if not (1 <= i <= self.k and 1 <= j <= self.k):
                raise ParameterError(f"relation ({i},{j}) out of range for k={self.k}")
        if self._has_cycle():
            raise ParameterError(f"relations contain a cycle: {sorted(self.relations)}")

    def _has_cycle(self) -> bool:
        succ: dict[int, list[int]] = {}
        for i, j in self.relations:
            succ.setdefault(i, []).append(j)
        state = {}  # 1 = on stack, 2 = done

        def visit(v: int) -> bool:
            state[v] = 1
            for w in succ.get(v, ()):
                s = state.get(w)
                if s == 1 or (s is None and visit(w)):
                    return True
            state[v] = 2
            return False

        return any(state.get(v) is None and visit(v) for v in range(1, self.k + 1))

    def extended(self) -> "PartialOrder":
        """Same relations with one extra, incomparable walker k+1."""
        return PartialOrder(self.k + 1, self.relations)

    @classmethod
    def chain(cls, k: int) -> "PartialOrder":
        """Total order 1 < 2 < ... < k (index order)."""
        return cls(k, frozenset((i, j) for i in range(1, k + 1) for j in range(i + 1, k + 1)))


def order_respects(order: MoveOrder, r: PartialOrder) -> bool:
    """True iff every required pair (i, j) in r moves in that relative order."""
    if order.k != r.k:
        raise ParameterError(f"order is on [{order.k}] but partial order is on [{r.k}]")
    pos = order.positions
    return all(pos[i - 1] < pos[j - 1] for i, j in r.relations)


def linear_extension(r: PartialOrder) -> MoveOrder:
    """A deterministic move order respecting r (topological, ties by walker index)."""
    succ: dict[int, list[int]] = {}
    indeg = {v: 0 for v in range(1, r.k + 1)}
    for i, j in r.relations:
        succ.setdefault(i, []).append(j)
        indeg[j] += 1
    ready = sorted(v for v, d in indeg.items() if d == 0)
    seq = []
    while ready:
        v = ready.pop(0)
        seq.append(v)
        for w in sorted(succ.get(v, ())):
            indeg[w] -= 1
            if indeg[w] == 0:
                ready.append(w)
        ready.sort()
    return MoveOrder.from_sequence(seq)


@dataclass(frozen=True)
class TrajectoryFrame:
    """One time slice: who sits where, the round's move order, optional labels."""

    t: int
    config: Configuration
    order: MoveOrder
    labels: Optional[tuple[int, ...]] = None

    def __post_init__(self):
        if self.order.k != self.config.k:
            raise ParameterError("frame order length must equal walker count")


@dataclass
class Trajectory:
    """Array-backed realization of a coupling over t = 0..T.

    ``configs[t, i]`` is walker i+1's vertex at time t, ``orders[t, i]`` its
    move position in round t (frame 0 carries a deterministic linear
    extension of the process order; no round produced it).  ``labels[t]``,
    when present, is the image list of the outermost relabeling permutation.
    ``debug`` optionally carries per-level walker positions of the
    construction layers for deep verification.
    """

    n: int
    k: int
    configs: np.ndarray
    orders: np.ndarray
    labels: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict)
    debug: Optional[dict] = None

    @property
    def t_max(self) -> int:
        return self.configs.shape[0] - 1

    def frame(self, t: int) -> TrajectoryFrame:
        labels = tuple(int(x) for x in self.labels[t]) if self.labels is not None else None
        return TrajectoryFrame(
            t=t,
            config=Configuration(tuple(int(v) for v in self.configs[t]), self.n),
            order=MoveOrder(tuple(int(p) for p in self.orders[t])),
            labels=labels,
        )

    def frames(self) -> Iterator[TrajectoryFrame]:
        for t in range(self.configs.shape[0]):
            yield self.frame(t)

    def write_jsonl(self, fp: IO[str]) -> None:
        for t in range(self.configs.shape[0]):
            rec = {
                "t": t,
                "config": [int(v) for v in self.configs[t]],
                "order": [int(p) for p in self.orders[t]],
            }
            if self.labels is not None:
                rec["labels"] = [int(x) for x in self.labels[t]]
            fp.write(json.dumps(rec, separators=(",", ":")) + "\n")

    @classmethod
    def read_jsonl(cls, fp: IO[str], n: Optional[int] = None, meta: Optional[dict] = None) -> "Trajectory":
        configs, orders, labels = [], [], []
        times = []
        for line in fp:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            times.append(rec["t"])
            configs.append(rec["config"])
            orders.append(rec["order"])
            if "labels" in rec:
                labels.append(rec["labels"])
        if not configs:
            raise ParameterError("empty trajectory stream")
        if times != list(range(len(times))):
            raise ParameterError("frame times must increase by 1 from 0")
        if labels and len(labels) != len(configs):
            raise ParameterError("labels present on some frames but not all")
        configs_arr = np.asarray(configs, dtype=np.int32)
        if n is None:
            n = int(labels[0].__len__()) if labels else int(configs_arr.max())
        return cls(
            n=n,
            k=configs_arr.shape[1],
            configs=configs_arr,
            orders=np.asarray(orders, dtype=np.int32),
            labels=np.asarray(labels, dtype=np.int32) if labels else None,
            meta=meta or {},
        )
