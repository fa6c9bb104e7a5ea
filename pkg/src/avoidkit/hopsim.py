"""Frequency-hopping harness: schedules from coupled walks, jamming adversaries.

Vertices become frequencies and walkers become transmitters.  A schedule
inherits orthogonality (no same-slot reuse) from the avoidance property,
and unpredictability from the uniform conditional hop law: no
history-based jammer of f frequencies that spares the current one can
beat the f/(N-1) baseline.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import IO, Union

import numpy as np

from ._kernels import histogram_jam, recency_jam
from .base import CouplingProcess
from .core import ParameterError
from .extend import sample_trajectory
from .seeds import substream


@dataclass
class HopSchedule:
    """Per-slot frequency assignments with the intra-slot move order."""

    n_frequencies: int
    k_transmitters: int
    slots: np.ndarray   # (S, k) frequencies
    orders: np.ndarray  # (S, k) move positions
    meta: dict = field(default_factory=dict)

    @property
    def n_slots(self) -> int:
        return self.slots.shape[0]

    def validate(self) -> list[dict]:
        """Orthogonality and per-transmitter hop violations (empty = OK)."""
        bad = []
        for s in range(self.n_slots):
            row = self.slots[s]
            if len(set(int(v) for v in row)) != self.k_transmitters:
                bad.append({"kind": "slot-reuse", "slot": s})
        rep = (self.slots[1:] == self.slots[:-1])
        for s, i in zip(*np.nonzero(rep)):
            bad.append({"kind": "repeat-hop", "slot": int(s) + 1,
                        "transmitter": int(i) + 1})
        return bad

    def write_csv(self, fp: IO[str]) -> None:
        w = csv.writer(fp, lineterminator="\n")
        w.writerow(["slot", "transmitter", "frequency"])
        for s in range(self.n_slots):
            for i in range(self.k_transmitters):
                w.writerow([s, i + 1, int(self.slots[s, i])])

    def write_jsonl(self, fp: IO[str]) -> None:
        for s in range(self.n_slots):
            rec = {"slot": s,
                   "frequencies": [int(v) for v in self.slots[s]],
                   "order": [int(p) for p in self.orders[s]]}
            fp.write(json.dumps(rec, separators=(",", ":")) + "\n")


def export_schedule(process: CouplingProcess, slots: int, seed: int) -> HopSchedule:
    """Sample a stationary window and reinterpret vertices as frequencies."""
    if slots < 2:
        raise ParameterError(f"need at least 2 slots, got {slots}")
    traj = sample_trajectory(process, slots - 1, seed)
    return HopSchedule(
        n_frequencies=process.n,
        k_transmitters=process.k,
        slots=traj.configs.copy(),
        orders=traj.orders.copy(),
        meta={"seed": int(seed), "process": process.descriptor()},
    )


def round_robin_schedule(n: int, k: int, slots: int) -> HopSchedule:
    """Deterministic straw man: transmitter i cycles (s + i - 1) mod n + 1.

    Orthogonal and never repeats a frequency twice in a row, but fully
    predictable; the harness should tell it apart from coupled walks.
    """
    if k > n:
        raise ParameterError(f"cannot place {k} transmitters on {n} frequencies")
    s = np.arange(slots)[:, None]
    i = np.arange(k)[None, :]
    grid = ((s + i) % n + 1).astype(np.int32)
    orders = np.tile(np.arange(1, k + 1, dtype=np.int32), (slots, 1))
    return HopSchedule(n_frequencies=n, k_transmitters=k, slots=grid,
                       orders=orders, meta={"kind": "round-robin"})


# ---------------------------------------------------------------------------
# Adversaries
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AdversaryStrategy:
    """Jam-set rule applied to the target's observed frequency history.

    `excludes_current` marks strategies that never waste a jammed
    frequency on the target's current one; only those can reach the
    f/(N-1) baseline.
    """

    name: str
    excludes_current: bool


BUILTIN_STRATEGIES = {
    "repeat-last": AdversaryStrategy("repeat-last", excludes_current=False),
    "recent-other": AdversaryStrategy("recent-other", excludes_current=True),
    "uniform-random-other": AdversaryStrategy("uniform-random-other", excludes_current=True),
    "histogram-of-history": AdversaryStrategy("histogram-of-history", excludes_current=True),
}


def _comb_table(m: int, f: int) -> np.ndarray:
    c = np.zeros((m + 1, f + 1), dtype=np.int64)
    c[:, 0] = 1
    for i in range(1, m + 1):
        for e in range(1, f + 1):
            c[i, e] = c[i - 1, e - 1] + c[i - 1, e]
    return c


def _uniform_other_jam(freqs: np.ndarray, n: int, f: int, rng) -> np.ndarray:
    """f distinct uniform frequencies avoiding the current one, per round.

    One integer draw per round (combination unranking), so consumption is
    fixed and runs extend reproducibly.
    """
    T = freqs.shape[0] - 1
    m = n - 1
    total = math.comb(m, f)
    r = rng.integers(0, total, size=T).astype(np.int64)
    comb = _comb_table(m, f)
    jam = np.zeros((T, f), dtype=np.int64)
    # colex unranking: repeatedly take the largest c with C(c, e) <= r
    for e in range(f, 0, -1):
        col = comb[:, e]
        c = np.searchsorted(col, r, side="right") - 1
        r = r - col[c]
        jam[:, e - 1] = c  # 0-based index into the m candidates
    cur = freqs[:T].astype(np.int64)
    out = jam + 1
    out[out >= cur[:, None]] += 1  # skip the current frequency
    return out


def build_jam_sets(strategy: AdversaryStrategy, freqs: np.ndarray, n: int, f: int,
                   rng) -> np.ndarray:
    if strategy.name == "repeat-last":
        return recency_jam(freqs, n, f, exclude_current=False)
    if strategy.name == "recent-other":
        return recency_jam(freqs, n, f, exclude_current=True)
    if strategy.name == "histogram-of-history":
        return histogram_jam(freqs, n, f, exclude_current=True)
    if strategy.name == "uniform-random-other":
        return _uniform_other_jam(freqs, n, f, rng)
    raise ParameterError(f"unknown strategy {strategy.name!r}")


@dataclass
class HitReport:
    strategy: str
    f: int
    rounds: int
    hits: int
    hit_rate: float
    baseline: float
    z_score: float
    target: int
    n_frequencies: int

    def to_json(self) -> dict:
        return {
            "strategy": self.strategy, "f": self.f, "rounds": self.rounds,
            "hits": self.hits, "hit_rate": self.hit_rate,
            "baseline": self.baseline, "z_score": self.z_score,
            "target": self.target, "n_frequencies": self.n_frequencies,
        }


def run_adversary(source: Union[CouplingProcess, HopSchedule],
                  strategy: Union[AdversaryStrategy, str],
                  f: int, rounds: int, seed: int,
                  target: int = 1,
                  observe: str = "target") -> HitReport:
    """Jam f frequencies before each hop; count hits on the target.

    The jam set is chosen from the target's observed history (past
    frequencies up to and including its current one) strictly before the
    hop is revealed.  `observe="all"` is an experimental stress mode that
    feeds the histogram strategy every transmitter's history.
    """
    if isinstance(strategy, str):
        try:
            strategy = BUILTIN_STRATEGIES[strategy]
        except KeyError:
            raise ParameterError(
                f"unknown strategy {strategy!r}; builtins: {sorted(BUILTIN_STRATEGIES)}"
            ) from None
    if isinstance(source, HopSchedule):
        n = source.n_frequencies
        if rounds > source.n_slots - 1:
            raise ParameterError(
                f"schedule has {source.n_slots} slots, cannot run {rounds} rounds")
        track = source.slots
    else:
        n = source.n
        traj = sample_trajectory(source, rounds, seed)
        track = traj.configs
    if not 1 <= f <= n - 1:
        raise ParameterError(f"need 1 <= f <= {n - 1}, got {f}")
    if not 1 <= target <= track.shape[1]:
        raise ParameterError(f"target {target} out of range")
    freqs = track[:rounds + 1, target - 1].astype(np.int64)

    rng = substream(seed, "adversary")
    if observe == "target":
        jam = build_jam_sets(strategy, freqs, n, f, rng)
    elif observe == "all":
        if strategy.name != "histogram-of-history":
            raise ParameterError("observe='all' is only wired to histogram-of-history")
        jam = _histogram_all_jam(track[:rounds + 1], freqs, n, f)
    else:
        raise ParameterError(f"observe must be 'target' or 'all', got {observe!r}")

    nxt = freqs[1:]
    hits = int((jam == nxt[:, None]).any(axis=1).sum())
    p = f / (n - 1)
    z = (hits - rounds * p) / math.sqrt(rounds * p * (1 - p))
    return HitReport(strategy=strategy.name, f=f, rounds=rounds, hits=hits,
                     hit_rate=hits / rounds, baseline=p, z_score=z,
                     target=target, n_frequencies=n)


def _histogram_all_jam(track: np.ndarray, freqs: np.ndarray, n: int, f: int) -> np.ndarray:
    """Histogram jam with counts pooled over every transmitter (stress mode)."""
    T = freqs.shape[0] - 1
    counts = np.zeros((T, n), dtype=np.int64)
    onehot = np.zeros((T, n), dtype=np.int64)
    for col in range(track.shape[1]):
        onehot[:] = 0
        onehot[np.arange(T), track[:T, col].astype(np.int64) - 1] = 1
        counts += np.cumsum(onehot, axis=0)
    counts[np.arange(T), freqs[:T] - 1] = -1
    jam = np.zeros((T, f), dtype=np.int64)
    for slot in range(f):
        pick = np.argmax(counts, axis=1)
        jam[:, slot] = pick + 1
        counts[np.arange(T), pick] = -2
    return jam
