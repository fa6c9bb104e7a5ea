"""Stationary relabeling chain on S_N.

The chain starts from a uniform random permutation and advances by
right-composition with the transposition (N a), a drawn uniformly from
[N-1] each round.  Uniformity on S_N is preserved exactly, and the image
of N under the chain performs a simple random walk on K_N.

Permutations are stored as image tuples: ``perm[i]`` is the image of
``i + 1``.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

import numpy as np

from .core import ParameterError


def identity_perm(n: int) -> tuple[int, ...]:
    return tuple(range(1, n + 1))


def compose(p: tuple[int, ...], q: tuple[int, ...]) -> tuple[int, ...]:
    """(p o q)(x) = p(q(x))."""
    return tuple(p[q[i] - 1] for i in range(len(p)))


def invert(p: tuple[int, ...]) -> tuple[int, ...]:
    inv = [0] * len(p)
    for i, v in enumerate(p):
        inv[v - 1] = i + 1
    return tuple(inv)


def swap_last(perm: tuple[int, ...], a: int) -> tuple[int, ...]:
    """perm composed with the transposition (n a): swaps the images of a and n."""
    n = len(perm)
    out = list(perm)
    out[a - 1], out[n - 1] = out[n - 1], out[a - 1]
    return tuple(out)


@dataclass(frozen=True)
class PermState:
    """Current permutation of [n] plus the transposition index that produced it."""

    n: int
    perm: tuple[int, ...]
    last_a: Optional[int] = None

    def __post_init__(self):
        if sorted(self.perm) != list(range(1, self.n + 1)):
            raise ParameterError(f"not a permutation of 1..{self.n}: {self.perm}")
        if self.last_a is not None and not 1 <= self.last_a <= self.n - 1:
            raise ParameterError(f"last_a={self.last_a} out of range [1, {self.n - 1}]")


def _as_generator(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed))))


def init_perm_chain(n: int, seed) -> PermState:
    """Uniform random permutation of [n]; `seed` is an int or a Generator."""
    if n < 2:
        raise ParameterError(f"need n >= 2, got {n}")
    rng = _as_generator(seed)
    perm = tuple(int(v) + 1 for v in rng.permutation(n))
    return PermState(n=n, perm=perm)


def step_perm_chain(state: PermState, rng) -> PermState:
    """Advance one round: draw a uniform a in [n-1], compose with (n a)."""
    gen = _as_generator(rng)
    a = int(gen.integers(1, state.n))
    return force_step(state, a)


def force_step(state: PermState, a: int) -> PermState:
    """Deterministic step with a given transposition index (for tests and replay)."""
    if not 1 <= a <= state.n - 1:
        raise ParameterError(f"a={a} out of range [1, {state.n - 1}]")
    return PermState(n=state.n, perm=swap_last(state.perm, a), last_a=a)


def enumerate_perm_steps(state: PermState) -> list[tuple[PermState, Fraction]]:
    """All n-1 successors, each with exact probability 1/(n-1)."""
    w = Fraction(1, state.n - 1)
    return [(force_step(state, a), w) for a in range(1, state.n)]
