"""Named, splittable seed substreams.

Every random draw in the package comes from a substream addressed by a
stable path, so runs are reproducible and extending a run in time never
perturbs draws already made: each substream is consumed strictly in time
order, and distinct concerns (each relabeling layer, the base coupling,
adversaries, ...) never share a stream.
"""

from __future__ import annotations

import numpy as np

# Stable stream-kind codes; never renumber, only append.
STREAM_KINDS = {
    "base_init": 0,
    "base_steps": 1,
    "perm_init": 2,
    "perm_steps": 3,
    "adversary": 4,
    "chi2": 5,
    "misc": 6,
}


def substream(master_seed: int, kind: str, index: int = 0) -> np.random.Generator:
    """Generator for the (kind, index) substream of a master seed."""
    try:
        code = STREAM_KINDS[kind]
    except KeyError:
        raise ValueError(f"unknown stream kind {kind!r}") from None
    ss = np.random.SeedSequence(int(master_seed), spawn_key=(code, int(index)))
    return np.random.Generator(np.random.PCG64(ss))


class SeedStreams:
    """Lazy bundle of the substreams one sampling run consumes.

    Layer indices address the relabeling chains of stacked extensions:
    layer 1 is the innermost extension above the base coupling.
    """

    def __init__(self, master_seed: int):
        self.master_seed = int(master_seed)
        self._gens: dict[tuple[str, int], np.random.Generator] = {}

    def get(self, kind: str, index: int = 0) -> np.random.Generator:
        key = (kind, index)
        gen = self._gens.get(key)
        if gen is None:
            gen = substream(self.master_seed, kind, index)
            self._gens[key] = gen
        return gen

    def base_init(self) -> np.random.Generator:
        return self.get("base_init")

    def base_steps(self) -> np.random.Generator:
        return self.get("base_steps")

    def perm_init(self, layer: int) -> np.random.Generator:
        return self.get("perm_init", layer)

    def perm_steps(self, layer: int) -> np.random.Generator:
        return self.get("perm_steps", layer)
