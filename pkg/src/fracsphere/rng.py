"""Named random streams derived from one master seed."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

FAMILIES = {"div": 0, "curl": 1}
STAGES = {"noise": 0, "initial": 1, "aux": 2, "path": 3}


@dataclass(frozen=True)
class RngStream:
    """Independent stream identified by ``(master_seed, key)``.

    Distinct keys give statistically independent generators (SeedSequence
    spawn keys); the same key always reproduces the same draws, whatever
    else has been drawn.
    """

    master_seed: int
    key: tuple = ()

    def child(self, *key) -> "RngStream":
        return RngStream(self.master_seed, self.key + tuple(int(k) for k in key))

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(int(self.master_seed), spawn_key=tuple(int(k) for k in self.key))
        return np.random.Generator(np.random.PCG64(ss))


def mode_stream(master_seed, stage, family, ell, block=0) -> RngStream:
    """Stream for all orders m of one degree, one family, one replicate block."""
    return RngStream(master_seed, (STAGES[stage], FAMILIES[family], int(ell), int(block)))
