"""Counter-based random streams, one per experiment stage."""

from typing import Dict, Sequence

import numpy as np


class StageStreams:
    """Spawns one SeedSequence child per named stage from a root seed.

    The same (seed, stages) always yields the same children, whatever order the stages
    are later used in.
    """

    def __init__(self, seed: int, stages: Sequence[str]):
        self.seed = seed
        children = np.random.SeedSequence(seed).spawn(len(stages))
        self._children: Dict[str, np.random.SeedSequence] = dict(zip(stages, children))

    def seed_sequence(self, stage: str) -> np.random.SeedSequence:
        return self._children[stage]

    def generator(self, stage: str) -> np.random.Generator:
        """A fresh Philox generator; two calls for one stage give identical streams."""
        return np.random.Generator(np.random.Philox(self._children[stage]))
