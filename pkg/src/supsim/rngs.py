"""Per-trial random streams.

Every trial derives four independent streams from one master seed using
Philox (counter-based, 4x64, 10 rounds), keyed as (master_seed, stream tag).
Philox is specified by algorithm rather than by library state layout, so a
port in another language can reproduce the exact draws.

Streams and their consumers:

  SUPERVISOR  worker sampling (honesty coin per sample, in sample order)
  HONEST      private randomness of honest workers (Freivalds vectors),
              consumed in task-execution order
  ADVERSARY   strategy randomness
  INSTANCE    problem-instance generation: matrices, items, the source's
              permutation and quantile choice, and the run's secret keys

Keeping the adversary on its own stream means its draws can never reveal
or influence future supervisor sampling, matching the oblivious-adversary
model.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SUPERVISOR = 0
HONEST = 1
ADVERSARY = 2
INSTANCE = 3


def stream(master_seed: int, tag: int) -> np.random.Generator:
    """Return the Generator for one named stream of a trial."""
    return np.random.Generator(np.random.Philox(key=[master_seed, tag]))


@dataclass
class TrialRngs:
    """The four streams of one trial, derived from a single master seed."""

    supervisor: np.random.Generator
    honest: np.random.Generator
    adversary: np.random.Generator
    instance: np.random.Generator

    @classmethod
    def from_seed(cls, master_seed: int) -> "TrialRngs":
        return cls(
            supervisor=stream(master_seed, SUPERVISOR),
            honest=stream(master_seed, HONEST),
            adversary=stream(master_seed, ADVERSARY),
            instance=stream(master_seed, INSTANCE),
        )
