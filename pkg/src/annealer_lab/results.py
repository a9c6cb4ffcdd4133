"""Shared result record and seeded-stream helpers for the stochastic engines."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np


def wilson_interval(successes: int, trials: int, z: float = 1.959963984540054) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion (default 95%)."""
    if trials <= 0:
        raise ValueError("trials must be positive")
    p = successes / trials
    denom = 1.0 + z**2 / trials
    centre = (p + z**2 / (2 * trials)) / denom
    half = (z / denom) * np.sqrt(p * (1 - p) / trials + z**2 / (4 * trials**2))
    return max(0.0, centre - half), min(1.0, centre + half)


def replica_generators(seed: int, replicas: int) -> list[np.random.Generator]:
    """One independent PCG64 stream per replica, derived from (seed, index).

    Streams depend only on (seed, replica index), so results are identical
    for any chunking of replicas across workers.
    """
    children = np.random.SeedSequence(seed).spawn(replicas)
    return [np.random.Generator(np.random.PCG64(c)) for c in children]


@dataclass(frozen=True)
class RunResult:
    """Outcome of a seeded stochastic run against a known ground state."""

    engine: str
    instance_hash: str
    params: dict
    successes: int
    replicas: int
    ci_low: float
    ci_high: float
    seed: int

    @property
    def success_probability(self) -> float:
        return self.successes / self.replicas

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "RunResult":
        return cls(**json.loads(text))


def make_run_result(
    engine: str, instance_hash: str, params: dict, successes: int, replicas: int, seed: int
) -> RunResult:
    lo, hi = wilson_interval(successes, replicas)
    return RunResult(
        engine=engine,
        instance_hash=instance_hash,
        params=params,
        successes=int(successes),
        replicas=int(replicas),
        ci_low=float(lo),
        ci_high=float(hi),
        seed=int(seed),
    )
