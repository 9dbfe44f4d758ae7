"""Seed fan-out.

Every random stream of a run is derived from the single run seed with
splitmix64: ``derive(seed, stream, index)`` mixes the run seed, a stream
number and an index (e.g. the episode) into an independent 63-bit seed.

Streams: 0 network init, 1 agent rng, 2 training episodes, 3 evaluation
episodes, 4 fine-tuning.
"""

from __future__ import annotations

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15

INIT, AGENT, TRAIN_ENV, EVAL_ENV, FINETUNE = range(5)


def splitmix64(state: int) -> tuple[int, int]:
    """One step of the generator: returns (next_state, output)."""
    state = (state + GOLDEN) & MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return state, z ^ (z >> 31)


def expand(seed: int, n: int) -> list[int]:
    state = seed & MASK64
    out = []
    for _ in range(n):
        state, z = splitmix64(state)
        out.append(z)
    return out


def derive(seed: int, stream: int, index: int = 0) -> int:
    _, a = splitmix64(seed & MASK64)
    _, b = splitmix64(a ^ ((stream & 0xFFFF) << 48))
    _, c = splitmix64(b ^ (index & MASK64))
    return c >> 1
